"""Privacy-loss budget allocation and discrete Gaussian noisy measurements.

Accounting is zero-concentrated-DP style: the total budget ``rho`` is split
multiplicatively across geographic levels and, within a level, across query
groups; a coordinate measured under allocation ``rho_lg`` receives integer
noise of variance ``1 / (2 * rho_lg)``.

The sampler is exact: rejection from a discrete Laplace proposal, carried out
entirely in integer arithmetic.  No continuous Gaussian is drawn or rounded,
so noise is integral by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .errors import ConfigError, SchemaError
from .model import Histogram, Schema

_SHARE_TOL = 1e-12


@dataclass(frozen=True)
class QueryGroup:
    """A measured marginal: the subset of schema attributes that is kept.

    ``marginal`` equal to all attribute names is the detailed (full-cell)
    query; an empty tuple collapses everything to a single total.
    """

    name: str
    marginal: tuple[str, ...]

    @classmethod
    def detailed(cls, schema: Schema) -> "QueryGroup":
        return cls("detailed", schema.names)

    @classmethod
    def total(cls) -> "QueryGroup":
        return cls("total", ())


def marginal_map(schema: Schema, group: QueryGroup) -> tuple[np.ndarray, int]:
    """Map detailed cell index -> marginal cell index for ``group``.

    Returns ``(mapping, n_marginal_cells)`` where ``mapping[i]`` is the
    marginal cell that detailed cell ``i`` contributes to.
    """
    axes = [schema.axis(name) for name in group.marginal]
    if len(set(axes)) != len(axes):
        raise SchemaError(f"group {group.name!r} repeats an attribute")
    cards = schema.cardinalities
    grids = np.indices(cards).reshape(len(cards), -1)
    if not axes:
        return np.zeros(schema.ncells, dtype=np.intp), 1
    kept = [cards[a] for a in axes]
    mapping = np.ravel_multi_index(tuple(grids[a] for a in axes), kept)
    return mapping.astype(np.intp), int(np.prod(kept))


def group_answer(x: np.ndarray, mapping: np.ndarray, mcells: int) -> np.ndarray:
    """True marginal answer vector for a detailed cell vector ``x``."""
    return np.bincount(mapping, weights=x, minlength=mcells)


@dataclass(frozen=True)
class BudgetAllocation:
    """Split of the total privacy-loss budget across levels and query groups."""

    total_rho: float
    level_shares: Mapping[str, float]
    group_shares: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        if self.total_rho <= 0:
            raise ConfigError(f"total_rho must be positive, got {self.total_rho}")
        if any(s < 0 for s in self.level_shares.values()):
            raise ConfigError("level shares must be non-negative")
        if abs(sum(self.level_shares.values()) - 1.0) > _SHARE_TOL:
            raise ConfigError(f"level shares must sum to 1, got {sum(self.level_shares.values())}")
        for level, shares in self.group_shares.items():
            if level not in self.level_shares:
                raise ConfigError(f"group shares given for unknown level {level!r}")
            if any(s < 0 for s in shares.values()):
                raise ConfigError(f"group shares at level {level!r} must be non-negative")
            if abs(sum(shares.values()) - 1.0) > _SHARE_TOL:
                raise ConfigError(f"group shares at level {level!r} must sum to 1")

    @classmethod
    def uniform_groups(cls, total_rho: float, level_shares: Mapping[str, float],
                       groups_by_level: Mapping[str, Sequence[QueryGroup]]) -> "BudgetAllocation":
        group_shares = {
            level: {g.name: 1.0 / len(groups) for g in groups}
            for level, groups in groups_by_level.items()
        }
        return cls(total_rho, dict(level_shares), group_shares)

    def rho(self, level: str, group: str) -> float:
        try:
            r = self.total_rho * self.level_shares[level] * self.group_shares[level][group]
        except KeyError:
            raise ConfigError(f"no budget allocated to ({level!r}, {group!r})") from None
        if r <= 0:
            raise ConfigError(f"zero budget allocated to ({level!r}, {group!r})")
        return r

    def variance(self, level: str, group: str) -> float:
        return 1.0 / (2.0 * self.rho(level, group))


@dataclass(frozen=True)
class NoisyMeasurement:
    """One noisy marginal answer vector at one geographic unit."""

    unit: str
    level: str
    group: str
    answers: tuple[float, ...]
    variance: float


# --- exact discrete Gaussian sampling ------------------------------------
#
# All Bernoulli probabilities below are rationals num/den handled as plain
# integers; the only randomness primitive is rng.randrange.


def _bernoulli_exp1(num: int, den: int, rand) -> bool:
    # Bernoulli(exp(-num/den)) for num/den in [0, 1], von Neumann series.
    k = 1
    while rand.randrange(den * k) < num:
        k += 1
    return k % 2 == 1


def _bernoulli_exp(num: int, den: int, rand) -> bool:
    # Bernoulli(exp(-num/den)) for any num/den >= 0.
    while num > den:
        if not _bernoulli_exp1(1, 1, rand):
            return False
        num -= den
    return _bernoulli_exp1(num, den, rand)


def _geometric_exp(num: int, den: int, rand) -> int:
    # Geometric(1 - exp(-num/den)) on {0, 1, ...} for num/den > 0.
    while True:
        u = rand.randrange(den)
        if _bernoulli_exp(u, den, rand):
            break
    v = 0
    while _bernoulli_exp(1, 1, rand):
        v += 1
    return (v * den + u) // num


def sample_discrete_laplace(scale: int, rand) -> int:
    """Integer with probability proportional to exp(-|k| / scale), scale >= 1."""
    while True:
        negative = rand.randrange(2)
        magnitude = _geometric_exp(1, scale, rand)
        if negative and magnitude == 0:
            continue
        return -magnitude if negative else magnitude


def sample_discrete_gaussian(sigma2, rand) -> int:
    """Integer with probability proportional to exp(-k^2 / (2 sigma2)).

    Exact rejection sampler: a discrete Laplace proposal of integer scale
    ``floor(sqrt(sigma2)) + 1`` is thinned with an exact Bernoulli(exp(.))
    test.  ``sigma2`` may be a float or Fraction; floats are converted to the
    exact rational they represent.

    ``rand`` must provide ``randrange`` on arbitrary-size integers
    (e.g. ``random.Random`` or :func:`minidas.rng.pyrandom`).
    """
    s = Fraction(sigma2)
    if s <= 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    s_num, s_den = s.numerator, s.denominator
    t = math.isqrt(s_num // s_den) + 1
    bias_den = 2 * s_num * s_den * t * t
    while True:
        y = sample_discrete_laplace(t, rand)
        d = abs(y) * s_den * t - s_num
        if _bernoulli_exp(d * d, bias_den, rand):
            return y


def take_measurements(h: Histogram, alloc: BudgetAllocation,
                      groups_by_level: Mapping[str, Sequence[QueryGroup]],
                      seed: int) -> list[NoisyMeasurement]:
    """Noisy answers for every (unit, group) pair at every measured level.

    Each (unit, group) pair draws from its own substream of ``seed``, so
    measurement generation may be parallelised across units without changing
    the output.
    """
    schema = h.schema
    out: list[NoisyMeasurement] = []
    for level_name, groups in groups_by_level.items():
        if level_name not in h.hierarchy.levels:
            raise ConfigError(f"unknown level {level_name!r} in measurement plan")
        level_idx = h.hierarchy.levels.index(level_name)
        maps = [(g, *marginal_map(schema, g)) for g in groups]
        sigmas = {g.name: alloc.variance(level_name, g.name) for g in groups}
        for uid in h.hierarchy.units_at(level_idx):
            x = h.aggregate(uid)
            for g, mapping, mcells in maps:
                truth = group_answer(x, mapping, mcells)
                stream = rng.pyrandom(seed, "nmf", uid, g.name)
                sigma2 = sigmas[g.name]
                noisy = tuple(float(v) + sample_discrete_gaussian(sigma2, stream)
                              for v in truth)
                out.append(NoisyMeasurement(uid, level_name, g.name, noisy, sigma2))
    return out


def format_value(x: float) -> str:
    """Render a float compactly and losslessly (integers without a dot)."""
    if x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_nmf_csv(path: str | Path, measurements: Iterable[NoisyMeasurement],
                  replicate: int = 0) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["replicate", "level", "unit_id", "group", "cell_index",
                    "noisy_value", "variance"])
        for m in measurements:
            for cell, v in enumerate(m.answers):
                w.writerow([replicate, m.level, m.unit, m.group, cell,
                            format_value(v), format_value(m.variance)])

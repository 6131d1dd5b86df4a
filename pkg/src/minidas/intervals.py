"""Moment estimates from replicate query values and the eight interval types.

Given replicate answers for one query and the reference answer they are
compared against, :func:`moments` produces the empirical bias (mean minus
reference), sample variance (n-1 divisor), mean squared error (deviations
from the reference, n divisor), and median bias.  Intervals around the
published point estimate come in eight flavours:

=====  ==========================================================
np     quantile-based, nearest-rank empirical quantiles
BCnp   np with the median bias subtracted from both endpoints
z      Wald with sqrt(MSE) scale, Gaussian critical value
t      Wald with sqrt(MSE) scale, Student t critical value (df=5)
BCz    z with the bias subtracted from the pivot
BCt    t with the bias subtracted from the pivot
cz     BCz only when the conditional rule fires, else z
ct     BCt only when the conditional rule fires, else t
=====  ==========================================================

Count intervals are snapped outward to integers (floor the lower endpoint,
ceil the upper) and truncated at zero, matching the integer non-negative
outcome space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError
from .noise import format_value

CI_TYPES = ("np", "BCnp", "z", "t", "BCz", "BCt", "cz", "ct")

DEFAULT_LEVEL = 0.90
DEFAULT_T_DF = 5

# conditional bias-correction rule thresholds
_COND_MIN_POINT = 5       # point estimate must exceed this
_COND_MIN_RATIO = 0.5     # |bias| / sd must reach this
_COND_LARGE_POINT = 25    # positive bias only corrected from this size up


@dataclass(frozen=True)
class MomentEstimates:
    bias: float
    variance: float
    mse: float
    median_bias: float
    n: int

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @property
    def rmse(self) -> float:
        return math.sqrt(self.mse)


@dataclass(frozen=True)
class CIRecord:
    query_id: str
    type: str
    level: float
    point: int
    lower: int
    upper: int
    moments: MomentEstimates

    @property
    def width(self) -> int:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def moments(values: Sequence[float], reference: float, kind: str = "amc"
            ) -> MomentEstimates:
    """Empirical bias / variance / MSE of replicate answers vs a reference.

    ``kind`` is a label only ("mc" when the reference is the ground truth,
    "amc" when it is the protected production output); the estimators are
    identical.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DataError(f"need at least 2 replicate values, got {v.size}")
    if kind not in ("mc", "amc"):
        raise ConfigError(f"kind must be 'mc' or 'amc', got {kind!r}")
    bias = float(v.mean() - reference)
    variance = float(v.var(ddof=1))
    mse = float(((v - reference) ** 2).mean())
    median_bias = float(np.median(v) - reference)
    return MomentEstimates(bias, variance, mse, median_bias, int(v.size))


def critical_value(dist: str, level: float, t_df: int = DEFAULT_T_DF) -> float:
    """Two-sided critical value at the given nominal coverage level."""
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    p = 1.0 - (1.0 - level) / 2.0
    if dist == "gauss":
        return float(stats.norm.ppf(p))
    if dist == "t5":
        return float(stats.t.ppf(p, df=t_df))
    raise ConfigError(f"unknown distribution {dist!r}")


def _snap_interval(lo: float, hi: float) -> tuple[int, int]:
    low = max(0, math.floor(lo))
    high = max(0, math.ceil(hi))
    return int(low), int(high)


def wald_raw(point: float, m: MomentEstimates, dist: str = "t5",
             level: float = DEFAULT_LEVEL, bias_correct: bool = False,
             t_df: int = DEFAULT_T_DF, scale: str = "mse") -> tuple[float, float]:
    """Real-valued Wald endpoints before integer snapping.

    ``scale="mse"`` is the standard choice; ``scale="variance"`` gives the
    narrower variance-based interval, kept behind this switch and not part
    of the eight standard types.
    """
    if scale == "mse":
        half = critical_value(dist, level, t_df) * math.sqrt(m.mse)
    elif scale == "variance":
        half = critical_value(dist, level, t_df) * math.sqrt(m.variance)
    else:
        raise ConfigError(f"unknown scale {scale!r}")
    pivot = point - m.bias if bias_correct else point
    return pivot - half, pivot + half


def ci_wald(query_id: str, point: int, m: MomentEstimates, dist: str = "t5",
            level: float = DEFAULT_LEVEL, bias_correct: bool = False,
            t_df: int = DEFAULT_T_DF, ci_type: str | None = None) -> CIRecord:
    lo, hi = wald_raw(point, m, dist, level, bias_correct, t_df)
    lower, upper = _snap_interval(lo, hi)
    if ci_type is None:
        ci_type = ("BC" if bias_correct else "") + ("z" if dist == "gauss" else "t")
    return CIRecord(query_id, ci_type, level, int(point), lower, upper, m)


def nearest_rank(sorted_values: np.ndarray, p: float) -> float:
    """The ceil(n*p)-th order statistic (nearest-rank percentile)."""
    n = len(sorted_values)
    if n == 0:
        raise DataError("nearest_rank of an empty sample")
    k = max(1, math.ceil(n * p))
    return float(sorted_values[min(k, n) - 1])


def ci_quantile(query_id: str, values: Sequence[float], point: int,
                level: float = DEFAULT_LEVEL, bias_correct: bool = False
                ) -> CIRecord:
    """Quantile-based interval from the empirical replicate distribution.

    The bias-corrected variant subtracts the median bias (median of the
    replicates minus the point estimate) from both endpoints.
    """
    m = moments(values, point)
    v = np.sort(np.asarray(values, dtype=float))
    alpha = 1.0 - level
    lo = nearest_rank(v, alpha / 2.0)
    hi = nearest_rank(v, 1.0 - alpha / 2.0)
    if bias_correct:
        lo -= m.median_bias
        hi -= m.median_bias
    lower, upper = _snap_interval(lo, hi)
    return CIRecord(query_id, "BCnp" if bias_correct else "np", level,
                    int(point), lower, upper, m)


def conditional_rule(point: float, m: MomentEstimates) -> bool:
    """Whether the bias correction fires for the conditional interval types.

    All three criteria must hold: the point estimate exceeds 5; the bias is
    at least half a standard deviation in magnitude (zero sd never fires);
    and the bias is negative or the point estimate is at least 25.
    """
    if point <= _COND_MIN_POINT:
        return False
    if m.sd == 0.0 or abs(m.bias) / m.sd < _COND_MIN_RATIO:
        return False
    return m.bias < 0 or point >= _COND_LARGE_POINT


def ci_conditional(query_id: str, point: int, m: MomentEstimates,
                   dist: str = "t5", level: float = DEFAULT_LEVEL,
                   t_df: int = DEFAULT_T_DF) -> CIRecord:
    correct = conditional_rule(point, m)
    ci_type = "cz" if dist == "gauss" else "ct"
    return ci_wald(query_id, point, m, dist, level, bias_correct=correct,
                   t_df=t_df, ci_type=ci_type)


def build_all(query_id: str, values: Sequence[float], point: int,
              level: float = DEFAULT_LEVEL, t_df: int = DEFAULT_T_DF
              ) -> dict[str, CIRecord]:
    """All eight interval types for one query."""
    m = moments(values, point)
    return {
        "np": ci_quantile(query_id, values, point, level, bias_correct=False),
        "BCnp": ci_quantile(query_id, values, point, level, bias_correct=True),
        "z": ci_wald(query_id, point, m, "gauss", level, False, t_df),
        "t": ci_wald(query_id, point, m, "t5", level, False, t_df),
        "BCz": ci_wald(query_id, point, m, "gauss", level, True, t_df),
        "BCt": ci_wald(query_id, point, m, "t5", level, True, t_df),
        "cz": ci_conditional(query_id, point, m, "gauss", level, t_df),
        "ct": ci_conditional(query_id, point, m, "t5", level, t_df),
    }


def write_ci_csv(path: str | Path, records: Iterable[CIRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["query_id", "ci_type", "level", "point", "lower", "upper",
                    "bias", "sd", "mse", "n"])
        for r in records:
            w.writerow([r.query_id, r.type, format_value(r.level), r.point,
                        r.lower, r.upper, format_value(r.moments.bias),
                        format_value(r.moments.sd), format_value(r.moments.mse),
                        r.moments.n])


def read_ci_csv(path: str | Path) -> list[CIRecord]:
    records = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["query_id", "ci_type", "level", "point", "lower", "upper",
                      "bias", "sd", "mse", "n"]:
            raise DataError(f"bad interval header in {path}: {header}")
        for qid, ci_type, level, point, lower, upper, bias, sd, mse, n in r:
            m = MomentEstimates(float(bias), float(sd) ** 2, float(mse),
                                float("nan"), int(n))
            records.append(CIRecord(qid, ci_type, float(level), int(point),
                                    int(lower), int(upper), m))
    return records

"""Attribute schemas, geographic hierarchies, and block-level count histograms.

A :class:`Histogram` stores the fully saturated contingency table of
non-negative integer counts for every block.  Counts at internal geographic
units are never stored; they are always derived by summing descendant blocks,
which makes hierarchical consistency of a histogram true by definition.
All three model types are immutable after construction and safe to share
across threads or worker processes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import rng
from .errors import ConfigError, DataError, SchemaError

UNIVERSES = ("person", "household")

DEFAULT_LEVEL_NAMES = ("root", "state", "county", "block")


@dataclass(frozen=True)
class Schema:
    """Ordered categorical attributes spanning a flat cell index space.

    Parameters
    ----------
    attributes : tuple of (name, cardinality)
        Attribute order fixes the cell indexing: cell ``i`` corresponds to
        ``np.unravel_index(i, cardinalities)``.
    universe : str
        Either ``"person"`` or ``"household"``.  The two universes run as
        independent pipelines; nothing in the math distinguishes them.
    """

    attributes: tuple[tuple[str, int], ...]
    universe: str = "person"

    def __post_init__(self):
        if self.universe not in UNIVERSES:
            raise SchemaError(f"unknown universe {self.universe!r}")
        names = [a[0] for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        for name, card in self.attributes:
            if card < 2:
                raise SchemaError(f"attribute {name!r} needs cardinality >= 2, got {card}")
        if not self.attributes:
            raise SchemaError("schema needs at least one attribute")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a[0] for a in self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a[1] for a in self.attributes)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cardinalities))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def cells_where(self, **levels: int) -> tuple[int, ...]:
        """Flat cell indices matching the given attribute levels (a marginal level set)."""
        grids = np.indices(self.cardinalities).reshape(len(self.attributes), -1)
        mask = np.ones(self.ncells, dtype=bool)
        for name, value in levels.items():
            ax = self.axis(name)
            if not 0 <= value < self.cardinalities[ax]:
                raise SchemaError(f"level {value} out of range for attribute {name!r}")
            mask &= grids[ax] == value
        return tuple(int(i) for i in np.nonzero(mask)[0])

    def to_json(self, path: str | Path) -> None:
        doc = {
            "universe": self.universe,
            "attributes": [{"name": n, "cardinality": c} for n, c in self.attributes],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "Schema":
        doc = json.loads(Path(path).read_text())
        try:
            attrs = tuple((a["name"], int(a["cardinality"])) for a in doc["attributes"])
            return cls(attributes=attrs, universe=doc["universe"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed schema file {path}: {exc}") from exc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Schema":
        attrs = tuple((a["name"], int(a["cardinality"])) for a in doc["attributes"])
        return cls(attributes=attrs, universe=doc.get("universe", "person"))


@dataclass(frozen=True)
class GeoUnit:
    id: str
    level: int
    parent: str | None


class GeoHierarchy:
    """Rooted tree of geographic units; the last level is the block level."""

    def __init__(self, levels: Iterable[str], units: Iterable[GeoUnit]):
        self.levels: tuple[str, ...] = tuple(levels)
        if len(self.levels) < 2:
            raise ConfigError("hierarchy needs at least a root level and a block level")
        self._units: dict[str, GeoUnit] = {}
        self._children: dict[str, list[str]] = {}
        roots = []
        for u in units:
            if u.id in self._units:
                raise DataError(f"duplicate unit id {u.id!r}")
            if not 0 <= u.level < len(self.levels):
                raise DataError(f"unit {u.id!r} has level {u.level} outside the hierarchy")
            self._units[u.id] = u
            self._children.setdefault(u.id, [])
            if u.parent is None:
                roots.append(u.id)
        if len(roots) != 1:
            raise DataError(f"hierarchy must have exactly one root, found {len(roots)}")
        self.root_id = roots[0]
        if self._units[self.root_id].level != 0:
            raise DataError("root unit must sit at level 0")
        for u in self._units.values():
            if u.parent is None:
                continue
            parent = self._units.get(u.parent)
            if parent is None:
                raise DataError(f"unit {u.id!r} references unknown parent {u.parent!r}")
            if parent.level != u.level - 1:
                raise DataError(f"unit {u.id!r} must hang one level below its parent")
            self._children[u.parent].append(u.id)
        for kids in self._children.values():
            kids.sort()
        block_level = len(self.levels) - 1
        for u in self._units.values():
            if not self._children[u.id] and u.level != block_level:
                raise DataError(f"unit {u.id!r} is a leaf above the block level")
        self._by_level: list[list[str]] = [[] for _ in self.levels]
        for u in self._units.values():
            self._by_level[u.level].append(u.id)
        for ids in self._by_level:
            ids.sort()
        self.block_ids: tuple[str, ...] = tuple(self._by_level[block_level])
        self._block_pos = {b: i for i, b in enumerate(self.block_ids)}
        self._blocks_under: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_fanouts(cls, fan_outs: Iterable[int],
                     levels: Iterable[str] | None = None) -> "GeoHierarchy":
        """Build a regular tree: ``fan_outs[i]`` children per unit at level ``i``."""
        fan_outs = tuple(int(f) for f in fan_outs)
        if any(f <= 0 for f in fan_outs):
            raise ConfigError(f"fan-outs must be positive, got {fan_outs}")
        n_levels = len(fan_outs) + 1
        if levels is None:
            if n_levels <= len(DEFAULT_LEVEL_NAMES):
                levels = DEFAULT_LEVEL_NAMES[: n_levels - 1] + ("block",)
            else:
                levels = ("root",) + tuple(f"level{i}" for i in range(1, n_levels - 1)) + ("block",)
        levels = tuple(levels)
        if len(levels) != n_levels:
            raise ConfigError(f"{len(levels)} level names for {n_levels} levels")
        units = [GeoUnit("0", 0, None)]
        frontier = ["0"]
        for depth, fan in enumerate(fan_outs):
            width = len(str(fan - 1))
            nxt = []
            for pid in frontier:
                for j in range(fan):
                    uid = f"{pid}.{j:0{width}d}"
                    units.append(GeoUnit(uid, depth + 1, pid))
                    nxt.append(uid)
            frontier = nxt
        return cls(levels, units)

    @property
    def block_level(self) -> int:
        return len(self.levels) - 1

    def unit(self, uid: str) -> GeoUnit:
        try:
            return self._units[uid]
        except KeyError:
            raise DataError(f"unknown geographic unit {uid!r}") from None

    def __contains__(self, uid: str) -> bool:
        return uid in self._units

    def units_at(self, level: int) -> tuple[str, ...]:
        if not 0 <= level < len(self.levels):
            raise DataError(f"no level {level} in hierarchy")
        return tuple(self._by_level[level])

    def children(self, uid: str) -> tuple[str, ...]:
        self.unit(uid)
        return tuple(self._children[uid])

    def blocks_under(self, uid: str) -> tuple[str, ...]:
        """All block ids descending from ``uid`` (the unit itself if a block)."""
        cached = self._blocks_under.get(uid)
        if cached is not None:
            return cached
        u = self.unit(uid)
        if u.level == self.block_level:
            result = (uid,)
        else:
            result = tuple(b for c in self._children[uid] for b in self.blocks_under(c))
        self._blocks_under[uid] = result
        return result

    def block_positions(self, block_ids: Iterable[str]) -> np.ndarray:
        return np.array([self._block_pos[b] for b in block_ids], dtype=np.intp)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["unit_id", "level", "parent_id"])
            for level_ids in self._by_level:
                for uid in level_ids:
                    u = self._units[uid]
                    w.writerow([u.id, self.levels[u.level], u.parent or ""])

    @classmethod
    def from_csv(cls, path: str | Path) -> "GeoHierarchy":
        units = []
        level_names: list[str] = []
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r, None)
            if header != ["unit_id", "level", "parent_id"]:
                raise DataError(f"bad hierarchy header in {path}: {header}")
            rows = list(r)
        for uid, level_name, parent in rows:
            if level_name not in level_names:
                level_names.append(level_name)
        for uid, level_name, parent in rows:
            units.append(GeoUnit(uid, level_names.index(level_name), parent or None))
        return cls(level_names, units)


class Histogram:
    """Sparse block-by-cell table of non-negative integer counts.

    Absent keys are zero; census block histograms are overwhelmingly zero so
    only nonzero cells are kept.  A dense ``(n_blocks, n_cells)`` matrix view
    is materialised lazily for numeric work.
    """

    def __init__(self, schema: Schema, hierarchy: GeoHierarchy,
                 counts: Mapping[tuple[str, int], int]):
        self.schema = schema
        self.hierarchy = hierarchy
        ncells = schema.ncells
        data: dict[tuple[str, int], int] = {}
        for (bid, cell), value in counts.items():
            v = int(value)
            if v != value or v < 0:
                raise DataError(f"count at ({bid}, {cell}) must be a non-negative integer, got {value}")
            if bid not in hierarchy or hierarchy.unit(bid).level != hierarchy.block_level:
                raise DataError(f"{bid!r} is not a block of the hierarchy")
            if not 0 <= cell < ncells:
                raise DataError(f"cell index {cell} out of range for schema with {ncells} cells")
            if v:
                data[(bid, cell)] = v
        self._cells = data
        self._matrix: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, schema: Schema, hierarchy: GeoHierarchy,
                    matrix: np.ndarray) -> "Histogram":
        """Build from a dense ``(n_blocks, n_cells)`` array in block-id order."""
        matrix = np.asarray(matrix)
        blocks = hierarchy.block_ids
        if matrix.shape != (len(blocks), schema.ncells):
            raise DataError(f"matrix shape {matrix.shape} does not match "
                            f"({len(blocks)}, {schema.ncells})")
        counts = {}
        rows, cols = np.nonzero(matrix)
        for r, c in zip(rows.tolist(), cols.tolist()):
            counts[(blocks[r], c)] = matrix[r, c]
        h = cls(schema, hierarchy, counts)
        return h

    def matrix(self) -> np.ndarray:
        """Dense counts, rows ordered by ``hierarchy.block_ids``.  Do not mutate."""
        if self._matrix is None:
            m = np.zeros((len(self.hierarchy.block_ids), self.schema.ncells), dtype=np.int64)
            pos = self.hierarchy._block_pos
            for (bid, cell), v in self._cells.items():
                m[pos[bid], cell] = v
            self._matrix = m
        return self._matrix

    def block_vector(self, bid: str) -> np.ndarray:
        if bid not in self.hierarchy or self.hierarchy.unit(bid).level != self.hierarchy.block_level:
            raise DataError(f"{bid!r} is not a block of the hierarchy")
        return self.matrix()[self.hierarchy._block_pos[bid]].copy()

    def aggregate(self, uid: str) -> np.ndarray:
        """Cell vector at any unit: elementwise sum over its descendant blocks."""
        blocks = self.hierarchy.blocks_under(uid)
        idx = self.hierarchy.block_positions(blocks)
        return self.matrix()[idx].sum(axis=0)

    def total(self, uid: str | None = None) -> int:
        if uid is None:
            uid = self.hierarchy.root_id
        return int(self.aggregate(uid).sum())

    def items(self) -> Iterator[tuple[str, int, int]]:
        for (bid, cell) in sorted(self._cells):
            yield bid, cell, self._cells[(bid, cell)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Histogram)
                and self.schema == other.schema
                and self._cells == other._cells)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["block_id", "cell_index", "count"])
            for bid, cell, v in self.items():
                w.writerow([bid, cell, v])

    @classmethod
    def from_csv(cls, path: str | Path, schema: Schema,
                 hierarchy: GeoHierarchy) -> "Histogram":
        counts: dict[tuple[str, int], int] = {}
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r, None)
            if header != ["block_id", "cell_index", "count"]:
                raise DataError(f"bad histogram header in {path}: {header}")
            for bid, cell, v in r:
                counts[(bid, int(cell))] = int(v)
        return cls(schema, hierarchy, counts)


def aggregate(h: Histogram, uid: str) -> np.ndarray:
    """Cell vector of ``h`` at unit ``uid`` (sum over descendant blocks)."""
    return h.aggregate(uid)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic ground-truth generator settings.

    Cell counts are a three-part mixture chosen so that the workload spans
    every query-size bin: exact zeros with probability ``zero_frac``, small
    counts (1 + geometric) with probability ``small_frac``, and heavy-tailed
    large counts (lognormal, clamped to >= 1) with the remaining mass.
    """

    schema: Schema
    fan_outs: tuple[int, ...]
    zero_frac: float = 0.6
    small_frac: float = 0.3
    small_mean: float = 3.0
    large_log_mean: float = 5.0
    large_log_sd: float = 1.2
    level_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.zero_frac <= 1.0 or not 0.0 <= self.small_frac <= 1.0:
            raise ConfigError("mixture fractions must lie in [0, 1]")
        if self.zero_frac + self.small_frac > 1.0 + 1e-12:
            raise ConfigError("zero_frac + small_frac must not exceed 1")
        if self.small_mean < 1.0:
            raise ConfigError("small_mean must be >= 1")
        if any(int(f) <= 0 for f in self.fan_outs):
            raise ConfigError(f"fan-outs must be positive, got {self.fan_outs}")


def synth_cef(config: SynthConfig, seed: int) -> Histogram:
    """Draw a synthetic ground-truth histogram, deterministic for a fixed seed."""
    hierarchy = GeoHierarchy.from_fanouts(config.fan_outs, config.level_names)
    g = rng.generator(seed, "cef")
    n_blocks = len(hierarchy.block_ids)
    shape = (n_blocks, config.schema.ncells)
    u = g.random(shape)
    counts = np.zeros(shape, dtype=np.int64)
    small = (u >= config.zero_frac) & (u < config.zero_frac + config.small_frac)
    large = u >= config.zero_frac + config.small_frac
    if small.any():
        counts[small] = g.geometric(p=1.0 / config.small_mean, size=int(small.sum()))
    if large.any():
        draw = g.lognormal(config.large_log_mean, config.large_log_sd, size=int(large.sum()))
        counts[large] = np.maximum(1, np.floor(draw)).astype(np.int64)
    return Histogram.from_matrix(config.schema, hierarchy, counts)

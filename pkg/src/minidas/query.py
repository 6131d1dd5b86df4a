"""Univariate count queries over histograms at arbitrary geographies.

A query names a set of detailed cells (a marginal level set) and a geography,
which is either a unit on the geographic spine or an explicit union of
blocks (the stand-in for off-spine geographies).  Evaluation always sums
block-level counts, so any query evaluated at an internal unit agrees with
the same query evaluated over that unit's blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .errors import DataError, SchemaError
from .model import GeoHierarchy, Histogram, Schema

SIZE_GROUPS = ("0", "1-4", "5-10", "11-24", "25-99", "100-499", "500-999", "1000+")

_SIZE_EDGES = ((0, 0), (1, 4), (5, 10), (11, 24), (25, 99), (100, 499), (500, 999))

UNIT_GEO = "unit"


@dataclass(frozen=True)
class Query:
    """A count query: sum of selected cells over a geography."""

    id: str
    universe: str
    cells: tuple[int, ...]
    geo_kind: str               # "unit", or a label naming a block-union geography
    geo_ids: tuple[str, ...]    # one unit id, or the union's block ids

    def __post_init__(self):
        if not self.cells:
            raise DataError(f"query {self.id!r} has an empty cell set")
        if not self.geo_ids:
            raise DataError(f"query {self.id!r} has an empty geography")


def size_group(value: int) -> str:
    """Query-size bin of a non-negative count."""
    if value < 0:
        raise DataError(f"count cannot be negative: {value}")
    for label, (lo, hi) in zip(SIZE_GROUPS, _SIZE_EDGES):
        if lo <= value <= hi:
            return label
    return "1000+"


def geolevel(q: Query, hierarchy: GeoHierarchy) -> str:
    """Grouping label: the spine level name, or the union label as supplied."""
    if q.geo_kind == UNIT_GEO:
        return hierarchy.levels[hierarchy.unit(q.geo_ids[0]).level]
    return q.geo_kind


def blocks_of(q: Query, hierarchy: GeoHierarchy) -> tuple[str, ...]:
    if q.geo_kind == UNIT_GEO:
        return hierarchy.blocks_under(q.geo_ids[0])
    for b in q.geo_ids:
        if b not in hierarchy or hierarchy.unit(b).level != hierarchy.block_level:
            raise DataError(f"query {q.id!r} references non-block unit {b!r}")
    return q.geo_ids


def evaluate(q: Query, h: Histogram) -> int:
    """Answer of query ``q`` on histogram ``h``."""
    if q.universe != h.schema.universe:
        raise SchemaError(f"query universe {q.universe!r} != histogram universe "
                          f"{h.schema.universe!r}")
    for c in q.cells:
        if not 0 <= c < h.schema.ncells:
            raise SchemaError(f"query {q.id!r} cell {c} out of schema range")
    idx = h.hierarchy.block_positions(blocks_of(q, h.hierarchy))
    cells = np.fromiter(q.cells, dtype=np.intp)
    return int(h.matrix()[np.ix_(idx, cells)].sum())


def tabulate(queries: Sequence[Query], h: Histogram) -> dict[str, int]:
    return {q.id: evaluate(q, h) for q in queries}


# --- workload generation ------------------------------------------------------


def marginal_level_sets(schema: Schema, orders: Sequence[int] = (1, 2)
                        ) -> list[tuple[str, tuple[int, ...]]]:
    """All marginal level sets of the given interaction orders.

    Order 1 yields one query per (attribute, level); order 2 one per
    (attribute pair, level pair); and so on.  Names look like ``a=0`` and
    ``a=0&b=1``.
    """
    out = []
    for order in orders:
        if not 1 <= order <= len(schema.names):
            raise SchemaError(f"marginal order {order} out of range")
        for attrs in combinations(schema.names, order):
            cards = [schema.cardinalities[schema.axis(a)] for a in attrs]
            for levels in product(*(range(c) for c in cards)):
                name = "&".join(f"{a}={v}" for a, v in zip(attrs, levels))
                cells = schema.cells_where(**dict(zip(attrs, levels)))
                out.append((name, cells))
    return out


def build_workload(schema: Schema, hierarchy: GeoHierarchy, cef: Histogram,
                   n_block_queries: int = 40, orders: Sequence[int] = (1, 2),
                   seed: int = 0,
                   unions: Mapping[str, Sequence[Sequence[str]]] | None = None
                   ) -> list[Query]:
    """Default evaluation workload.

    Every unit above the block level gets all marginal level-set queries.
    At the block level, blocks are stratified by their total count's size
    bin and sampled round-robin across strata until ``n_block_queries``
    queries are produced, cycling through the marginal list.  ``unions``
    optionally adds labelled block-union geographies, each receiving the
    full marginal list.
    """
    margins = marginal_level_sets(schema, orders)
    queries: list[Query] = []
    for level in range(hierarchy.block_level):
        for uid in hierarchy.units_at(level):
            for name, cells in margins:
                queries.append(Query(f"{uid}:{name}", schema.universe, cells,
                                     UNIT_GEO, (uid,)))

    strata: dict[str, list[str]] = {}
    for bid in hierarchy.block_ids:
        strata.setdefault(size_group(int(cef.aggregate(bid).sum())), []).append(bid)
    g = rng.generator(seed, "workload")
    pools = []
    for label in SIZE_GROUPS:
        blocks = strata.get(label)
        if blocks:
            pools.append([str(b) for b in g.permutation(blocks)])
    picked = 0
    margin_cycle = 0
    while picked < n_block_queries and pools:
        for pool in list(pools):
            if picked >= n_block_queries:
                break
            if not pool:
                pools.remove(pool)
                continue
            bid = pool.pop()
            name, cells = margins[margin_cycle % len(margins)]
            margin_cycle += 1
            queries.append(Query(f"{bid}:{name}", schema.universe, cells,
                                 UNIT_GEO, (bid,)))
            picked += 1
        pools = [p for p in pools if p]

    if unions:
        for label, block_sets in unions.items():
            for i, blocks in enumerate(block_sets):
                for name, cells in margins:
                    queries.append(Query(f"{label}{i}:{name}", schema.universe,
                                         cells, label, tuple(blocks)))
    return queries


# --- file formats ---------------------------------------------------------------


def write_workload(path: str | Path, queries: Iterable[Query]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["query_id", "universe", "cells", "geo_kind", "geo_ids"])
        for q in queries:
            w.writerow([q.id, q.universe, ";".join(map(str, q.cells)),
                        q.geo_kind, ";".join(q.geo_ids)])


def read_workload(path: str | Path) -> list[Query]:
    queries = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["query_id", "universe", "cells", "geo_kind", "geo_ids"]:
            raise DataError(f"bad workload header in {path}: {header}")
        for qid, universe, cells, geo_kind, geo_ids in r:
            queries.append(Query(qid, universe,
                                 tuple(int(c) for c in cells.split(";")),
                                 geo_kind, tuple(geo_ids.split(";"))))
    return queries


def write_tabulation(path: str | Path,
                     rows: Iterable[tuple[str, int, int]]) -> None:
    """Write (query_id, replicate, value) rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["query_id", "replicate", "value"])
        for qid, rep, value in rows:
            w.writerow([qid, rep, value])


def read_tabulation(path: str | Path) -> dict[str, dict[int, int]]:
    """Read a tabulation file as {query_id: {replicate: value}}."""
    out: dict[str, dict[int, int]] = {}
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["query_id", "replicate", "value"]:
            raise DataError(f"bad tabulation header in {path}: {header}")
        for qid, rep, value in r:
            out.setdefault(qid, {})[int(rep)] = int(value)
    return out

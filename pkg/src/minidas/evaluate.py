"""Evaluation summaries: coverage proportions, width distributions, bias
percentiles, reference-vs-protected moment comparisons, and the sensitivity
of coverage to the replicate count.

Intervals are treated as closed: a parameter sitting exactly on an endpoint
counts as covered, which matters because endpoints and parameters are both
integers.  All percentile-type summaries use nearest-rank order statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .intervals import CIRecord, ci_conditional, moments, nearest_rank
from .noise import format_value
from .simulate import subset_indices

# grouping key for every summary: where the query lives and how big it is
QueryMeta = Mapping[str, tuple[str, str]]   # query_id -> (geolevel, size_group)


@dataclass(frozen=True)
class CoverageRow:
    geolevel: str
    size_group: str
    ci_type: str
    n_queries: int
    proportion_containing_cef: float
    group_share: float


@dataclass(frozen=True)
class WidthRow:
    geolevel: str
    size_group: str
    ci_type: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float


@dataclass(frozen=True)
class BiasPercentileRow:
    geolevel: str
    size_group: str
    p01: float
    p50: float
    p99: float


@dataclass(frozen=True)
class MomentComparisonRow:
    query_id: str
    geolevel: str
    size_group: str
    rmse_mc: float
    rmse_amc: float
    bias_mc: float
    bias_amc: float
    sd_mc: float
    sd_amc: float


def coverage_table(ci_records: Sequence[CIRecord], cef_answers: Mapping[str, int],
                   meta: QueryMeta) -> list[CoverageRow]:
    """Proportion of intervals containing the reference answer, by group."""
    hits: dict[tuple[str, str, str], list[int]] = {}
    level_sizes: dict[str, dict[str, set]] = {}
    for r in ci_records:
        if r.query_id not in cef_answers:
            raise DataError(f"interval for unknown query {r.query_id!r}")
        if r.query_id not in meta:
            raise DataError(f"no grouping metadata for query {r.query_id!r}")
        geo, size = meta[r.query_id]
        key = (geo, size, r.type)
        hits.setdefault(key, []).append(1 if r.contains(cef_answers[r.query_id]) else 0)
        level_sizes.setdefault(geo, {}).setdefault(size, set()).add(r.query_id)
    totals = {geo: sum(len(q) for q in sizes.values())
              for geo, sizes in level_sizes.items()}
    rows = []
    for (geo, size, ci_type), flags in sorted(hits.items()):
        share = len(level_sizes[geo][size]) / totals[geo]
        rows.append(CoverageRow(geo, size, ci_type, len(flags),
                                sum(flags) / len(flags), share))
    return rows


def width_summary(ci_records: Sequence[CIRecord], meta: QueryMeta) -> list[WidthRow]:
    groups: dict[tuple[str, str, str], list[float]] = {}
    for r in ci_records:
        geo, size = meta[r.query_id]
        groups.setdefault((geo, size, r.type), []).append(float(r.width))
    rows = []
    for (geo, size, ci_type), widths in sorted(groups.items()):
        w = np.sort(np.asarray(widths))
        rows.append(WidthRow(geo, size, ci_type, float(w[0]),
                             nearest_rank(w, 0.25), nearest_rank(w, 0.50),
                             nearest_rank(w, 0.75), float(w[-1]),
                             float(w.mean())))
    return rows


def bias_percentiles(bias_by_query: Mapping[str, float], meta: QueryMeta
                     ) -> list[BiasPercentileRow]:
    """1st/50th/99th nearest-rank percentiles of estimated bias per group.

    Groups with no queries are simply absent from the output.
    """
    groups: dict[tuple[str, str], list[float]] = {}
    for qid, bias in bias_by_query.items():
        geo, size = meta[qid]
        groups.setdefault((geo, size), []).append(bias)
    rows = []
    for (geo, size), biases in sorted(groups.items()):
        b = np.sort(np.asarray(biases))
        rows.append(BiasPercentileRow(geo, size, nearest_rank(b, 0.01),
                                      nearest_rank(b, 0.50), nearest_rank(b, 0.99)))
    return rows


def moment_comparison(mc_values: Mapping[str, Sequence[float]],
                      amc_values: Mapping[str, Sequence[float]],
                      cef_answers: Mapping[str, int],
                      ppmf0_answers: Mapping[str, int],
                      meta: QueryMeta) -> list[MomentComparisonRow]:
    """Side-by-side moment estimates from the two simulation designs."""
    rows = []
    for qid in sorted(mc_values):
        if qid not in amc_values:
            raise DataError(f"query {qid!r} missing from the amc tabulation")
        m_mc = moments(mc_values[qid], cef_answers[qid], "mc")
        m_amc = moments(amc_values[qid], ppmf0_answers[qid], "amc")
        geo, size = meta[qid]
        rows.append(MomentComparisonRow(qid, geo, size,
                                        m_mc.rmse, m_amc.rmse,
                                        m_mc.bias, m_amc.bias,
                                        m_mc.sd, m_amc.sd))
    return rows


def iteration_sensitivity(amc_values: Mapping[str, Sequence[float]],
                          ppmf0_answers: Mapping[str, int],
                          cef_answers: Mapping[str, int],
                          meta: QueryMeta,
                          sizes: Sequence[int] = (25, 50, 75, 100),
                          seed: int = 0, level: float = 0.90,
                          dist: str = "t5", t_df: int = 5
                          ) -> dict[int, list[CoverageRow]]:
    """Conditional-t coverage recomputed from random replicate subsets.

    Subsets are pure selections of the stored replicate values; no mechanism
    run is repeated.  The full-size subset reproduces the base table.
    """
    n_total = len(next(iter(amc_values.values())))
    out: dict[int, list[CoverageRow]] = {}
    for size in sizes:
        if size > n_total:
            raise DataError(f"subset size {size} exceeds replicate count {n_total}")
        idx = subset_indices(n_total, size, seed)
        records = []
        for qid, values in amc_values.items():
            vals = np.asarray(values, dtype=float)[idx]
            point = ppmf0_answers[qid]
            m = moments(vals, point)
            records.append(ci_conditional(qid, point, m, dist, level, t_df))
        out[size] = coverage_table(records, cef_answers, meta)
    return out


def aggregate_coverage(rows: Iterable[CoverageRow],
                       ci_type: str | None = None) -> float:
    """Query-weighted overall proportion, optionally for one interval type."""
    n = 0
    hit = 0.0
    for r in rows:
        if ci_type is not None and r.ci_type != ci_type:
            continue
        n += r.n_queries
        hit += r.proportion_containing_cef * r.n_queries
    if n == 0:
        raise DataError("no coverage rows matched")
    return hit / n


# --- CSV contracts ---------------------------------------------------------


def _write_rows(path: str | Path, header: list[str], rows: Iterable) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) if isinstance(v, float) else v
                        for v in row])


def write_coverage_csv(path: str | Path, rows: Sequence[CoverageRow]) -> None:
    _write_rows(path, ["geolevel", "size_group", "ci_type", "n_queries",
                       "proportion_containing_cef", "group_share"],
                [(r.geolevel, r.size_group, r.ci_type, r.n_queries,
                  r.proportion_containing_cef, r.group_share) for r in rows])


def write_widths_csv(path: str | Path, rows: Sequence[WidthRow]) -> None:
    _write_rows(path, ["geolevel", "size_group", "ci_type", "min", "q1",
                       "median", "q3", "max", "mean"],
                [(r.geolevel, r.size_group, r.ci_type, r.min, r.q1, r.median,
                  r.q3, r.max, r.mean) for r in rows])


def write_bias_percentiles_csv(path: str | Path,
                               rows: Sequence[BiasPercentileRow]) -> None:
    _write_rows(path, ["geolevel", "size_group", "p01", "p50", "p99"],
                [(r.geolevel, r.size_group, r.p01, r.p50, r.p99) for r in rows])


def write_moment_comparison_csv(path: str | Path,
                                rows: Sequence[MomentComparisonRow]) -> None:
    _write_rows(path, ["query_id", "geolevel", "size_group", "rmse_mc",
                       "rmse_amc", "bias_mc", "bias_amc", "sd_mc", "sd_amc"],
                [(r.query_id, r.geolevel, r.size_group, r.rmse_mc, r.rmse_amc,
                  r.bias_mc, r.bias_amc, r.sd_mc, r.sd_amc) for r in rows])


def write_sensitivity_csv(path: str | Path,
                          tables: Mapping[int, Sequence[CoverageRow]]) -> None:
    _write_rows(path, ["n_iterations", "geolevel", "size_group", "ci_type",
                       "n_queries", "proportion_containing_cef", "group_share"],
                [(n, r.geolevel, r.size_group, r.ci_type, r.n_queries,
                  r.proportion_containing_cef, r.group_share)
                 for n in sorted(tables) for r in tables[n]])


def read_coverage_csv(path: str | Path) -> list[CoverageRow]:
    rows = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["geolevel", "size_group", "ci_type", "n_queries",
                      "proportion_containing_cef", "group_share"]:
            raise DataError(f"bad coverage header in {path}: {header}")
        for geo, size, ci_type, n, prop, share in r:
            rows.append(CoverageRow(geo, size, ci_type, int(n), float(prop),
                                    float(share)))
    return rows

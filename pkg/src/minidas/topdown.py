"""Top-down post-processing: noisy measurements -> consistent integer histogram.

The estimator descends the geographic hierarchy one level at a time.  At each
level, every parent unit poses an independent subproblem: find non-negative
child cell vectors that (a) fit that level's noisy measurements in weighted
least squares and (b) sum exactly, cell by cell, to the parent's already
fixed vector.  A continuous solve is followed by a rounding step that keeps
every entry within one unit of its continuous value while preserving all
equality constraints exactly, so the final histogram is made of non-negative
integers, is hierarchically consistent, and holds the configured invariant
totals exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .errors import ConfigError, SolverError
from .model import Histogram, Schema
from .noise import (BudgetAllocation, NoisyMeasurement, QueryGroup,
                    marginal_map, take_measurements)

RIDGE = 1e-9
KKT_TOL = 1e-8
MAX_ITER = 10_000

_SNAP = 1e-9  # values this close to an integer are treated as integral


@dataclass(frozen=True)
class Invariants:
    """Which totals are pinned to their input values.

    ``level1_totals`` (one total per level-1 unit) implies ``root_total``,
    since the root total is the sum of the level-1 totals.
    """

    root_total: bool = True
    level1_totals: bool = False

    def __post_init__(self):
        if self.level1_totals and not self.root_total:
            raise ConfigError("level1_totals requires root_total")


@dataclass
class LevelReport:
    level: str
    iterations: int
    residual: float
    infeasible: bool
    wall_time_s: float


@dataclass
class SolveReport:
    levels: list[LevelReport] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        doc = [vars(lr) for lr in self.levels]
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# --- projections ------------------------------------------------------------


def _project_columns(x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Project each column of ``x`` onto {v >= 0, sum(v) = target}."""
    k, d = x.shape
    if k == 1:
        return targets[None, :].astype(float).copy()
    u = np.sort(x, axis=0)[::-1]
    css = np.cumsum(u, axis=0) - targets[None, :]
    denom = np.arange(1, k + 1)[:, None]
    cond = u - css / denom > 0
    rho = k - 1 - np.argmax(cond[::-1], axis=0)
    rho = np.where(cond.any(axis=0), rho, 0)
    theta = css[rho, np.arange(d)] / (rho + 1)
    return np.maximum(x - theta[None, :], 0.0)


def _project_rows(x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return _project_columns(x.T, targets).T


# --- continuous stage -------------------------------------------------------


class _Objective:
    """Weighted least-squares data term over a set of marginal measurements.

    One term per query group: ``w_g * ||A_g x_c - y_{c,g}||^2`` summed over
    children, plus a tiny ridge for strict convexity.
    """

    def __init__(self, schema: Schema, children: Sequence[str],
                 measurements: Sequence[NoisyMeasurement],
                 groups: Sequence[QueryGroup], ridge: float):
        self.ridge = ridge
        k = len(children)
        pos = {c: i for i, c in enumerate(children)}
        group_by_name = {g.name: g for g in groups}
        collected: dict[str, dict] = {}
        for m in measurements:
            if m.unit not in pos:
                continue
            if m.group not in group_by_name:
                raise SolverError(f"measurement group {m.group!r} missing from plan")
            entry = collected.setdefault(m.group, {"ys": {}, "ws": {}})
            entry["ys"][pos[m.unit]] = np.asarray(m.answers, dtype=float)
            entry["ws"][pos[m.unit]] = 1.0 / m.variance
        self.terms = []
        lmax = 0.0
        for gname in sorted(collected):
            entry = collected[gname]
            mapping, mcells = marginal_map(schema, group_by_name[gname])
            amat = np.zeros((mcells, schema.ncells))
            amat[mapping, np.arange(schema.ncells)] = 1.0
            y = np.zeros((k, mcells))
            w = np.zeros(k)    # weight 0 = this child has no such measurement
            for ci, ans in entry["ys"].items():
                if len(ans) != mcells:
                    raise SolverError(f"group {gname!r} answer length {len(ans)} != {mcells}")
                y[ci] = ans
                w[ci] = entry["ws"][ci]
            self.terms.append((amat, y, w))
            lmax += float(w.max()) * float(np.bincount(mapping, minlength=mcells).max())
        # gradient Lipschitz constant: 2 (sum_g w_g lam_max(Ag'Ag) + ridge);
        # for a marginal indicator matrix lam_max is the largest cell fan-in
        self.lipschitz = 2.0 * (lmax + ridge)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = 2.0 * self.ridge * x
        for amat, y, w in self.terms:
            resid = (x @ amat.T - y) * w[:, None]
            g += 2.0 * (resid @ amat)
        return g

    def value(self, x: np.ndarray) -> float:
        v = self.ridge * float((x * x).sum())
        for amat, y, w in self.terms:
            resid = x @ amat.T - y
            v += float((w[:, None] * resid * resid).sum())
        return v


def _infer_groups(schema: Schema, measurements: Sequence[NoisyMeasurement]
                  ) -> list[QueryGroup]:
    # Only the unambiguous cases are inferable from answer lengths; callers
    # with proper marginal groups must pass them explicitly.
    groups = []
    seen: dict[str, int] = {}
    for m in measurements:
        seen.setdefault(m.group, len(m.answers))
    for gname, mcells in sorted(seen.items()):
        if mcells == schema.ncells:
            groups.append(QueryGroup(gname, schema.names))
        elif mcells == 1:
            groups.append(QueryGroup(gname, ()))
        else:
            raise SolverError(
                f"cannot infer the marginal of group {gname!r}; pass groups=")
    return groups


def _pgd(obj: _Objective, x0: np.ndarray, project, tol: float,
         max_iter: int) -> tuple[np.ndarray, int, float]:
    x = project(x0)
    step = 1.0 / obj.lipschitz
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x_new = project(x - step * obj.gradient(x))
        residual = float(np.abs(x_new - x).max() / step)
        x = x_new
        if residual <= tol:
            break
    return x, it, residual


def solve_level(parent_solution: np.ndarray, children: Sequence[str],
                measurements: Sequence[NoisyMeasurement], schema: Schema,
                child_totals: Mapping[str, float] | None = None,
                groups: Sequence[QueryGroup] | None = None,
                ridge: float = RIDGE, tol: float = KKT_TOL,
                max_iter: int = MAX_ITER) -> tuple[np.ndarray, int, float]:
    """Continuous stage for one parent: weighted NNLS with sum constraints.

    Minimises ``sum_g ||A_g x_c - y_{c,g}||^2 / var_g`` over child cell
    vectors ``x_c >= 0`` subject to ``sum_c x_c = parent_solution``
    elementwise and, when ``child_totals`` is given, ``sum(x_c) =
    child_totals[c]`` per child.  Returns ``(solution, iterations,
    kkt_residual)`` with ``solution`` of shape ``(len(children), n_cells)``.

    The feasible set is nonempty whenever the parent vector is non-negative
    and the totals are consistent, which the caller guarantees.
    """
    parent = np.asarray(parent_solution, dtype=float)
    if (parent < -1e-9).any():
        raise SolverError("parent solution has negative entries")
    parent = np.maximum(parent, 0.0)
    k = len(children)
    if k == 0:
        raise SolverError("no children to solve for")

    row_targets = None
    if child_totals is not None:
        row_targets = np.array([float(child_totals[c]) for c in children])
        if (row_targets < 0).any():
            raise SolverError("child totals must be non-negative")
        if abs(row_targets.sum() - parent.sum()) > 1e-6 * max(1.0, parent.sum()):
            raise SolverError("child totals inconsistent with parent total")

    if groups is None:
        groups = _infer_groups(schema, measurements)
    obj = _Objective(schema, children, measurements, groups, ridge)

    x0 = np.tile(parent / k, (k, 1))
    if row_targets is None:
        return _pgd(obj, x0, lambda x: _project_columns(x, parent), tol, max_iter)
    return _pgd_with_row_totals(obj, x0, parent, row_targets, tol, max_iter)


_ROW_TOL = 1e-7  # absolute; rounding requires the totals within 1e-6


def _pgd_with_row_totals(obj: _Objective, x0: np.ndarray, parent: np.ndarray,
                         row_targets: np.ndarray, tol: float,
                         max_iter: int) -> tuple[np.ndarray, int, float]:
    """Augmented Lagrangian on the per-child total constraints.

    The column-sum and non-negativity constraints stay in the (cheap, exact)
    projection; the scalar row totals are enforced by multipliers, so each
    inner step is still a single simplex projection per cell.  The penalty
    weight escalates when the totals stall, and the inner tolerance tracks
    the float-precision floor of the gradient-step residual.
    """
    k, d = x0.shape
    eps_floor = 16 * np.finfo(float).eps * max(1.0, float(np.abs(parent).max()))
    lam = np.zeros(k)
    mu = obj.lipschitz
    x = x0
    total_iters = 0
    inner_resid = np.inf
    prev_err = np.inf
    for _ in range(200):
        lip = obj.lipschitz + mu * d
        step = 1.0 / lip
        inner_tol = max(tol, eps_floor * lip)
        for _ in range(max_iter):
            r = x.sum(axis=1) - row_targets
            g = obj.gradient(x) + (lam + mu * r)[:, None]
            x_new = _project_columns(x - step * g, parent)
            inner_resid = float(np.abs(x_new - x).max() / step)
            x = x_new
            total_iters += 1
            if inner_resid <= inner_tol or total_iters >= 20 * max_iter:
                break
        r = x.sum(axis=1) - row_targets
        row_err = float(np.abs(r).max())
        if row_err <= _ROW_TOL and inner_resid <= inner_tol:
            return x, total_iters, max(inner_resid, row_err)
        lam = lam + mu * r
        if row_err > 0.5 * prev_err:
            mu *= 4.0
        prev_err = row_err
        if total_iters >= 20 * max_iter:
            break
    return x, total_iters, max(inner_resid, float(np.abs(x.sum(axis=1) - row_targets).max()))


def solve_root(measurements: Sequence[NoisyMeasurement], schema: Schema,
               root_id: str, total: float | None,
               groups: Sequence[QueryGroup] | None = None,
               ridge: float = RIDGE, tol: float = KKT_TOL,
               max_iter: int = MAX_ITER) -> tuple[np.ndarray, int, float]:
    """Continuous stage at the root: one cell vector, optionally a fixed total."""
    if groups is None:
        groups = _infer_groups(schema, measurements)
    obj = _Objective(schema, [root_id], measurements, groups, ridge)

    if total is None:
        def project(x):
            return np.maximum(x, 0.0)
    else:
        t = np.array([float(total)])

        def project(x):
            return _project_rows(x, t)

    x, it, residual = _pgd(obj, np.zeros((1, schema.ncells)), project, tol, max_iter)
    return x[0], it, residual


# --- rounding stage ---------------------------------------------------------


def _snap_nonneg(x: np.ndarray) -> np.ndarray:
    near = np.round(x)
    out = np.where(np.abs(x - near) < _SNAP, near, x)
    return np.maximum(out, 0.0)


def round_to_total(x: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of a vector to a fixed integer sum.

    Entries with the largest fractional parts are rounded up; exact ties
    fall back to position order, which is total, so no random draw is ever
    consumed.  Every output entry is floor or ceil of its input.
    """
    x = _snap_nonneg(np.asarray(x, dtype=float))
    floors = np.floor(x).astype(np.int64)
    frac = x - floors
    extra = int(total) - int(floors.sum())
    if extra < 0 or extra > len(x):
        raise SolverError(f"rounding target {total} unreachable from floor sum {floors.sum()}")
    order = np.lexsort((np.arange(len(x)), -frac))
    out = floors.copy()
    if extra:
        chosen = order[:extra]
        if (frac[chosen] <= 0).any():
            raise SolverError("rounding would lift an integral entry")
        out[chosen] += 1
    return out


def integerize(real_solution: np.ndarray, parent_integer: np.ndarray,
               seed: int = 0) -> np.ndarray:
    """Round child cell vectors so every cell's column sums to the parent exactly."""
    x = _snap_nonneg(np.asarray(real_solution, dtype=float))
    parent = np.asarray(parent_integer)
    k, d = x.shape
    if d and np.abs(x.sum(axis=0) - parent).max() > 1e-6:
        raise SolverError("continuous solution does not sum to the parent vector")
    out = np.empty((k, d), dtype=np.int64)
    for j in range(d):
        out[:, j] = round_to_total(x[:, j], int(parent[j]))
    return out


def integerize_with_totals(real_solution: np.ndarray, parent_integer: np.ndarray,
                           row_totals: Sequence[int]) -> np.ndarray:
    """Round preserving both per-cell column sums and per-child scalar totals.

    Used at levels that carry invariant totals, where plain per-cell largest
    remainder cannot keep the child totals exact.  Selecting which fractional
    entries round up is a unit-capacity transportation problem, solved
    exactly by max flow; the bracket property holds because only fractional
    entries may be lifted.
    """
    x = _snap_nonneg(np.asarray(real_solution, dtype=float))
    parent = np.asarray(parent_integer, dtype=np.int64)
    rows = np.asarray(row_totals, dtype=np.int64)
    k, d = x.shape
    if np.abs(x.sum(axis=0) - parent).max() > 1e-6:
        raise SolverError("continuous solution violates the parent equality")
    if np.abs(x.sum(axis=1) - rows).max() > 1e-6:
        raise SolverError("continuous solution violates the child totals")
    floors = np.floor(x).astype(np.int64)
    frac = x - floors
    need_row = rows - floors.sum(axis=1)
    need_col = parent - floors.sum(axis=0)
    total_need = int(need_row.sum())
    if total_need != int(need_col.sum()):
        raise SolverError("inconsistent rounding deficits")
    if total_need == 0:
        return floors
    # nodes: 0 = source, 1..k = children, k+1..k+d = cells, k+d+1 = sink
    n = k + d + 2
    src, sink = 0, k + d + 1
    rows_i, cols_i, caps = [], [], []
    for i in range(k):
        if need_row[i] > 0:
            rows_i.append(src); cols_i.append(1 + i); caps.append(int(need_row[i]))
    fi, fj = np.nonzero(frac > 0)
    for i, j in zip(fi.tolist(), fj.tolist()):
        rows_i.append(1 + i); cols_i.append(1 + k + j); caps.append(1)
    for j in range(d):
        if need_col[j] > 0:
            rows_i.append(1 + k + j); cols_i.append(sink); caps.append(int(need_col[j]))
    graph = csr_matrix((caps, (rows_i, cols_i)), shape=(n, n), dtype=np.int32)
    result = maximum_flow(graph, src, sink)
    if result.flow_value != total_need:
        raise SolverError("controlled rounding infeasible (should not happen)")
    lifted = result.flow.toarray()[1:k + 1, k + 1:k + d + 1]
    return floors + (lifted > 0).astype(np.int64)


# --- full run ----------------------------------------------------------------


def run(input_hist: Histogram, alloc: BudgetAllocation, invariants: Invariants,
        groups_by_level: Mapping[str, Sequence[QueryGroup]], seed: int,
        ridge: float = RIDGE, tol: float = KKT_TOL,
        max_iter: int = MAX_ITER) -> tuple[Histogram, SolveReport]:
    """One full top-down pass: measure the input, then solve level by level.

    The output depends on the input only through its true marginal answers
    plus fresh noise drawn from ``seed``.
    """
    hierarchy = input_hist.hierarchy
    schema = input_hist.schema
    measurements = take_measurements(input_hist, alloc, groups_by_level, seed)
    by_unit: dict[str, list[NoisyMeasurement]] = {}
    for m in measurements:
        by_unit.setdefault(m.unit, []).append(m)

    report = SolveReport()
    root_id = hierarchy.root_id
    root_total = input_hist.total(root_id) if invariants.root_total else None
    level1_totals = None
    if invariants.level1_totals:
        level1_totals = {uid: input_hist.total(uid) for uid in hierarchy.units_at(1)}

    t0 = time.perf_counter()
    root_groups = list(groups_by_level.get(hierarchy.levels[0], []))
    x_root, iters, resid = solve_root(by_unit.get(root_id, []), schema, root_id,
                                      root_total, groups=root_groups or None,
                                      ridge=ridge, tol=tol, max_iter=max_iter)
    target_total = root_total if root_total is not None else int(round(x_root.sum()))
    solved: dict[str, np.ndarray] = {root_id: round_to_total(x_root, target_total)}
    report.levels.append(LevelReport(hierarchy.levels[0], iters, resid, False,
                                     time.perf_counter() - t0))

    for level in range(1, len(hierarchy.levels)):
        t0 = time.perf_counter()
        level_name = hierarchy.levels[level]
        level_groups = list(groups_by_level.get(level_name, []))
        worst_iters, worst_resid = 0, 0.0
        for parent in hierarchy.units_at(level - 1):
            children = hierarchy.children(parent)
            child_ms = [m for c in children for m in by_unit.get(c, [])]
            totals = None
            if level == 1 and level1_totals is not None:
                totals = {c: level1_totals[c] for c in children}
            x, iters, resid = solve_level(solved[parent].astype(float), children,
                                          child_ms, schema, child_totals=totals,
                                          groups=level_groups or None,
                                          ridge=ridge, tol=tol, max_iter=max_iter)
            worst_iters = max(worst_iters, iters)
            worst_resid = max(worst_resid, resid)
            if totals is not None:
                ints = integerize_with_totals(x, solved[parent],
                                              [level1_totals[c] for c in children])
            else:
                ints = integerize(x, solved[parent], seed=seed)
            for ci, c in enumerate(children):
                solved[c] = ints[ci]
        report.levels.append(LevelReport(level_name, worst_iters, worst_resid,
                                         False, time.perf_counter() - t0))

    matrix = np.stack([solved[b] for b in hierarchy.block_ids])
    out = Histogram.from_matrix(schema, hierarchy, matrix)
    return out, report

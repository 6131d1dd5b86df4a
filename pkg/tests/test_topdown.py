import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minidas import topdown
from minidas.errors import ConfigError, SolverError
from minidas.model import GeoHierarchy, Histogram, SynthConfig, synth_cef
from minidas.noise import BudgetAllocation, NoisyMeasurement, QueryGroup, marginal_map
from minidas.topdown import (Invariants, integerize, integerize_with_totals,
                             round_to_total, solve_level)
from oracles import active_set_qp, grid_search_two_child_scalar


def _detailed_groups(schema, levels):
    return {lvl: [QueryGroup.detailed(schema)] for lvl in levels}


class TestInvariants:
    def test_level1_requires_root(self):
        with pytest.raises(ConfigError):
            Invariants(root_total=False, level1_totals=True)


class TestSolveLevel:
    def test_single_child_equals_parent(self, schema4):
        parent = np.array([3.0, 0.0, 2.0, 7.0])
        ms = [NoisyMeasurement("c0", "lvl", "detailed", (9.0, 9.0, 9.0, 9.0), 1.0)]
        x, _, resid = solve_level(parent, ["c0"], ms, schema4)
        assert np.abs(x[0] - parent).max() < 1e-9

    def test_two_child_kkt_hand_case(self, schema4):
        # per cell: min (x1-3.2)^2 + (x2+1.0)^2 s.t. x1+x2=2, x>=0 -> (2, 0)
        parent = np.full(4, 2.0)
        ms = [NoisyMeasurement("c0", "lvl", "detailed", (3.2,) * 4, 1.0),
              NoisyMeasurement("c1", "lvl", "detailed", (-1.0,) * 4, 1.0)]
        x, _, _ = solve_level(parent, ["c0", "c1"], ms, schema4)
        g1, g2 = grid_search_two_child_scalar(3.2, -1.0, 2.0)
        assert (g1, g2) == pytest.approx((2.0, 0.0), abs=1e-3)
        assert np.abs(x[0] - 2.0).max() < 1e-6
        assert np.abs(x[1] - 0.0).max() < 1e-6

    def test_halved_variance_pulls_solution(self, schema4):
        # unconstrained-in-interior weighted mean: x1 = (y1/v1 + (p - y2)/v2) ...
        parent = np.full(4, 10.0)
        def solve(v1):
            ms = [NoisyMeasurement("c0", "lvl", "detailed", (8.0,) * 4, v1),
                  NoisyMeasurement("c1", "lvl", "detailed", (6.0,) * 4, 4.0)]
            x, _, _ = solve_level(parent, ["c0", "c1"], ms, schema4)
            return x[0, 0]
        # with equal pull one way: weighted average of 8 and (10 - 6) = 4
        base = solve(4.0)      # equal weights -> midpoint 6
        tighter = solve(2.0)   # c0 residual weight doubled -> moves toward 8
        assert base == pytest.approx(6.0, abs=1e-6)
        assert tighter > base + 0.3

    def test_matches_active_set_oracle_with_marginal_groups(self, schema4):
        g = np.random.default_rng(21)
        groups = [QueryGroup.detailed(schema4), QueryGroup("a", ("a",))]
        amats = {}
        for grp in groups:
            mapping, mc = marginal_map(schema4, grp)
            amat = np.zeros((mc, 4))
            amat[mapping, np.arange(4)] = 1.0
            amats[grp.name] = amat
        for _ in range(10):
            k = int(g.integers(1, 4))
            children = [f"c{i}" for i in range(k)]
            parent = g.integers(0, 7, size=4).astype(float)
            variances = {"detailed": float(g.uniform(0.5, 3)), "a": float(g.uniform(0.5, 3))}
            ms, ys = [], {"detailed": {}, "a": {}}
            for ci, c in enumerate(children):
                yd = g.normal(parent / k, 1.5)
                ya = g.normal(parent.reshape(2, 2).sum(axis=1) / k, 1.5)
                ms.append(NoisyMeasurement(c, "lvl", "detailed", tuple(yd), variances["detailed"]))
                ms.append(NoisyMeasurement(c, "lvl", "a", tuple(ya), variances["a"]))
                ys["detailed"][ci] = yd
                ys["a"][ci] = ya
            x, _, _ = solve_level(parent, children, ms, schema4, groups=groups)
            expected = active_set_qp(parent, ys, variances, amats, topdown.RIDGE)
            assert np.abs(x - expected).max() < 1e-6

    def test_row_totals_enforced(self, schema4):
        g = np.random.default_rng(5)
        parent = g.integers(0, 9, size=4).astype(float)
        totals = {"c0": float(parent.sum() // 2),
                  "c1": float(parent.sum() - parent.sum() // 2)}
        ms = [NoisyMeasurement(c, "lvl", "detailed",
                               tuple(g.normal(parent / 2, 2.0)), 1.0)
              for c in ("c0", "c1")]
        x, _, resid = solve_level(parent, ["c0", "c1"], ms, schema4,
                                  child_totals=totals)
        assert np.abs(x.sum(axis=0) - parent).max() < 1e-9
        assert abs(x.sum(axis=1)[0] - totals["c0"]) < 1e-6
        assert (x >= -1e-12).all()

    def test_inconsistent_totals_rejected(self, schema4):
        parent = np.full(4, 2.0)
        ms = [NoisyMeasurement("c0", "lvl", "detailed", (1.0,) * 4, 1.0)]
        with pytest.raises(SolverError):
            solve_level(parent, ["c0"], ms, schema4, child_totals={"c0": 99.0})


class TestRounding:
    def test_integral_input_unchanged(self):
        x = np.array([[1.0, 0.0], [2.0, 3.0]])
        out = integerize(x, np.array([3, 3]))
        assert (out == x).all()

    def test_bracket_and_total(self):
        x = np.array([[1.5, 0.25], [0.5, 0.75]])
        out = integerize(x, np.array([2, 1]))
        assert out.sum(axis=0).tolist() == [2, 1]
        assert set(map(tuple, [out[:, 0]])) <= {(2, 0), (1, 1)}
        assert np.abs(out - x).max() < 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_property_oracle(self, seed):
        g = np.random.default_rng(seed)
        k, d = int(g.integers(2, 11)), int(g.integers(1, 5))
        parent = g.integers(0, 38, size=d)
        x = g.dirichlet(np.ones(k), size=d).T * parent  # columns sum to parent
        out = integerize(x, parent)
        assert (out.sum(axis=0) == parent).all()
        assert (np.abs(out - x) < 1.0 + 1e-9).all()
        assert (out >= 0).all()

    def test_round_to_total_ties_by_position(self):
        out = round_to_total(np.array([0.5, 0.5, 0.5, 0.5]), 2)
        assert out.tolist() == [1, 1, 0, 0]

    def test_precondition_violation(self):
        with pytest.raises(SolverError):
            integerize(np.array([[1.0, 1.0]]), np.array([5, 1]))

    def test_with_totals_preserves_both_margins(self):
        g = np.random.default_rng(17)
        for _ in range(200):
            k, d = int(g.integers(2, 6)), int(g.integers(2, 7))
            ints = g.integers(0, 9, size=(k, d))
            # build a fractional matrix whose margins are integral by
            # shifting mass along a random cycle of cells
            x = ints.astype(float)
            if d >= 2 and k >= 2:
                eps = float(g.uniform(0.05, 0.95))
                i0, i1 = g.choice(k, size=2, replace=False)
                j0, j1 = g.choice(d, size=2, replace=False)
                x[i0, j0] += eps
                x[i0, j1] -= eps
                x[i1, j0] -= eps
                x[i1, j1] += eps
                if (x < 0).any():
                    continue
            parent = x.sum(axis=0)
            rows = x.sum(axis=1)
            out = integerize_with_totals(x, np.round(parent), np.round(rows))
            assert (out.sum(axis=0) == np.round(parent).astype(int)).all()
            assert (out.sum(axis=1) == np.round(rows).astype(int)).all()
            assert (np.abs(out - x) < 1.0 + 1e-9).all()


class TestRun:
    def _setup(self, schema, fan_outs, sigma2, seed=3):
        cfg = SynthConfig(schema=schema, fan_outs=fan_outs, zero_frac=0.35,
                          small_frac=0.45)
        cef = synth_cef(cfg, seed)
        levels = cef.hierarchy.levels
        groups = _detailed_groups(schema, levels)
        rho_level = 1.0 / (2.0 * sigma2)
        alloc = BudgetAllocation.uniform_groups(
            rho_level * len(levels), {lvl: 1 / len(levels) for lvl in levels}, groups)
        return cef, alloc, groups

    def test_zero_noise_fixed_point(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 2), 1e-9)
        out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=1)
        assert out == cef

    def test_invariant_totals_exact(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 3), 2.0)
        for seed in range(5):
            out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=seed)
            assert out.total() == cef.total()
            for uid in cef.hierarchy.units_at(1):
                assert out.total(uid) == cef.total(uid)

    def test_hierarchical_consistency_exact(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 2, 3), 2.0)
        out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=11)
        h = cef.hierarchy
        for level in range(h.block_level):
            for uid in h.units_at(level):
                kids = h.children(uid)
                assert (out.aggregate(uid) ==
                        sum(out.aggregate(c) for c in kids)).all()

    def test_output_non_negative_integers(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 2), 1.0)
        out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=2)
        assert (out.matrix() >= 0).all()
        assert out.matrix().dtype.kind == "i"

    def test_signed_errors_cancel_within_state(self, schema4):
        # held state totals force the detailed-cell errors to sum to zero
        cef, alloc, groups = self._setup(schema4, (2, 3), 2.0)
        out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=8)
        for uid in cef.hierarchy.units_at(1):
            err = out.aggregate(uid).astype(int) - cef.aggregate(uid).astype(int)
            assert err.sum() == 0

    def test_root_only_invariant(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 2), 2.0)
        out, _ = topdown.run(cef, alloc, Invariants(True, False), groups, seed=4)
        assert out.total() == cef.total()

    def test_continuous_stage_matches_tiny_qp_oracle(self, schema4):
        # 1 state, 2 blocks: the block-level solve must equal the projection
        # of the noisy detailed measurements onto the constraint set
        hierarchy = GeoHierarchy.from_fanouts((1, 2), ("root", "state", "block"))
        g = np.random.default_rng(0)
        cef = Histogram.from_matrix(schema4, hierarchy,
                                    g.integers(0, 6, size=(2, 4)))
        parent = cef.aggregate(hierarchy.units_at(1)[0]).astype(float)
        ys = {"detailed": {0: g.normal(parent / 2, 2.0),
                           1: g.normal(parent / 2, 2.0)}}
        ms = [NoisyMeasurement(b, "block", "detailed", tuple(ys["detailed"][i]), 1.0)
              for i, b in enumerate(hierarchy.block_ids)]
        x, _, _ = solve_level(parent, list(hierarchy.block_ids), ms, schema4)
        amat = np.eye(4)
        expected = active_set_qp(parent, ys, {"detailed": 1.0},
                                 {"detailed": amat}, topdown.RIDGE)
        assert np.abs(x - expected).max() < 1e-6

    def test_report_structure(self, schema4):
        cef, alloc, groups = self._setup(schema4, (2, 2), 1.0)
        _, report = topdown.run(cef, alloc, Invariants(True, True), groups, seed=2)
        assert [lr.level for lr in report.levels] == list(cef.hierarchy.levels)
        assert all(np.isfinite(lr.residual) for lr in report.levels)
        assert not any(lr.infeasible for lr in report.levels)

    def test_tabulation_idempotent_across_levels(self, schema4):
        # any cell set tabulated from blocks equals the same set from the
        # solved internal vectors, at every unit
        cef, alloc, groups = self._setup(schema4, (2, 2, 2), 1.5)
        out, _ = topdown.run(cef, alloc, Invariants(True, True), groups, seed=6)
        h = cef.hierarchy
        for uid in h.units_at(1):
            from_blocks = sum(out.aggregate(b) for b in h.blocks_under(uid))
            from_counties = sum(out.aggregate(c) for c in h.children(uid))
            assert (out.aggregate(uid) == from_blocks).all()
            assert (from_blocks == from_counties).all()

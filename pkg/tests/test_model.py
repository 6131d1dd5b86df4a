import numpy as np
import pytest

from minidas.errors import ConfigError, DataError, SchemaError
from minidas.model import (GeoHierarchy, GeoUnit, Histogram, Schema,
                           SynthConfig, aggregate, synth_cef)
from oracles import flat_block_sum


class TestSchema:
    def test_cell_count(self, schema16):
        assert schema16.ncells == 16

    def test_cardinality_below_two_rejected(self):
        with pytest.raises(SchemaError):
            Schema((("a", 1),))

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            Schema((("a", 2), ("a", 3)))

    def test_bad_universe_rejected(self):
        with pytest.raises(SchemaError):
            Schema((("a", 2),), universe="dwelling")

    def test_cells_where_marginal(self, schema4):
        # row-major over (a, b); a=1 selects the last two cells
        assert schema4.cells_where(a=1) == (2, 3)
        assert schema4.cells_where(a=0, b=1) == (1,)

    def test_json_roundtrip(self, tmp_path, schema16):
        schema16.to_json(tmp_path / "s.json")
        assert Schema.from_json(tmp_path / "s.json") == schema16


class TestGeoHierarchy:
    def test_fanouts_shape(self, hierarchy3):
        assert hierarchy3.levels == ("root", "state", "county", "block")
        assert len(hierarchy3.units_at(1)) == 2
        assert len(hierarchy3.block_ids) == 8

    def test_nonpositive_fanout_rejected(self):
        with pytest.raises(ConfigError):
            GeoHierarchy.from_fanouts((2, 0))

    def test_two_roots_rejected(self):
        units = [GeoUnit("r1", 0, None), GeoUnit("r2", 0, None)]
        with pytest.raises(DataError):
            GeoHierarchy(("root", "block"), units)

    def test_leaf_above_block_level_rejected(self):
        units = [GeoUnit("r", 0, None), GeoUnit("s", 1, "r")]
        with pytest.raises(DataError):
            GeoHierarchy(("root", "state", "block"), units)

    def test_parent_must_be_one_level_up(self):
        units = [GeoUnit("r", 0, None), GeoUnit("b", 2, "r")]
        with pytest.raises(DataError):
            GeoHierarchy(("root", "state", "block"), units)

    def test_blocks_under(self, hierarchy3):
        state = hierarchy3.units_at(1)[0]
        assert len(hierarchy3.blocks_under(state)) == 4
        block = hierarchy3.block_ids[0]
        assert hierarchy3.blocks_under(block) == (block,)

    def test_unknown_unit(self, hierarchy3):
        with pytest.raises(DataError):
            hierarchy3.unit("nowhere")

    def test_csv_roundtrip(self, tmp_path, hierarchy3):
        hierarchy3.to_csv(tmp_path / "h.csv")
        back = GeoHierarchy.from_csv(tmp_path / "h.csv")
        assert back.levels == hierarchy3.levels
        assert back.block_ids == hierarchy3.block_ids
        assert back.children(back.root_id) == hierarchy3.children(hierarchy3.root_id)


class TestHistogram:
    def test_two_block_sum(self, schema4, hierarchy22):
        b = hierarchy22.block_ids
        h = Histogram(schema4, hierarchy22,
                      {(b[0], 0): 1, (b[0], 1): 2, (b[1], 0): 3, (b[1], 1): 4})
        parent = hierarchy22.unit(b[0]).parent
        assert aggregate(h, parent).tolist() == [4, 6, 0, 0]

    def test_block_identity(self, schema4, hierarchy22):
        b = hierarchy22.block_ids[0]
        h = Histogram(schema4, hierarchy22, {(b, 0): 5})
        assert aggregate(h, b).tolist() == [5, 0, 0, 0]

    def test_root_aggregate_matches_flat_sum(self, schema4, hierarchy3):
        g = np.random.default_rng(3)
        m = g.integers(0, 9, size=(len(hierarchy3.block_ids), schema4.ncells))
        h = Histogram.from_matrix(schema4, hierarchy3, m)
        states = hierarchy3.units_at(1)
        root_vec = aggregate(h, hierarchy3.root_id)
        assert (root_vec == sum(aggregate(h, s) for s in states)).all()
        for cell in range(schema4.ncells):
            assert root_vec[cell] == flat_block_sum(h, hierarchy3.block_ids, [cell])

    def test_negative_count_rejected(self, schema4, hierarchy22):
        with pytest.raises(DataError):
            Histogram(schema4, hierarchy22, {(hierarchy22.block_ids[0], 0): -1})

    def test_non_integer_rejected(self, schema4, hierarchy22):
        with pytest.raises(DataError):
            Histogram(schema4, hierarchy22, {(hierarchy22.block_ids[0], 0): 1.5})

    def test_internal_unit_key_rejected(self, schema4, hierarchy22):
        with pytest.raises(DataError):
            Histogram(schema4, hierarchy22, {(hierarchy22.root_id, 0): 1})

    def test_csv_roundtrip(self, tmp_path, schema4, hierarchy3):
        g = np.random.default_rng(5)
        m = g.integers(0, 4, size=(8, 4))
        h = Histogram.from_matrix(schema4, hierarchy3, m)
        h.to_csv(tmp_path / "h.csv")
        assert Histogram.from_csv(tmp_path / "h.csv", schema4, hierarchy3) == h


class TestSynth:
    def test_deterministic(self, schema4):
        cfg = SynthConfig(schema=schema4, fan_outs=(2, 2))
        assert synth_cef(cfg, 7) == synth_cef(cfg, 7)
        assert synth_cef(cfg, 7) != synth_cef(cfg, 8)

    def test_shape(self, schema4):
        cfg = SynthConfig(schema=schema4, fan_outs=(2, 2))
        h = synth_cef(cfg, 7)
        assert len(h.hierarchy.block_ids) == 4
        assert h.matrix().shape == (4, 4)

    def test_all_zero_when_fully_inflated(self, schema4):
        cfg = SynthConfig(schema=schema4, fan_outs=(2, 2), zero_frac=1.0,
                          small_frac=0.0)
        assert synth_cef(cfg, 1).total() == 0

    def test_zero_share_near_config(self, schema16):
        # >= 10^4 cells: 640 blocks x 16 cells
        cfg = SynthConfig(schema=schema16, fan_outs=(4, 4, 40), zero_frac=0.6)
        h = synth_cef(cfg, 11)
        m = h.matrix()
        assert m.size >= 10_000
        share = (m == 0).mean()
        assert abs(share - 0.6) < 0.05

    def test_bad_fanout_rejected(self, schema4):
        with pytest.raises(ConfigError):
            SynthConfig(schema=schema4, fan_outs=(2, -1))

    def test_bad_mixture_rejected(self, schema4):
        with pytest.raises(ConfigError):
            SynthConfig(schema=schema4, fan_outs=(2,), zero_frac=0.7, small_frac=0.5)

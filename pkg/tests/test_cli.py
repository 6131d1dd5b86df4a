import json
import time
from pathlib import Path

import pytest

from minidas.cli import main
from minidas.simulate import file_sha256

TINY_CONFIG = {
    "schema": {"universe": "person",
               "attributes": [{"name": "a", "cardinality": 2},
                              {"name": "b", "cardinality": 2}]},
    "hierarchy": {"fan_outs": [2, 2]},
    "synth": {"zero_frac": 0.4, "small_frac": 0.4},
    "budget": {"total_rho": 2.0,
               "level_shares": {"root": 0.3, "state": 0.3, "block": 0.4}},
    "invariants": {"root_total": True, "level1_totals": True},
    "workload": {"orders": [1, 2], "n_block_queries": 6},
    "m": 3, "s": 3, "subset_sizes": [2, 3],
    "ci_level": 0.9, "seed": 42,
}

EXPECTED_ARTIFACTS = [
    "cef.csv", "schema.json", "hierarchy.csv", "invariants.json",
    "workload.csv", "manifest_mc.json", "ppmf_0.csv", "manifest_amc.json",
    "answers_cef.csv", "answers_ppmf0.csv", "tabulation_mc.csv",
    "tabulation_amc.csv", "ci.csv", "coverage.csv", "widths.csv",
    "bias_percentiles.csv", "moment_comparison.csv", "sensitivity.csv",
    "hashes.json",
]


def _write_config(tmp_path, out_name="art", **overrides):
    cfg = dict(TINY_CONFIG, out=str(tmp_path / out_name), **overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def _tree_hashes(out: Path) -> dict:
    return {str(p.relative_to(out)): file_sha256(p)
            for p in sorted(out.rglob("*"))
            if p.is_file() and p.relative_to(out).parts[0] != "logs"}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    cfg_path = _write_config(tmp)
    start = time.monotonic()
    assert main(["pipeline", "--config", str(cfg_path)]) == 0
    elapsed = time.monotonic() - start
    return tmp, cfg_path, tmp / "art", elapsed


class TestPipeline:
    def test_smoke_completes_quickly(self, tiny_run):
        *_, elapsed = tiny_run
        assert elapsed < 10.0

    def test_artifacts_present(self, tiny_run):
        _, _, out, _ = tiny_run
        for name in EXPECTED_ARTIFACTS:
            assert (out / name).exists(), name
        for i in range(3):
            assert (out / "mc" / f"ppmf_{i}.csv").exists()
            assert (out / "amc" / f"ppmf_{i}.csv").exists()

    def test_ppmf0_is_mc_replicate_zero(self, tiny_run):
        _, _, out, _ = tiny_run
        assert (out / "ppmf_0.csv").read_bytes() == \
               (out / "mc" / "ppmf_0.csv").read_bytes()

    def test_rerun_byte_identical(self, tiny_run, tmp_path):
        tmp, cfg_path, out, _ = tiny_run
        cfg2 = _write_config(tmp_path, out_name="art2")
        assert main(["pipeline", "--config", str(cfg2)]) == 0
        assert _tree_hashes(out) == _tree_hashes(tmp_path / "art2")
        assert (out / "hashes.json").read_bytes() == \
               (tmp_path / "art2" / "hashes.json").read_bytes()

    def test_validate_passes(self, tiny_run, capsys):
        _, _, out, _ = tiny_run
        assert main(["validate", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"]
        assert any("hierarchical consistency" in c["name"] for c in report["checks"])

    def test_hash_manifest_covers_data_not_logs(self, tiny_run):
        _, _, out, _ = tiny_run
        hashes = json.loads((out / "hashes.json").read_text())
        assert "cef.csv" in hashes
        assert "mc/ppmf_1.csv" in hashes
        assert not any(k.startswith("logs/") for k in hashes)


class TestStaging:
    @pytest.fixture
    def finished(self, tmp_path):
        cfg_path = _write_config(tmp_path)
        assert main(["pipeline", "--config", str(cfg_path)]) == 0
        return cfg_path, tmp_path / "art"

    def test_amc_resume_ignores_cef(self, finished):
        # the privacy hook: perturb the ground truth after the production
        # run exists; re-running the amc stage must not change a byte
        cfg_path, out = finished
        before = {p.name: p.read_bytes() for p in (out / "amc").iterdir()}
        cef_rows = (out / "cef.csv").read_text().splitlines()
        header, first = cef_rows[0], cef_rows[1].split(",")
        poisoned = [header, f"{first[0]},{first[1]},{int(first[2]) + 1000}"]
        (out / "cef.csv").write_text("\n".join(poisoned) + "\n")
        assert main(["pipeline", "--config", str(cfg_path), "--stage", "amc"]) == 0
        after = {p.name: p.read_bytes() for p in (out / "amc").iterdir()}
        assert before == after

    def test_deleted_replicate_fails_evaluate(self, finished, capsys):
        cfg_path, out = finished
        (out / "amc" / "ppmf_1.csv").unlink()
        code = main(["pipeline", "--config", str(cfg_path), "--stage", "evaluate"])
        assert code == 3
        assert "manifest" in capsys.readouterr().err.lower()

    def test_modified_replicate_fails_tabulate(self, finished, capsys):
        cfg_path, out = finished
        p = out / "mc" / "ppmf_2.csv"
        p.write_text(p.read_text().replace("\n", "\n", 1) + "9")
        code = main(["pipeline", "--config", str(cfg_path), "--stage", "tabulate"])
        assert code == 3

    def test_amc_requires_ppmf0(self, tmp_path, capsys):
        cfg_path = _write_config(tmp_path)
        code = main(["pipeline", "--config", str(cfg_path), "--stage", "amc"])
        assert code == 3


class TestValidateFaults:
    @pytest.fixture
    def finished(self, tmp_path):
        cfg_path = _write_config(tmp_path)
        assert main(["pipeline", "--config", str(cfg_path)]) == 0
        return tmp_path / "art"

    def _reported(self, capsys):
        return json.loads(capsys.readouterr().out)

    def test_corrupt_child_count_names_unit_and_cell(self, finished, capsys):
        out = finished
        units = (out / "amc" / "units_1.csv").read_text().splitlines()
        uid, cell, count = units[1].split(",")
        units[1] = f"{uid},{cell},{int(count) + 1}"
        (out / "amc" / "units_1.csv").write_text("\n".join(units) + "\n")
        assert main(["validate", str(out)]) == 4
        report = self._reported(capsys)
        failing = [c for c in report["checks"]
                   if not c["passed"] and "consistency" in c["name"]]
        assert failing
        assert uid in failing[0]["detail"]
        assert f"cell {cell}" in failing[0]["detail"]

    def test_edited_state_total_fails_invariant_check(self, finished, capsys):
        out = finished
        inv = json.loads((out / "invariants.json").read_text())
        state = next(iter(inv["level1_totals"]))
        inv["level1_totals"][state] += 5
        (out / "invariants.json").write_text(json.dumps(inv))
        assert main(["validate", str(out)]) == 4
        report = self._reported(capsys)
        failing = [c for c in report["checks"]
                   if not c["passed"] and "invariant" in c["name"]]
        assert failing

    def test_negative_count_fails(self, finished, capsys):
        out = finished
        p = out / "mc" / "ppmf_1.csv"
        rows = p.read_text().splitlines()
        bid, cell, count = rows[1].split(",")
        rows[1] = f"{bid},{cell},-3"
        p.write_text("\n".join(rows) + "\n")
        assert main(["validate", str(out)]) == 4


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["pipeline", "--config", str(tmp_path / "nope.json")]) == 2

    def test_m_below_two(self, tmp_path):
        path = _write_config(tmp_path, m=1)
        assert main(["pipeline", "--config", str(path)]) == 2

    def test_bad_ci_level(self, tmp_path):
        path = _write_config(tmp_path, ci_level=1.5)
        assert main(["pipeline", "--config", str(path)]) == 2

    def test_bad_budget_shares(self, tmp_path):
        cfg = dict(TINY_CONFIG, out=str(tmp_path / "a"))
        cfg["budget"] = {"total_rho": 1.0,
                        "level_shares": {"root": 0.9, "state": 0.3, "block": 0.4}}
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        assert main(["pipeline", "--config", str(path)]) == 2

    def test_seed_and_out_overrides(self, tmp_path):
        path = _write_config(tmp_path)
        assert main(["pipeline", "--config", str(path), "--seed", "7",
                     "--out", str(tmp_path / "alt")]) == 0
        cfg_doc = json.loads((tmp_path / "alt" / "config.json").read_text())
        assert cfg_doc["seed"] == 7

    def test_workers_flag(self, tmp_path):
        path = _write_config(tmp_path)
        assert main(["pipeline", "--config", str(path), "--workers", "2",
                     "--out", str(tmp_path / "wk")]) == 0
        assert main(["pipeline", "--config", str(path), "--out",
                     str(tmp_path / "wk1")]) == 0
        assert _tree_hashes(tmp_path / "wk") == _tree_hashes(tmp_path / "wk1")

"""Pipeline entry point.

``minidas pipeline --config cfg.json`` drives generate -> measure/solve ->
simulate -> tabulate -> intervals -> evaluate into one artifact directory;
``minidas validate <dir>`` re-checks the structural invariants of a finished
directory.  Every stage can be re-run in isolation with ``--stage``; stages
verify their inputs against the recorded manifests before touching them.

Exit codes: 0 success, 2 config error, 3 stage failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import intervals, query, simulate, topdown
from .errors import ConfigError, ManifestError, MiniDasError
from .model import GeoHierarchy, Histogram, Schema, SynthConfig, synth_cef
from .noise import BudgetAllocation, QueryGroup
from .simulate import TdaParams, file_sha256

STAGES = ("all", "cef", "mc", "amc", "tabulate", "intervals", "evaluate")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_VALIDATION = 4


@dataclass
class RunConfig:
    schema: Schema
    fan_outs: tuple[int, ...]
    level_names: tuple[str, ...] | None
    synth: dict
    budget: dict
    groups: dict[str, list[QueryGroup]]
    invariants: topdown.Invariants
    workload: dict
    m: int
    s: int
    subset_sizes: tuple[int, ...]
    ci_level: float
    t_df: int
    seed: int
    out: Path
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None,
             out: str | None = None) -> "RunConfig":
        base = Path(path).parent
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, base, seed=seed, out=out)

    @classmethod
    def from_dict(cls, doc: dict, base: Path = Path("."),
                  seed: int | None = None, out: str | None = None) -> "RunConfig":
        try:
            if "schema_path" in doc:
                schema = Schema.from_json(base / doc["schema_path"])
            else:
                schema = Schema.from_dict(doc["schema"])
            hier = doc["hierarchy"]
            if "path" in hier:
                hierarchy = GeoHierarchy.from_csv(base / hier["path"])
                fan_outs = None
                level_names = hierarchy.levels
            else:
                fan_outs = tuple(int(f) for f in hier["fan_outs"])
                level_names = tuple(hier["levels"]) if "levels" in hier else None
            if fan_outs is None:
                raise ConfigError("hierarchy files are not supported by the "
                                  "generator stage; give fan_outs")
            levels = (GeoHierarchy.from_fanouts(fan_outs, level_names).levels)

            groups_doc = doc.get("groups")
            groups: dict[str, list[QueryGroup]] = {}
            if groups_doc is None:
                for lvl in levels:
                    groups[lvl] = [QueryGroup.detailed(schema)]
            else:
                for lvl, specs in groups_doc.items():
                    gs = []
                    for spec in specs:
                        marg = spec["marginal"]
                        if marg == "detailed":
                            gs.append(QueryGroup(spec["name"], schema.names))
                        elif marg == "total":
                            gs.append(QueryGroup(spec["name"], ()))
                        else:
                            gs.append(QueryGroup(spec["name"], tuple(marg)))
                    groups[lvl] = gs

            budget = doc["budget"]
            if "group_shares" in budget:
                alloc = BudgetAllocation(budget["total_rho"],
                                         budget["level_shares"],
                                         budget["group_shares"])
            else:
                alloc = BudgetAllocation.uniform_groups(budget["total_rho"],
                                                        budget["level_shares"],
                                                        groups)
            inv_doc = doc.get("invariants", {})
            inv = topdown.Invariants(bool(inv_doc.get("root_total", True)),
                                     bool(inv_doc.get("level1_totals", False)))
            m = int(doc.get("m", 100))
            s = int(doc.get("s", 100))
            if m < 2 or s < 2:
                raise ConfigError(f"m and s must be >= 2, got m={m} s={s}")
            ci_level = float(doc.get("ci_level", 0.90))
            if not 0.0 < ci_level < 1.0:
                raise ConfigError(f"ci_level must lie in (0, 1), got {ci_level}")
            subset_sizes = tuple(int(x) for x in doc.get("subset_sizes",
                                                         (25, 50, 75, 100)))
            cfg = cls(
                schema=schema,
                fan_outs=fan_outs,
                level_names=level_names,
                synth=dict(doc.get("synth", {})),
                budget={"total_rho": alloc.total_rho,
                        "level_shares": dict(alloc.level_shares),
                        "group_shares": {k: dict(v) for k, v in alloc.group_shares.items()}},
                groups=groups,
                invariants=inv,
                workload=dict(doc.get("workload", {})),
                m=m, s=s,
                subset_sizes=subset_sizes,
                ci_level=ci_level,
                t_df=int(doc.get("t_df", 5)),
                seed=int(seed if seed is not None else doc.get("seed", 0)),
                out=Path(out if out is not None else doc.get("out", "artifacts")),
                raw=doc,
            )
            # fail fast on inconsistent budget/groups before any stage runs
            cfg.alloc()
            for lvl, gs in groups.items():
                for g in gs:
                    cfg.alloc().variance(lvl, g.name)
            return cfg
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    def alloc(self) -> BudgetAllocation:
        return BudgetAllocation(self.budget["total_rho"],
                                self.budget["level_shares"],
                                self.budget["group_shares"])

    def params(self) -> TdaParams:
        return TdaParams(self.alloc(), self.invariants, self.groups)

    def resolved(self) -> dict:
        doc = dict(self.raw)
        doc["seed"] = self.seed
        doc["m"], doc["s"] = self.m, self.s
        doc.pop("out", None)   # location-dependent; keeps reruns byte-identical
        return doc


# --- stage implementations ---------------------------------------------------


def _hierarchy(cfg: RunConfig) -> GeoHierarchy:
    return GeoHierarchy.from_fanouts(cfg.fan_outs, cfg.level_names)


def stage_cef(cfg: RunConfig) -> None:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.resolved(), indent=2,
                                                sort_keys=True) + "\n")
    synth = SynthConfig(schema=cfg.schema, fan_outs=cfg.fan_outs,
                        level_names=cfg.level_names, **cfg.synth)
    cef = synth_cef(synth, cfg.seed)
    cfg.schema.to_json(out / "schema.json")
    cef.hierarchy.to_csv(out / "hierarchy.csv")
    cef.to_csv(out / "cef.csv")
    inv_doc = {"root_total": cef.total()}
    if cfg.invariants.level1_totals:
        inv_doc["level1_totals"] = {uid: cef.total(uid)
                                    for uid in cef.hierarchy.units_at(1)}
    (out / "invariants.json").write_text(json.dumps(inv_doc, indent=2,
                                                    sort_keys=True) + "\n")
    wl = query.build_workload(cfg.schema, cef.hierarchy, cef,
                              n_block_queries=int(cfg.workload.get("n_block_queries", 40)),
                              orders=tuple(cfg.workload.get("orders", (1, 2))),
                              seed=cfg.seed)
    query.write_workload(out / "workload.csv", wl)


def stage_mc(cfg: RunConfig, workers: int) -> None:
    out = cfg.out
    for name in ("schema.json", "hierarchy.csv", "cef.csv"):
        if not (out / name).exists():
            raise ManifestError(f"mc stage requires {name}; run the cef stage first")
    hierarchy = GeoHierarchy.from_csv(out / "hierarchy.csv")
    rs = simulate.run_mc(out / "cef.csv", cfg.schema, hierarchy, cfg.params(),
                         cfg.m, cfg.seed, out / "mc", workers=workers)
    for i, report in enumerate(rs.reports):
        report.to_json(out / "logs" / f"solve_mc_{i}.json")
    # the production realization: replicate 0 by convention
    shutil.copyfile(out / "mc" / "ppmf_0.csv", out / "ppmf_0.csv")
    simulate.write_manifest(out / "manifest_mc.json", rs, cfg.seed, cfg.params(), out)
    doc = json.loads((out / "manifest_mc.json").read_text())
    doc["ppmf0"] = "ppmf_0.csv"
    doc["hashes"]["ppmf_0.csv"] = file_sha256(out / "ppmf_0.csv")
    (out / "manifest_mc.json").write_text(json.dumps(doc, indent=2) + "\n")


def stage_amc(cfg: RunConfig, workers: int) -> None:
    """Runs only from the protected output; the ground-truth file is not read."""
    out = cfg.out
    if not (out / "ppmf_0.csv").exists():
        raise ManifestError("amc stage requires ppmf_0.csv; run the mc stage first")
    hierarchy = GeoHierarchy.from_csv(out / "hierarchy.csv")
    rs = simulate.run_amc(out / "ppmf_0.csv", cfg.schema, hierarchy, cfg.params(),
                          cfg.s, cfg.seed, out / "amc", workers=workers)
    for i, report in enumerate(rs.reports):
        report.to_json(out / "logs" / f"solve_amc_{i}.json")
    simulate.write_manifest(out / "manifest_amc.json", rs, cfg.seed, cfg.params(), out)


def _load_workload_meta(out: Path):
    hierarchy = GeoHierarchy.from_csv(out / "hierarchy.csv")
    wl = query.read_workload(out / "workload.csv")
    return hierarchy, wl


def stage_tabulate(cfg: RunConfig) -> None:
    out = cfg.out
    simulate.verify_manifest(out / "manifest_mc.json", out)
    simulate.verify_manifest(out / "manifest_amc.json", out)
    hierarchy, wl = _load_workload_meta(out)
    cef = Histogram.from_csv(out / "cef.csv", cfg.schema, hierarchy)
    query.write_tabulation(out / "answers_cef.csv",
                           [(q.id, 0, query.evaluate(q, cef)) for q in wl])
    for kind, manifest in (("mc", "manifest_mc.json"), ("amc", "manifest_amc.json")):
        rs, _ = simulate.read_manifest(out / manifest, cfg.schema, hierarchy, out)
        rows = []
        for i in range(len(rs)):
            h = rs.load(i)
            answers = query.tabulate(wl, h)
            rows.extend((qid, i, answers[qid]) for qid in sorted(answers))
        query.write_tabulation(out / f"tabulation_{kind}.csv", rows)
        if kind == "amc":
            ppmf0 = rs.load_reference()
            query.write_tabulation(out / "answers_ppmf0.csv",
                                   [(q.id, 0, query.evaluate(q, ppmf0)) for q in wl])


def stage_intervals(cfg: RunConfig) -> None:
    out = cfg.out
    for name in ("tabulation_amc.csv", "answers_ppmf0.csv"):
        if not (out / name).exists():
            raise ManifestError(f"intervals stage requires {name}")
    amc = query.read_tabulation(out / "tabulation_amc.csv")
    points = {qid: reps[0] for qid, reps in
              query.read_tabulation(out / "answers_ppmf0.csv").items()}
    records = []
    for qid in sorted(amc):
        values = [amc[qid][i] for i in sorted(amc[qid])]
        records.extend(intervals.build_all(qid, values, points[qid],
                                           level=cfg.ci_level,
                                           t_df=cfg.t_df).values())
    intervals.write_ci_csv(out / "ci.csv", records)


def stage_evaluate(cfg: RunConfig) -> None:
    """Consumes tabulations and intervals only; never opens the cef file."""
    out = cfg.out
    simulate.verify_manifest(out / "manifest_mc.json", out)
    simulate.verify_manifest(out / "manifest_amc.json", out)
    hierarchy, wl = _load_workload_meta(out)
    cef_answers = {qid: reps[0] for qid, reps in
                   query.read_tabulation(out / "answers_cef.csv").items()}
    ppmf0_answers = {qid: reps[0] for qid, reps in
                     query.read_tabulation(out / "answers_ppmf0.csv").items()}
    meta = {q.id: (query.geolevel(q, hierarchy), query.size_group(cef_answers[q.id]))
            for q in wl}

    def as_values(tab):
        return {qid: [tab[qid][i] for i in sorted(tab[qid])] for qid in tab}

    mc_values = as_values(query.read_tabulation(out / "tabulation_mc.csv"))
    amc_values = as_values(query.read_tabulation(out / "tabulation_amc.csv"))

    records = intervals.read_ci_csv(out / "ci.csv")
    ev.write_coverage_csv(out / "coverage.csv",
                          ev.coverage_table(records, cef_answers, meta))
    ev.write_widths_csv(out / "widths.csv", ev.width_summary(records, meta))
    bias_amc = {qid: intervals.moments(vals, ppmf0_answers[qid]).bias
                for qid, vals in amc_values.items()}
    ev.write_bias_percentiles_csv(out / "bias_percentiles.csv",
                                  ev.bias_percentiles(bias_amc, meta))
    ev.write_moment_comparison_csv(out / "moment_comparison.csv",
                                   ev.moment_comparison(mc_values, amc_values,
                                                        cef_answers,
                                                        ppmf0_answers, meta))
    sizes = tuple(n for n in cfg.subset_sizes if n <= cfg.s)
    tables = ev.iteration_sensitivity(amc_values, ppmf0_answers, cef_answers,
                                      meta, sizes=sizes, seed=cfg.seed,
                                      level=cfg.ci_level, t_df=cfg.t_df)
    ev.write_sensitivity_csv(out / "sensitivity.csv", tables)


def write_hash_manifest(out: Path) -> None:
    hashes = {}
    for p in sorted(out.rglob("*")):
        if p.is_dir() or p.name == "hashes.json":
            continue
        rel = p.relative_to(out)
        if rel.parts[0] == "logs":     # timing reports are not data artifacts
            continue
        hashes[str(rel)] = file_sha256(p)
    (out / "hashes.json").write_text(json.dumps(hashes, indent=2,
                                                sort_keys=True) + "\n")


def cmd_pipeline(cfg: RunConfig, stage: str, workers: int) -> int:
    order = ["cef", "mc", "amc", "tabulate", "intervals", "evaluate"]
    todo = order if stage == "all" else [stage]
    for st in todo:
        try:
            if st == "cef":
                stage_cef(cfg)
            elif st == "mc":
                stage_mc(cfg, workers)
            elif st == "amc":
                stage_amc(cfg, workers)
            elif st == "tabulate":
                stage_tabulate(cfg)
            elif st == "intervals":
                stage_intervals(cfg)
            elif st == "evaluate":
                stage_evaluate(cfg)
        except MiniDasError as exc:
            print(f"error: stage {st}: {exc}", file=sys.stderr)
            return EXIT_STAGE
    write_hash_manifest(cfg.out)
    return EXIT_OK


# --- validation ----------------------------------------------------------------


def _check_replicate(out: Path, rel: str, schema: Schema,
                     hierarchy: GeoHierarchy, inv_doc: dict,
                     level1: bool) -> list[dict]:
    checks = []
    path = out / rel
    units_rel = rel.replace("ppmf_", "units_")
    try:
        h = Histogram.from_csv(path, schema, hierarchy)
        checks.append({"name": f"{rel}: non-negative integer counts", "passed": True})
    except MiniDasError as exc:
        return [{"name": f"{rel}: non-negative integer counts", "passed": False,
                 "detail": str(exc)}]

    stored: dict[str, np.ndarray] = {}
    with open(out / units_rel, newline="") as f:
        r = csv.reader(f)
        next(r)
        for uid, cell, v in r:
            stored.setdefault(uid, np.zeros(schema.ncells, dtype=np.int64))
            stored[uid][int(cell)] = int(v)
    ok, detail = True, ""
    for level in range(hierarchy.block_level):
        for uid in hierarchy.units_at(level):
            vec = stored.get(uid, np.zeros(schema.ncells, dtype=np.int64))
            kids = hierarchy.children(uid)
            if hierarchy.unit(kids[0]).level == hierarchy.block_level:
                child_sum = sum((h.block_vector(k) for k in kids),
                                np.zeros(schema.ncells, dtype=np.int64))
            else:
                child_sum = sum((stored.get(k, np.zeros(schema.ncells, dtype=np.int64))
                                 for k in kids), np.zeros(schema.ncells, dtype=np.int64))
            if (vec != child_sum).any():
                ok = False
                cell = int(np.nonzero(vec != child_sum)[0][0])
                detail = f"unit {uid} cell {cell}: stored {vec[cell]} != children {child_sum[cell]}"
                break
        if not ok:
            break
    checks.append({"name": f"{rel}: hierarchical consistency", "passed": ok,
                   **({"detail": detail} if detail else {})})

    ok = h.total() == inv_doc["root_total"]
    detail = "" if ok else f"root total {h.total()} != invariant {inv_doc['root_total']}"
    if ok and level1:
        for uid, t in inv_doc["level1_totals"].items():
            if h.total(uid) != t:
                ok = False
                detail = f"unit {uid} total {h.total(uid)} != invariant {t}"
                break
    checks.append({"name": f"{rel}: invariant totals", "passed": ok,
                   **({"detail": detail} if detail else {})})
    return checks


def cmd_validate(artifact_dir: str | Path) -> int:
    out = Path(artifact_dir)
    checks: list[dict] = []
    try:
        schema = Schema.from_json(out / "schema.json")
        hierarchy = GeoHierarchy.from_csv(out / "hierarchy.csv")
        inv_doc = json.loads((out / "invariants.json").read_text())
        level1 = "level1_totals" in inv_doc
        for manifest in ("manifest_mc.json", "manifest_amc.json"):
            try:
                simulate.verify_manifest(out / manifest, out)
                checks.append({"name": f"{manifest}: integrity", "passed": True})
            except ManifestError as exc:
                checks.append({"name": f"{manifest}: integrity", "passed": False,
                               "detail": str(exc)})
            doc = json.loads((out / manifest).read_text())
            for rel in doc["replicates"]:
                if (out / rel).exists() and (out / rel.replace("ppmf_", "units_")).exists():
                    checks.extend(_check_replicate(out, rel, schema, hierarchy,
                                                   inv_doc, level1))
    except (OSError, MiniDasError) as exc:
        print(f"error: validation aborted: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = {"passed": all(c["passed"] for c in checks), "checks": checks}
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


# --- argument parsing ------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="minidas")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("pipeline", help="run the simulation pipeline")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--stage", choices=STAGES, default="all")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--out", default=None)

    p_val = sub.add_parser("validate", help="check a finished artifact directory")
    p_val.add_argument("artifact_dir")

    args = parser.parse_args(argv)
    if args.command == "pipeline":
        try:
            cfg = RunConfig.load(args.config, seed=args.seed, out=args.out)
        except MiniDasError as exc:
            print(f"error: config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_pipeline(cfg, args.stage, max(1, args.workers))
    return cmd_validate(args.artifact_dir)


if __name__ == "__main__":
    sys.exit(main())

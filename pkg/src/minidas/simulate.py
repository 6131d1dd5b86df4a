"""Replicate orchestration for the two simulation designs.

``run_mc`` repeatedly applies the top-down mechanism to the ground-truth
histogram; ``run_amc`` applies it to an already-protected output, so the
ground truth is never read on that path (the function does not even accept
it).  Replicates are written to disk as they finish and indexed by a run
manifest, so downstream tabulation can stream them without holding the set
in memory.  Replicate ``i`` of a run draws all of its randomness from the
substream ``(master_seed, kind, i)`` and is therefore reproducible no matter
how many workers are used.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import rng, topdown
from .errors import ConfigError, ManifestError
from .model import GeoHierarchy, Histogram, Schema
from .noise import BudgetAllocation, QueryGroup
from .topdown import Invariants


@dataclass(frozen=True)
class TdaParams:
    """Everything the mechanism needs besides its input histogram and seed."""

    alloc: BudgetAllocation
    invariants: Invariants
    groups_by_level: Mapping[str, Sequence[QueryGroup]]
    ridge: float = topdown.RIDGE
    tol: float = topdown.KKT_TOL
    max_iter: int = topdown.MAX_ITER

    def digest(self) -> str:
        doc = {
            "total_rho": self.alloc.total_rho,
            "level_shares": dict(sorted(self.alloc.level_shares.items())),
            "group_shares": {k: dict(sorted(v.items()))
                             for k, v in sorted(self.alloc.group_shares.items())},
            "invariants": [self.invariants.root_total, self.invariants.level1_totals],
            "groups": {lvl: [[g.name, list(g.marginal)] for g in gs]
                       for lvl, gs in sorted(self.groups_by_level.items())},
            "ridge": self.ridge, "tol": self.tol, "max_iter": self.max_iter,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


@dataclass
class ReplicateSet:
    """An ordered set of mechanism outputs plus the histogram they started from."""

    kind: str                       # "mc" | "amc"
    reference_path: Path
    replicate_paths: list[Path]
    seeds: list[int]
    schema: Schema
    hierarchy: GeoHierarchy
    reports: list[topdown.SolveReport] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.replicate_paths)

    def load(self, i: int) -> Histogram:
        return Histogram.from_csv(self.replicate_paths[i], self.schema, self.hierarchy)

    def load_reference(self) -> Histogram:
        return Histogram.from_csv(self.reference_path, self.schema, self.hierarchy)


def _replicate_job(args):
    input_csv, schema, hierarchy, params, seed, out_csv, units_csv = args
    input_hist = Histogram.from_csv(input_csv, schema, hierarchy)
    out, report = topdown.run(input_hist, params.alloc, params.invariants,
                              params.groups_by_level, seed,
                              ridge=params.ridge, tol=params.tol,
                              max_iter=params.max_iter)
    out.to_csv(out_csv)
    write_unit_table(units_csv, out)
    return report


def write_unit_table(path: str | Path, h: Histogram) -> None:
    """Cell vectors of all internal units, for redundancy checks on disk."""
    import csv as _csv
    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["unit_id", "cell_index", "count"])
        for level in range(h.hierarchy.block_level):
            for uid in h.hierarchy.units_at(level):
                vec = h.aggregate(uid)
                for cell, v in enumerate(vec.tolist()):
                    if v:
                        w.writerow([uid, cell, v])


def run_replicates(kind: str, input_path: Path, schema: Schema,
                   hierarchy: GeoHierarchy, params: TdaParams, n: int,
                   master_seed: int, out_dir: Path, workers: int = 1
                   ) -> ReplicateSet:
    if n < 2:
        raise ConfigError(f"need at least 2 replicates, got {n}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [rng.derive_key(master_seed, kind, i) for i in range(n)]
    jobs = []
    paths = []
    for i in range(n):
        p = out_dir / f"ppmf_{i}.csv"
        paths.append(p)
        jobs.append((input_path, schema, hierarchy, params, seeds[i],
                     p, out_dir / f"units_{i}.csv"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_replicate_job, jobs))
    else:
        reports = [_replicate_job(j) for j in jobs]
    return ReplicateSet(kind, Path(input_path), paths, seeds, schema, hierarchy,
                        reports)


def run_mc(cef_path: Path, schema: Schema, hierarchy: GeoHierarchy,
           params: TdaParams, m: int, master_seed: int, out_dir: Path,
           workers: int = 1) -> ReplicateSet:
    """``m`` independent mechanism runs on the ground-truth histogram."""
    return run_replicates("mc", Path(cef_path), schema, hierarchy, params, m,
                          master_seed, out_dir, workers)


def run_amc(ppmf0_path: Path, schema: Schema, hierarchy: GeoHierarchy,
            params: TdaParams, s: int, master_seed: int, out_dir: Path,
            workers: int = 1) -> ReplicateSet:
    """``s`` independent mechanism runs seeded from the protected output.

    Takes only the protected histogram; the ground truth is unreachable from
    this code path by construction.
    """
    return run_replicates("amc", Path(ppmf0_path), schema, hierarchy, params, s,
                          master_seed, out_dir, workers)


def subset_indices(total: int, n: int, seed: int) -> list[int]:
    """Uniform without-replacement index selection, original order preserved."""
    if not 2 <= n <= total:
        raise ConfigError(f"subset size {n} out of range [2, {total}]")
    g = rng.generator(seed, "subset")
    chosen = g.choice(total, size=n, replace=False)
    return sorted(int(i) for i in chosen)


def subset(rs: ReplicateSet, n: int, seed: int) -> ReplicateSet:
    """Random sub-collection of an existing replicate set; nothing is re-run."""
    idx = subset_indices(len(rs), n, seed)
    return ReplicateSet(rs.kind, rs.reference_path,
                        [rs.replicate_paths[i] for i in idx],
                        [rs.seeds[i] for i in idx],
                        rs.schema, rs.hierarchy)


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, rs: ReplicateSet, master_seed: int,
                   params: TdaParams, base_dir: Path) -> None:
    base_dir = Path(base_dir)
    files = {}
    for p in rs.replicate_paths:
        files[str(Path(p).relative_to(base_dir))] = file_sha256(Path(p))
    units = {}
    for p in rs.replicate_paths:
        up = Path(p).with_name(Path(p).name.replace("ppmf_", "units_"))
        if up.exists():
            units[str(up.relative_to(base_dir))] = file_sha256(up)
    doc = {
        "kind": rs.kind,
        "m_or_s": len(rs),
        "master_seed": master_seed,
        "params_hash": params.digest(),
        "reference": str(Path(rs.reference_path).relative_to(base_dir)),
        "reference_sha256": file_sha256(Path(rs.reference_path)),
        "replicates": [str(Path(p).relative_to(base_dir)) for p in rs.replicate_paths],
        "hashes": {**files, **units},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_manifest(path: Path, schema: Schema, hierarchy: GeoHierarchy,
                  base_dir: Path) -> tuple[ReplicateSet, dict]:
    doc = json.loads(Path(path).read_text())
    base_dir = Path(base_dir)
    rs = ReplicateSet(doc["kind"], base_dir / doc["reference"],
                      [base_dir / p for p in doc["replicates"]],
                      [rng.derive_key(doc["master_seed"], doc["kind"], i)
                       for i in range(doc["m_or_s"])],
                      schema, hierarchy)
    return rs, doc


def verify_manifest(path: Path, base_dir: Path) -> None:
    """Raise :class:`ManifestError` if any listed file is missing or altered."""
    doc = json.loads(Path(path).read_text())
    base_dir = Path(base_dir)
    for rel, digest in doc.get("hashes", {}).items():
        p = base_dir / rel
        if not p.exists():
            raise ManifestError(f"manifest {Path(path).name}: missing file {rel}")
        if file_sha256(p) != digest:
            raise ManifestError(f"manifest {Path(path).name}: file {rel} was modified")

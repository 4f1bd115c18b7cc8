"""Replication engine and aggregation.

Work is split into ``(cell, replication)`` tasks.  Each task seeds its noise
and posterior draws from substreams keyed by ``(master_seed, cell, rep,
purpose)``, so the record stream, and every aggregate computed from it, is
the same whatever the number of workers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import credible, diagnostics
from ..basis import CoefficientField
from ..credible import SetKind
from ..model import make_signal, observe
from ..norms import NormSpec
from ..posterior import contraction_risk, fit, posterior_sample
from ..rng import NOISE, POSTERIOR, substream
from .config import CellConfig, ExperimentConfig, SCHEMA_VERSION

log = logging.getLogger(__name__)

WORKERS_ENV = "BVMLAB_WORKERS"
MAX_FAILURE_RATE = 0.01


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, env)
    return 1


def run_replication(cell: CellConfig, n: int, master_seed: int, cell_index: int, rep: int) -> dict:
    """One data set: observe, fit, build every set and diagnostic, return flat metrics."""
    theta0 = make_signal(cell.signal)
    obs = observe(theta0, n, substream(master_seed, cell_index, rep, NOISE))
    post = fit(cell.prior, obs, engine=cell.engine)
    opts = cell.diagnostic_options
    need = [s.sample_count for s in cell.sets]
    if any(d in ("fidi", "hdelta_tail") for d in cell.diagnostics):
        need.append(opts.sample_count)
    samples = posterior_sample(post, max(need), substream(master_seed, cell_index, rep, POSTERIOR)) if need else None
    out: dict = {}
    for s in cell.sets:
        batch = CoefficientField(post.basis, samples.values[: s.sample_count])
        report = _build_set(s, post, theta0, batch)
        for key, value in report.summary().items():
            out[f"{s.name}.{key}"] = value
    for d in cell.diagnostics:
        if d == "l2_risk":
            out["l2_risk"] = contraction_risk(post, theta0, NormSpec.l2())
        elif d == "hdelta_risk":
            out["hdelta_risk"] = contraction_risk(post, theta0, NormSpec.hdelta(opts.delta))
            out["n_hdelta_risk"] = n * out["hdelta_risk"]
        elif d == "mean_linearity":
            out["mean_linearity"] = diagnostics.mean_linearity(post, opts.delta)
        elif d == "fidi":
            batch = CoefficientField(post.basis, samples.values[: opts.sample_count])
            proj = diagnostics.ProjectionSpec.up_to(post.basis, opts.fidi_levels)
            out.update(diagnostics.fidi_distance(post, proj, samples=batch).summary())
        elif d == "hdelta_tail":
            batch = CoefficientField(post.basis, samples.values[: opts.sample_count])
            out["hdelta_tail"] = diagnostics.hdelta_concentration(
                post, theta0, opts.delta_prime, opts.M_test, samples=batch
            )
    return out


def _build_set(s, post, theta0, batch):
    kind = s.kind
    if kind is SetKind.HDELTA_BALL:
        return credible.hdelta_ball(post, s.center, s.alpha, s.delta, theta0=theta0, samples=batch)
    if kind is SetKind.HOLDER_INTERSECTED:
        return credible.holder_intersected(post, s.alpha, s.gamma, s.M, delta=s.delta, theta0=theta0, samples=batch)
    if kind is SetKind.NORM_ESTIMATED:
        return credible.norm_estimated(
            post, s.alpha, s.gamma, s.delta_margin, delta=s.delta,
            margin_is_delta_n=s.margin_is_delta_n, theta0=theta0, samples=batch,
        )
    if kind is SetKind.CONVOLUTION_BAND:
        return credible.convolution_band(post, s.alpha, s.grid_size, theta0=theta0, samples=batch)
    if kind is SetKind.LINEAR_FUNCTIONAL:
        g = CoefficientField(post.basis, np.array(s.g_L))
        return credible.linear_functional_interval(post, g, s.alpha, s.center, theta0=theta0, samples=batch)
    return credible.nonlinear_functional_interval(post, s.psi, s.alpha, theta0=theta0, samples=batch)


def _task(args) -> list[dict]:
    cell, n, master_seed, cell_index, reps = args
    records = []
    for rep in reps:
        rec = {"cell": cell_index, "rep": rep, "n": n, "status": "ok", "error": ""}
        try:
            rec.update(run_replication(cell, n, master_seed, cell_index, rep))
        except Exception as e:  # recorded, never dropped
            rec["status"] = "error"
            rec["error"] = f"{type(e).__name__}: {e}"
            log.debug("replication failed\n%s", traceback.format_exc())
        records.append(rec)
    return records


@dataclass
class CoverageReport:
    schema_version: int
    master_seed: int
    replications: int
    n_grid: list
    cells: list
    records: list
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)

    def to_json(self) -> str:
        """Deterministic JSON (wall-clock timings are kept out of it)."""
        payload = {
            "schema_version": self.schema_version,
            "master_seed": self.master_seed,
            "replications": self.replications,
            "n_grid": self.n_grid,
            "warnings": self.warnings,
            "config": self.config,
            "cells": self.cells,
            "records": self.records,
        }
        return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, records: Optional[list] = None) -> "CoverageReport":
        d = json.loads(text)
        return cls(
            schema_version=d["schema_version"],
            master_seed=d["master_seed"],
            replications=d["replications"],
            n_grid=d["n_grid"],
            cells=d["cells"],
            records=d.get("records", []) if records is None else records,
            warnings=d.get("warnings", []),
            config=d.get("config", {}),
        )


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def aggregate(records: list[dict], replications: int) -> dict:
    """Summaries of one cell's records: coverage with binomial SE for ``*.covers``,
    median, quartiles and mean for every other metric."""
    ok = [r for r in records if r["status"] == "ok"]
    failures = len(records) - len(ok)
    out = {"failures": failures, "completed": len(ok)}
    if replications and failures > MAX_FAILURE_RATE * replications:
        out["status"] = "aborted"
        out["errors"] = sorted({r["error"] for r in records if r["status"] != "ok"})[:5]
        return out
    out["status"] = "ok"
    keys = sorted({k for r in ok for k in r} - {"cell", "rep", "n", "status", "error"})
    metrics, coverage = {}, {}
    for k in keys:
        vals = np.array([r[k] for r in ok if k in r], dtype=float)
        if k.endswith(".covers"):
            p = float(vals.mean()) if vals.size else math.nan
            coverage[k[: -len(".covers")]] = {"p": p, "se": math.sqrt(p * (1 - p) / vals.size) if vals.size else math.nan}
        finite = vals[np.isfinite(vals)]
        if finite.size:
            q25, med, q75 = np.percentile(finite, [25, 50, 75])
            metrics[k] = {
                "median": float(med), "q25": float(q25), "q75": float(q75),
                "mean": float(finite.mean()), "count": int(finite.size),
                "nonfinite": int(vals.size - finite.size),
            }
        else:
            metrics[k] = {"median": float(np.median(vals)) if vals.size else math.nan, "count": 0, "nonfinite": int(vals.size)}
    out["metrics"] = metrics
    out["coverage"] = coverage
    if failures:
        out["errors"] = sorted({r["error"] for r in records if r["status"] != "ok"})[:5]
    return out


def run(config: ExperimentConfig, workers: Optional[int] = None, chunk: Optional[int] = None) -> CoverageReport:
    """Run every replication of every cell and aggregate."""
    warnings = []
    R = config.replications
    if R == 0:
        warnings.append("replications = 0: nothing was run")
        log.warning(warnings[-1])
    workers = worker_count(workers)
    cells = config.cells
    chunk = chunk or max(1, min(50, math.ceil(R / (4 * workers)) if R else 1))
    tasks = [
        (combo, n, config.master_seed, ci, range(start, min(start + chunk, R)))
        for ci, combo, n in cells
        for start in range(0, R, chunk)
    ]
    t0 = time.perf_counter()
    if workers == 1 or len(tasks) <= 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    elapsed = time.perf_counter() - t0
    records = sorted((r for batch in results for r in batch), key=lambda r: (r["cell"], r["rep"]))
    by_cell: dict[int, list] = {ci: [] for ci, _, _ in cells}
    for r in records:
        by_cell[r["cell"]].append(r)
    cell_reports = []
    for ci, combo, n in cells:
        agg = aggregate(by_cell[ci], R)
        if agg["status"] == "aborted":
            warnings.append(f"cell {ci} aborted: {agg['failures']} of {R} replications failed")
        cell_reports.append({"cell": ci, "n": n, "params": combo.params, "replications": R, **agg})
    return CoverageReport(
        schema_version=SCHEMA_VERSION,
        master_seed=config.master_seed,
        replications=R,
        n_grid=config.n_grid,
        cells=cell_reports,
        records=records,
        warnings=warnings,
        config=config.raw,
        wall_clock={"seconds": elapsed, "workers": workers},
    )


def write_outputs(report: CoverageReport, out_dir: Path, plots: bool = True) -> dict:
    """Write ``report.json``, ``records.csv``, ``timing.json`` and plot CSVs; return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": out_dir / "report.json", "records": out_dir / "records.csv", "timing": out_dir / "timing.json"}
    paths["report"].write_text(report.to_json())
    write_records_csv(report.records, paths["records"])
    paths["timing"].write_text(json.dumps(report.wall_clock, indent=2) + "\n")
    if plots:
        plot_dir = out_dir / "plots"
        plot_dir.mkdir(exist_ok=True)
        for name, rows in plot_series(report).items():
            p = plot_dir / f"{name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["log_n", "median"])
                w.writerows(rows)
    return paths


def write_records_csv(records: list[dict], path: Path) -> None:
    fixed = ["cell", "rep", "n", "status", "error"]
    extra = sorted({k for r in records for k in r} - set(fixed))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fixed + extra, restval="")
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def read_records_csv(path: Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if k in ("cell", "rep", "n"):
                    rec[k] = int(v)
                elif k in ("status", "error"):
                    rec[k] = v
                elif v != "":
                    rec[k] = float(v)
            out.append(rec)
    return out


def _group_key(params: dict) -> str:
    return ",".join(f"{k}={params[k]}" for k in sorted(params)) or "all"


def plot_series(report: CoverageReport) -> dict[str, list]:
    """``{metric[@group]: [(log n, median), ...]}`` for every metric of every sweep group."""
    series: dict[str, list] = {}
    for c in report.cells:
        if c.get("status") != "ok":
            continue
        group = _group_key(c["params"])
        suffix = "" if group == "all" else "@" + group.replace("=", "-").replace(",", "_")
        for metric, stats in c["metrics"].items():
            if stats.get("count", 0):
                series.setdefault(metric + suffix, []).append((math.log(c["n"]), stats["median"]))
    return series

"""Command line entry point: ``bvmlab run | validate | rates | report``.

Exit codes: 0 success, 2 configuration (or input) error, 3 threshold breach
when ``--check`` is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness.analysis import RateFitError, evaluate_checks, rate_fit
from .harness.config import ConfigError, parse_checks, load_config
from .harness.runner import CoverageReport, run, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3


def _print_checks(results) -> bool:
    ok = True
    for r in results:
        ok &= r.passed
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.name}: {r.value:.6g} in [{r.lo:g}, {r.hi:g}] {r.detail}".rstrip())
    return ok


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(
        f"ok: {len(cfg.combos)} sweep point(s) x {len(cfg.n_grid)} n value(s), "
        f"{cfg.replications} replications, {len(cfg.checks)} check(s)"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.output) if args.output else cfg.output_dir
    if out_dir is None:
        out_dir = Path(args.config).with_suffix("")
    report = run(cfg, workers=args.workers)
    paths = write_outputs(report, out_dir, plots=cfg.plots)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {paths['report']} ({report.wall_clock['seconds']:.1f}s, {report.wall_clock['workers']} worker(s))")
    if args.check:
        return EXIT_OK if _print_checks(evaluate_checks(report, cfg.checks)) else EXIT_CHECK
    return EXIT_OK


def _load_report(path) -> CoverageReport:
    try:
        return CoverageReport.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError("<report>", f"cannot read report: {e}") from None


def _cmd_rates(args) -> int:
    report = _load_report(args.report)
    try:
        fits = rate_fit(report, args.quantity)
    except RateFitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for label, f in fits.items():
        print(f"{label}: slope {f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    report = _load_report(args.report)
    if args.format == "json":
        summary = [{k: c[k] for k in ("cell", "n", "params", "status", "coverage", "metrics") if k in c} for c in report.cells]
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["cell", "n", "params", "quantity", "median", "q25", "q75", "mean", "coverage", "se"])
        for c in report.cells:
            params = ";".join(f"{k}={v}" for k, v in sorted(c["params"].items()))
            for name, cov in sorted(c.get("coverage", {}).items()):
                w.writerow([c["cell"], c["n"], params, f"{name}.covers", "", "", "", "", cov["p"], cov["se"]])
            for name, m in sorted(c.get("metrics", {}).items()):
                if name.endswith(".covers"):
                    continue
                w.writerow([c["cell"], c["n"], params, name, m.get("median"), m.get("q25"), m.get("q75"), m.get("mean"), "", ""])
        sys.stdout.write(buf.getvalue())
    if args.check:
        checks = parse_checks(report.config)
        return EXIT_OK if _print_checks(evaluate_checks(report, checks)) else EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bvmlab", description="Coverage and contraction experiments for product priors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--output", help="output directory (overrides output.dir)")
    r.add_argument("--workers", type=int, help="worker processes (default: $BVMLAB_WORKERS or 1)")
    r.add_argument("--check", action="store_true", help="evaluate [[checks]]; exit 3 on breach")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="validate a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    t = sub.add_parser("rates", help="log-log slope of a quantity against n")
    t.add_argument("report")
    t.add_argument("--quantity", default="l2risk", help="l2risk, diameter or any metric name")
    t.set_defaults(func=_cmd_rates)

    s = sub.add_parser("report", help="print a report summary")
    s.add_argument("report")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--check", action="store_true", help="re-evaluate the stored [[checks]]")
    s.set_defaults(func=_cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

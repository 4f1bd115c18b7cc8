"""Rate fits and threshold checks on aggregated reports."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .config import CheckConfig

QUANTITY_ALIASES = {"l2risk": "l2_risk", "hdeltarisk": "hdelta_risk"}


class RateFitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    slope: float
    stderr: float
    intercept: float
    points: int

    def __str__(self) -> str:
        return f"{self.slope:+.4f} +/- {self.stderr:.4f} ({self.points} points)"


def fit_loglog(n, values) -> RateFit:
    """Least-squares slope of ``log(values)`` against ``log(n)``.

    Needs at least four points spanning two decades of ``n``.
    """
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    if n.size != v.size:
        raise RateFitError("n and values differ in length")
    if n.size < 4:
        raise RateFitError(f"need at least 4 grid points, got {n.size}")
    if math.log10(n.max() / n.min()) < 2 - 1e-12:
        raise RateFitError("grid must span at least two decades of n")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise RateFitError("values must be positive and finite")
    res = stats.linregress(np.log(n), np.log(v))
    return RateFit(slope=float(res.slope), stderr=float(res.stderr), intercept=float(res.intercept), points=int(n.size))


def resolve_quantity(report_cells: list, quantity: str) -> str:
    """Map a CLI quantity onto a metric key present in the report.

    ``diameter`` picks the first ``*.l2_diameter`` metric.
    """
    q = QUANTITY_ALIASES.get(quantity.lower(), quantity)
    keys = sorted({k for c in report_cells for k in c.get("metrics", {})})
    if q == "diameter":
        cands = [k for k in keys if k.endswith(".l2_diameter")]
        if not cands:
            raise RateFitError("report has no diameter metric")
        return cands[0]
    if q not in keys:
        raise RateFitError(f"unknown quantity {quantity!r}; report has {keys}")
    return q


def _matches(params: dict, where: dict) -> bool:
    return all(params.get(k) == v for k, v in where.items())


def rate_fit(report, quantity: str, where: Optional[dict] = None, statistic: str = "median") -> dict:
    """Slope of ``log(quantity median)`` against ``log n``, one fit per sweep group."""
    key = resolve_quantity(report.cells, quantity)
    groups: dict[str, list] = {}
    for c in report.cells:
        if c.get("status") != "ok" or key not in c["metrics"]:
            continue
        if where and not _matches(c["params"], where):
            continue
        label = ",".join(f"{k}={c['params'][k]}" for k in sorted(c["params"])) or "all"
        groups.setdefault(label, []).append((c["n"], c["metrics"][key][statistic]))
    if not groups:
        raise RateFitError(f"no completed cells carry {key!r}")
    out = {}
    for label, pts in groups.items():
        pts.sort()
        out[label] = fit_loglog([p[0] for p in pts], [p[1] for p in pts])
    return out


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    lo: float
    hi: float
    passed: bool
    detail: str = ""


def _stat(cell: dict, quantity: str, statistic: str) -> float:
    if quantity.endswith(".covers") or quantity.startswith("coverage."):
        name = quantity[len("coverage."):] if quantity.startswith("coverage.") else quantity[: -len(".covers")]
        return cell["coverage"][name]["p"]
    return cell["metrics"][quantity][statistic]


def evaluate_checks(report, checks: list[CheckConfig]) -> list[CheckResult]:
    """Evaluate threshold checks.  ``mean``/``median`` checks apply to every
    matching cell (optionally restricted to one ``n``); ``slope`` checks fit
    the median across ``n`` within each matching sweep group."""
    results = []
    for chk in checks:
        if chk.statistic == "slope":
            try:
                fits = rate_fit(report, chk.quantity, where=chk.where)
            except RateFitError as e:
                results.append(CheckResult(chk.name, math.nan, chk.lo, chk.hi, False, str(e)))
                continue
            for label, f in fits.items():
                ok = chk.lo <= f.slope <= chk.hi
                results.append(CheckResult(chk.name, f.slope, chk.lo, chk.hi, ok, label))
            continue
        cells = [
            c for c in report.cells
            if _matches(c["params"], chk.where) and (chk.n is None or c["n"] == chk.n)
        ]
        if not cells:
            results.append(CheckResult(chk.name, math.nan, chk.lo, chk.hi, False, "no matching cell"))
        for c in cells:
            if c.get("status") != "ok":
                results.append(CheckResult(chk.name, math.nan, chk.lo, chk.hi, False, f"cell {c['cell']} aborted"))
                continue
            try:
                v = float(_stat(c, chk.quantity, chk.statistic))
            except KeyError:
                results.append(CheckResult(chk.name, math.nan, chk.lo, chk.hi, False, f"cell {c['cell']} lacks {chk.quantity}"))
                continue
            results.append(CheckResult(chk.name, v, chk.lo, chk.hi, chk.lo <= v <= chk.hi, f"n={c['n']}"))
    return results

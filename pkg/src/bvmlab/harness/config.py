"""Experiment configuration: TOML schema, validation and object construction.

A config file describes one experiment.  Top-level keys::

    schema_version = 1
    master_seed    = 1234
    replications   = 1000
    n_grid         = [256, 1024, 4096, 16384, 65536]
    diagnostics    = ["l2_risk", "mean_linearity"]

    [basis]      kind, l_max, j0
    [signal]     kind, gamma, M, seed, coefficients
    [prior]      family, tau, nu, scale, gamma, values, M, engine
    [[sets]]     kind, name, alpha, center, delta, gamma, M, delta_margin,
                 margin_is_delta_n, g_L, psi, psi_weights, grid_size, sample_count
    [diagnostic_options]  delta, delta_prime, M_test, fidi_levels, sample_count
    [output]     dir, plots
    [sweep]      "<section>.<key>" = [values...]   (cartesian product)
    [[checks]]   name, quantity, statistic, n, where, lo, hi

Validation errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import itertools
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..basis import BasisSpec, CoefficientField
from ..credible import Center, FunctionalKind, QuadraticFunctional, SetKind
from ..model import SignalKind, SignalSpec
from ..prior import BaseDensity, Family, ProductPriorSpec, ScaleRule

SCHEMA_VERSION = 1
DEFAULT_N_GRID = [2**8, 2**10, 2**12, 2**14, 2**16]
DEFAULT_REPLICATIONS = 1000
DIAGNOSTICS = ("l2_risk", "hdelta_risk", "mean_linearity", "fidi", "hdelta_tail")
CHECK_STATISTICS = ("mean", "median", "slope")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


_TOP_KEYS = {
    "schema_version", "master_seed", "replications", "n_grid", "diagnostics",
    "basis", "signal", "prior", "sets", "diagnostic_options", "output", "sweep", "checks",
}
_SECTION_KEYS = {
    "basis": {"kind", "l_max", "j0"},
    "signal": {"kind", "gamma", "M", "seed", "coefficients"},
    "prior": {"family", "tau", "nu", "scale", "gamma", "values", "M", "engine"},
    "diagnostic_options": {"delta", "delta_prime", "M_test", "fidi_levels", "sample_count"},
    "output": {"dir", "plots"},
}
_SET_KEYS = {
    "kind", "name", "alpha", "center", "delta", "gamma", "M", "delta_margin",
    "margin_is_delta_n", "g_L", "psi", "psi_weights", "grid_size", "sample_count",
}
_CHECK_KEYS = {"name", "quantity", "statistic", "n", "where", "lo", "hi"}


def _get(d: dict, key: str, path: str, kind, default=None, required=False):
    where = f"{path}.{key}" if path else key
    if key not in d:
        if required:
            raise ConfigError(where, "missing required field")
        return default
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(where, f"expected a number, got {type(v).__name__}")
        return float(v)
    if (kind is int and isinstance(v, bool)) or not isinstance(v, kind):
        raise ConfigError(where, f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def _no_unknown(d: dict, allowed: set, path: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError(where, "unknown field")


@dataclass(frozen=True)
class SetConfig:
    kind: SetKind
    name: str
    alpha: float = 0.05
    center: Center = Center.POSTERIOR_MEAN
    delta: float = 1.0
    gamma: float = 1.0
    M: Optional[float] = None
    delta_margin: float = 0.1
    margin_is_delta_n: bool = False
    g_L: Optional[tuple] = None
    psi: Optional[QuadraticFunctional] = None
    grid_size: int = 1024
    sample_count: int = 4096


@dataclass(frozen=True)
class DiagnosticOptions:
    delta: float = 1.0
    delta_prime: float = 0.6
    M_test: float = 10.0
    fidi_levels: int = 2
    sample_count: int = 4096


@dataclass(frozen=True)
class CheckConfig:
    name: str
    quantity: str
    statistic: str
    lo: float
    hi: float
    n: Optional[int] = None
    where: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CellConfig:
    """One point of the sweep: everything needed to run replications at every ``n``."""

    params: dict
    basis: BasisSpec
    signal: SignalSpec
    prior: ProductPriorSpec
    engine: Optional[str]
    sets: tuple
    diagnostics: tuple
    diagnostic_options: DiagnosticOptions


@dataclass
class ExperimentConfig:
    raw: dict
    master_seed: int
    replications: int
    n_grid: list
    combos: list  # list of CellConfig, one per sweep point
    checks: list
    output_dir: Optional[Path]
    plots: bool

    @property
    def cells(self) -> list[tuple[int, CellConfig, int]]:
        """``(cell_index, combo, n)`` in deterministic order."""
        out = []
        for ci, combo in enumerate(self.combos):
            for n in self.n_grid:
                out.append((len(out), combo, n))
        return out


def _parse_basis(d: dict) -> BasisSpec:
    _no_unknown(d, _SECTION_KEYS["basis"], "basis")
    kind = _get(d, "kind", "basis", str, required=True)
    if kind not in ("trigonometric", "wavelet"):
        raise ConfigError("basis.kind", f"unknown basis {kind!r}")
    l_max = _get(d, "l_max", "basis", int, required=True)
    j0 = _get(d, "j0", "basis", int, default=1)
    try:
        return BasisSpec(kind, l_max, j0)
    except ValueError as e:
        raise ConfigError("basis", str(e)) from None


def _parse_signal(d: dict, basis: BasisSpec) -> SignalSpec:
    _no_unknown(d, _SECTION_KEYS["signal"], "signal")
    kind = _get(d, "kind", "signal", str, required=True)
    if kind not in [k.value for k in SignalKind]:
        raise ConfigError("signal.kind", f"unknown signal kind {kind!r}")
    gamma = _get(d, "gamma", "signal", float)
    M = _get(d, "M", "signal", float, default=1.0)
    seed = _get(d, "seed", "signal", int, default=0)
    coeffs = _get(d, "coefficients", "signal", list)
    if kind == "holder_decay" and (gamma is None or gamma <= 0):
        raise ConfigError("signal.gamma", "holder_decay signals need gamma > 0")
    if M < 0:
        raise ConfigError("signal.M", "must be nonnegative")
    try:
        return SignalSpec(kind, basis, gamma=gamma, M=M, seed=seed, coefficients=tuple(coeffs) if coeffs else None)
    except ValueError as e:
        raise ConfigError("signal.coefficients", str(e)) from None


def _parse_prior(d: dict, basis: BasisSpec) -> tuple[ProductPriorSpec, Optional[str]]:
    _no_unknown(d, _SECTION_KEYS["prior"], "prior")
    family = _get(d, "family", "prior", str, required=True)
    if family not in [f.value for f in Family]:
        raise ConfigError("prior.family", f"unknown family {family!r}")
    tau = _get(d, "tau", "prior", float)
    nu = _get(d, "nu", "prior", float)
    if family == "uniform" and (tau is None or tau <= 0):
        raise ConfigError("prior.tau", "uniform base needs tau > 0")
    if family == "student_t" and (nu is None or nu <= 2):
        raise ConfigError("prior.nu", "Student t base needs nu > 2")
    base = BaseDensity(family, tau=tau if family == "uniform" else None, nu=nu if family == "student_t" else None)
    scale = _get(d, "scale", "prior", str, default="matching")
    gamma = _get(d, "gamma", "prior", float)
    try:
        if scale == "explicit":
            values = _get(d, "values", "prior", list, required=True)
            rule = ScaleRule.explicit(values)
        elif scale in ("matching", "power_trig", "power_dyadic"):
            if gamma is None or gamma <= 0:
                raise ConfigError("prior.gamma", "power scale rules need gamma > 0")
            rule = ScaleRule.matching(basis, gamma) if scale == "matching" else ScaleRule(scale, gamma=gamma)
        else:
            raise ConfigError("prior.scale", f"unknown scale rule {scale!r}")
        M = _get(d, "M", "prior", float)
        if M is not None and family == "uniform" and not tau > M:
            raise ConfigError("prior.tau", f"uniform base needs tau > M (tau={tau}, M={M})")
        prior = ProductPriorSpec(base, rule, basis, M=M)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("prior.scale", str(e)) from None
    engine = _get(d, "engine", "prior", str, default="auto")
    if engine not in ("auto", "gaussian", "grid"):
        raise ConfigError("prior.engine", f"unknown engine {engine!r}")
    if engine == "gaussian" and family != "gaussian":
        raise ConfigError("prior.engine", "the closed-form engine needs a Gaussian base")
    return prior, None if engine == "auto" else engine


def _parse_set(d: dict, path: str, basis: BasisSpec, prior: ProductPriorSpec) -> SetConfig:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a table")
    _no_unknown(d, _SET_KEYS, path)
    kind = _get(d, "kind", path, str, required=True)
    if kind not in [k.value for k in SetKind]:
        raise ConfigError(f"{path}.kind", f"unknown set kind {kind!r}")
    kind = SetKind(kind)
    alpha = _get(d, "alpha", path, float, default=0.05)
    if not 0 < alpha < 1:
        raise ConfigError(f"{path}.alpha", "must lie in (0, 1)")
    center = _get(d, "center", path, str, default="posterior_mean")
    if center not in [c.value for c in Center]:
        raise ConfigError(f"{path}.center", f"unknown center {center!r}")
    delta = _get(d, "delta", path, float, default=1.0)
    if delta <= 0.5:
        raise ConfigError(f"{path}.delta", "H(delta) needs delta > 1/2")
    gamma = _get(d, "gamma", path, float, default=1.0)
    if gamma <= 0:
        raise ConfigError(f"{path}.gamma", "must be positive")
    M = _get(d, "M", path, float)
    delta_margin = _get(d, "delta_margin", path, float, default=0.1)
    if delta_margin <= 0:
        raise ConfigError(f"{path}.delta_margin", "must be positive")
    sample_count = _get(d, "sample_count", path, int, default=4096)
    if sample_count < 100:
        raise ConfigError(f"{path}.sample_count", "must be at least 100")
    grid_size = _get(d, "grid_size", path, int, default=1024)
    g_L = None
    psi = None
    if kind is SetKind.HOLDER_INTERSECTED:
        if not basis.is_wavelet:
            raise ConfigError(f"{path}.kind", "holder_intersected needs a wavelet basis")
        if M is None and prior.base.family is not Family.UNIFORM:
            raise ConfigError(f"{path}.M", "required unless the prior has a uniform base")
    if kind is SetKind.CONVOLUTION_BAND:
        if basis.is_wavelet:
            raise ConfigError(f"{path}.kind", "convolution_band needs a trigonometric basis")
        if gamma <= 0.5:
            raise ConfigError(f"{path}.gamma", "convolution bands need gamma > 1/2")
        if grid_size < basis.dim or grid_size & (grid_size - 1):
            raise ConfigError(f"{path}.grid_size", f"must be a power of two >= {basis.dim}")
    if kind is SetKind.LINEAR_FUNCTIONAL:
        entries = _get(d, "g_L", path, list, required=True)
        try:
            coeffs = {}
            for e in entries:
                l, k, v = e
                coeffs[(int(l), int(k))] = float(v)
            field_ = CoefficientField.from_dict(basis, coeffs)
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"{path}.g_L", f"expected [[l, k, value], ...] inside the basis ({e})") from None
        if not field_.values.any():
            raise ConfigError(f"{path}.g_L", "must be nonzero")
        g_L = tuple(field_.values.tolist())
    if kind is SetKind.NONLINEAR_FUNCTIONAL:
        pk = _get(d, "psi", path, str, default="squared_l2")
        if pk not in [f.value for f in FunctionalKind]:
            raise ConfigError(f"{path}.psi", f"unknown functional {pk!r}")
        weights = _get(d, "psi_weights", path, list)
        if pk == "weighted_square" and (weights is None or len(weights) != basis.dim):
            raise ConfigError(f"{path}.psi_weights", f"need {basis.dim} weights")
        psi = QuadraticFunctional(pk, tuple(weights) if weights else None)
    name = _get(d, "name", path, str, default=kind.value)
    return SetConfig(
        kind=kind,
        name=name,
        alpha=alpha,
        center=Center(center),
        delta=delta,
        gamma=gamma,
        M=M,
        delta_margin=delta_margin,
        margin_is_delta_n=_get(d, "margin_is_delta_n", path, bool, default=False),
        g_L=g_L,
        psi=psi,
        grid_size=grid_size,
        sample_count=sample_count,
    )


def _parse_diag_options(d: dict) -> DiagnosticOptions:
    path = "diagnostic_options"
    _no_unknown(d, _SECTION_KEYS[path], path)
    opts = DiagnosticOptions(
        delta=_get(d, "delta", path, float, default=1.0),
        delta_prime=_get(d, "delta_prime", path, float, default=0.6),
        M_test=_get(d, "M_test", path, float, default=10.0),
        fidi_levels=_get(d, "fidi_levels", path, int, default=2),
        sample_count=_get(d, "sample_count", path, int, default=4096),
    )
    if opts.delta <= 0.5:
        raise ConfigError(f"{path}.delta", "must exceed 1/2")
    if opts.delta_prime <= 0.5:
        raise ConfigError(f"{path}.delta_prime", "must exceed 1/2")
    return opts


def _parse_cell(raw: dict, params: dict) -> CellConfig:
    for section in ("basis", "signal", "prior"):
        if section not in raw:
            raise ConfigError(section, "missing required section")
        if not isinstance(raw[section], dict):
            raise ConfigError(section, "expected a table")
    basis = _parse_basis(raw["basis"])
    signal = _parse_signal(raw["signal"], basis)
    prior, engine = _parse_prior(raw["prior"], basis)
    sets_raw = raw.get("sets", [])
    if not isinstance(sets_raw, list):
        raise ConfigError("sets", "expected an array of tables")
    sets = tuple(_parse_set(s, f"sets[{i}]", basis, prior) for i, s in enumerate(sets_raw))
    names = [s.name for s in sets]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError("sets", f"duplicate set names {sorted(dup)}; give each a distinct 'name'")
    diags = raw.get("diagnostics", [])
    if not isinstance(diags, list):
        raise ConfigError("diagnostics", "expected a list")
    for i, dname in enumerate(diags):
        if dname not in DIAGNOSTICS:
            raise ConfigError(f"diagnostics[{i}]", f"unknown diagnostic {dname!r}; choose from {list(DIAGNOSTICS)}")
    opts = _parse_diag_options(raw.get("diagnostic_options", {}))
    if "fidi" in diags:
        if opts.sample_count < 500:
            raise ConfigError("diagnostic_options.sample_count", "fidi needs at least 500 samples")
        lv = basis.level_values()
        if not (lv <= opts.fidi_levels).any():
            raise ConfigError("diagnostic_options.fidi_levels", "projection is empty")
    return CellConfig(
        params=params,
        basis=basis,
        signal=signal,
        prior=prior,
        engine=engine,
        sets=sets,
        diagnostics=tuple(diags),
        diagnostic_options=opts,
    )


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"sweep.{dotted}", f"no section {p!r} to override")
        node = node[p]
    node[parts[-1]] = value


def parse_checks(raw: dict) -> list[CheckConfig]:
    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError("checks", "expected an array of tables")
    out = []
    for i, c in enumerate(checks):
        path = f"checks[{i}]"
        if not isinstance(c, dict):
            raise ConfigError(path, "expected a table")
        _no_unknown(c, _CHECK_KEYS, path)
        stat = _get(c, "statistic", path, str, default="mean")
        if stat not in CHECK_STATISTICS:
            raise ConfigError(f"{path}.statistic", f"choose from {list(CHECK_STATISTICS)}")
        lo = _get(c, "lo", path, float, default=-math.inf)
        hi = _get(c, "hi", path, float, default=math.inf)
        if lo > hi:
            raise ConfigError(f"{path}.lo", "lo exceeds hi")
        out.append(
            CheckConfig(
                name=_get(c, "name", path, str, default=f"check{i}"),
                quantity=_get(c, "quantity", path, str, required=True),
                statistic=stat,
                lo=lo,
                hi=hi,
                n=_get(c, "n", path, int),
                where=_get(c, "where", path, dict, default={}),
            )
        )
    return out


def _check_norm_estimated(combos: list, n_grid: list) -> None:
    # delta_n = (log n)^{-1/4} shrinks with n, so the largest n needs the most samples
    if not n_grid:
        return
    for i, s in enumerate(combos[0].sets):
        if s.kind is not SetKind.NORM_ESTIMATED:
            continue
        if min(n_grid) < 3:
            raise ConfigError("n_grid", "norm_estimated sets need n >= 3")
        need = math.ceil(100 * math.log(max(n_grid)) ** 0.25)
        if s.sample_count < need:
            raise ConfigError(f"sets[{i}].sample_count", f"norm_estimated needs at least {need} samples at n = {max(n_grid)}")


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a config mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a table")
    _no_unknown(raw, _TOP_KEYS, "")
    version = _get(raw, "schema_version", "", int, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    master_seed = _get(raw, "master_seed", "", int, required=True)
    if master_seed < 0:
        raise ConfigError("master_seed", "must be nonnegative")
    replications = _get(raw, "replications", "", int, default=DEFAULT_REPLICATIONS)
    if replications < 0:
        raise ConfigError("replications", "must be nonnegative")
    n_grid = _get(raw, "n_grid", "", list, default=list(DEFAULT_N_GRID))
    for i, n in enumerate(n_grid):
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ConfigError(f"n_grid[{i}]", "must be a positive integer")
    if len(set(n_grid)) != len(n_grid):
        raise ConfigError("n_grid", "duplicate entries")
    for section in _SECTION_KEYS:
        if section in raw and not isinstance(raw[section], dict):
            raise ConfigError(section, "expected a table")

    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "expected a table")
    keys = sorted(sweep)
    for k in keys:
        if not isinstance(sweep[k], list) or not sweep[k]:
            raise ConfigError(f"sweep.{k}", "expected a nonempty list of values")
        if k.split(".")[0] not in ("basis", "signal", "prior", "diagnostic_options"):
            raise ConfigError(f"sweep.{k}", "only basis, signal, prior and diagnostic_options fields can be swept")
    combos = []
    for values in itertools.product(*(sweep[k] for k in keys)):
        cell_raw = copy.deepcopy({k: v for k, v in raw.items() if k != "sweep"})
        cell_raw.setdefault("diagnostic_options", {})
        params = dict(zip(keys, values))
        for k, v in params.items():
            _set_dotted(cell_raw, k, v)
        combos.append(_parse_cell(cell_raw, params))

    _check_norm_estimated(combos, n_grid)

    out = raw.get("output", {})
    _no_unknown(out, _SECTION_KEYS["output"], "output")
    out_dir = _get(out, "dir", "output", str)
    if out_dir is not None:
        out_dir = Path(out_dir)
        if base_dir is not None and not out_dir.is_absolute():
            out_dir = base_dir / out_dir
    return ExperimentConfig(
        raw=raw,
        master_seed=master_seed,
        replications=replications,
        n_grid=list(n_grid),
        combos=combos,
        checks=parse_checks(raw),
        output_dir=out_dir,
        plots=_get(out, "plots", "output", bool, default=True),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"invalid TOML: {e}") from None
    except OSError as e:
        raise ConfigError("<file>", str(e)) from None
    return parse_config(raw, base_dir=path.parent)

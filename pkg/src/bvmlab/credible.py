"""Credible sets built from posterior samples and their frequentist checks.

Every set is a posterior quantile construction: a statistic is evaluated on
joint posterior draws and the radius is its nearest-rank ``1 - alpha``
quantile.  All radii are reported on the ``sqrt(n)`` scale (``R_n``), so a
ball has radius ``R_n / sqrt(n)`` in its own norm.

Functions accept either a ``seed`` (and draw ``sample_count`` samples) or a
pre-drawn batch via ``samples=``, which lets several sets share one batch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .basis import BasisKind, BasisSpec, CoefficientField, fourier_coefficients
from .norms import NormSpec, holder_to_log_sobolev_constant, norm
from .posterior import PosteriorField, posterior_sample
from .rng import SeedLike

DEFAULT_SAMPLES = 4096
MIN_SAMPLES = 100
DEFAULT_BAND_GRID = 1024


class SetKind(str, enum.Enum):
    HDELTA_BALL = "hdelta_ball"
    HOLDER_INTERSECTED = "holder_intersected"
    NORM_ESTIMATED = "norm_estimated"
    CONVOLUTION_BAND = "convolution_band"
    LINEAR_FUNCTIONAL = "linear_functional"
    NONLINEAR_FUNCTIONAL = "nonlinear_functional"


class Center(str, enum.Enum):
    OBSERVATION = "observation"
    POSTERIOR_MEAN = "posterior_mean"


@dataclass
class CredibleSetReport:
    """Outcome of one credible-set construction on one data set.

    ``credibility`` is the fraction of the posterior samples that fall in the
    constructed set; ``covers_truth`` is ``None`` when no truth was supplied.
    ``extras`` carries set-specific diagnostics (efficient widths, grid
    resolution of ``M_n``, flags).
    """

    kind: SetKind
    alpha: float
    center: object
    radius_Rn: float
    covers_truth: Optional[bool] = None
    Mn: Optional[float] = None
    interval: Optional[tuple[float, float]] = None
    l2_diameter_bound: Optional[float] = None
    credibility: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Flat scalar view used by the harness record stream."""
        out = {"radius_Rn": self.radius_Rn, "credibility": self.credibility}
        if self.covers_truth is not None:
            out["covers"] = float(self.covers_truth)
        if self.Mn is not None:
            out["Mn"] = self.Mn
        if self.interval is not None:
            out["mu_n"], out["nu_n"] = self.interval
        if self.l2_diameter_bound is not None:
            out["l2_diameter"] = self.l2_diameter_bound
        for k, v in self.extras.items():
            if isinstance(v, (bool, int, float, np.floating, np.integer)):
                out[k] = float(v)
        return out


def nearest_rank(values, p: float) -> float:
    """Nearest-rank ``p``-quantile: the smallest sample with at least ``p`` of the mass at or below it."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empty sample")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rank = max(1, math.ceil(p * v.size - 1e-9))
    return float(v[rank - 1])


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def _samples(post: PosteriorField, samples, sample_count: int, seed: SeedLike, minimum: int = MIN_SAMPLES) -> CoefficientField:
    if samples is None:
        if sample_count < minimum:
            raise ValueError(f"sample_count must be at least {minimum}, got {sample_count}")
        return posterior_sample(post, sample_count, seed)
    if isinstance(samples, CoefficientField):
        batch = samples if samples.is_batch else CoefficientField(samples.basis, samples.values[None, :])
    else:
        batch = CoefficientField(post.basis, np.stack([s.values for s in samples]))
    if batch.basis != post.basis:
        raise ValueError("samples use a different basis from the posterior")
    if len(batch) < minimum:
        raise ValueError(f"need at least {minimum} posterior samples, got {len(batch)}")
    return batch


def _center(post: PosteriorField, center: Union[Center, str]) -> CoefficientField:
    center = Center(center)
    if center is Center.OBSERVATION:
        return post.obs.x
    return CoefficientField(post.basis, post.mean.copy())


def _ball(post, T: CoefficientField, alpha, delta, batch):
    spec = NormSpec.hdelta(delta)
    scaled = math.sqrt(post.n) * norm(batch - T, spec)
    return scaled, nearest_rank(scaled, 1 - alpha)


def hdelta_ball(
    post: PosteriorField,
    center: Union[Center, str] = Center.POSTERIOR_MEAN,
    alpha: float = 0.05,
    delta: float = 1.0,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    theta0: Optional[CoefficientField] = None,
    samples=None,
) -> CredibleSetReport:
    """Ball ``{f : ||f - T_n||_{H(delta)} <= R_n / sqrt(n)}`` with posterior mass ``1 - alpha``."""
    _check_alpha(alpha)
    NormSpec.hdelta(delta)
    batch = _samples(post, samples, sample_count, seed)
    T = _center(post, center)
    scaled, R = _ball(post, T, alpha, delta, batch)
    covers = None
    if theta0 is not None:
        covers = bool(math.sqrt(post.n) * norm(theta0 - T, NormSpec.hdelta(delta)) <= R)
    return CredibleSetReport(
        kind=SetKind.HDELTA_BALL,
        alpha=alpha,
        center=T,
        radius_Rn=R,
        covers_truth=covers,
        credibility=float(np.mean(scaled <= R)),
        extras={"center": Center(center).value, "delta": delta},
    )


def l2_diameter_bound(basis: BasisSpec, n: int, R_n: float, delta: float, gamma: float, norm_bound: float) -> tuple[float, float]:
    """Bound the L^2 diameter of a set of H(delta)-radius ``R_n/sqrt(n)`` and
    ``(gamma, 2, 1)``-diameter ``norm_bound``.

    Split the index set at a frequency cutoff ``A``: below it the L^2 norm is
    controlled by the H(delta) norm, above it by the ``(gamma, 2, 1)`` norm.
    Returns ``(bound, log2 A)`` for the cutoff minimising the bound.
    """
    a = np.unique(basis.a)
    la = np.log(a)
    low_factor = a * la ** (2 * delta)
    high_factor = a ** (-2 * gamma) * la**2
    h_term = (2 * R_n / math.sqrt(n)) ** 2
    best, best_cut = math.inf, math.nan
    for j in range(a.size + 1):
        low = low_factor[:j].max() if j else 0.0
        high = high_factor[j:].max() if j < a.size else 0.0
        b2 = low * h_term + high * norm_bound**2
        if b2 < best:
            cut = a[j] if j < a.size else 2 * a[-1]
            best, best_cut = b2, math.log2(cut)
    return math.sqrt(best), best_cut


def holder_intersected(
    post: PosteriorField,
    alpha: float = 0.05,
    gamma: float = 1.0,
    M: Optional[float] = None,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    delta: float = 1.0,
    theta0: Optional[CoefficientField] = None,
    samples=None,
) -> CredibleSetReport:
    """H(delta)-ball at the posterior mean intersected with the Hoelder ball ``||f||_{gamma,inf} <= M``.

    Meant for the uniform prior with ``sigma_l = 2^{-l(gamma+1/2)}`` and base
    half-width ``tau = M``: its draws all lie in that Hoelder ball, so the
    intersection keeps the credibility.  ``M`` defaults to the prior's ``tau``.
    """
    if not post.basis.is_wavelet:
        raise ValueError("the Hoelder-intersected set needs a wavelet basis")
    if M is None:
        if post.prior.base.tau is None:
            raise ValueError("M is required unless the prior has a uniform base")
        M = post.prior.base.tau
    _check_alpha(alpha)
    batch = _samples(post, samples, sample_count, seed)
    T = _center(post, Center.POSTERIOR_MEAN)
    scaled, R = _ball(post, T, alpha, delta, batch)
    hspec = NormSpec.holder(gamma)
    in_holder = norm(batch, hspec) <= M * (1 + 1e-12)
    covers = None
    if theta0 is not None:
        in_ball = math.sqrt(post.n) * norm(theta0 - T, NormSpec.hdelta(delta)) <= R
        covers = bool(in_ball and norm(theta0, hspec) <= M)
    c = holder_to_log_sobolev_constant(post.basis, gamma)
    diam, cut = l2_diameter_bound(post.basis, post.n, R, delta, gamma, 2 * c * M)
    return CredibleSetReport(
        kind=SetKind.HOLDER_INTERSECTED,
        alpha=alpha,
        center=T,
        radius_Rn=R,
        covers_truth=covers,
        l2_diameter_bound=diam,
        credibility=float(np.mean((scaled <= R) & in_holder)),
        extras={"gamma": gamma, "M": M, "holder_to_log_sobolev": c, "cutoff_log2": cut},
    )


def log_sobolev_norms(batch: CoefficientField, gamma: float) -> np.ndarray:
    return np.atleast_1d(norm(batch, NormSpec.log_sobolev(gamma, 1.0)))


def mn_statistic(
    samples: Union[CoefficientField, Sequence[CoefficientField], np.ndarray],
    gamma: float,
    delta_margin: float,
    delta_n: float,
) -> float:
    """Smallest grid value ``M`` whose window ``|.||_{gamma,2,1} - M| <= delta_margin``
    holds posterior mass at least ``1 - delta_n``; ``inf`` when none does.

    ``samples`` may also be a plain array of precomputed norms.  The grid runs
    from 0 to ``max norm + delta_margin`` in steps of ``delta_margin / 50``.
    """
    if delta_margin <= 0:
        raise ValueError("delta_margin must be positive")
    if isinstance(samples, np.ndarray):
        norms = np.asarray(samples, dtype=float).ravel()
    elif isinstance(samples, CoefficientField):
        norms = log_sobolev_norms(samples, gamma)
    else:
        samples = list(samples)
        norms = log_sobolev_norms(CoefficientField(samples[0].basis, np.stack([s.values for s in samples])), gamma)
    if norms.size == 0:
        raise ValueError("need at least one sample")
    step = delta_margin / 50
    grid = np.arange(0.0, norms.max() + delta_margin + step, step)
    srt = np.sort(norms)
    tol = 1e-12 * max(1.0, srt[-1])
    inside = np.searchsorted(srt, grid + delta_margin + tol, side="right") - np.searchsorted(
        srt, grid - delta_margin - tol, side="left"
    )
    ok = inside >= (1 - delta_n) * srt.size - 1e-9
    return float(grid[np.argmax(ok)]) if ok.any() else math.inf


def norm_estimated(
    post: PosteriorField,
    alpha: float = 0.05,
    gamma: float = 1.0,
    delta_margin: float = 0.1,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    delta: float = 1.0,
    margin_is_delta_n: bool = False,
    theta0: Optional[CoefficientField] = None,
    samples=None,
) -> CredibleSetReport:
    """H(delta)-ball at the posterior mean intersected with ``||f||_{gamma,2,1} <= M_n + 4 delta_margin``.

    ``M_n`` is estimated from the posterior by :func:`mn_statistic` with
    ``delta_n = (log n)^{-1/4}``.  With ``margin_is_delta_n`` the margin is
    taken equal to ``delta_n``.
    """
    _check_alpha(alpha)
    if post.n < 3:
        raise ValueError("norm-estimated sets need n >= 3 so that log n > 1")
    delta_n = math.log(post.n) ** -0.25
    margin = delta_n if margin_is_delta_n else delta_margin
    if margin <= 0:
        raise ValueError("delta_margin must be positive")
    batch = _samples(post, samples, sample_count, seed, minimum=math.ceil(MIN_SAMPLES / delta_n))
    T = _center(post, Center.POSTERIOR_MEAN)
    scaled, R = _ball(post, T, alpha, delta, batch)
    norms = log_sobolev_norms(batch, gamma)
    Mn = mn_statistic(norms, gamma, margin, delta_n)
    cap = Mn + 4 * margin
    covers = None
    extras = {"delta_n": delta_n, "delta_margin": margin, "grid_step": margin / 50, "Mn_finite": math.isfinite(Mn)}
    if theta0 is not None:
        f0_norm = norm(theta0, NormSpec.log_sobolev(gamma, 1.0))
        in_ball = math.sqrt(post.n) * norm(theta0 - T, NormSpec.hdelta(delta)) <= R
        covers = bool(in_ball and f0_norm <= cap)
        extras["truth_norm"] = f0_norm
    diam = l2_diameter_bound(post.basis, post.n, R, delta, gamma, 2 * cap)[0] if math.isfinite(cap) else math.inf
    return CredibleSetReport(
        kind=SetKind.NORM_ESTIMATED,
        alpha=alpha,
        center=T,
        radius_Rn=R,
        covers_truth=covers,
        Mn=Mn,
        l2_diameter_bound=diam,
        credibility=float(np.mean((scaled <= R) & (norms <= cap))),
        extras=extras,
    )


def self_convolution(theta: CoefficientField, grid_size: int = DEFAULT_BAND_GRID) -> np.ndarray:
    """Periodic self-convolution ``f * f`` on ``t_j = j / grid_size``.

    Uses ``(f * f)^(m) = f^(m)^2``; batched fields give one row per field.
    """
    spec = theta.basis
    if spec.kind is not BasisKind.TRIGONOMETRIC:
        raise ValueError("self-convolution needs the trigonometric basis")
    if grid_size < 2 * spec.l_max + 1 or grid_size & (grid_size - 1):
        raise ValueError(f"grid_size must be a power of two >= {2 * spec.l_max + 1}")
    fhat = fourier_coefficients(theta)
    spectrum = np.zeros(fhat.shape[:-1] + (grid_size // 2 + 1,), dtype=complex)
    spectrum[..., : spec.l_max + 1] = fhat**2
    return np.fft.irfft(spectrum, n=grid_size, axis=-1) * grid_size


def convolution_band(
    post: PosteriorField,
    alpha: float = 0.05,
    grid_size: int = DEFAULT_BAND_GRID,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    theta0: Optional[CoefficientField] = None,
    samples=None,
    chunk: int = 512,
) -> CredibleSetReport:
    """Sup-norm band ``{g : ||g - fbar * fbar||_inf <= R_n / sqrt(n)}`` for ``f0 * f0``."""
    if post.basis.kind is not BasisKind.TRIGONOMETRIC:
        raise ValueError("convolution bands need the trigonometric basis")
    _check_alpha(alpha)
    batch = _samples(post, samples, sample_count, seed)
    fbar = CoefficientField(post.basis, post.mean.copy())
    centre = self_convolution(fbar, grid_size)
    rn = math.sqrt(post.n)
    dev = np.concatenate(
        [
            rn * np.max(np.abs(self_convolution(CoefficientField(post.basis, batch.values[i : i + chunk]), grid_size) - centre), axis=1)
            for i in range(0, len(batch), chunk)
        ]
    )
    R = nearest_rank(dev, 1 - alpha)
    covers = None
    if theta0 is not None:
        covers = bool(rn * np.max(np.abs(self_convolution(theta0, grid_size) - centre)) <= R)
    return CredibleSetReport(
        kind=SetKind.CONVOLUTION_BAND,
        alpha=alpha,
        center=centre,
        radius_Rn=R,
        covers_truth=covers,
        credibility=float(np.mean(dev <= R)),
        extras={"grid_size": grid_size},
    )


def linear_functional_interval(
    post: PosteriorField,
    g_L: CoefficientField,
    alpha: float = 0.05,
    center: Union[Center, str] = Center.POSTERIOR_MEAN,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    theta0: Optional[CoefficientField] = None,
    samples=None,
) -> CredibleSetReport:
    """Interval ``{z : |z - L(T_n)| <= R_n / sqrt(n)}`` for ``L(f) = <f, g_L>``.

    The efficient radius is ``z_{1-alpha/2} ||g_L||_2``; its ratio to ``R_n``
    is reported in ``extras``.
    """
    _check_alpha(alpha)
    if g_L.basis != post.basis:
        raise ValueError("g_L uses a different basis from the posterior")
    g = g_L.values
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0:
        raise ValueError("g_L must be nonzero")
    batch = _samples(post, samples, sample_count, seed)
    T = _center(post, center)
    LT = float(T.values @ g)
    rn = math.sqrt(post.n)
    dev = rn * np.abs(batch.values @ g - LT)
    R = nearest_rank(dev, 1 - alpha)
    efficient = float(stats.norm.ppf(1 - alpha / 2) * g_norm)
    covers = None
    if theta0 is not None:
        covers = bool(rn * abs(float(theta0.values @ g) - LT) <= R)
    return CredibleSetReport(
        kind=SetKind.LINEAR_FUNCTIONAL,
        alpha=alpha,
        center=LT,
        radius_Rn=R,
        covers_truth=covers,
        interval=(LT - R / rn, LT + R / rn),
        credibility=float(np.mean(dev <= R)),
        extras={"efficient_Rn": efficient, "width_ratio": R / efficient, "center": Center(center).value},
    )


class FunctionalKind(str, enum.Enum):
    SQUARED_L2 = "squared_l2"
    WEIGHTED_SQUARE = "weighted_square"


@dataclass(frozen=True)
class QuadraticFunctional:
    """``Psi(f) = sum w_lk theta_lk^2``; ``weights=None`` is the squared L^2 norm."""

    kind: FunctionalKind = FunctionalKind.SQUARED_L2
    weights: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        if self.kind is FunctionalKind.WEIGHTED_SQUARE:
            if self.weights is None:
                raise ValueError("weighted_square needs weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def w(self, basis: BasisSpec) -> np.ndarray:
        if self.kind is FunctionalKind.SQUARED_L2:
            return np.ones(basis.dim)
        w = np.asarray(self.weights)
        if w.size != basis.dim:
            raise ValueError(f"expected {basis.dim} weights, got {w.size}")
        return w

    def __call__(self, theta: CoefficientField):
        v = theta.values
        return (v * v) @ self.w(theta.basis)

    def representer(self, theta: CoefficientField) -> CoefficientField:
        """Riesz representer ``2 w theta`` of the derivative at ``theta``."""
        return CoefficientField(theta.basis, 2 * self.w(theta.basis) * theta.values)


def nonlinear_functional_interval(
    post: PosteriorField,
    psi: QuadraticFunctional = QuadraticFunctional(),
    alpha: float = 0.05,
    sample_count: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
    *,
    theta0: Optional[CoefficientField] = None,
    samples=None,
) -> CredibleSetReport:
    """Equal-tailed interval ``(mu_n, nu_n]`` for a quadratic functional.

    The efficient scaled width ``2 z_{1-alpha/2} ||Psi'_{f0}||_2`` uses the
    representer at ``theta0`` (at the posterior mean when no truth is given);
    a zero representer is flagged as degenerate.
    """
    _check_alpha(alpha)
    batch = _samples(post, samples, sample_count, seed)
    values = psi(batch)
    mu = nearest_rank(values, alpha / 2)
    nu = nearest_rank(values, 1 - alpha / 2)
    ref = theta0 if theta0 is not None else CoefficientField(post.basis, post.mean.copy())
    rep_norm = float(np.linalg.norm(psi.representer(ref).values))
    scale = float(np.sqrt(psi(ref))) if psi(ref) > 0 else 0.0
    degenerate = rep_norm <= 1e-12 * max(1.0, scale)
    rn = math.sqrt(post.n)
    efficient = 2 * float(stats.norm.ppf(1 - alpha / 2)) * rep_norm
    extras = {
        "scaled_width": rn * (nu - mu),
        "efficient_width": efficient,
        "degenerate": degenerate,
    }
    if not degenerate:
        extras["width_ratio"] = rn * (nu - mu) / efficient
    covers = None
    if theta0 is not None:
        t = float(psi(theta0))
        covers = bool(mu < t <= nu)
    return CredibleSetReport(
        kind=SetKind.NONLINEAR_FUNCTIONAL,
        alpha=alpha,
        center=0.5 * (mu + nu),
        radius_Rn=0.5 * rn * (nu - mu),
        covers_truth=covers,
        interval=(mu, nu),
        credibility=float(np.mean((values > mu) & (values <= nu))),
        extras=extras,
    )

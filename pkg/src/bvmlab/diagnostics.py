"""Checks of the Gaussian limiting shape of the posterior.

Total variation on a finite-dimensional projection is replaced by two cheap
necessary conditions: per-coordinate Kolmogorov-Smirnov distances of the
rescaled marginals to N(0, 1), and the deviation of their empirical
covariance from the identity.  The bounded-Lipschitz distance on the line is
proxied by the Wasserstein-1 distance, which dominates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .basis import BasisSpec, CoefficientField
from .norms import NormSpec, norm
from .posterior import PosteriorField, posterior_sample
from .rng import SeedLike

MIN_FIDI_SAMPLES = 500


@dataclass(frozen=True)
class ProjectionSpec:
    """Coordinates spanned by the listed levels."""

    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        if not self.levels:
            raise ValueError("a projection needs at least one level")

    @classmethod
    def up_to(cls, basis: BasisSpec, J: int) -> "ProjectionSpec":
        """All levels up to ``J`` (``|l| <= J`` for the trigonometric basis)."""
        lv = basis.level_values()
        keep = lv[lv <= J] if basis.is_wavelet else lv[np.abs(lv) <= J]
        return cls(tuple(keep.tolist()))

    def indices(self, basis: BasisSpec) -> np.ndarray:
        for l in self.levels:
            basis._check_level(l)
        return np.flatnonzero(np.isin(basis.levels, self.levels))

    def dim(self, basis: BasisSpec) -> int:
        return int(self.indices(basis).size)


@dataclass
class BvmDiagnosticReport:
    per_coordinate_ks: Optional[np.ndarray] = None
    cov_deviation: Optional[float] = None
    hdelta_tail: Optional[float] = None
    mean_linearity: Optional[float] = None

    @property
    def max_ks(self) -> Optional[float]:
        return None if self.per_coordinate_ks is None else float(np.max(self.per_coordinate_ks))

    def summary(self) -> dict:
        out = {}
        if self.per_coordinate_ks is not None:
            out["max_ks"] = self.max_ks
            out["cov_deviation"] = self.cov_deviation
        if self.hdelta_tail is not None:
            out["hdelta_tail"] = self.hdelta_tail
        if self.mean_linearity is not None:
            out["mean_linearity"] = self.mean_linearity
        return out


def gaussian_ks_distance(mean, var) -> np.ndarray:
    """Exact ``sup_t |Phi((t - m)/sqrt(v)) - Phi(t)|``.

    The supremum sits where the two densities cross, which solves a quadratic.
    """
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    v = np.atleast_1d(np.asarray(var, dtype=float))
    m, v = np.broadcast_arrays(m, v)
    out = np.empty(m.shape)
    for i, (mi, vi) in enumerate(zip(m.ravel(), v.ravel())):
        if abs(vi - 1.0) < 1e-12:
            roots = [mi / 2]
        else:
            # (1 - 1/v) t^2 + 2 m t / v - m^2 / v - log v = 0
            a, b, c = 1 - 1 / vi, 2 * mi / vi, -(mi * mi) / vi - math.log(vi)
            disc = max(b * b - 4 * a * c, 0.0)
            roots = [(-b + s * math.sqrt(disc)) / (2 * a) for s in (1, -1)]
        sd = math.sqrt(vi)
        out.flat[i] = max(abs(stats.norm.cdf((t - mi) / sd) - stats.norm.cdf(t)) for t in roots)
    return out if np.ndim(mean) or np.ndim(var) else out[0]


def fidi_distance(
    post: PosteriorField,
    proj: ProjectionSpec,
    sample_count: int = 4096,
    seed: SeedLike = 0,
    *,
    samples: Optional[CoefficientField] = None,
) -> BvmDiagnosticReport:
    """KS and covariance checks of ``sqrt(n) (f - X)`` projected onto ``proj``."""
    idx = proj.indices(post.basis)
    if samples is None:
        if sample_count < MIN_FIDI_SAMPLES:
            raise ValueError(f"sample_count must be at least {MIN_FIDI_SAMPLES}")
        samples = posterior_sample(post, sample_count, seed)
    elif len(samples) < MIN_FIDI_SAMPLES:
        raise ValueError(f"need at least {MIN_FIDI_SAMPLES} samples")
    Z = math.sqrt(post.n) * (samples.values[:, idx] - post.x[idx])
    ks = np.atleast_1d(stats.ks_1samp(Z, stats.norm.cdf, axis=0).statistic)
    cov = np.atleast_2d(np.cov(Z, rowvar=False))
    return BvmDiagnosticReport(
        per_coordinate_ks=ks,
        cov_deviation=float(np.max(np.abs(cov - np.eye(idx.size)))),
    )


def hdelta_concentration(
    post: PosteriorField,
    theta0: CoefficientField,
    delta_prime: float = 0.6,
    M_test: float = math.inf,
    sample_count: int = 4096,
    seed: SeedLike = 0,
    *,
    samples: Optional[CoefficientField] = None,
) -> float:
    """Posterior fraction of ``{f : n ||f - f0||^2_{H(delta')} > M_test}``."""
    if samples is None:
        samples = posterior_sample(post, sample_count, seed)
    d2 = post.n * norm(samples - theta0, NormSpec.hdelta(delta_prime)) ** 2
    return float(np.mean(d2 > M_test))


def mean_linearity(post: PosteriorField, delta: float = 1.0) -> float:
    """``sqrt(n) ||fbar_n - X||_{H(delta)}``."""
    gap = CoefficientField(post.basis, post.mean - post.x)
    return math.sqrt(post.n) * norm(gap, NormSpec.hdelta(delta))


def empirical_bl_distance(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """Wasserstein-1 distance of two empirical laws on the line.

    Reported as the proxy for the bounded-Lipschitz distance, which it
    bounds from above.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("need nonempty samples")
    return float(stats.wasserstein_distance(a, b))

"""Coordinate-wise posteriors of product priors in the white noise model.

Given ``X_lk = theta_lk + eps_lk / sqrt(n)`` and independent priors
``theta_lk ~ sigma_l * phi``, the posterior factorises into one-dimensional
laws with density proportional to ``exp(-n (t - X_lk)^2 / 2) phi(t / sigma_l)``.
A Gaussian base is handled in closed form; every other base goes through a
composite Gauss-Legendre engine (see :mod:`bvmlab._quadrature`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import stats

from . import _quadrature as quad
from ._quadrature import GridOptions
from .basis import BasisSpec, CoefficientField
from .model import Observation
from .norms import Flavor, NormSpec, squared_weights
from .prior import Family, ProductPriorSpec
from .rng import SeedLike, make_rng

__all__ = [
    "Engine",
    "GridOptions",
    "CoordinatePosterior",
    "PosteriorField",
    "fit",
    "posterior_mean",
    "posterior_sample",
    "b_lk",
    "contraction_risk",
]

_NEWTON_STEPS = 4


class Engine(str, enum.Enum):
    GAUSSIAN = "gaussian"
    GRID = "grid"


@dataclass(frozen=True)
class CoordinatePosterior:
    """Posterior law of a single coordinate.

    ``form`` is ``gaussian`` (closed form, ``nodes``/``log_weights`` empty) or
    ``grid`` (normalised quadrature nodes and log-weights).
    """

    form: Engine
    l: int
    k: int
    n: int
    x: float
    sigma: float
    mean: float
    variance: float
    nodes: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


class PosteriorField:
    """Product posterior over the whole index set, stored as arrays.

    Construct with :func:`fit`.  ``mean`` and ``variance`` are per-coordinate
    arrays in storage order; ``coordinate((l, k))`` gives a single law.
    """

    def __init__(self, prior: ProductPriorSpec, obs: Observation, engine: Engine, options: Optional[GridOptions]):
        self.prior = prior
        self.obs = obs
        self.engine = engine
        self.options = options
        self.sigma = prior.sigma
        x = obs.x.values
        n = obs.n
        self._table = None
        if engine is Engine.GAUSSIAN:
            s2 = self.sigma**2
            self.mean = x * n * s2 / (n * s2 + 1)
            self.variance = s2 / (n * s2 + 1)
            self.grid = None
        else:
            self.grid = quad.build_grid(x, self.sigma, n, prior.base, options)
            w = self.grid.weights
            nodes = self.grid.nodes
            self.mean = np.einsum("dpm,dpm->d", w, nodes)
            centred = nodes - self.mean[:, None, None]
            self.variance = np.einsum("dpm,dpm->d", w, centred * centred)

    @property
    def basis(self) -> BasisSpec:
        return self.prior.basis

    @property
    def n(self) -> int:
        return self.obs.n

    @property
    def x(self) -> np.ndarray:
        return self.obs.x.values

    def __len__(self) -> int:
        return self.basis.dim

    def coordinate(self, index: Union[int, tuple[int, int]]) -> CoordinatePosterior:
        i = self.basis.offset(*index) if isinstance(index, tuple) else int(index)
        if self.grid is None:
            nodes = lw = np.empty(0)
        else:
            nodes, lw = self.grid.flat(i)
        return CoordinatePosterior(
            form=self.engine,
            l=int(self.basis.levels[i]),
            k=int(self.basis.positions[i]),
            n=self.n,
            x=float(self.x[i]),
            sigma=float(self.sigma[i]),
            mean=float(self.mean[i]),
            variance=float(self.variance[i]),
            nodes=nodes,
            log_weights=lw,
        )

    @property
    def coords(self) -> list[CoordinatePosterior]:
        return [self.coordinate(i) for i in range(self.basis.dim)]

    def _cdf_table(self):
        if self._table is None:
            self._table = quad.cdf_table(self.grid, self.x, self.sigma, self.n, self.prior.base)
        return self._table

    def second_moment(self, centre) -> np.ndarray:
        """``int (t - c_lk)^2 dPi(t | X_lk)`` per coordinate."""
        centre = np.broadcast_to(np.asarray(centre, dtype=float), (self.basis.dim,))
        if self.grid is None:
            return self.variance + (self.mean - centre) ** 2
        d = self.grid.nodes - centre[:, None, None]
        return np.einsum("dpm,dpm->d", self.grid.weights, d * d)

    def quantile(self, p) -> np.ndarray:
        """Per-coordinate ``p``-quantiles; ``p`` is a scalar or one level per coordinate."""
        p = np.broadcast_to(np.asarray(p, dtype=float), (self.basis.dim,))
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.grid is None:
            return stats.norm.ppf(p, loc=self.mean, scale=np.sqrt(self.variance))
        X, F = self._cdf_table()
        q, col = quad.invert_table(X, F, p[:, None])
        q, col = q[:, 0], col[:, 0]
        rows = np.arange(self.basis.dim)
        left, right = X[rows, col - 1], X[rows, col]
        F_left = F[rows, col - 1]
        rule = self.grid.rule
        base = self.prior.base
        interior = (p > 0) & (p < 1) & (right > left)
        for _ in range(_NEWTON_STEPS):
            # exact CDF from the table point on the left, by Gauss-Legendre on [left, q]
            mid, half = 0.5 * (q + left), 0.5 * (q - left)
            t = mid[:, None] + half[:, None] * rule.x[None, :]
            dens_t = np.exp(quad.log_posterior_density(t, self.x[:, None], self.sigma[:, None], self.n, base) - self.grid.log_norm[:, None])
            Fq = F_left + half * (dens_t @ rule.w)
            dq = np.exp(quad.log_posterior_density(q, self.x, self.sigma, self.n, base) - self.grid.log_norm)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(interior & (dq > 0), (Fq - p) / dq, 0.0)
            q = np.clip(q - step, left, right)
        return q


def fit(
    prior: ProductPriorSpec,
    obs: Observation,
    engine: Union[Engine, str, None] = None,
    options: Optional[GridOptions] = None,
) -> PosteriorField:
    """Fit the product posterior.

    ``engine=None`` picks the closed form for a Gaussian base and the
    quadrature engine otherwise; ``engine="grid"`` forces quadrature (used to
    cross-check the two).
    """
    if obs.x.basis != prior.basis:
        raise ValueError("prior and observation use different bases")
    if obs.x.is_batch:
        raise ValueError("fit takes a single observation")
    if engine is None:
        engine = Engine.GAUSSIAN if prior.base.family is Family.GAUSSIAN else Engine.GRID
    engine = Engine(engine)
    if engine is Engine.GAUSSIAN and prior.base.family is not Family.GAUSSIAN:
        raise ValueError("the closed-form engine needs a Gaussian base density")
    if engine is Engine.GRID and options is None:
        options = GridOptions()
    return PosteriorField(prior, obs, engine, options)


def posterior_mean(post: PosteriorField) -> CoefficientField:
    return CoefficientField(post.basis, post.mean.copy())


def posterior_sample(post: PosteriorField, count: int, seed: SeedLike) -> CoefficientField:
    """Draw ``count`` joint posterior samples as a batched field of shape ``(count, D)``.

    Gaussian coordinates are sampled exactly; quadrature coordinates by
    inverting the tabulated CDF with linear interpolation between table points.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = make_rng(seed)
    D = post.basis.dim
    if post.grid is None:
        z = rng.standard_normal((count, D))
        return CoefficientField(post.basis, post.mean + np.sqrt(post.variance) * z)
    X, F = post._cdf_table()
    u = rng.random((D, count))
    draws, _ = quad.invert_table(X, F, u)
    return CoefficientField(post.basis, np.ascontiguousarray(draws.T))


def b_lk(post: PosteriorField, theta0: CoefficientField) -> np.ndarray:
    """Posterior second moment of every coordinate about the truth."""
    if theta0.basis != post.basis:
        raise ValueError("signal and posterior use different bases")
    return post.second_moment(theta0.values)


_RISK_FLAVORS = (Flavor.LOG_SOBOLEV2, Flavor.SOBOLEV2, Flavor.HDELTA, Flavor.L2)


def contraction_risk(post: PosteriorField, theta0: CoefficientField, norm: NormSpec) -> float:
    """``int ||f - f0||^2 dPi(f | X)`` in a weighted two-norm, computed exactly."""
    if norm.flavor not in _RISK_FLAVORS:
        raise ValueError(f"contraction risk needs a weighted two-norm, got {norm.flavor.value}")
    return float(squared_weights(post.basis, norm) @ b_lk(post, theta0))

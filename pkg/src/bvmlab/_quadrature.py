"""Composite Gauss-Legendre panels for one-dimensional posterior densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import special, stats


def _integration_matrix(x: np.ndarray) -> np.ndarray:
    # S @ f(x) ~ int_{-1}^{x_j} f, exact for polynomials of degree < len(x)
    m = x.size
    vander = legendre.legvander(x, m - 1)
    lagrange = np.linalg.inv(vander)
    vint = np.empty((m, m))
    for i in range(m):
        c = np.zeros(m)
        c[i] = 1.0
        vint[:, i] = legendre.legval(x, legendre.legint(c, lbnd=-1))
    return vint @ lagrange


@dataclass(frozen=True)
class GridOptions:
    """Panel layout of the quadrature engine.

    The likelihood window ``x +- lik_halfwidth / sqrt(n)`` is cut into
    ``lik_panels`` equal panels; the prior is cut at its quantiles
    ``Phi(z)`` for ``prior_panels + 1`` equispaced ``z`` in ``+-prior_z``.
    Bounded supports get ``boundary_layers`` geometric panels at each end.
    ``refine`` splits every panel into that many equal parts.
    """

    lik_panels: int = 64
    lik_halfwidth: float = 8.0
    prior_panels: int = 16
    prior_z: float = 8.5
    order: int = 8
    boundary_layers: int = 30
    refine: int = 1


class PanelRule:
    def __init__(self, order: int):
        self.order = order
        self.x, self.w = legendre.leggauss(order)
        self.cumulative = _integration_matrix(self.x)


_RULES: dict[int, PanelRule] = {}


def panel_rule(order: int) -> PanelRule:
    if order not in _RULES:
        _RULES[order] = PanelRule(order)
    return _RULES[order]


def prior_breakpoints(base, opts: GridOptions) -> np.ndarray:
    z = np.linspace(-opts.prior_z, opts.prior_z, opts.prior_panels + 1)
    # symmetric laws: build from the upper tail to keep extreme quantiles finite
    q = np.sign(z) * base._scipy.isf(stats.norm.sf(np.abs(z)))
    lo, hi = base.support
    return np.clip(q, lo, hi)


def _golden_max(f, a, b, iters: int = 80):
    """Vectorised golden-section search for the maximum of ``f`` on ``[a, b]``."""
    r = 0.5 * (np.sqrt(5.0) - 1.0)
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - r * (b - a)
        d_new = a + r * (b - a)
        c, d = np.where(left, c_new, d), np.where(left, c, d_new)
        fc_new = f(np.where(left, c, d))
        fc, fd = np.where(left, fc_new, fd), np.where(left, fc, fc_new)
    return 0.5 * (a + b)


def posterior_mode(x, sigma, n, base, candidates: np.ndarray) -> np.ndarray:
    """Locate the highest posterior density point, row by row.

    The best of ``candidates`` (sorted per row) brackets the maximum together
    with its neighbours; golden-section search then polishes it.
    """
    logd = log_posterior_density(candidates, x[:, None], sigma[:, None], n, base)
    i = np.argmax(logd, axis=1)
    rows = np.arange(candidates.shape[0])
    last = candidates.shape[1] - 1
    a = candidates[rows, np.maximum(i - 1, 0)]
    b = candidates[rows, np.minimum(i + 1, last)]
    return _golden_max(lambda t: log_posterior_density(t, x, sigma, n, base), a, b)


def breakpoints(x, sigma, n, base, opts: GridOptions) -> np.ndarray:
    """Sorted panel edges, one row per coordinate (all rows equally long).

    Edges come from three windows: the likelihood around ``x``, the prior
    quantiles, and a likelihood-width window around the posterior mode.  The
    last one matters when ``x`` sits far out in the prior tail and the bulk
    of the posterior falls between the first two.
    """
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    edges = _edges(x, sigma, n, base, opts, centre=None)
    rule = panel_rule(opts.order)
    a, b = edges[:, :-1], edges[:, 1:]
    nodes = (0.5 * (a + b))[:, :, None] + (0.5 * (b - a))[:, :, None] * rule.x[None, None, :]
    cand = np.sort(np.concatenate([edges, nodes.reshape(x.size, -1)], axis=1), axis=1)
    mode = posterior_mode(x, sigma, n, base, cand)
    curv = n + np.maximum(_prior_curvature(base, mode / sigma), 0.0) / sigma**2
    return _edges(x, sigma, n, base, opts, centre=mode, centre_scale=1.0 / np.sqrt(curv))


def _prior_curvature(base, u):
    """``-(d/du)^2 log phi(u)`` away from kinks."""
    fam = base.family.value
    if fam == "gaussian":
        return np.ones_like(u)
    if fam == "student_t":
        nu = base.nu
        return (nu + 1) * (nu - u * u) / (nu + u * u) ** 2
    return np.zeros_like(u)


def _edges(x, sigma, n, base, opts: GridOptions, centre=None, centre_scale=None) -> np.ndarray:
    half = opts.lik_halfwidth / np.sqrt(n)
    unit = np.linspace(-1.0, 1.0, opts.lik_panels + 1)[None, :]
    parts = [x[:, None] + half * unit]
    if centre is not None:
        parts.append(centre[:, None] + opts.lik_halfwidth * centre_scale[:, None] * unit)
    parts.append(sigma[:, None] * prior_breakpoints(base, opts)[None, :])
    if base.kinks:
        parts.append(sigma[:, None] * np.array(base.kinks)[None, :])
    lo, hi = base.support
    if np.isfinite(hi):
        # geometric layers resolve the jump of the density at the support ends
        geo = 2.0 ** -np.arange(opts.boundary_layers + 1)
        depth = np.minimum(half, (hi - lo) * sigma)[:, None] * geo[None, :]
        parts.append(sigma[:, None] * hi - depth)
        parts.append(sigma[:, None] * lo + depth)
    edges = np.sort(np.concatenate(parts, axis=1), axis=1)
    if np.isfinite(hi) or np.isfinite(lo):
        edges = np.clip(edges, sigma[:, None] * lo, sigma[:, None] * hi)
    if opts.refine > 1:
        t = np.arange(opts.refine) / opts.refine
        a, b = edges[:, :-1], edges[:, 1:]
        fine = a[:, :, None] + (b - a)[:, :, None] * t[None, None, :]
        edges = np.concatenate([fine.reshape(x.size, -1), edges[:, -1:]], axis=1)
    return edges


def log_posterior_density(theta, x, sigma, n, base):
    """Unnormalised log posterior density of one coordinate, broadcast over ``theta``."""
    return -0.5 * n * (theta - x) ** 2 + base.logpdf(theta / sigma) - np.log(sigma)


@dataclass
class PanelGrid:
    """Posterior of every coordinate on its own set of quadrature panels.

    Arrays have shape ``(D, P, m)`` for nodes and weights, ``(D, P + 1)`` for
    panel edges.  ``weights`` are normalised quadrature weights times density
    so ``weights.sum(axis=(1, 2)) == 1``.
    """

    edges: np.ndarray
    nodes: np.ndarray
    log_weights: np.ndarray
    log_norm: np.ndarray
    rule: PanelRule

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def flat(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and log-weights of coordinate ``i``, zero-width panels dropped."""
        keep = np.repeat(np.diff(self.edges[i]) > 0, self.rule.order)
        return self.nodes[i].ravel()[keep], self.log_weights[i].ravel()[keep]


def build_grid(x, sigma, n, base, opts: GridOptions) -> PanelGrid:
    rule = panel_rule(opts.order)
    edges = breakpoints(x, sigma, n, base, opts)
    a, b = edges[:, :-1], edges[:, 1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, :, None] + half[:, :, None] * rule.x[None, None, :]
    with np.errstate(divide="ignore"):
        log_qw = np.log(half)[:, :, None] + np.log(rule.w)[None, None, :]
    logd = log_posterior_density(nodes, np.asarray(x)[:, None, None], np.asarray(sigma)[:, None, None], n, base)
    lw = logd + log_qw
    log_norm = special.logsumexp(lw.reshape(lw.shape[0], -1), axis=1)
    if not np.all(np.isfinite(log_norm)):
        bad = np.flatnonzero(~np.isfinite(log_norm))
        raise FloatingPointError(f"posterior grid carries no mass for coordinates {bad.tolist()}")
    lw = lw - log_norm[:, None, None]
    return PanelGrid(edges=edges, nodes=nodes, log_weights=lw, log_norm=log_norm, rule=rule)


def cdf_table(grid: PanelGrid, x, sigma, n, base) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate the posterior CDF at every panel edge and node.

    Values inside a panel come from integrating the interpolating polynomial of
    the density through the panel's nodes.
    """
    D, P, m = grid.nodes.shape
    half = 0.5 * np.diff(grid.edges, axis=1)
    dens = np.exp(
        log_posterior_density(
            grid.nodes, np.asarray(x)[:, None, None], np.asarray(sigma)[:, None, None], n, base
        )
        - grid.log_norm[:, None, None]
    )
    partial = half[:, :, None] * np.einsum("jk,dpk->dpj", grid.rule.cumulative, dens)
    mass = grid.weights.sum(axis=2)
    start = np.concatenate([np.zeros((D, 1)), np.cumsum(mass, axis=1)[:, :-1]], axis=1)
    F = np.concatenate([start[:, :, None], start[:, :, None] + partial], axis=2).reshape(D, -1)
    X = np.concatenate([grid.edges[:, :-1, None], grid.nodes], axis=2).reshape(D, -1)
    F = np.concatenate([F, np.ones((D, 1))], axis=1)
    X = np.concatenate([X, grid.edges[:, -1:]], axis=1)
    F = np.clip(np.maximum.accumulate(F, axis=1), 0.0, 1.0)
    return X, F


def invert_table(X: np.ndarray, F: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear inverse CDF, one table row per coordinate.

    ``u`` has shape ``(D, count)``; returns the interpolated values and the
    index of the right-hand table point used for each, in the same shape.
    """
    D, T = F.shape
    out = np.empty(u.shape)
    cols = np.empty(u.shape, dtype=np.intp)
    for d in range(D):
        # one row at a time keeps the table in cache
        Fd, Xd, ud = F[d], X[d], u[d]
        col = np.searchsorted(Fd, ud, side="left")
        np.clip(col, 1, T - 1, out=col)
        F0, F1 = Fd[col - 1], Fd[col]
        X0 = Xd[col - 1]
        dF = F1 - F0
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(dF > 0, (ud - F0) / dF, 1.0)
        np.clip(frac, 0.0, 1.0, out=frac)
        out[d] = X0 + frac * (Xd[col] - X0)
        cols[d] = col
    return out, cols

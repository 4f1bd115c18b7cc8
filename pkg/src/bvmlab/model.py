"""Ground-truth signals and white-noise observations in sequence space."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import BasisSpec, CoefficientField
from .prior import ScaleRule
from .rng import SeedLike, make_rng


class SignalKind(str, enum.Enum):
    HOLDER_DECAY = "holder_decay"
    EXPLICIT = "explicit"
    ZERO = "zero"


@dataclass(frozen=True)
class SignalSpec:
    """Declarative description of a true signal ``theta0``.

    ``holder_decay`` draws ``theta0_lk = M * sigma_l * u_lk`` with ``u_lk``
    uniform on ``[-1, 1]`` from ``seed``.  ``explicit`` carries the coefficient
    vector directly (in the basis' storage order); it may violate the
    domination condition on purpose.
    """

    kind: SignalKind
    basis: BasisSpec
    gamma: Optional[float] = None
    M: float = 1.0
    seed: int = 0
    coefficients: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if self.kind is SignalKind.HOLDER_DECAY and self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.kind is SignalKind.EXPLICIT:
            if self.coefficients is None or len(self.coefficients) != self.basis.dim:
                raise ValueError(f"explicit signal needs {self.basis.dim} coefficients")
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))


@dataclass(frozen=True)
class Observation:
    n: int
    x: CoefficientField
    seed: object = None


def make_signal(spec: SignalSpec, sigma=None) -> CoefficientField:
    """Build ``theta0``.

    ``sigma`` is the per-coordinate scale sequence the signal is dominated by.
    When omitted, the power rule matching the basis with exponent
    ``spec.gamma`` is used.
    """
    basis = spec.basis
    if spec.kind is SignalKind.ZERO:
        return CoefficientField.zeros(basis)
    if spec.kind is SignalKind.EXPLICIT:
        return CoefficientField(basis, np.array(spec.coefficients))
    if sigma is None:
        if spec.gamma is None:
            raise ValueError("holder_decay signal needs gamma or an explicit sigma")
        sigma = ScaleRule.matching(basis, spec.gamma).per_coordinate(basis)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (basis.dim,))
    if np.any(sigma <= 0):
        raise ValueError("scale sequence must be positive")
    u = make_rng(spec.seed).uniform(-1.0, 1.0, basis.dim)
    return CoefficientField(basis, spec.M * sigma * u)


def observe(theta0: CoefficientField, n: int, seed: SeedLike) -> Observation:
    """Draw ``X_lk = theta0_lk + eps_lk / sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    z = make_rng(seed).standard_normal(theta0.values.shape)
    return Observation(n=int(n), x=theta0 + z / np.sqrt(n), seed=seed)

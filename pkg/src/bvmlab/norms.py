"""Sequence-space norms.

All two-norms share the weighted form

    ||theta||^2 = sum_l a_l^{2s} / (log a_l)^{2 delta} * sum_k theta_lk^2

with natural logarithms.  Special cases: Sobolev (``delta = 0``), H(delta)
(``s = -1/2``) and L^2 (``s = delta = 0``).  The Hoelder norm is the wavelet
sup-norm ``sup 2^{l(s+1/2)} |theta_lk|``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, CoefficientField, require_same_basis


class Flavor(str, enum.Enum):
    SOBOLEV2 = "sobolev2"
    LOG_SOBOLEV2 = "log_sobolev2"
    HDELTA = "hdelta"
    L2 = "l2"
    HOLDER_SUP = "holder_sup"


@dataclass(frozen=True)
class NormSpec:
    flavor: Flavor
    s: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        if self.flavor is Flavor.HDELTA:
            if self.delta <= 0.5:
                raise ValueError("H(delta) requires delta > 1/2")
            object.__setattr__(self, "s", -0.5)
        elif self.flavor is Flavor.L2:
            object.__setattr__(self, "s", 0.0)
            object.__setattr__(self, "delta", 0.0)
        elif self.flavor is Flavor.SOBOLEV2:
            object.__setattr__(self, "delta", 0.0)
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @classmethod
    def sobolev(cls, s: float) -> "NormSpec":
        return cls(Flavor.SOBOLEV2, s=s)

    @classmethod
    def log_sobolev(cls, s: float, delta: float) -> "NormSpec":
        return cls(Flavor.LOG_SOBOLEV2, s=s, delta=delta)

    @classmethod
    def hdelta(cls, delta: float) -> "NormSpec":
        return cls(Flavor.HDELTA, delta=delta)

    @classmethod
    def l2(cls) -> "NormSpec":
        return cls(Flavor.L2)

    @classmethod
    def holder(cls, s: float) -> "NormSpec":
        return cls(Flavor.HOLDER_SUP, s=s)


def squared_weights(basis: BasisSpec, spec: NormSpec) -> np.ndarray:
    """Per-coordinate weights ``a^{2s} (log a)^{-2 delta}`` of a two-norm."""
    if spec.flavor is Flavor.HOLDER_SUP:
        raise ValueError("the Hoelder norm is not a weighted two-norm")
    a = basis.a
    return a ** (2 * spec.s) * np.log(a) ** (-2 * spec.delta)


def hdelta_weights(basis: BasisSpec, delta: float) -> np.ndarray:
    return squared_weights(basis, NormSpec.hdelta(delta))


def holder_weights(basis: BasisSpec, s: float) -> np.ndarray:
    if not basis.is_wavelet:
        raise ValueError("the Hoelder norm needs a wavelet basis")
    return 2.0 ** (basis.levels * (s + 0.5))


def norm(theta: CoefficientField, spec: NormSpec):
    """Norm of a field; batched fields give one value per row."""
    v = theta.values
    if spec.flavor is Flavor.HOLDER_SUP:
        out = np.max(holder_weights(theta.basis, spec.s) * np.abs(v), axis=-1)
    else:
        out = np.sqrt((v * v) @ squared_weights(theta.basis, spec))
    return float(out) if np.ndim(out) == 0 else out


def h_delta_distance(a: CoefficientField, b: CoefficientField, delta: float):
    require_same_basis(a, b)
    return norm(a - b, NormSpec.hdelta(delta))


def holder_to_log_sobolev_constant(basis: BasisSpec, gamma: float) -> float:
    """Smallest ``c`` with ``||g||_{gamma,2,1} <= c ||g||_{gamma,inf}`` on the truncated set."""
    w = squared_weights(basis, NormSpec.log_sobolev(gamma, 1.0))
    h = holder_weights(basis, gamma)
    return float(np.sqrt(np.sum(w / h**2)))

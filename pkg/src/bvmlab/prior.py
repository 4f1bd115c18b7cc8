"""Product priors on basis coefficients.

Each coefficient is drawn independently as ``theta_lk = sigma_l * g_lk`` with
``g_lk`` from a fixed base density ``phi``.  The base families are the
standard versions of their laws: N(0, 1), the Laplace law ``exp(-|x|)/2``,
Student's t with ``nu`` degrees of freedom, and the uniform law on
``[-tau, tau]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .basis import BasisKind, BasisSpec, CoefficientField
from .rng import SeedLike, make_rng

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    LAPLACE = "laplace"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class BaseDensity:
    family: Family
    tau: Optional[float] = None
    nu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.UNIFORM:
            if self.tau is None or not self.tau > 0:
                raise ValueError("uniform base density needs tau > 0")
        if self.family is Family.STUDENT_T:
            if self.nu is None or not self.nu > 2:
                raise ValueError("Student t base density needs nu > 2 (finite variance)")

    @classmethod
    def gaussian(cls) -> "BaseDensity":
        return cls(Family.GAUSSIAN)

    @classmethod
    def uniform(cls, tau: float) -> "BaseDensity":
        return cls(Family.UNIFORM, tau=tau)

    @classmethod
    def laplace(cls) -> "BaseDensity":
        return cls(Family.LAPLACE)

    @classmethod
    def student_t(cls, nu: float) -> "BaseDensity":
        return cls(Family.STUDENT_T, nu=nu)

    @property
    def _scipy(self):
        if self.family is Family.GAUSSIAN:
            return stats.norm()
        if self.family is Family.UNIFORM:
            return stats.uniform(loc=-self.tau, scale=2 * self.tau)
        if self.family is Family.LAPLACE:
            return stats.laplace()
        return stats.t(self.nu)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam is Family.GAUSSIAN:
            return -0.5 * x * x - _LOG_SQRT_2PI
        if fam is Family.LAPLACE:
            return -np.abs(x) - math.log(2.0)
        if fam is Family.UNIFORM:
            inside = np.abs(x) <= self.tau
            return np.where(inside, -math.log(2 * self.tau), -np.inf)
        nu = self.nu
        const = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
        return const - (nu + 1) / 2 * np.log1p(x * x / nu)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def ppf(self, p):
        return self._scipy.ppf(p)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        fam = self.family
        if fam is Family.GAUSSIAN:
            return rng.standard_normal(size)
        if fam is Family.LAPLACE:
            return rng.laplace(size=size)
        if fam is Family.UNIFORM:
            return rng.uniform(-self.tau, self.tau, size)
        return rng.standard_t(self.nu, size)

    @property
    def support(self) -> tuple[float, float]:
        if self.family is Family.UNIFORM:
            return (-self.tau, self.tau)
        return (-math.inf, math.inf)

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points where the log-density is not smooth."""
        if self.family is Family.LAPLACE:
            return (0.0,)
        if self.family is Family.UNIFORM:
            return (-self.tau, self.tau)
        return ()

    @property
    def variance(self) -> float:
        return float(self._scipy.var())

    @property
    def upper_bound(self) -> float:
        """``C_phi = sup phi``."""
        return float(self.pdf(0.0))

    def lower_bound(self, tau: float) -> float:
        """``c_phi = inf phi`` over ``(-tau, tau)`` (zero if that leaves the support)."""
        if self.family is Family.UNIFORM:
            return 1.0 / (2 * self.tau) if tau <= self.tau else 0.0
        return float(self.pdf(tau))


class ScaleKind(str, enum.Enum):
    POWER_TRIG = "power_trig"
    POWER_DYADIC = "power_dyadic"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class ScaleRule:
    """Rule producing the level scales ``sigma_l``.

    ``power_trig``: ``max(2, |l|)^{-1/2-gamma}``; ``power_dyadic``:
    ``2^{-l(1/2+gamma)}``; ``explicit``: one value per level in the basis'
    level order.
    """

    kind: ScaleKind
    gamma: Optional[float] = None
    values: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScaleKind(self.kind))
        if self.kind is ScaleKind.EXPLICIT:
            if not self.values:
                raise ValueError("explicit scale rule needs values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if min(self.values) <= 0:
                raise ValueError("scales must be positive")
        elif self.gamma is None or not self.gamma > 0:
            raise ValueError("power scale rules need gamma > 0")

    @classmethod
    def power_trig(cls, gamma: float) -> "ScaleRule":
        return cls(ScaleKind.POWER_TRIG, gamma=gamma)

    @classmethod
    def power_dyadic(cls, gamma: float) -> "ScaleRule":
        return cls(ScaleKind.POWER_DYADIC, gamma=gamma)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "ScaleRule":
        return cls(ScaleKind.EXPLICIT, values=tuple(values))

    @classmethod
    def matching(cls, basis: BasisSpec, gamma: float) -> "ScaleRule":
        if basis.is_wavelet:
            return cls.power_dyadic(gamma)
        return cls.power_trig(gamma)

    def level_scale(self, l) -> np.ndarray:
        l = np.asarray(l, dtype=float)
        if self.kind is ScaleKind.POWER_TRIG:
            return np.maximum(2.0, np.abs(l)) ** (-0.5 - self.gamma)
        if self.kind is ScaleKind.POWER_DYADIC:
            return 2.0 ** (-l * (0.5 + self.gamma))
        raise TypeError("explicit scales are indexed by level position, not level")

    def per_coordinate(self, basis: BasisSpec) -> np.ndarray:
        if self.kind is ScaleKind.EXPLICIT:
            lv = basis.level_values()
            if len(self.values) < len(lv):
                raise ValueError(
                    f"explicit scale rule has {len(self.values)} values, basis has {len(lv)} levels"
                )
            table = dict(zip(lv.tolist(), self.values))
            return np.array([table[l] for l in basis.levels.tolist()])
        if self.kind is ScaleKind.POWER_TRIG and basis.is_wavelet:
            raise ValueError("power_trig scales need a trigonometric basis")
        if self.kind is ScaleKind.POWER_DYADIC and not basis.is_wavelet:
            raise ValueError("power_dyadic scales need a wavelet basis")
        return self.level_scale(basis.levels)


def tail_mass(rule: ScaleRule, kind: BasisKind, l_max: int) -> float:
    """``sum_{l > l_max} |Z_l| sigma_l^2`` over the untruncated index set."""
    kind = BasisKind(kind)
    if rule.kind is ScaleKind.POWER_DYADIC and kind is BasisKind.WAVELET:
        r = 2.0 ** (-2 * rule.gamma)
        return r ** (l_max + 1) / (1 - r)
    if rule.kind is ScaleKind.POWER_TRIG and kind is BasisKind.TRIGONOMETRIC:
        # two coordinates per |l|, sigma^2 = |l|^{-1-2 gamma} once |l| >= 2
        start = max(l_max + 1, 2)
        extra = 2 * 2.0 ** (-1 - 2 * rule.gamma) if l_max < 1 else 0.0
        return 2 * float(special.zeta(1 + 2 * rule.gamma, start)) + extra
    raise ValueError("tail mass is only known in closed form for power rules")


def truncation_level(rule: ScaleRule, kind: BasisKind, n: int, tol: float = 1e-4, j0: int = 1) -> int:
    """Smallest ``l_max`` whose prior tail mass is below ``tol / n``."""
    l_max = j0 - 1 if BasisKind(kind) is BasisKind.WAVELET else 0
    while tail_mass(rule, kind, l_max) >= tol / n:
        l_max += 1
    return l_max


@dataclass(frozen=True)
class ProductPriorSpec:
    base: BaseDensity
    scale: ScaleRule
    basis: BasisSpec
    M: Optional[float] = None

    def __post_init__(self):
        sig = self.sigma
        if np.any(sig <= 0) or not np.all(np.isfinite(sig)):
            raise ValueError("scales must be positive and finite")
        if self.M is not None and self.base.family is Family.UNIFORM and not self.base.tau > self.M:
            raise ValueError(
                f"uniform base needs tau > M (tau={self.base.tau}, M={self.M})"
            )

    @property
    def sigma(self) -> np.ndarray:
        return self.scale.per_coordinate(self.basis)


def prior_sample(spec: ProductPriorSpec, seed: SeedLike, count: Optional[int] = None) -> CoefficientField:
    rng = make_rng(seed)
    shape = (spec.basis.dim,) if count is None else (count, spec.basis.dim)
    return CoefficientField(spec.basis, spec.sigma * spec.base.sample(rng, shape))


@dataclass
class ConditionReport:
    M_hat: float
    satisfied: bool
    violating_indices: list = field(default_factory=list)


def check_condition(spec: ProductPriorSpec, theta0: CoefficientField) -> ConditionReport:
    """Check the domination condition ``sup |theta0_lk| / sigma_l <= M``.

    Violations are reported rather than raised so negative controls can run.
    Without a declared ``M`` only the uniform support condition ``tau > M_hat``
    is enforced.
    """
    if theta0.basis != spec.basis:
        raise ValueError("signal and prior use different bases")
    ratio = np.abs(theta0.values) / spec.sigma
    M_hat = float(np.max(ratio)) if ratio.size else 0.0
    bound = spec.M if spec.M is not None else math.inf
    bad = ratio > bound
    if spec.base.family is Family.UNIFORM:
        bad |= ratio >= spec.base.tau
    idx = np.flatnonzero(bad)
    violating = [(int(spec.basis.levels[i]), int(spec.basis.positions[i])) for i in idx]
    return ConditionReport(M_hat=M_hat, satisfied=not violating, violating_indices=violating)

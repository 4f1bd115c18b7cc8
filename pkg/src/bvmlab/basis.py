"""Orthonormal bases of L^2[0,1] in sequence-space form.

Two families are provided:

* ``trigonometric``: the real Fourier basis indexed by ``l`` in
  ``-l_max..l_max`` with one function per level.  ``l = 0`` is the constant,
  ``l > 0`` is ``sqrt(2) cos(2 pi l t)`` and ``l < 0`` is
  ``sqrt(2) sin(2 pi |l| t)``.  Characteristic sequence ``a_l = max(2, |l|)``.
* ``wavelet``: the periodised Haar basis.  The coarse level ``j0 - 1`` holds
  the ``2**j0`` Haar scaling functions at resolution ``j0``; every level
  ``l >= j0`` holds ``2**l`` wavelets.  ``a_l = 2**l`` on wavelet levels and
  ``a_{j0-1} = 2**j0`` on the coarse level, so ``log a_l > 0`` everywhere.

Coefficients live in :class:`CoefficientField`, a thin wrapper around a numpy
array whose last axis runs over the index set in level-major order.  A
leading batch axis is allowed (posterior samples are stored that way).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator

import numpy as np


class BasisKind(str, enum.Enum):
    TRIGONOMETRIC = "trigonometric"
    WAVELET = "wavelet"


@dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind
    l_max: int
    j0: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if int(self.l_max) != self.l_max:
            raise ValueError("l_max must be an integer")
        if self.kind is BasisKind.TRIGONOMETRIC:
            if self.l_max < 0:
                raise ValueError("trigonometric basis needs l_max >= 0")
        else:
            if self.j0 < 1:
                raise ValueError("wavelet basis needs j0 >= 1")
            if self.l_max < self.j0 - 1:
                raise ValueError("wavelet basis needs l_max >= j0 - 1")

    @classmethod
    def trigonometric(cls, l_max: int) -> "BasisSpec":
        return cls(BasisKind.TRIGONOMETRIC, l_max)

    @classmethod
    def wavelet(cls, l_max: int, j0: int = 1) -> "BasisSpec":
        return cls(BasisKind.WAVELET, l_max, j0)

    @property
    def is_wavelet(self) -> bool:
        return self.kind is BasisKind.WAVELET

    @property
    def coarse_level(self) -> int:
        return self.j0 - 1

    def level_values(self) -> np.ndarray:
        if self.is_wavelet:
            return np.arange(self.coarse_level, self.l_max + 1)
        return np.arange(-self.l_max, self.l_max + 1)

    def level_size(self, l: int) -> int:
        self._check_level(l)
        if not self.is_wavelet:
            return 1
        return 2 ** self.j0 if l == self.coarse_level else 2 ** l

    @cached_property
    def levels(self) -> np.ndarray:
        """Level of every coordinate, in storage order."""
        return np.concatenate(
            [np.full(self.level_size(l), l) for l in self.level_values()]
        ).astype(np.int64)

    @cached_property
    def positions(self) -> np.ndarray:
        """Within-level position ``k`` of every coordinate."""
        return np.concatenate(
            [np.arange(self.level_size(l)) for l in self.level_values()]
        ).astype(np.int64)

    @cached_property
    def a(self) -> np.ndarray:
        """Characteristic sequence evaluated per coordinate."""
        return np.array([characteristic(self, l) for l in self.levels], dtype=float)

    @property
    def dim(self) -> int:
        if self.is_wavelet:
            return 2 ** (self.l_max + 1)
        return 2 * self.l_max + 1

    def offset(self, l: int, k: int) -> int:
        """Storage position of coordinate ``(l, k)``."""
        self._check_level(l)
        if not 0 <= k < self.level_size(l):
            raise IndexError(f"k={k} outside level {l}")
        if not self.is_wavelet:
            return l + self.l_max
        if l == self.coarse_level:
            return k
        return 2 ** l + k

    def _check_level(self, l: int) -> None:
        lo, hi = (self.coarse_level, self.l_max) if self.is_wavelet else (-self.l_max, self.l_max)
        if not lo <= l <= hi:
            raise ValueError(f"level {l} outside [{lo}, {hi}] for {self.kind.value} basis")


def index_set(spec: BasisSpec) -> list[tuple[int, int]]:
    return list(zip(spec.levels.tolist(), spec.positions.tolist()))


def characteristic(spec: BasisSpec, l: int) -> float:
    spec._check_level(l)
    if not spec.is_wavelet:
        return float(max(2, abs(l)))
    if l == spec.coarse_level:
        return float(2 ** spec.j0)
    return float(2 ** l)


class CoefficientField:
    """Coefficients ``theta_lk`` of one function (or a batch of functions)."""

    __slots__ = ("basis", "values")

    def __init__(self, basis: BasisSpec, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 0 or values.shape[-1] != basis.dim:
            raise ValueError(
                f"expected trailing dimension {basis.dim}, got shape {values.shape}"
            )
        self.basis = basis
        self.values = values

    @classmethod
    def zeros(cls, basis: BasisSpec) -> "CoefficientField":
        return cls(basis, np.zeros(basis.dim))

    @classmethod
    def from_dict(cls, basis: BasisSpec, coefficients: dict) -> "CoefficientField":
        values = np.zeros(basis.dim)
        for (l, k), v in coefficients.items():
            values[basis.offset(l, k)] = v
        return cls(basis, values)

    @property
    def is_batch(self) -> bool:
        return self.values.ndim > 1

    def __len__(self) -> int:
        if not self.is_batch:
            raise TypeError("single field has no length")
        return self.values.shape[0]

    def __iter__(self) -> Iterator["CoefficientField"]:
        if not self.is_batch:
            raise TypeError("single field is not iterable")
        for row in self.values:
            yield CoefficientField(self.basis, row)

    def __getitem__(self, lk: tuple[int, int]):
        return self.values[..., self.basis.offset(*lk)]

    def _other(self, other):
        if isinstance(other, CoefficientField):
            require_same_basis(self, other)
            return other.values
        return other

    def __add__(self, other):
        return CoefficientField(self.basis, self.values + self._other(other))

    def __sub__(self, other):
        return CoefficientField(self.basis, self.values - self._other(other))

    def __rsub__(self, other):
        return CoefficientField(self.basis, self._other(other) - self.values)

    def __neg__(self):
        return CoefficientField(self.basis, -self.values)

    def __mul__(self, c):
        return CoefficientField(self.basis, self.values * c)

    __rmul__ = __mul__
    __radd__ = __add__

    def __repr__(self) -> str:
        return f"CoefficientField({self.basis.kind.value}, l_max={self.basis.l_max}, shape={self.values.shape})"


def require_same_basis(a: CoefficientField, b: CoefficientField) -> None:
    if a.basis != b.basis:
        raise ValueError(f"basis mismatch: {a.basis} vs {b.basis}")


def fourier_coefficients(theta: CoefficientField) -> np.ndarray:
    """Complex Fourier coefficients ``f^(m)``, ``m = 0..l_max``, of a real trig field.

    Negative frequencies follow from ``f^(-m) = conj(f^(m))``.
    """
    if theta.basis.is_wavelet:
        raise ValueError("Fourier coefficients are only defined for the trigonometric basis")
    L = theta.basis.l_max
    v = theta.values
    out = np.empty(v.shape[:-1] + (L + 1,), dtype=complex)
    out[..., 0] = v[..., L]
    cos = v[..., L + 1:]
    sin = v[..., :L][..., ::-1]
    out[..., 1:] = (cos - 1j * sin) / np.sqrt(2.0)
    return out


def _check_grid(spec: BasisSpec, grid_size: int) -> None:
    if grid_size < spec.dim or grid_size & (grid_size - 1):
        raise ValueError(
            f"grid_size must be a power of two >= {spec.dim}, got {grid_size}"
        )


@lru_cache(maxsize=32)
def _haar_matrix(j0: int, l_max: int, grid_size: int) -> np.ndarray:
    spec = BasisSpec.wavelet(l_max, j0)
    t = np.arange(grid_size) / grid_size
    rows = []
    for l, k in zip(spec.levels, spec.positions):
        if l == spec.coarse_level:
            scale = 2.0 ** j0
            rows.append(np.sqrt(scale) * (np.floor(t * scale) == k))
        else:
            scale = 2.0 ** l
            u = t * scale - k
            rows.append(np.sqrt(scale) * (((0 <= u) & (u < 0.5)) * 1.0 - ((0.5 <= u) & (u < 1)) * 1.0))
    mat = np.array(rows, dtype=float)
    mat.setflags(write=False)
    return mat


def synthesize(spec: BasisSpec, theta: CoefficientField, grid_size: int) -> np.ndarray:
    """Evaluate ``f = sum theta_lk psi_lk`` at ``t_j = j / grid_size``."""
    if theta.basis != spec:
        raise ValueError("coefficient field does not use the requested basis")
    _check_grid(spec, grid_size)
    if spec.is_wavelet:
        return theta.values @ _haar_matrix(spec.j0, spec.l_max, grid_size)
    fhat = fourier_coefficients(theta)
    spectrum = np.zeros(fhat.shape[:-1] + (grid_size // 2 + 1,), dtype=complex)
    spectrum[..., : spec.l_max + 1] = fhat
    return np.fft.irfft(spectrum, n=grid_size, axis=-1) * grid_size


def basis_functions(spec: BasisSpec, grid_size: int) -> np.ndarray:
    """Matrix of basis function values, one row per coordinate."""
    eye = CoefficientField(spec, np.eye(spec.dim))
    return synthesize(spec, eye, grid_size)

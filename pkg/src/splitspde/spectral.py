"""Complex fields on the periodic torus [0, 2*pi)^dim.

Fields are stored as Fourier coefficients in numpy's FFT ordering, with the
convention ``Z(x) = sum_k Zhat_k exp(i k.x)``.  The Nyquist row/column
(``k = -N/2`` along any axis) is always held at zero so that first
derivatives stay skew-adjoint on the retained band.

Products of a coefficient field with a solution field are dealiased with the
3/2 rule, which is exact here because both factors live on the same band.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product as iproduct
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGrid:
    """Collocation grid with ``n`` points per dimension on (2*pi)-periodic cells."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 4, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def padded_n(self) -> int:
        return 3 * self.n // 2

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @cached_property
    def k1d(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, shaped for broadcasting against coeffs."""
        if self.dim == 1:
            return (self.k1d,)
        return (self.k1d[:, None], self.k1d[None, :])

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers) * np.ones(self.shape)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on retained modes, False where any component equals -N/2."""
        keep1 = self.k1d != -self.n // 2
        if self.dim == 1:
            return keep1
        return keep1[:, None] & keep1[None, :]

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        x = TWO_PI * np.arange(self.n) / self.n
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def pad(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed coefficients into the 3/2-padded spectral array."""
        h, m = self.n // 2, self.padded_n
        out = np.zeros(coeffs.shape[:-self.dim] + (m,) * self.dim, dtype=complex)
        if self.dim == 1:
            out[..., :h] = coeffs[..., :h]
            out[..., m - h:] = coeffs[..., h:]
        else:
            out[..., :h, :h] = coeffs[..., :h, :h]
            out[..., :h, m - h:] = coeffs[..., :h, h:]
            out[..., m - h:, :h] = coeffs[..., h:, :h]
            out[..., m - h:, m - h:] = coeffs[..., h:, h:]
        return out

    def truncate(self, padded: np.ndarray) -> np.ndarray:
        h, m = self.n // 2, self.padded_n
        if self.dim == 1:
            out = np.concatenate((padded[..., :h], padded[..., m - h:]), axis=-1)
            out[..., h] = 0.0
        else:
            rows = np.concatenate((padded[..., :h, :], padded[..., m - h:, :]), axis=-2)
            out = np.concatenate((rows[..., :h], rows[..., m - h:]), axis=-1)
            out[..., h, :] = 0.0
            out[..., :, h] = 0.0
        return out

    def _fft(self, a):
        return np.fft.fft(a) if self.dim == 1 else np.fft.fft2(a)

    def _ifft(self, a):
        return np.fft.ifft(a) if self.dim == 1 else np.fft.ifft2(a)

    def to_padded_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return self._ifft(self.pad(coeffs)) * self.padded_n**self.dim

    def from_padded_physical(self, values: np.ndarray) -> np.ndarray:
        return self.truncate(self._fft(values) * (1.0 / self.padded_n**self.dim))

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return self._ifft(coeffs) * self.n**self.dim

    def from_physical(self, values: np.ndarray) -> np.ndarray:
        c = self._fft(values) / self.n**self.dim
        return np.where(self.nyquist_mask, c, 0.0)

    def sobolev_weights(self, m: int) -> np.ndarray:
        """sum over |alpha| <= m of k^(2 alpha), the multi-index form of the H^m norm."""
        if m < 0:
            raise ValueError("Sobolev index must be >= 0")
        w = np.zeros(self.shape)
        for alpha in multi_indices(self.dim, m):
            term = np.ones(self.shape)
            for kj, aj in zip(self.wavenumbers, alpha):
                term = term * kj ** (2 * aj)
            w = w + term
        return w


def multi_indices(dim: int, max_order: int):
    """All multi-indices alpha of length ``dim`` with |alpha| <= max_order."""
    for alpha in iproduct(range(max_order + 1), repeat=dim):
        if sum(alpha) <= max_order:
            yield alpha


def _check_finite(grid: TorusGrid, values: np.ndarray, what: str):
    bad = ~np.isfinite(values)
    if bad.any():
        pos = tuple(int(i[0]) for i in np.nonzero(bad))
        pt = tuple(float(p[pos]) for p in grid.points)
        raise ValueError(f"non-finite {what} at grid index {pos} (x = {pt})")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated Fourier representation of a complex field on ``grid``."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral coefficients must be finite")
        c = np.where(self.grid.nyquist_mask, c, 0.0)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def evaluate(self) -> np.ndarray:
        """Complex samples on the collocation grid."""
        return self.grid.to_physical(self.coeffs)

    def _same_grid(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def allclose(self, other: "SpectralField", atol: float = 1e-12) -> bool:
        self._same_grid(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Real, band-limited coefficient sampled on the collocation grid.

    Use :meth:`from_function` or :meth:`constant`; the stored ``values`` are
    the band-limited reconstruction, so ``values`` and ``coeffs`` agree.
    """

    grid: TorusGrid
    coeffs: np.ndarray
    values: np.ndarray = field(repr=False)

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs: np.ndarray) -> "CoefficientField":
        c = np.where(grid.nyquist_mask, np.asarray(coeffs, dtype=complex), 0.0)
        values = grid.to_physical(c)
        if np.max(np.abs(values.imag), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(values.real))):
            raise ValueError("coefficient field must be real-valued")
        values = values.real.copy()
        _check_finite(grid, values, "coefficient sample")
        c.flags.writeable = False
        values.flags.writeable = False
        return cls(grid, c, values)

    @classmethod
    def from_function(cls, grid: TorusGrid, f: Callable[..., np.ndarray]) -> "CoefficientField":
        samples = np.broadcast_to(np.asarray(f(*grid.points), dtype=float), grid.shape)
        _check_finite(grid, samples, "coefficient sample")
        return cls.from_coeffs(grid, grid.from_physical(samples))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "CoefficientField":
        c = np.zeros(grid.shape, dtype=complex)
        c[(0,) * grid.dim] = float(value)
        return cls.from_coeffs(grid, c)

    @classmethod
    def coerce(cls, grid: TorusGrid, value) -> "CoefficientField":
        """Accept a CoefficientField, a number or a callable of the grid points."""
        if isinstance(value, CoefficientField):
            if value.grid != grid:
                raise ValueError("coefficient field lives on a different grid")
            return value
        if value is None:
            return cls.constant(grid, 0.0)
        if callable(value):
            return cls.from_function(grid, value)
        return cls.constant(grid, float(value))

    @property
    def mean(self) -> float:
        return float(self.coeffs[(0,) * self.grid.dim].real)

    @property
    def is_constant(self) -> bool:
        fluct = self.coeffs.copy()
        fluct[(0,) * self.grid.dim] = 0.0
        return not np.any(fluct)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        return CoefficientField.from_coeffs(self.grid, self.coeffs + other.coeffs)

    def __mul__(self, scalar: float) -> "CoefficientField":
        return CoefficientField.from_coeffs(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__


def sample(grid: TorusGrid, f: Callable[..., np.ndarray]) -> SpectralField:
    """Forward transform of ``f`` sampled at the collocation points."""
    values = np.broadcast_to(np.asarray(f(*grid.points), dtype=complex), grid.shape)
    _check_finite(grid, values, "sample")
    return SpectralField(grid, grid.from_physical(values))


def _as_multi_index(grid: TorusGrid, alpha) -> tuple[int, ...]:
    if np.isscalar(alpha):
        alpha = (int(alpha),) + (0,) * (grid.dim - 1)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != grid.dim or any(a < 0 for a in alpha):
        raise ValueError(f"invalid multi-index {alpha} for dim {grid.dim}")
    return alpha


def derivative_symbol(grid: TorusGrid, alpha) -> np.ndarray:
    alpha = _as_multi_index(grid, alpha)
    sym = np.ones(grid.shape, dtype=complex)
    for kj, aj in zip(grid.wavenumbers, alpha):
        if aj:
            sym = sym * (1j * kj) ** aj
    return sym


def derivative(Z: SpectralField, alpha) -> SpectralField:
    """D^alpha Z by multiplication with (ik)^alpha."""
    return SpectralField(Z.grid, Z.coeffs * derivative_symbol(Z.grid, alpha))


def sobolev_inner(Z: SpectralField, W: SpectralField, m: int) -> float:
    """Real H^m inner product summed over all multi-indices |alpha| <= m."""
    if Z.grid != W.grid:
        raise ValueError("fields live on different grids")
    w = Z.grid.sobolev_weights(m)
    return float(Z.grid.volume * np.sum(w * (Z.coeffs * np.conj(W.coeffs)).real))


def sobolev_norm(Z: SpectralField, m: int) -> float:
    return float(np.sqrt(max(sobolev_inner(Z, Z, m), 0.0)))


def coeff_norm(grid: TorusGrid, coeffs: np.ndarray, m: int) -> float:
    """H^m norm of a raw coefficient array (used on hot paths)."""
    w = grid.sobolev_weights(m)
    return float(np.sqrt(grid.volume * np.sum(w * np.abs(coeffs) ** 2)))


def multiply_coeffs(grid: TorusGrid, c_coeffs: np.ndarray, z_coeffs: np.ndarray) -> np.ndarray:
    """Dealiased product of two band-limited coefficient arrays (c may be complex)."""
    prod = grid.to_padded_physical(c_coeffs) * grid.to_padded_physical(z_coeffs)
    return grid.from_padded_physical(prod)


def multiply(c: CoefficientField, Z: SpectralField) -> SpectralField:
    if c.grid != Z.grid:
        raise ValueError("fields live on different grids")
    return SpectralField(Z.grid, multiply_coeffs(Z.grid, c.coeffs, Z.coeffs))


def from_modes(grid: TorusGrid, modes: dict[Sequence[int] | int, complex]) -> SpectralField:
    """Build a field from ``{wavevector: coefficient}``; handy in tests and presets."""
    c = np.zeros(grid.shape, dtype=complex)
    for k, v in modes.items():
        k = (k,) if np.isscalar(k) else tuple(k)
        if any(abs(kj) >= grid.n // 2 for kj in k):
            raise ValueError(f"mode {k} outside the retained band")
        c[tuple(int(kj) % grid.n for kj in k)] += v
    return SpectralField(grid, c)

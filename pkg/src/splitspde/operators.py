"""Second-order drift operators, first-order noise operators and the model they form.

A drift operator acts as::

    L Z = sum_jk D_k((a^jk + i b^jk) D_j Z) + sum_j (a^j + i b^j) D_j Z + (a + i b) Z

with constant leading matrices.  A noise operator acts as::

    S Z = sum_j sigma^j D_j Z + (sigma + i tau) Z

with constant ``sigma^j``.  Forcings are carried alongside but never applied by
:func:`apply_drift` / :func:`apply_noise`; the solvers add them.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clocks import ClockSchedule
from .spectral import (
    CoefficientField,
    SpectralField,
    TorusGrid,
    derivative,
    derivative_symbol,
    multiply,
    multiply_coeffs,
)

PSD_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-14

STRATONOVICH = "stratonovich"
ITO = "ito"


def _matrix(grid: TorusGrid, value, name: str) -> np.ndarray:
    if value is None:
        mat = np.zeros((grid.dim, grid.dim))
    else:
        mat = np.asarray(value, dtype=float)
        if mat.ndim == 0:
            mat = mat * np.eye(grid.dim)
    if mat.shape != (grid.dim, grid.dim):
        raise ValueError(f"{name} must be a {grid.dim}x{grid.dim} matrix")
    if np.max(np.abs(mat - mat.T)) > SYMMETRY_TOLERANCE:
        raise ValueError(f"{name} must be symmetric")
    mat = mat.copy()
    mat.flags.writeable = False
    return mat


def _fields(grid: TorusGrid, value, name: str) -> tuple[CoefficientField, ...]:
    if value is None:
        value = [None] * grid.dim
    if isinstance(value, (CoefficientField, int, float)) or callable(value):
        if grid.dim != 1:
            raise ValueError(f"{name} needs one entry per dimension")
        value = [value]
    value = list(value)
    if len(value) != grid.dim:
        raise ValueError(f"{name} needs {grid.dim} entries, got {len(value)}")
    return tuple(CoefficientField.coerce(grid, v) for v in value)


def _forcing(grid: TorusGrid, value) -> SpectralField:
    if value is None:
        return SpectralField.zeros(grid)
    if value.grid != grid:
        raise ValueError("forcing lives on a different grid")
    return value


@dataclass(frozen=True, eq=False)
class DriftOperator:
    """One L_r with its forcing F_r.

    ``b_first`` (imaginary first-order part) is zero for user-built operators
    of the classical form; it is needed to hold the Ito correction of a
    Stratonovich noise that mixes ``sigma^j`` with ``tau``.
    """

    grid: TorusGrid
    a_second: np.ndarray = None
    b_second: np.ndarray = None
    a_first: tuple = None
    b_first: tuple = None
    a_zero: CoefficientField = None
    b_zero: CoefficientField = None
    forcing: SpectralField = None

    def __post_init__(self):
        g = self.grid
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("a_second", _matrix(g, self.a_second, "a_second"))
        set_("b_second", _matrix(g, self.b_second, "b_second"))
        set_("a_first", _fields(g, self.a_first, "a_first"))
        set_("b_first", _fields(g, self.b_first, "b_first"))
        set_("a_zero", CoefficientField.coerce(g, self.a_zero))
        set_("b_zero", CoefficientField.coerce(g, self.b_zero))
        set_("forcing", _forcing(g, self.forcing))

    def __add__(self, other: "DriftOperator") -> "DriftOperator":
        if other.grid != self.grid:
            raise ValueError("operators live on different grids")
        return DriftOperator(
            self.grid,
            a_second=self.a_second + other.a_second,
            b_second=self.b_second + other.b_second,
            a_first=[x + y for x, y in zip(self.a_first, other.a_first)],
            b_first=[x + y for x, y in zip(self.b_first, other.b_first)],
            a_zero=self.a_zero + other.a_zero,
            b_zero=self.b_zero + other.b_zero,
            forcing=self.forcing + other.forcing,
        )

    def leading_symbol(self) -> np.ndarray:
        """-(a^jk + i b^jk) k_j k_k on the grid."""
        lead = self.a_second + 1j * self.b_second
        ks = self.grid.wavenumbers
        sym = np.zeros(self.grid.shape, dtype=complex)
        for j in range(self.grid.dim):
            for k in range(self.grid.dim):
                if lead[j, k] != 0:
                    sym = sym - lead[j, k] * ks[j] * ks[k]
        return sym

    def first_order_coeffs(self) -> list[np.ndarray]:
        return [a.coeffs + 1j * b.coeffs for a, b in zip(self.a_first, self.b_first)]

    def zero_order_coeffs(self) -> np.ndarray:
        return self.a_zero.coeffs + 1j * self.b_zero.coeffs

    @property
    def has_variable_coefficients(self) -> bool:
        return not all(f.is_constant for f in (*self.a_first, *self.b_first, self.a_zero, self.b_zero))

    @property
    def is_zero(self) -> bool:
        return (
            not np.any(self.a_second)
            and not np.any(self.b_second)
            and all(f.is_zero for f in (*self.a_first, *self.b_first, self.a_zero, self.b_zero))
            and not np.any(self.forcing.coeffs)
        )


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    """One S_l with forcing G_l and a fixed stochastic-integral interpretation."""

    grid: TorusGrid
    sigma_first: tuple = None
    sigma_zero: CoefficientField = None
    tau_zero: CoefficientField = None
    forcing: SpectralField = None
    interpretation: str = STRATONOVICH

    def __post_init__(self):
        g = self.grid
        sf = self.sigma_first
        if sf is None:
            sf = (0.0,) * g.dim
        elif np.isscalar(sf):
            sf = (sf,)
        sf = tuple(sf)
        if any(callable(s) or isinstance(s, CoefficientField) for s in sf):
            raise ValueError("sigma_first must be constant (spatially varying sigma^j is not supported)")
        if len(sf) != g.dim:
            raise ValueError(f"sigma_first needs {g.dim} entries")
        object.__setattr__(self, "sigma_first", tuple(float(s) for s in sf))
        object.__setattr__(self, "sigma_zero", CoefficientField.coerce(g, self.sigma_zero))
        object.__setattr__(self, "tau_zero", CoefficientField.coerce(g, self.tau_zero))
        object.__setattr__(self, "forcing", _forcing(g, self.forcing))
        if self.interpretation not in (STRATONOVICH, ITO):
            raise ValueError(f"interpretation must be {STRATONOVICH!r} or {ITO!r}")

    def zero_order_coeffs(self) -> np.ndarray:
        return self.sigma_zero.coeffs + 1j * self.tau_zero.coeffs

    @property
    def has_first_order(self) -> bool:
        return any(self.sigma_first)

    @property
    def is_constant(self) -> bool:
        return self.sigma_zero.is_constant and self.tau_zero.is_constant

    def constant_symbol(self) -> np.ndarray:
        """Fourier symbol of the constant-coefficient part of S."""
        sym = np.full(self.grid.shape, self.sigma_zero.mean + 1j * self.tau_zero.mean, dtype=complex)
        for s, kj in zip(self.sigma_first, self.grid.wavenumbers):
            if s:
                sym = sym + 1j * s * kj
        return sym


def _check_grid(op, Z: SpectralField):
    if op.grid != Z.grid:
        raise ValueError("operator and field live on different grids")


def apply_drift(L: DriftOperator, Z: SpectralField) -> SpectralField:
    """L Z without the forcing term."""
    _check_grid(L, Z)
    g = Z.grid
    out = L.leading_symbol() * Z.coeffs
    for j, c in enumerate(L.first_order_coeffs()):
        if np.any(c):
            dz = Z.coeffs * derivative_symbol(g, _unit(g.dim, j))
            out = out + multiply_coeffs(g, c, dz)
    c0 = L.zero_order_coeffs()
    if np.any(c0):
        out = out + multiply_coeffs(g, c0, Z.coeffs)
    return SpectralField(g, out)


def apply_noise(S: NoiseOperator, Z: SpectralField) -> SpectralField:
    """S Z without the forcing term."""
    _check_grid(S, Z)
    g = Z.grid
    out = np.zeros(g.shape, dtype=complex)
    for j, s in enumerate(S.sigma_first):
        if s:
            out = out + s * derivative(Z, _unit(g.dim, j)).coeffs
    c0 = S.zero_order_coeffs()
    if np.any(c0):
        out = out + multiply_coeffs(g, c0, Z.coeffs)
    return SpectralField(g, out)


def _unit(dim: int, j: int) -> tuple[int, ...]:
    return tuple(1 if i == j else 0 for i in range(dim))


def ito_correction(S: NoiseOperator) -> DriftOperator:
    """The drift (1/2) S(S Z + G) that turns the Stratonovich form into Ito form.

    Expanded symbolically with ``c = sigma + i tau``::

        1/2 S^2 Z = 1/2 sigma^j sigma^k D_j D_k Z + c sigma^j D_j Z
                    + 1/2 (sigma^j D_j c + c^2) Z
    """
    if S.interpretation != STRATONOVICH:
        raise ValueError("ito_correction needs a Stratonovich noise operator")
    g = S.grid
    sig = np.asarray(S.sigma_first)
    sigma, tau = S.sigma_zero, S.tau_zero
    a_first = [sigma * s for s in sig]
    b_first = [tau * s for s in sig]

    def galerkin_product(f1: CoefficientField, f2: CoefficientField) -> np.ndarray:
        return multiply_coeffs(g, f1.coeffs, f2.coeffs)

    a0 = 0.5 * (galerkin_product(sigma, sigma) - galerkin_product(tau, tau))
    b0 = galerkin_product(sigma, tau)
    for j, s in enumerate(sig):
        if s:
            d = derivative_symbol(g, _unit(g.dim, j))
            a0 = a0 + 0.5 * s * sigma.coeffs * d
            b0 = b0 + 0.5 * s * tau.coeffs * d
    forcing = 0.5 * apply_noise(S, S.forcing)
    return DriftOperator(
        g,
        a_second=0.5 * np.outer(sig, sig),
        a_first=a_first,
        b_first=b_first,
        a_zero=CoefficientField.from_coeffs(g, a0),
        b_zero=CoefficientField.from_coeffs(g, b0),
        forcing=forcing,
    )


@dataclass(frozen=True, eq=False)
class Model:
    """Drifts L_0..L_d1, noises S_1..S_L, initial data and study parameters.

    ``clock`` is the increasing process driving L_0 (and F_0).  ``oracle``
    optionally names a closed-form solution, e.g. ``("transport", (1.0,))``.
    """

    drifts: tuple
    noises: tuple
    initial: SpectralField
    horizon: float
    sobolev: int = 0
    moment: float = 2.0
    clock: ClockSchedule = field(default_factory=ClockSchedule.identity)
    oracle: tuple | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "noises", tuple(self.noises))
        if len(self.drifts) < 2:
            raise ValueError("a model needs L_0 and at least one split drift L_1 (d1 >= 1)")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.moment < 2:
            raise ValueError("moment p must be >= 2")
        if self.sobolev < 0:
            raise ValueError("sobolev index must be >= 0")
        g = self.initial.grid
        for op in (*self.drifts, *self.noises):
            if op.grid != g:
                raise ValueError("all model components must share one grid")

    @property
    def grid(self) -> TorusGrid:
        return self.initial.grid

    @property
    def d1(self) -> int:
        return len(self.drifts) - 1

    @property
    def is_ito(self) -> bool:
        return all(S.interpretation == ITO for S in self.noises)

    def replace(self, **changes) -> "Model":
        return dataclasses.replace(self, **changes)


def to_ito(model: Model) -> Model:
    """Move every Stratonovich correction into L_0 and flag the noises Ito."""
    if model.is_ito:
        return model
    L0 = model.drifts[0]
    noises = []
    for S in model.noises:
        if S.interpretation == STRATONOVICH:
            L0 = L0 + ito_correction(S)
            S = dataclasses.replace(S, interpretation=ITO)
        noises.append(S)
    return model.replace(drifts=(L0,) + model.drifts[1:], noises=tuple(noises))


@dataclass
class AssumptionReport:
    parabolicity_ok: bool
    min_eigenvalue: float
    schrodinger_constraint_ok: bool
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.parabolicity_ok and self.schrodinger_constraint_ok


def balance_matrix(model: Model) -> np.ndarray:
    """2 sum_r a_r - sum_l sigma_l sigma_l^T (constant in x for this operator class)."""
    a = sum(L.a_second for L in model.drifts)
    s = sum((np.outer(S.sigma_first, S.sigma_first) for S in model.noises), np.zeros_like(a))
    return 2.0 * a - s


def check_assumptions(model: Model) -> AssumptionReport:
    """Stochastic parabolicity and the Schrodinger first-order-noise constraint."""
    messages = []
    if not model.is_ito:
        messages.append("model has Stratonovich noise; checked after conversion to Ito form")
        model = to_ito(model)
    C = balance_matrix(model)
    # leading coefficients are constant, so every collocation point gives the same matrix
    lam = float(np.min(np.linalg.eigvalsh(C)))
    if abs(lam) < PSD_TOLERANCE:
        lam = 0.0
    parabolic = lam >= -PSD_TOLERANCE
    messages.append(
        f"parabolicity {'holds' if parabolic else 'FAILS'}: min eigenvalue of balance matrix = {lam:.6g}"
    )
    no_leading = all(not np.any(L.a_second) for L in model.drifts)
    constraint = True
    if no_leading:
        constraint = all(not S.has_first_order for S in model.noises)
        messages.append(
            "a^jk = 0 everywhere: sigma_l^j = 0 constraint "
            + ("satisfied" if constraint else "VIOLATED")
        )
    messages.append("coefficient boundedness holds by construction (band-limited smooth coefficients)")
    return AssumptionReport(parabolic, lam, constraint, messages)

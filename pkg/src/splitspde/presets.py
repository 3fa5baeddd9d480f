"""Named models and the JSON model description they expand to.

Coefficients in a model description are either numbers or trigonometric
polynomials::

    {"const": 0.0, "cos": [[1, 0.5]], "sin": [[2, 1.0]]}   # 0.5 cos x + sin 2x

(in 2-D each entry is ``[k1, k2, amplitude]``).  Complex fields (initial data,
forcings) are ``"smooth"``, ``"zero"`` or ``{"real": coef, "imag": coef}``.
"""
from __future__ import annotations

import numpy as np

from .operators import ITO, STRATONOVICH, DriftOperator, Model, NoiseOperator
from .spectral import CoefficientField, SpectralField, TorusGrid, sample

PRESETS = (
    "schrodinger",
    "transport",
    "degenerate_heat",
    "noncommuting_schrodinger",
    "unbalanced",
    "heat",
    "noncommuting_pair",
    "transport_potential",
)

ORACLE_PRESETS = ("schrodinger", "transport", "degenerate_heat")


def trig_function(spec, dim: int):
    """Callable of the grid points for a coefficient description."""
    if isinstance(spec, (int, float)):
        return lambda *x: np.full(x[0].shape, float(spec))
    if not isinstance(spec, dict):
        raise ValueError(f"coefficient must be a number or an object, got {spec!r}")
    unknown = set(spec) - {"const", "cos", "sin"}
    if unknown:
        raise ValueError(f"unknown coefficient keys {sorted(unknown)}")
    const = float(spec.get("const", 0.0))
    terms = []
    for kind in ("cos", "sin"):
        for entry in spec.get(kind, []):
            if len(entry) != dim + 1:
                raise ValueError(f"{kind} term {entry!r} needs {dim} wavenumbers and an amplitude")
            terms.append((np.cos if kind == "cos" else np.sin, [float(v) for v in entry[:dim]], float(entry[dim])))

    def f(*x):
        out = np.full(x[0].shape, const)
        for fn, k, amp in terms:
            out = out + amp * fn(sum(kj * xj for kj, xj in zip(k, x)))
        return out

    return f


def smooth_initial(grid: TorusGrid) -> SpectralField:
    """A smooth complex profile with rapidly decaying spectrum."""
    if grid.dim == 1:
        return sample(grid, lambda x: np.exp(np.cos(x) + 1j * np.sin(2 * x)))
    return sample(grid, lambda x, y: np.exp(np.cos(x) + 0.5 * np.cos(y) + 1j * np.sin(x + y)))


def complex_field(grid: TorusGrid, spec) -> SpectralField:
    if spec is None or spec == "zero":
        return SpectralField.zeros(grid)
    if spec == "smooth":
        return smooth_initial(grid)
    if isinstance(spec, dict) and set(spec) <= {"real", "imag"}:
        re = trig_function(spec.get("real", 0.0), grid.dim)
        im = trig_function(spec.get("imag", 0.0), grid.dim)
        return sample(grid, lambda *x: re(*x) + 1j * im(*x))
    raise ValueError(f"cannot build a field from {spec!r}")


def _coef(grid, spec):
    return CoefficientField.from_function(grid, trig_function(spec, grid.dim))


def drift_from_spec(grid: TorusGrid, spec: dict) -> DriftOperator:
    allowed = {"a_second", "b_second", "a_first", "b_first", "a_zero", "b_zero", "forcing"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown drift keys {sorted(unknown)}")
    kw = {}
    for key in ("a_second", "b_second"):
        if key in spec:
            kw[key] = spec[key]
    for key in ("a_first", "b_first"):
        if key in spec:
            kw[key] = [_coef(grid, c) for c in spec[key]]
    for key in ("a_zero", "b_zero"):
        if key in spec:
            kw[key] = _coef(grid, spec[key])
    if "forcing" in spec:
        kw["forcing"] = complex_field(grid, spec["forcing"])
    return DriftOperator(grid, **kw)


def noise_from_spec(grid: TorusGrid, spec: dict) -> NoiseOperator:
    allowed = {"sigma_first", "sigma_zero", "tau_zero", "forcing", "interpretation"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown noise keys {sorted(unknown)}")
    return NoiseOperator(
        grid,
        sigma_first=spec.get("sigma_first"),
        sigma_zero=_coef(grid, spec.get("sigma_zero", 0.0)),
        tau_zero=_coef(grid, spec.get("tau_zero", 0.0)),
        forcing=complex_field(grid, spec.get("forcing")),
        interpretation=spec.get("interpretation", STRATONOVICH),
    )


def model_from_spec(spec: dict, grid_n: int, horizon: float, sobolev: int = 0, moment: float = 2.0) -> Model:
    """Build a model from a full description (``dim``, ``drifts``, ``noises``, ``initial``)."""
    grid = TorusGrid(int(spec.get("dim", 1)), int(grid_n))
    drifts = [drift_from_spec(grid, d) for d in spec["drifts"]]
    noises = [noise_from_spec(grid, s) for s in spec.get("noises", [])]
    oracle = spec.get("oracle")
    return Model(
        drifts,
        noises,
        complex_field(grid, spec.get("initial", "smooth")),
        horizon,
        sobolev,
        moment,
        oracle=tuple(oracle) if oracle else None,
        name=spec.get("name", "custom"),
    )


def preset(name: str, grid_n: int = 64, horizon: float = 1.0, sobolev: int = 0, moment: float = 2.0,
           dim: int = 1, sigma=1.0, tau=1.0, amplitude=1.0) -> Model:
    """Expand a named preset into a full model.

    ``sigma`` scales first-order noise (transport direction e_1), ``tau`` the
    constant phase noise, ``amplitude`` the cos x coefficients.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    grid = TorusGrid(dim, grid_n)
    Z0 = smooth_initial(grid)
    zero = DriftOperator(grid)
    sig = np.zeros(dim)
    sig[0] = float(sigma)
    cos_x = CoefficientField.from_function(grid, lambda *x: amplitude * np.cos(x[0]))
    eye = np.eye(dim)
    oracle = None
    if name == "schrodinger":
        drifts = [zero, DriftOperator(grid, b_second=eye)]
        noises = [NoiseOperator(grid, tau_zero=tau)]
        oracle = ("modulated_schrodinger", (float(tau),))
    elif name == "transport":
        drifts = [zero, zero]
        noises = [NoiseOperator(grid, sigma_first=tuple(sig))]
        oracle = ("transport", tuple(sig))
    elif name == "degenerate_heat":
        drifts = [DriftOperator(grid, a_second=0.5 * np.outer(sig, sig)), zero]
        noises = [NoiseOperator(grid, sigma_first=tuple(sig), interpretation=ITO)]
        oracle = ("transport", tuple(sig))
    elif name == "unbalanced":
        drifts = [zero, zero]
        noises = [NoiseOperator(grid, sigma_first=tuple(sig), interpretation=ITO)]
    elif name == "noncommuting_schrodinger":
        drifts = [zero, DriftOperator(grid, b_second=eye)]
        noises = [NoiseOperator(grid, tau_zero=cos_x)]
    elif name == "heat":
        drifts = [zero, DriftOperator(grid, a_second=0.5 * eye)]
        noises = []
    elif name == "noncommuting_pair":
        drifts = [zero, DriftOperator(grid, b_second=eye), DriftOperator(grid, a_zero=cos_x)]
        noises = []
    else:  # transport_potential
        drifts = [zero, DriftOperator(grid, b_zero=cos_x)]
        noises = [NoiseOperator(grid, sigma_first=tuple(sig))]
    return Model(drifts, noises, Z0, horizon, sobolev, moment, oracle=oracle, name=name)

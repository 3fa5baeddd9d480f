"""Substep flows, Lie/Strang splitting drivers, a fine reference integrator and
closed-form oracles.

Hot loops work on raw coefficient arrays; operators are "compiled" once into
a constant Fourier symbol plus a variable-coefficient remainder evaluated on
the 3/2-padded grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .noise import BrownianPath, coarsen_to
from .operators import (
    STRATONOVICH,
    DriftOperator,
    Model,
    NoiseOperator,
    ito_correction,
    to_ito,
)
from .spectral import SpectralField, TorusGrid, derivative_symbol

MIN_INNER_STEPS = 16
# inner RK4 step is chosen so that h * ||remainder|| stays below this; with
# 0.005 the inner error on bounded zero-order remainders is far below 1e-10
INNER_STEP_BUDGET = 0.005
DEFAULT_REF_MULTIPLIER = 64


class NumericalBlowUp(FloatingPointError):
    def __init__(self, message: str, n: int | None = None, time: float | None = None):
        super().__init__(message)
        self.n = n
        self.time = time


def _unit(dim, j):
    return tuple(1 if i == j else 0 for i in range(dim))


def _phi1(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z with the removable singularity filled in."""
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


class _Remainder:
    """Variable-coefficient part sum_j c_j(x) D_j + c_0(x), applied with 3/2 dealiasing."""

    def __init__(self, grid: TorusGrid, first: list[np.ndarray], zero: np.ndarray | None):
        self.grid = grid
        self.terms = []
        bound = 0.0
        for j, c in enumerate(first):
            if np.any(c):
                phys = grid.to_padded_physical(c)
                self.terms.append((phys, j, derivative_symbol(grid, _unit(grid.dim, j))))
                bound += np.max(np.abs(phys)) * (grid.n // 2)
        if zero is not None and np.any(zero):
            phys = grid.to_padded_physical(zero)
            self.terms.append((phys, -1, None))
            bound += np.max(np.abs(phys))
        self.bound = float(bound)

    def __bool__(self):
        return bool(self.terms)

    def padded(self, z: np.ndarray, cache: dict | None = None) -> np.ndarray:
        """The product on the padded grid, before the final transform.

        ``cache`` shares the padded transforms of ``z`` and its derivatives
        between remainders applied to the same input.
        """
        g = self.grid
        cache = {} if cache is None else cache
        acc = None
        for phys, key, sym in self.terms:
            zp = cache.get(key)
            if zp is None:
                zp = cache[key] = g.to_padded_physical(z if sym is None else z * sym)
            term = phys * zp
            acc = term if acc is None else acc + term
        return acc

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.grid.from_padded_physical(self.padded(z))


def _fluctuation(c: np.ndarray) -> np.ndarray:
    out = c.copy()
    out[(0,) * c.ndim] = 0.0
    return out


class CompiledDrift:
    def __init__(self, L: DriftOperator):
        g = L.grid
        self.grid = g
        lam = L.leading_symbol()
        first = L.first_order_coeffs()
        for j, c in enumerate(first):
            lam = lam + c[(0,) * g.dim] * derivative_symbol(g, _unit(g.dim, j))
        zero = L.zero_order_coeffs()
        self.symbol = lam + zero[(0,) * g.dim]
        self.remainder = _Remainder(g, [_fluctuation(c) for c in first], _fluctuation(zero))
        f = L.forcing.coeffs
        self.forcing = np.array(f) if np.any(f) else None

    @property
    def is_identity(self) -> bool:
        return not np.any(self.symbol) and not self.remainder and self.forcing is None

    def inner_steps(self, delta: float) -> int:
        if not self.remainder:
            return 1
        return max(MIN_INNER_STEPS, math.ceil(abs(delta) * self.remainder.bound / INNER_STEP_BUDGET))

    def flow(self, z: np.ndarray, delta: float, n_inner: int | None = None) -> np.ndarray:
        """Solve dzeta = (L zeta + F) dt over ``delta``."""
        if delta == 0 or self.is_identity:
            return z
        lam = self.symbol
        if not self.remainder:
            out = np.exp(lam * delta) * z
            if self.forcing is not None:
                out = out + delta * _phi1(lam * delta) * self.forcing
            return out
        n_inner = n_inner or self.inner_steps(delta)
        h = delta / n_inner
        E = np.exp(lam * h)
        E2 = np.exp(lam * h / 2)
        R, F = self.remainder, self.forcing

        def N(v):
            r = R(v)
            return r if F is None else r + F

        # Lawson (integrating-factor) RK4
        for _ in range(n_inner):
            k1 = N(z)
            k2 = N(E2 * (z + 0.5 * h * k1))
            k3 = N(E2 * z + 0.5 * h * k2)
            k4 = N(E * z + h * (E2 * k3))
            z = E * z + (h / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
        return z


class CompiledNoise:
    def __init__(self, S: NoiseOperator):
        g = S.grid
        self.grid = g
        self.mu = S.constant_symbol()
        self.has_mu = bool(np.any(self.mu))
        c = S.zero_order_coeffs()
        self.remainder = _Remainder(g, [], _fluctuation(c))
        self.pointwise = g.to_padded_physical(c)
        f = S.forcing.coeffs
        self.forcing = np.array(f) if np.any(f) else None

    def affine_rem(self, z):
        """(S - mu) z + G, the part not carried by the exponential factor."""
        out = self.remainder(z) if self.remainder else np.zeros_like(z)
        if self.forcing is not None:
            out = out + self.forcing
        return out


def _drifts_match(A: DriftOperator, B: DriftOperator, tol: float = 1e-12) -> bool:
    pairs = [(A.a_second, B.a_second), (A.b_second, B.b_second),
             (A.zero_order_coeffs(), B.zero_order_coeffs()), (A.forcing.coeffs, B.forcing.coeffs)]
    pairs += list(zip(A.first_order_coeffs(), B.first_order_coeffs()))
    return all(np.max(np.abs(x - y), initial=0.0) <= tol for x, y in pairs)


class CompiledModel:
    """An Ito-form model with compiled operators and the chosen Q-substep method."""

    def __init__(self, model: Model):
        self.source = model
        model = to_ito(model)
        self.model = model
        self.grid = model.grid
        self.drifts = [CompiledDrift(L) for L in model.drifts]
        self.noises = [CompiledNoise(S) for S in model.noises]
        self.q_method = self._choose_q_method()

    def _choose_q_method(self) -> str:
        m = self.model
        L0 = m.drifts[0]
        if not m.noises:
            return "drift_only"
        if m.clock.kind != "identity" or any(np.any(S.forcing.coeffs) for S in m.noises):
            return "numerical"
        twin = [
            ito_correction(NoiseOperator(S.grid, S.sigma_first, S.sigma_zero, S.tau_zero,
                                         interpretation=STRATONOVICH))
            for S in m.noises
        ]
        correction = twin[0]
        for extra in twin[1:]:
            correction = correction + extra
        if not _drifts_match(L0, correction):
            return "numerical"
        if all(S.is_constant for S in m.noises):
            return "exact_fourier"
        if not any(S.has_first_order for S in m.noises):
            return "exact_pointwise"
        return "numerical"

    @cached_property
    def drift_sum(self) -> CompiledDrift:
        total = self.model.drifts[0]
        for L in self.model.drifts[1:]:
            total = total + L
        return CompiledDrift(total)

    # -- Q substep --------------------------------------------------------
    def q_flow(self, z: np.ndarray, s: float, t: float, path: BrownianPath) -> np.ndarray:
        if t < s:
            raise ValueError("Q substep needs s <= t")
        method = self.q_method
        if method == "drift_only":
            dv = self.model.clock.eval(t) - self.model.clock.eval(s)
            return self.drifts[0].flow(z, dv)
        W = path.window(s, t)
        if method == "exact_fourier":
            dW = W[:, -1] - W[:, 0]
            expo = sum(nz.mu * dw for nz, dw in zip(self.noises, dW))
            return np.exp(expo) * z
        if method == "exact_pointwise":
            dW = W[:, -1] - W[:, 0]
            g = self.grid
            expo = sum(nz.pointwise * dw for nz, dw in zip(self.noises, dW))
            return g.from_padded_physical(np.exp(expo) * g.to_padded_physical(z))
        return self._milstein_path(z, s, W, path.dt, drifts=[self.drifts[0]], clocked=True)

    # -- fine stepping ----------------------------------------------------
    def _milstein_path(self, z, s, W, h, drifts, clocked, record_every=None):
        """Lawson-Milstein over consecutive grid increments of ``W``.

        ``drifts[0]`` is driven by the model clock when ``clocked``; the rest by t.
        All variable-coefficient products of one step are accumulated on the
        padded grid and brought back with a single transform.
        """
        g = self.grid
        clock = self.model.clock
        dWs = np.diff(W, axis=1)
        steps = dWs.shape[1]
        noises = self.noises
        L = len(noises)
        mu_sq = sum((nz.mu**2 for nz in noises), np.zeros(g.shape, dtype=complex))
        mu_any = any(nz.has_mu for nz in noises)
        rec = [z] if record_every else None
        varying = clocked and clock.kind != "identity"
        clocked_drift = drifts[0] if clocked else None
        fixed_symbol = sum((d.symbol for d in drifts if d is not clocked_drift or not varying),
                           np.zeros(g.shape, dtype=complex)) * h - 0.5 * mu_sq * h
        fixed_E = None if (mu_any or varying) else np.exp(fixed_symbol)
        forcing = None
        for i, d in enumerate(drifts):
            if d.forcing is not None and not (i == 0 and varying):
                forcing = h * d.forcing if forcing is None else forcing + h * d.forcing
        rem_drifts = [(i, d) for i, d in enumerate(drifts) if d.remainder]
        t = s
        for j in range(steps):
            dW = dWs[:, j]
            t_next = s + (j + 1) * h
            dv = clock.eval(t_next) - clock.eval(t) if varying else h
            zcache = {}
            acc = None
            for i, d in rem_drifts:
                w = dv if (i == 0 and varying) else h
                term = w * d.remainder.padded(z, zcache)
                acc = term if acc is None else acc + term
            X = z if forcing is None else z + forcing
            if varying and drifts[0].forcing is not None:
                X = X + dv * drifts[0].forcing
            rt = []
            for nz in noises:
                r = g.from_padded_physical(nz.remainder.padded(z, zcache)) if nz.remainder else None
                if nz.forcing is not None:
                    r = nz.forcing if r is None else r + nz.forcing
                rt.append(r)
            for l in range(L):
                if rt[l] is not None:
                    X = X + rt[l] * dW[l]
                    if noises[l].has_mu:
                        X = X - h * noises[l].mu * rt[l]
            for lp in range(L):
                nlp = noises[lp]
                if nlp.has_mu:
                    gl = nlp.mu * z if rt[lp] is None else nlp.mu * z + rt[lp]
                else:
                    gl = rt[lp]
                if gl is None:
                    continue
                gcache = {}
                for l in range(L):
                    nl = noises[l]
                    I = dW[l] * dW[lp] - (h if l == lp else 0.0)
                    if nl.remainder:
                        term = (0.5 * I) * nl.remainder.padded(gl, gcache)
                        acc = term if acc is None else acc + term
                    if nl.has_mu and rt[lp] is not None:
                        X = X - (0.5 * I) * nl.mu * rt[lp]
            if acc is not None:
                X = X + g.from_padded_physical(acc)
            if fixed_E is not None:
                E = fixed_E
            else:
                expo = fixed_symbol
                if varying:
                    expo = expo + clocked_drift.symbol * dv
                for nz, dw in zip(noises, dW):
                    if nz.has_mu:
                        expo = expo + nz.mu * dw
                E = np.exp(expo)
            z = E * X
            t = t_next
            if rec is not None and (j + 1) % record_every == 0:
                rec.append(z)
        return z if rec is None else rec


@lru_cache(maxsize=64)
def compile_model(model: Model) -> CompiledModel:
    return CompiledModel(model)


def _check_finite(z: np.ndarray, n: int | None, t: float):
    if not np.all(np.isfinite(z)):
        raise NumericalBlowUp(f"non-finite state at t={t:g} (n={n})", n=n, time=t)


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TorusGrid
    times: np.ndarray
    coeffs: np.ndarray  # (len(times), *grid.shape)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must start at 0 and increase strictly")
        if self.coeffs.shape != (t.size,) + self.grid.shape:
            raise ValueError("trajectory states do not match times/grid")
        object.__setattr__(self, "times", t)

    @property
    def states(self) -> list[SpectralField]:
        return [SpectralField(self.grid, c) for c in self.coeffs]

    def at(self, times) -> "Trajectory":
        """Restriction to ``times`` (each must be one of ours, to 1e-12)."""
        idx = []
        for t in np.atleast_1d(times):
            j = int(np.argmin(np.abs(self.times - t)))
            if abs(self.times[j] - t) > 1e-12 * max(1.0, abs(t)):
                raise ValueError(f"time {t} not in trajectory")
            idx.append(j)
        return Trajectory(self.grid, self.times[idx], self.coeffs[idx])


# -- public substeps ---------------------------------------------------------

def det_substep(L: DriftOperator, Z: SpectralField, delta: float, n_inner: int | None = None) -> SpectralField:
    """The flow of dzeta = (L zeta + F) dt over time ``delta`` >= 0."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if L.grid != Z.grid:
        raise ValueError("operator and field live on different grids")
    return SpectralField(Z.grid, CompiledDrift(L).flow(Z.coeffs, delta, n_inner))


def stoch_substep(model: Model, Z: SpectralField, s: float, t: float, path: BrownianPath) -> SpectralField:
    """Q_{s,t}: L_0 on the model clock plus all noises on the shared path."""
    cm = compile_model(model)
    return SpectralField(Z.grid, cm.q_flow(Z.coeffs, s, t, path))


def q_method(model: Model) -> str:
    return compile_model(model).q_method


def _lie(cm: CompiledModel, z, t0, t1, path):
    delta = t1 - t0
    z = cm.q_flow(z, t0, t1, path)
    for d in cm.drifts[1:]:
        z = d.flow(z, delta)
    return z


def _strang(cm: CompiledModel, z, t0, t1, path):
    half = 0.5 * (t1 - t0)
    for d in cm.drifts[1:]:
        z = d.flow(z, half)
    z = cm.q_flow(z, t0, t1, path)
    for d in reversed(cm.drifts[1:]):
        z = d.flow(z, half)
    return z


_SCHEMES = {"lie": _lie, "strang": _strang}


def lie_split_step(model: Model, Z: SpectralField, t0: float, t1: float, path: BrownianPath) -> SpectralField:
    """Q over [t0, t1] first, then P^(1) ... P^(d1) for t1 - t0 each."""
    return SpectralField(Z.grid, _lie(compile_model(model), Z.coeffs, t0, t1, path))


def strang_split_step(model: Model, Z: SpectralField, t0: float, t1: float, path: BrownianPath) -> SpectralField:
    """Half steps P^(1)..P^(d1), the full Q, then half steps P^(d1)..P^(1)."""
    return SpectralField(Z.grid, _strang(compile_model(model), Z.coeffs, t0, t1, path))


def grid_times(T: float, n: int) -> np.ndarray:
    return np.arange(n + 1) * (T / n)


def run_splitting(model: Model, n: int, path: BrownianPath, scheme: str = "lie") -> Trajectory:
    """Z^(n) on t_i = i T / n, starting from the model's initial data."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.noises and path.steps % n:
        raise ValueError(f"n={n} does not divide the path's {path.steps} steps")
    step = _SCHEMES[scheme]
    cm = compile_model(model)
    times = grid_times(model.horizon, n)
    out = np.empty((n + 1,) + model.grid.shape, dtype=complex)
    z = model.initial.coeffs
    out[0] = z
    # overflow shows up as a non-finite state and is reported as a blow-up
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            z = step(cm, z, times[i], times[i + 1], path)
            _check_finite(z, n, times[i + 1])
            out[i + 1] = z
    return Trajectory(model.grid, times, out)


def reference_solve(model: Model, ref_steps: int, path: BrownianPath, record_steps: int | None = None) -> Trajectory:
    """Fine unsplit solve of the full equation, recorded on ``record_steps`` equal intervals.

    With noise: Lawson-Milstein (constant symbols exact, variable terms
    explicit, commutative-noise Milstein correction).  Without noise and on the
    identity clock: Lawson-RK4 on the summed drift.
    """
    record_steps = record_steps or ref_steps
    if ref_steps % record_steps:
        raise ValueError("record_steps must divide ref_steps")
    cm = compile_model(model)
    every = ref_steps // record_steps
    z = model.initial.coeffs
    with np.errstate(over="ignore", invalid="ignore"):
        rec = _reference_records(cm, model, z, ref_steps, every, path)
    return Trajectory(model.grid, grid_times(model.horizon, record_steps), np.array(rec))


def _reference_records(cm, model, z, ref_steps, every, path):
    T = model.horizon
    h = T / ref_steps
    if not cm.noises and model.clock.kind == "identity":
        total = cm.drift_sum
        rec = [z]
        for j in range(ref_steps):
            z = total.flow(z, h, n_inner=1)
            if (j + 1) % every == 0:
                _check_finite(z, None, (j + 1) * h)
                rec.append(z)
    else:
        if model.noises:
            fine = coarsen_to(path, ref_steps)
            W = fine.window(0.0, T)
        else:
            W = np.zeros((0, ref_steps + 1))
        rec = cm._milstein_path(z, 0.0, W, h, drifts=cm.drifts, clocked=True, record_every=every)
        _check_finite(rec[-1], None, T)
    return rec


# -- closed forms --------------------------------------------------------------

ORACLE_TAGS = ("transport", "modulated_schrodinger")


def exact_oracle(model_tag: str, Z0: SpectralField, path: BrownianPath, t: float, params=None) -> SpectralField:
    """Closed-form solutions on one Brownian path.

    ``transport``: dZ = sigma.grad Z o dW, so Z(t, x) = Z0(x + sigma W_t).
    ``modulated_schrodinger``: dZ = i Lap Z dt + i tau Z o dW, so
    Z(t) = exp(i tau W_t) exp(i t Lap) Z0.
    """
    g = Z0.grid
    W = path.value_at(0, t) if path.n_noises else 0.0
    if model_tag == "transport":
        sigma = np.broadcast_to(np.asarray(1.0 if params is None else params, dtype=float), (g.dim,))
        phase = sum(s * kj for s, kj in zip(sigma, g.wavenumbers)) * W
        return SpectralField(g, np.exp(1j * phase) * Z0.coeffs)
    if model_tag == "modulated_schrodinger":
        tau = 1.0 if params is None else float(np.asarray(params).ravel()[0])
        return SpectralField(g, np.exp(1j * tau * W - 1j * g.ksq * t) * Z0.coeffs)
    raise ValueError(f"no closed form for model tag {model_tag!r}; known: {ORACLE_TAGS}")


def oracle_trajectory(model: Model, path: BrownianPath, times) -> Trajectory:
    if model.oracle is None:
        raise ValueError(f"model {model.name or '<unnamed>'} has no closed-form oracle")
    tag, params = model.oracle
    states = [exact_oracle(tag, model.initial, path, float(t), params).coeffs for t in times]
    return Trajectory(model.grid, np.asarray(times, dtype=float), np.array(states))

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import random_field
from splitspde.noise import BrownianPath, generate
from splitspde.operators import ITO, DriftOperator, Model, NoiseOperator, apply_drift
from splitspde.presets import preset
from splitspde.solvers import (
    NumericalBlowUp,
    Trajectory,
    det_substep,
    exact_oracle,
    lie_split_step,
    oracle_trajectory,
    q_method,
    reference_solve,
    run_splitting,
    stoch_substep,
    strang_split_step,
)
from splitspde.spectral import (
    CoefficientField,
    SpectralField,
    TorusGrid,
    coeff_norm,
    from_modes,
    sobolev_norm,
)

G = TorusGrid(1, 32)
E1 = from_modes(G, {1: 1.0})


def fixed_path(increments, horizon=1.0):
    """A one-noise path with prescribed increments."""
    inc = np.atleast_2d(np.asarray(increments, dtype=float))
    values = np.zeros((inc.shape[0], inc.shape[1] + 1))
    values[:, 1:] = np.cumsum(inc, axis=1)
    return BrownianPath(0, 0, horizon, inc.shape[1], values)


def galerkin_matrix(L: DriftOperator) -> np.ndarray:
    """Matrix of Z -> L Z on coefficient vectors, built column by column."""
    g = L.grid
    cols = []
    for j in range(g.n):
        e = np.zeros(g.n, dtype=complex)
        e[j] = 1.0
        cols.append(apply_drift(L, SpectralField(g, e)).coeffs)
    return np.array(cols).T


class TestDetSubstep:
    def test_schrodinger_mode(self):
        out = det_substep(DriftOperator(G, b_second=1.0), E1, 0.1)
        assert out.allclose(np.exp(-0.1j) * E1)

    def test_heat_mode(self):
        out = det_substep(DriftOperator(G, a_second=0.5), E1, 1.0)
        assert out.allclose(np.exp(-0.5) * E1)

    def test_constant_forcing(self, rng):
        Z, F = random_field(G, rng), random_field(G, rng)
        out = det_substep(DriftOperator(G, forcing=F), Z, 0.7)
        assert out.allclose(Z + 0.7 * F)

    def test_forced_decay_variation_of_constants(self):
        F = from_modes(G, {0: 1.0})
        out = det_substep(DriftOperator(G, a_zero=-2.0, forcing=F), SpectralField.zeros(G), 0.5)
        assert out.coeffs[0] == pytest.approx((1 - np.exp(-1.0)) / 2, abs=1e-15)

    def test_variable_coefficients_against_matrix_exponential(self, rng):
        L = DriftOperator(G, b_second=1.0,
                          a_zero=CoefficientField.from_function(G, np.cos),
                          a_first=[CoefficientField.from_function(G, lambda x: 0.3 * np.sin(x))])
        Z = random_field(G, rng, decay=0.3)
        exact = expm(0.5 * galerkin_matrix(L)) @ Z.coeffs
        assert coeff_norm(G, det_substep(L, Z, 0.5).coeffs - exact, 0) < 1e-6
        # a stiff leading part mixed with a variable remainder needs explicit inner steps
        errs = [coeff_norm(G, det_substep(L, Z, 0.5, n).coeffs - exact, 0) for n in (64, 128, 512)]
        assert errs[2] < 1e-10
        assert 12 < errs[0] / errs[1] < 20  # fourth order

    def test_zero_order_only_flow_is_accurate(self, rng):
        L = DriftOperator(G, a_zero=CoefficientField.from_function(G, np.cos))
        Z = random_field(G, rng, decay=0.3)
        exact = expm(0.25 * galerkin_matrix(L)) @ Z.coeffs
        assert coeff_norm(G, det_substep(L, Z, 0.25).coeffs - exact, 0) < 1e-10

    def test_negative_delta(self):
        with pytest.raises(ValueError):
            det_substep(DriftOperator(G), E1, -0.1)


def _model(drifts, noises, Z0=E1, T=1.0, **kw):
    return Model(drifts, noises, Z0, T, **kw)


class TestStochSubstep:
    def test_phase_noise_exponential(self, rng):
        Z = random_field(G, rng)
        m = _model([DriftOperator(G), DriftOperator(G)], [NoiseOperator(G, tau_zero=1.0)], Z)
        out = stoch_substep(m, Z, 0.0, 1.0, fixed_path([0.3]))
        assert out.allclose(np.exp(0.3j) * Z)
        np.testing.assert_allclose(np.abs(out.evaluate()), np.abs(Z.evaluate()), atol=1e-12)

    def test_transport_shift(self, rng):
        Z = random_field(G, rng)
        m = _model([DriftOperator(G), DriftOperator(G)], [NoiseOperator(G, sigma_first=1.0)], Z)
        w = 0.41
        out = stoch_substep(m, Z, 0.0, 1.0, fixed_path([w]))
        assert out.allclose(SpectralField(G, np.exp(1j * G.k1d * w) * Z.coeffs))

    @pytest.mark.parametrize("noise", [dict(tau_zero=0.7, sigma_first=0.4),
                                       dict(sigma_zero=CoefficientField.from_function(G, np.sin))])
    def test_zero_increments(self, rng, noise):
        Z = random_field(G, rng)
        m = _model([DriftOperator(G), DriftOperator(G)], [NoiseOperator(G, **noise)], Z)
        out = stoch_substep(m, Z, 0.0, 1.0, fixed_path(np.zeros(8)))
        assert out.allclose(Z, atol=1e-14)

    def test_numerical_q_with_zero_increments_keeps_ito_drift(self, rng):
        # Ito dZ = Z' dW on a frozen path leaves only the Ito correction exp(k^2 t / 2)
        Z = random_field(G, rng, kmax=4)
        m = preset("unbalanced", 32, horizon=0.1).replace(initial=Z)
        out = stoch_substep(m, Z, 0.0, 0.1, fixed_path(np.zeros(8), horizon=0.1))
        assert out.allclose(SpectralField(G, np.exp(0.05 * G.k1d**2) * Z.coeffs), atol=1e-12)

    def test_numerical_q_on_ito_transport(self, rng):
        # Ito dZ = dZ/dx dW: mode k evolves as exp(ik W + k^2 t / 2)
        Z = random_field(G, rng, kmax=6)
        m = preset("unbalanced", 32, horizon=0.05).replace(initial=Z)
        assert q_method(m) == "numerical"
        path = generate(3, 1, 0.05, 64)
        out = stoch_substep(m, Z, 0.0, 0.05, path)
        W = path.values[0, -1]
        assert out.allclose(SpectralField(G, np.exp(1j * G.k1d * W + 0.5 * G.k1d**2 * 0.05) * Z.coeffs), atol=1e-12)

    def test_pointwise_exponential(self, rng):
        Z = random_field(G, rng, kmax=4)
        m = preset("noncommuting_schrodinger", 32).replace(initial=Z)
        assert q_method(m) == "exact_pointwise"
        out = stoch_substep(m, Z, 0.0, 1.0, fixed_path([0.2]))
        expected = np.exp(0.2j * np.cos(G.points[0])) * Z.evaluate()
        # exact up to the spectral tail of the product that falls outside the band
        np.testing.assert_allclose(out.evaluate(), expected, atol=1e-9)

    def test_reversed_interval(self):
        m = preset("schrodinger", 32)
        with pytest.raises(ValueError):
            stoch_substep(m, m.initial, 0.5, 0.25, generate(0, 1, 1.0, 4))

    def test_off_grid_interval(self):
        m = preset("schrodinger", 32)
        with pytest.raises(ValueError, match="not on the path grid"):
            stoch_substep(m, m.initial, 0.0, 0.3, generate(0, 1, 1.0, 4))


@pytest.mark.parametrize("name,method", [
    ("schrodinger", "exact_fourier"), ("transport", "exact_fourier"),
    ("degenerate_heat", "exact_fourier"), ("noncommuting_schrodinger", "exact_pointwise"),
    ("unbalanced", "numerical"), ("heat", "drift_only"),
])
def test_q_method_selection(name, method):
    assert q_method(preset(name, 16)) == method


class TestSplitSteps:
    def test_zero_noise_is_det_composition(self, rng):
        m = preset("noncommuting_pair", 32)
        Z = random_field(G, rng, decay=0.3)
        path = generate(0, 0, 1.0, 4)
        out = lie_split_step(m, Z, 0.0, 0.25, path)
        ref = det_substep(m.drifts[2], det_substep(m.drifts[1], Z, 0.25), 0.25)
        assert out.allclose(ref, atol=1e-14)

    def test_commuting_step_is_exact(self):
        m = preset("schrodinger", 32)
        path = generate(1, 1, 1.0, 8)
        out = lie_split_step(m, m.initial, 0.0, 0.125, path)
        assert out.allclose(exact_oracle("modulated_schrodinger", m.initial, path, 0.125), atol=1e-12)

    def test_order_matters_without_commutation(self):
        m = preset("noncommuting_schrodinger", 32)
        path = generate(1, 1, 1.0, 8)
        qp = lie_split_step(m, m.initial, 0.0, 0.125, path)
        pq = stoch_substep(m, det_substep(m.drifts[1], m.initial, 0.125), 0.0, 0.125, path)
        assert not qp.allclose(pq, atol=1e-6)

    def test_strang_equals_lie_when_commuting(self):
        m = preset("heat", 32)
        path = generate(0, 0, 1.0, 4)
        a = strang_split_step(m, m.initial, 0.0, 0.25, path)
        b = lie_split_step(m, m.initial, 0.0, 0.25, path)
        assert a.allclose(b, atol=1e-13)

    def test_strang_differs_on_noncommuting_pair(self):
        m = preset("noncommuting_pair", 32)
        path = generate(0, 0, 1.0, 4)
        a = strang_split_step(m, m.initial, 0.0, 0.25, path)
        b = lie_split_step(m, m.initial, 0.0, 0.25, path)
        assert not a.allclose(b, atol=1e-6)


class TestRunSplitting:
    def test_one_step(self):
        m = preset("noncommuting_schrodinger", 32)
        path = generate(2, 1, 1.0, 16)
        traj = run_splitting(m, 1, path)
        assert SpectralField(G, traj.coeffs[-1]).allclose(lie_split_step(m, m.initial, 0.0, 1.0, path), atol=0)
        np.testing.assert_array_equal(traj.times, [0.0, 1.0])

    def test_starts_from_initial_data(self):
        m = preset("transport", 32)
        traj = run_splitting(m, 4, generate(0, 1, 1.0, 16))
        np.testing.assert_array_equal(traj.coeffs[0], m.initial.coeffs)

    @pytest.mark.parametrize("n", [1, 2, 8, 32])
    def test_commuting_model_is_exact(self, n):
        m = preset("schrodinger", 32)
        path = generate(4, 1, 1.0, 128)
        traj = run_splitting(m, n, path)
        exact = oracle_trajectory(m, path, traj.times)
        assert max(coeff_norm(G, d, 1) for d in traj.coeffs - exact.coeffs) <= 1e-10

    def test_heat_reduces_to_det_chain(self):
        m = preset("heat", 32)
        traj = run_splitting(m, 4, generate(0, 0, 1.0, 4))
        Z = m.initial
        for i in range(4):
            Z = det_substep(m.drifts[1], Z, 0.25)
            np.testing.assert_array_equal(traj.coeffs[i + 1], Z.coeffs)

    def test_mass_conservation(self):
        m = preset("schrodinger", 32)
        traj = run_splitting(m, 16, generate(6, 1, 1.0, 64))
        norm0 = sobolev_norm(m.initial, 0)
        for state in traj.states:
            assert sobolev_norm(state, 0) == pytest.approx(norm0, rel=1e-10)

    def test_linear_in_initial_data(self, rng):
        m = preset("noncommuting_schrodinger", 32)
        path = generate(7, 1, 1.0, 64)
        Z, W = random_field(G, rng, decay=0.3), random_field(G, rng, decay=0.3)
        a = 0.7 - 0.2j

        def final(Z0):
            return run_splitting(m.replace(initial=Z0), 8, path).coeffs[-1]

        np.testing.assert_allclose(final(a * Z + W), a * final(Z) + final(W), atol=1e-11)

    def test_n_must_divide_path(self):
        with pytest.raises(ValueError, match="divide"):
            run_splitting(preset("transport", 32), 3, generate(0, 1, 1.0, 16))

    def test_blow_up_is_reported(self):
        m = preset("unbalanced", 64, horizon=4.0)
        with pytest.raises(NumericalBlowUp):
            run_splitting(m, 2, generate(0, 1, 4.0, 2))


class RecordingPath(BrownianPath):
    """Logs every W window handed to a solver."""

    log: list = []

    def window(self, s, t):
        w = super().window(s, t)
        RecordingPath.log.append((self.index_of(s) * self.dt, self.index_of(t) * self.dt, w.copy()))
        return w


def test_splitting_and_reference_see_the_same_brownian_values():
    m = preset("noncommuting_schrodinger", 32)
    base = generate(12, 1, 1.0, 256)
    path = RecordingPath(base.seed, base.path_index, base.horizon, base.steps, base.values)
    RecordingPath.log = []
    run_splitting(m, 8, path)
    split_values = {t1: w[:, -1] for _, t1, w in RecordingPath.log}
    RecordingPath.log = []
    reference_solve(m, 64, path, record_steps=8)
    (_, _, ref_w), = RecordingPath.log
    for i in range(1, 9):
        t = i / 8
        np.testing.assert_array_equal(split_values[t], ref_w[:, i * 8])


class TestReference:
    def test_zero_noise_constant_coefficients_exact(self):
        m = preset("heat", 32)
        traj = reference_solve(m, 4, generate(0, 0, 1.0, 4))
        expected = np.exp(-0.5 * G.ksq) * m.initial.coeffs
        np.testing.assert_allclose(traj.coeffs[-1], expected, atol=1e-14)

    def test_forced_model(self, rng):
        F = random_field(G, rng)
        m = _model([DriftOperator(G, forcing=F), DriftOperator(G)], [], T=2.0)
        traj = reference_solve(m, 8, generate(0, 0, 2.0, 8), record_steps=4)
        for t, c in zip(traj.times, traj.coeffs):
            np.testing.assert_allclose(c, E1.coeffs + t * F.coeffs, atol=1e-13)

    @pytest.mark.parametrize("name", ["transport", "schrodinger", "degenerate_heat"])
    def test_matches_oracles(self, name):
        m = preset(name, 32)
        path = generate(5, 1, 1.0, 512)
        traj = reference_solve(m, 512, path, record_steps=16)
        exact = oracle_trajectory(m, path, traj.times)
        assert np.max(np.abs(traj.coeffs - exact.coeffs)) <= 1e-10

    def test_self_convergence(self):
        m = preset("noncommuting_schrodinger", 32)
        path = generate(8, 1, 1.0, 4096)
        fine = reference_solve(m, 4096, path, record_steps=16)

        def err(steps):
            t = reference_solve(m, steps, path, record_steps=16)
            return max(coeff_norm(G, d, 0) for d in t.coeffs - fine.coeffs)

        # strong order one: a 4x refinement cuts the error by roughly 4
        assert err(64) / err(256) > 2.5

    def test_record_steps_must_divide(self):
        m = preset("transport", 32)
        with pytest.raises(ValueError):
            reference_solve(m, 16, generate(0, 1, 1.0, 16), record_steps=3)


class TestOracle:
    def test_zero_path_is_identity(self, rng):
        Z = random_field(G, rng)
        p = fixed_path([0.0])
        assert exact_oracle("transport", Z, p, 1.0).allclose(Z, atol=0)

    def test_half_period_shift(self):
        p = fixed_path([np.pi])
        assert exact_oracle("transport", E1, p, 1.0, (1.0,)).allclose(-E1)

    def test_modulated_schrodinger_formula(self):
        w = 0.37
        out = exact_oracle("modulated_schrodinger", E1, fixed_path([w]), 1.0, (1.0,))
        assert out.allclose(np.exp(1j * w) * np.exp(-1j) * E1)

    def test_unknown_tag(self):
        with pytest.raises(ValueError, match="no closed form"):
            exact_oracle("burgers", E1, fixed_path([0.1]), 1.0)

    def test_model_without_oracle(self):
        with pytest.raises(ValueError, match="no closed-form oracle"):
            oracle_trajectory(preset("heat", 32), generate(0, 0, 1.0, 4), [0.0, 1.0])


class TestTrajectory:
    def test_validation(self):
        with pytest.raises(ValueError):
            Trajectory(G, np.array([0.0, 0.5, 0.5]), np.zeros((3, 32), dtype=complex))
        with pytest.raises(ValueError):
            Trajectory(G, np.array([0.1, 0.5]), np.zeros((2, 32), dtype=complex))

    def test_restriction(self):
        t = Trajectory(G, np.linspace(0, 1, 5), np.arange(5)[:, None] * np.ones((5, 32)) + 0j)
        sub = t.at([0.0, 0.5, 1.0])
        np.testing.assert_array_equal(sub.coeffs[:, 0], [0, 2, 4])
        with pytest.raises(ValueError):
            t.at([0.3])

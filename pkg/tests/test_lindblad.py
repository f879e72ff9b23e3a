"""Master-equation right-hand side, propagation, and the refresh channel."""

import math
import warnings

import numpy as np
import pytest

from dopocluster.errors import (
    IntegratorDivergedError,
    LayoutError,
    PositivityWarning,
    ValidationError,
)
from dopocluster.fock import (
    DensityMatrix,
    ModeLayout,
    QOperator,
    annihilation,
    coherent_state,
    expectation,
    min_eigenvalue,
    number_operator,
    partial_trace,
    position_operator,
    tensor,
    vacuum_state,
)
from dopocluster.lindblad import (
    Dissipator,
    IntegratorConfig,
    LindbladModel,
    Trajectory,
    cycle_channel,
    evolve,
    rhs,
    stable_timestep,
    steady_reached,
)

from oracles import (
    expm_evolve,
    random_density,
    random_hermitian,
    rhs_naive,
)


def _random_model(layout, rng, n_channels=2):
    dim = layout.dim
    h = QOperator(layout, random_hermitian(dim, rng))
    dissipators = []
    for _ in range(n_channels):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        dissipators.append(Dissipator(QOperator(layout, g), float(rng.uniform(0.2, 1.5))))
    return LindbladModel(layout, h, dissipators)


def _oracle_parts(model):
    h = (
        model.hamiltonian.matrix
        if model.hamiltonian is not None
        else np.zeros((model.layout.dim, model.layout.dim), dtype=complex)
    )
    pairs = [(d.collapse.matrix, d.rate) for d in model.dissipators]
    return h, pairs


# ---------------------------------------------------------------------------
# model validation
# ---------------------------------------------------------------------------


class TestModelValidation:
    def test_negative_rate_rejected(self):
        layout = ModeLayout.of(4)
        a = annihilation(layout, 0)
        with pytest.raises(ValidationError):
            LindbladModel(layout, None, [Dissipator(a, -0.1)])
        with pytest.raises(ValidationError):
            LindbladModel(layout, None, [Dissipator(a, math.nan)])

    def test_non_hermitian_hamiltonian_rejected(self):
        layout = ModeLayout.of(4)
        with pytest.raises(ValidationError):
            LindbladModel(layout, annihilation(layout, 0))

    def test_layout_mismatch_rejected(self):
        layout = ModeLayout.of(4)
        other = annihilation(ModeLayout.of(5), 0)
        with pytest.raises(LayoutError):
            LindbladModel(layout, None, [Dissipator(other, 1.0)])
        with pytest.raises(LayoutError):
            LindbladModel(layout, number_operator(ModeLayout.of(5), 0))

    def test_zero_rate_allowed(self):
        layout = ModeLayout.of(4)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), 0.0)])
        assert model.dissipators[0].rate == 0.0


class TestIntegratorConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValidationError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValidationError):
            IntegratorConfig(dt=-0.1)
        with pytest.raises(ValidationError):
            IntegratorConfig(method="euler")
        with pytest.raises(ValidationError):
            IntegratorConfig(rel_tol=0.0)
        with pytest.raises(ValidationError):
            IntegratorConfig(record_every=0)


class TestTrajectoryValidation:
    def test_times_must_increase(self):
        layout = ModeLayout.of(2)
        rho = vacuum_state(layout).density()
        with pytest.raises(ValidationError):
            Trajectory(np.array([0.0, 0.0]), {}, rho)
        with pytest.raises(ValidationError):
            Trajectory(np.array([]), {}, rho)

    def test_record_lengths_must_match(self):
        layout = ModeLayout.of(2)
        rho = vacuum_state(layout).density()
        with pytest.raises(ValidationError):
            Trajectory(np.array([0.0, 1.0]), {"n": [1.0]}, rho)


# ---------------------------------------------------------------------------
# right-hand side against the dense oracle
# ---------------------------------------------------------------------------


class TestRhs:
    def test_matches_naive_on_random_states(self):
        rng = np.random.default_rng(101)
        layout = ModeLayout.of(3, 2)
        model = _random_model(layout, rng)
        h, pairs = _oracle_parts(model)
        for _ in range(10):
            rho = random_density(layout.dim, rng)
            np.testing.assert_allclose(
                rhs(model, rho), rhs_naive(h, pairs, rho), atol=1e-12
            )

    def test_matches_naive_on_non_hermitian_input(self):
        rng = np.random.default_rng(103)
        layout = ModeLayout.of(5)
        model = _random_model(layout, rng, n_channels=1)
        h, pairs = _oracle_parts(model)
        mat = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        np.testing.assert_allclose(rhs(model, mat), rhs_naive(h, pairs, mat), atol=1e-12)

    def test_trace_of_rhs_vanishes(self):
        rng = np.random.default_rng(107)
        layout = ModeLayout.of(6)
        model = _random_model(layout, rng)
        rho = random_density(6, rng)
        assert abs(np.trace(rhs(model, rho))) < 1e-12

    def test_shape_mismatch_rejected(self):
        layout = ModeLayout.of(4)
        model = LindbladModel(layout, number_operator(layout, 0))
        with pytest.raises(LayoutError):
            rhs(model, np.eye(3, dtype=complex))


# ---------------------------------------------------------------------------
# propagation accuracy
# ---------------------------------------------------------------------------


class TestEvolveAccuracy:
    def test_fixed_step_matches_matrix_exponential(self):
        rng = np.random.default_rng(211)
        layout = ModeLayout.of(3, 2)
        model = _random_model(layout, rng)
        h, pairs = _oracle_parts(model)
        rho0 = DensityMatrix(layout, random_density(layout.dim, rng))
        duration = 0.7
        result = evolve(model, rho0, duration, IntegratorConfig(dt=1e-3))
        expected = expm_evolve(h, pairs, rho0.matrix, duration)
        assert np.max(np.abs(result.final_state.matrix - expected)) < 1e-7

    def test_adaptive_matches_matrix_exponential(self):
        rng = np.random.default_rng(223)
        layout = ModeLayout.of(4)
        model = _random_model(layout, rng, n_channels=1)
        h, pairs = _oracle_parts(model)
        rho0 = DensityMatrix(layout, random_density(4, rng))
        duration = 0.9
        result = evolve(
            model,
            rho0,
            duration,
            IntegratorConfig(method="adaptive", rel_tol=1e-10, abs_tol=1e-12),
        )
        expected = expm_evolve(h, pairs, rho0.matrix, duration)
        assert np.max(np.abs(result.final_state.matrix - expected)) < 1e-7

    def test_pure_decay_photon_number_analytic(self):
        # single-photon loss at rate Γ: ⟨n⟩(t) = |α|² e^{−Γt}
        gamma, alpha, duration = 0.8, 1.1, 2.0
        layout = ModeLayout.of(12)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), gamma)])
        state = coherent_state(layout, 0, alpha)
        result = evolve(
            model,
            state,
            duration,
            IntegratorConfig(dt=2e-3, record_every=100),
            observables={"n": number_operator(layout, 0)},
        )
        expected = abs(alpha) ** 2 * np.exp(-gamma * result.times)
        np.testing.assert_allclose(result.records["n"], expected, atol=1e-6)

    def test_hamiltonian_rotation_analytic(self):
        # under H = ω a†a a coherent state stays coherent: ⟨x⟩(t) = √2 α cos(ωt)
        omega, alpha = 1.7, 0.9
        layout = ModeLayout.of(12)
        model = LindbladModel(layout, omega * number_operator(layout, 0))
        state = coherent_state(layout, 0, alpha)
        result = evolve(
            model,
            state,
            3.0,
            IntegratorConfig(dt=1e-3, record_every=200),
            observables={"x": position_operator(layout, 0)},
        )
        expected = math.sqrt(2) * alpha * np.cos(omega * result.times)
        np.testing.assert_allclose(result.records["x"], expected, atol=1e-6)

    def test_trace_and_hermiticity_preserved_long_run(self):
        rng = np.random.default_rng(227)
        layout = ModeLayout.of(6)
        model = _random_model(layout, rng)
        rho0 = DensityMatrix(layout, random_density(6, rng))
        result = evolve(model, rho0, 20.0, IntegratorConfig(dt=5e-3))
        final = result.final_state.matrix
        assert abs(np.trace(final) - 1.0) < 1e-9
        assert np.max(np.abs(final - final.conj().T)) == 0.0
        assert min_eigenvalue(final) > -1e-9


# ---------------------------------------------------------------------------
# recording semantics
# ---------------------------------------------------------------------------


class TestRecording:
    def test_zero_duration_records_initial_state(self):
        layout = ModeLayout.of(8)
        state = coherent_state(layout, 0, 0.6)
        result = evolve(
            LindbladModel(layout),
            state,
            0.0,
            observables={"n": number_operator(layout, 0)},
        )
        assert result.times.tolist() == [0.0]
        assert result.records["n"][0] == pytest.approx(0.36, abs=1e-6)
        assert np.max(np.abs(result.final_state.matrix - state.density().matrix)) < 1e-12

    def test_record_spacing_honors_record_every(self):
        layout = ModeLayout.of(4)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), 0.5)])
        result = evolve(
            model,
            vacuum_state(layout),
            1.0,
            IntegratorConfig(dt=0.1, record_every=3),
        )
        # 10 steps: records at t=0, steps 3, 6, 9, and the final step 10
        np.testing.assert_allclose(result.times, [0.0, 0.3, 0.6, 0.9, 1.0], atol=1e-12)

    def test_user_dt_divides_duration_exactly(self):
        layout = ModeLayout.of(4)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), 0.5)])
        result = evolve(
            model, vacuum_state(layout), 1.0, IntegratorConfig(dt=0.3, record_every=1)
        )
        # ceil(1.0/0.3) = 4 steps of 0.25 each
        np.testing.assert_allclose(result.times, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)

    def test_final_time_always_recorded(self):
        layout = ModeLayout.of(4)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), 0.5)])
        result = evolve(
            model, vacuum_state(layout), 1.0, IntegratorConfig(dt=0.1, record_every=7)
        )
        assert result.times[-1] == pytest.approx(1.0, abs=1e-12)

    def test_real_observables_returned_as_real_arrays(self):
        layout = ModeLayout.of(7)
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), 0.4)])
        result = evolve(
            model,
            coherent_state(layout, 0, 0.5),
            0.5,
            IntegratorConfig(dt=1e-2),
            observables={"n": number_operator(layout, 0)},
        )
        assert result.records["n"].dtype == np.float64

    def test_negative_duration_rejected(self):
        layout = ModeLayout.of(3)
        with pytest.raises(ValidationError):
            evolve(LindbladModel(layout), vacuum_state(layout), -1.0)

    def test_observable_layout_checked(self):
        layout = ModeLayout.of(3)
        with pytest.raises(LayoutError):
            evolve(
                LindbladModel(layout),
                vacuum_state(layout),
                0.0,
                observables={"n": number_operator(ModeLayout.of(4), 0)},
            )
        with pytest.raises(TypeError):
            evolve(
                LindbladModel(layout),
                vacuum_state(layout),
                0.0,
                observables={"n": np.eye(3)},
            )

    def test_state_layout_checked(self):
        with pytest.raises(LayoutError):
            evolve(LindbladModel(ModeLayout.of(3)), vacuum_state(ModeLayout.of(4)), 0.1)
        with pytest.raises(TypeError):
            evolve(LindbladModel(ModeLayout.of(3)), np.eye(3) / 3, 0.1)


# ---------------------------------------------------------------------------
# failure and warning paths
# ---------------------------------------------------------------------------


class TestDivergenceHandling:
    def test_oversized_step_raises_diverged(self):
        layout = ModeLayout.of(10)
        # stiff pure-loss generator stepped far beyond the stability edge
        model = LindbladModel(
            layout, None, [Dissipator(annihilation(layout, 0) @ annihilation(layout, 0), 50.0)]
        )
        state = coherent_state(layout, 0, 1.0)
        with pytest.raises(IntegratorDivergedError) as err:
            evolve(model, state, 10.0, IntegratorConfig(dt=0.5))
        assert err.value.time is not None

    def test_mild_negativity_warns_and_clips_final(self):
        layout = ModeLayout.of(2)
        mat = np.diag([1.0 + 1e-6, -1e-6]).astype(complex)
        rho = DensityMatrix(layout, mat, min_eig_tol=-1e-5)
        with pytest.warns(PositivityWarning):
            result = evolve(LindbladModel(layout), rho, 0.0)
        assert min_eigenvalue(result.final_state.matrix) >= -1e-15
        assert abs(np.trace(result.final_state.matrix) - 1.0) < 1e-12

    def test_hard_negativity_raises(self):
        layout = ModeLayout.of(2)
        mat = np.diag([1.0 + 2e-5, -2e-5]).astype(complex)
        rho = DensityMatrix(layout, mat, min_eig_tol=-1e-4)
        with pytest.raises(IntegratorDivergedError):
            evolve(LindbladModel(layout), rho, 0.0)


# ---------------------------------------------------------------------------
# step-size policy
# ---------------------------------------------------------------------------


class TestStableTimestep:
    def test_pure_hamiltonian_bound(self):
        # H = n on cutoff 5: σ_max = 4, so the cap is 2.5/(2·4)
        layout = ModeLayout.of(5)
        model = LindbladModel(layout, number_operator(layout, 0))
        assert stable_timestep(model) == pytest.approx(2.5 / 8.0, rel=1e-9)

    def test_requested_dt_combines_with_cap(self):
        layout = ModeLayout.of(5)
        model = LindbladModel(layout, number_operator(layout, 0))
        cap = 2.5 / 8.0
        assert stable_timestep(model, cap / 2) == pytest.approx(cap / 2)
        assert stable_timestep(model, cap * 2) == pytest.approx(cap)

    def test_dissipator_contributes_to_bound(self):
        # A = (Γ/2) a†a on cutoff 5: σ_max(A) = 2Γ, H absent → cap 2.5/(2·2Γ)
        layout = ModeLayout.of(5)
        gamma = 3.0
        model = LindbladModel(layout, None, [Dissipator(annihilation(layout, 0), gamma)])
        assert stable_timestep(model) == pytest.approx(2.5 / (4 * gamma), rel=1e-9)

    def test_trivial_model_is_unbounded(self):
        layout = ModeLayout.of(3)
        assert math.isinf(stable_timestep(LindbladModel(layout)))

    def test_auto_dt_stays_stable_on_stiff_model(self):
        layout = ModeLayout.of(10)
        model = LindbladModel(
            layout, None, [Dissipator(annihilation(layout, 0) @ annihilation(layout, 0), 50.0)]
        )
        state = coherent_state(layout, 0, 1.0)
        result = evolve(model, state, 10.0)  # no dt given: engine picks the cap
        assert abs(np.trace(result.final_state.matrix) - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# steady-state detection
# ---------------------------------------------------------------------------


class TestSteadyReached:
    def _trajectory(self, values):
        layout = ModeLayout.of(2)
        rho = vacuum_state(layout).density()
        times = np.linspace(0.0, 1.0, len(values))
        return Trajectory(times, {"n": np.asarray(values, dtype=float)}, rho)

    def test_flat_tail_is_steady(self):
        traj = self._trajectory([1.0, 0.5, 0.100004, 0.100002, 0.100001])
        assert steady_reached(traj, window=0.6, tol=1e-3)

    def test_moving_tail_is_not_steady(self):
        traj = self._trajectory([1.0, 0.8, 0.6, 0.4, 0.2])
        assert not steady_reached(traj, window=0.6, tol=1e-3)

    def test_window_validation(self):
        traj = self._trajectory([1.0, 0.5, 0.25])
        with pytest.raises(ValidationError):
            steady_reached(traj, window=0.0, tol=1e-3)
        with pytest.raises(ValidationError):
            steady_reached(traj, window=2.0, tol=1e-3)
        with pytest.raises(ValidationError):
            steady_reached(traj, window=0.2, tol=1e-3)  # single point in window


# ---------------------------------------------------------------------------
# refresh channel
# ---------------------------------------------------------------------------


class TestCycleChannel:
    def test_matches_manual_attach_evolve_trace(self):
        rng = np.random.default_rng(307)
        sys_layout = ModeLayout.of(3)
        joint_layout = ModeLayout.of(3, 2)
        model = _random_model(joint_layout, rng, n_channels=1)
        system = DensityMatrix(sys_layout, random_density(3, rng))
        fresh = DensityMatrix(ModeLayout.of(2), random_density(2, rng))
        t_cycle = 0.4
        cfg = IntegratorConfig(dt=1e-3)

        got = cycle_channel(system, fresh, model, t_cycle, keep=(0,), config=cfg)

        joint = tensor([system, fresh])
        manual = partial_trace(evolve(model, joint, t_cycle, cfg).final_state, (0,))
        np.testing.assert_allclose(got.matrix, manual.matrix, atol=1e-12)
        assert got.layout.cutoffs == (3,)

    def test_accepts_state_vector_fresh_factor(self):
        sys_layout = ModeLayout.of(3)
        joint_layout = ModeLayout.of(3, 6)
        model = LindbladModel(
            joint_layout, None, [Dissipator(annihilation(joint_layout, 1), 1.0)]
        )
        system = vacuum_state(sys_layout).density()
        fresh = coherent_state(ModeLayout.of(6), 0, 0.2)
        out = cycle_channel(system, fresh, model, 0.1, keep=(0,))
        assert out.layout.cutoffs == (3,)

    def test_layout_mismatch_rejected(self):
        system = vacuum_state(ModeLayout.of(3)).density()
        fresh = vacuum_state(ModeLayout.of(2)).density()
        model = LindbladModel(ModeLayout.of(3, 3))
        with pytest.raises(LayoutError):
            cycle_channel(system, fresh, model, 0.1, keep=(0,))

    def test_keep_can_retain_fresh_mode(self):
        # swap-like usage: keep the refreshed ancilla instead of the system
        sys_layout = ModeLayout.of(2)
        fresh_layout = ModeLayout.of(3)
        joint = ModeLayout.of(2, 3)
        model = LindbladModel(joint)
        system = vacuum_state(sys_layout).density()
        fresh = DensityMatrix(
            fresh_layout, np.diag([0.5, 0.3, 0.2]).astype(complex)
        )
        out = cycle_channel(system, fresh, model, 0.0, keep=(1,))
        np.testing.assert_allclose(out.matrix, fresh.matrix, atol=1e-12)


# ---------------------------------------------------------------------------
# seeded property checks
# ---------------------------------------------------------------------------


class TestRandomizedInvariants:
    def test_random_models_preserve_density_invariants(self):
        rng = np.random.default_rng(419)
        layout = ModeLayout.of(5)
        for _ in range(5):
            model = _random_model(layout, rng, n_channels=int(rng.integers(1, 3)))
            rho0 = DensityMatrix(layout, random_density(5, rng))
            dt = min(1e-3, stable_timestep(model))
            result = evolve(model, rho0, 0.5, IntegratorConfig(dt=dt))
            final = result.final_state.matrix
            assert abs(np.trace(final) - 1.0) < 1e-9
            assert min_eigenvalue(final) > -1e-8

    def test_fixed_and_adaptive_agree_on_observables(self):
        rng = np.random.default_rng(421)
        layout = ModeLayout.of(4)
        model = _random_model(layout, rng, n_channels=1)
        rho0 = DensityMatrix(layout, random_density(4, rng))
        obs = {"n": number_operator(layout, 0)}
        fixed = evolve(model, rho0, 1.0, IntegratorConfig(dt=5e-4), observables=obs)
        adaptive = evolve(
            model,
            rho0,
            1.0,
            IntegratorConfig(method="adaptive", rel_tol=1e-10, abs_tol=1e-12),
            observables=obs,
        )
        assert fixed.records["n"][-1] == pytest.approx(
            adaptive.records["n"][-1], abs=1e-7
        )

    def test_composition_property(self):
        # evolving T then T again equals evolving 2T (autonomous generator)
        rng = np.random.default_rng(431)
        layout = ModeLayout.of(4)
        model = _random_model(layout, rng, n_channels=1)
        rho0 = DensityMatrix(layout, random_density(4, rng))
        cfg = IntegratorConfig(dt=1e-3)
        once = evolve(model, rho0, 0.3, cfg).final_state
        twice = evolve(model, once, 0.3, cfg).final_state
        direct = evolve(model, rho0, 0.6, cfg).final_state
        np.testing.assert_allclose(twice.matrix, direct.matrix, atol=1e-9)

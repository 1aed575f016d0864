"""Implicit stepper: linearized systems, the nonlinear solve, and full runs.

The nonlinear-solver oracle is a high-precision root find on the spatially
constant reduction of the step equation, where the diffusion terms drop and
the fixed point satisfies c(w) + eps*tau*w = c_prev cell-wise.
"""

import numpy as np
import pytest
from scipy.optimize import fsolve

import msdiff.stepper
from msdiff import (
    AuditFailure,
    DimensionMismatch,
    Grid1D,
    InadmissibleInitialData,
    NonlinearDivergence,
    SchemeParams,
    SimulationAborted,
    SimulationResult,
    ValidationError,
    advance_step,
    assemble_linear_system,
    c_to_w,
    diffusivity_matrix_from_upper,
    full_concentrations,
    integrate,
    new_mixture_spec,
    picard_step,
    regularize_initial,
    run_simulation,
    step_profile,
    w_to_c,
)
from msdiff.diagnostics import AuditVerdict
from test_mixture import equal_d_spec, ternary_123_spec


def heat_setup(cells=16, tau=1e-3, **kw):
    spec = equal_d_spec(3, d=1.0)
    grid = Grid1D(1.0, cells)
    base = 1.0 / 3.0
    bump = 0.2 * np.cos(np.pi * grid.centers)
    c0 = np.stack([base + bump, base - bump], axis=1)
    params = SchemeParams(tau=tau, t_end=kw.pop("t_end", 0.02), **kw)
    return spec, grid, params, c0


def rough_setup(**kw):
    # sharp composition step; after the floor the entropy variables jump by
    # tens across one cell, the hard regime for the frozen-coefficient solve
    D = diffusivity_matrix_from_upper([0.0833, 0.680, 0.168], 3)
    spec = new_mixture_spec(3, D)
    grid = Grid1D(1.0, 64)
    c0 = step_profile(grid, np.array([0.0, 0.5]), np.array([0.5, 0.5]))
    params = SchemeParams(tau=kw.pop("tau", 1e-3), t_end=kw.pop("t_end", 1e-3), **kw)
    return spec, grid, params, c0


class TestSchemeParams:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("tau", 0.0),
            ("tau", -1.0),
            ("t_end", -0.1),
            ("eps", -1e-9),
            ("picard_tol", 0.0),
            ("picard_max", 0),
            ("damping_theta", 0.0),
            ("damping_theta", 1.5),
            ("eta_floor", 0.0),
        ],
    )
    def test_rejects_bad_values(self, field, value):
        kw = dict(tau=1e-3, t_end=1.0)
        kw[field] = value
        with pytest.raises(ValidationError):
            SchemeParams(**kw)

    def test_zero_t_end_allowed(self):
        assert SchemeParams(tau=1e-3, t_end=0.0).t_end == 0.0


class TestRegularizeInitial:
    def test_interior_data_moves_at_most_n_eta(self):
        spec = ternary_123_spec()
        c0 = np.tile([0.3, 0.4], (5, 1))
        out = regularize_initial(spec, c0, 1e-3)
        assert np.max(np.abs(out - c0)) <= 3 * 1e-3

    def test_corner_state_floored(self):
        spec = equal_d_spec()
        out = regularize_initial(spec, np.array([[1.0, 0.0]]), 1e-3)
        np.testing.assert_allclose(out[0], [0.998, 1e-3], atol=1e-15)
        assert out.sum() <= 1.0 - 1e-3 + 1e-15

    def test_output_keeps_implied_species_positive(self):
        spec = equal_d_spec()
        rng = np.random.default_rng(1)
        c0 = rng.dirichlet(np.ones(3), size=20)[:, :2]
        out = regularize_initial(spec, c0, 1e-6)
        assert np.all(out >= 1e-6)
        assert np.all(1.0 - out.sum(axis=1) >= 1e-6 - 1e-15)

    def test_constant_fields_stay_constant(self):
        spec = equal_d_spec()
        out = regularize_initial(spec, np.tile([0.2, 0.2], (4, 1)), 1e-4)
        assert np.ptp(out, axis=0).max() == 0.0

    def test_excess_sum_rejected(self):
        spec = equal_d_spec()
        with pytest.raises(InadmissibleInitialData):
            regularize_initial(spec, np.array([[0.7, 0.5]]), 1e-3)

    def test_negative_fraction_rejected(self):
        spec = equal_d_spec()
        with pytest.raises(InadmissibleInitialData):
            regularize_initial(spec, np.array([[-0.1, 0.5]]), 1e-3)

    def test_eta_out_of_range(self):
        spec = equal_d_spec()
        with pytest.raises(ValidationError):
            regularize_initial(spec, np.array([[0.3, 0.3]]), 0.5)

    def test_shape_mismatch(self):
        spec = equal_d_spec()
        with pytest.raises(DimensionMismatch):
            regularize_initial(spec, np.ones((4, 3)) / 6, 1e-3)


class TestAssembleLinearSystem:
    def test_small_instance_symmetric_positive_definite(self):
        spec = ternary_123_spec()
        grid = Grid1D(1.0, 3)
        params = SchemeParams(tau=1e-3, t_end=1.0, eps=1e-8)
        rng = np.random.default_rng(9)
        w_bar = rng.normal(size=(3, 2))
        c_prev = w_to_c(w_bar + 0.1 * rng.normal(size=(3, 2)))
        S, b = assemble_linear_system(spec, grid, params, w_bar, c_prev)
        assert S.shape == (6, 6) and b.shape == (6,)
        assert np.max(np.abs(S - S.T)) <= 1e-12
        np.linalg.cholesky(S)  # raises if not positive definite

    def test_self_consistent_data_gives_zero_solution(self):
        # c_prev equal to c(w_bar) with r = 0 leaves no forcing at all, so
        # the minimizer of the quadratic form is exactly zero
        spec = equal_d_spec()
        grid = Grid1D(1.0, 4)
        params = SchemeParams(tau=1e-2, t_end=1.0, eps=0.1)
        w_bar = np.tile([0.4, -0.2], (4, 1))
        S, b = assemble_linear_system(spec, grid, params, w_bar, w_to_c(w_bar))
        assert np.max(np.abs(b)) == 0.0
        assert np.max(np.abs(np.linalg.solve(S, b))) == 0.0

    def test_coercivity_bound_on_solution(self):
        # the eps*h*(L^2 + I) block bounds the smallest eigenvalue from
        # below by eps*h, so ||w|| <= ||b|| / (eps h) for any data
        spec = equal_d_spec()
        grid = Grid1D(1.0, 4)
        params = SchemeParams(tau=1e-2, t_end=1.0, eps=0.1)
        rng = np.random.default_rng(14)
        w_bar = rng.normal(size=(4, 2))
        c_prev = w_to_c(rng.normal(size=(4, 2)))
        S, b = assemble_linear_system(spec, grid, params, w_bar, c_prev)
        x = np.linalg.solve(S, b)
        assert np.linalg.norm(x) <= np.linalg.norm(b) / (params.eps * grid.h)
        assert np.linalg.eigvalsh(S)[0] >= params.eps * grid.h * (1 - 1e-12)


class TestPicardStep:
    def fixed_point_instance(self):
        # constant w_bar solves the step equation when c_prev is chosen as
        # c(w_bar) + eps*tau*w_bar (diffusion vanishes on constants)
        spec = ternary_123_spec()
        grid = Grid1D(1.0, 6)
        params = SchemeParams(tau=0.05, t_end=1.0, eps=1e-2)
        w_bar = np.tile([0.7, -0.3], (6, 1))
        c_prev = w_to_c(w_bar) + params.eps * params.tau * w_bar
        return spec, grid, params, w_bar, c_prev

    @pytest.mark.parametrize("augmented", [True, False])
    def test_fixed_point_is_preserved(self, augmented):
        spec, grid, params, w_bar, c_prev = self.fixed_point_instance()
        w_new, resid = picard_step(
            spec, grid, params, w_bar, c_prev, augmented=augmented
        )
        assert resid <= 1e-12
        np.testing.assert_allclose(w_new, w_bar, atol=1e-11)

    def test_half_damping_returns_midpoint(self):
        spec = equal_d_spec()
        grid = Grid1D(1.0, 4)
        params = SchemeParams(tau=1e-2, t_end=1.0, eps=1e-3)
        rng = np.random.default_rng(21)
        w_bar = 0.3 * rng.normal(size=(4, 2))
        c_prev = w_to_c(0.3 * rng.normal(size=(4, 2)))
        S, b = assemble_linear_system(spec, grid, params, w_bar, c_prev)
        x = np.linalg.solve(S, b).reshape(4, 2)
        w_half, _ = picard_step(
            spec, grid, params, w_bar, c_prev, theta=0.5, augmented=False
        )
        np.testing.assert_allclose(w_half, 0.5 * (w_bar + x), atol=1e-9)

    def test_smooth_iterates_contract(self):
        # undamped sweeps on smooth data: increments shrink monotonically
        spec, grid, params, c0 = heat_setup(cells=16, tau=1e-3, eps=1e-6)
        c_prev = regularize_initial(spec, c0, params.eta_floor)
        w = c_to_w(c_prev)
        increments = []
        for _ in range(5):
            w_next, _ = picard_step(spec, grid, params, w, c_prev)
            increments.append(float(np.max(np.abs(w_next - w))))
            w = w_next
        assert increments[0] > increments[1] > increments[2] > increments[3]


class TestAdvanceStep:
    def test_constant_state_matches_root_oracle(self):
        spec = ternary_123_spec()
        grid = Grid1D(1.0, 8)
        tau, eps = 0.1, 1e-3
        params = SchemeParams(tau=tau, t_end=1.0, eps=eps, picard_tol=1e-12)
        c_row = np.array([0.5, 0.25])
        w0 = c_to_w(np.tile(c_row, (8, 1)))
        step = advance_step(spec, grid, params, w0)
        # stays spatially constant
        assert np.max(np.abs(step.w - step.w.mean(axis=0))) <= 1e-12
        w_oracle = fsolve(
            lambda w: w_to_c(w) + eps * tau * w - c_row, c_to_w(c_row), xtol=1e-14
        )
        np.testing.assert_allclose(step.w[0], w_oracle, atol=1e-10)

    def test_constant_state_mass_shift_identity(self):
        spec = ternary_123_spec()
        grid = Grid1D(2.0, 8)
        tau, eps = 0.05, 1e-4
        params = SchemeParams(tau=tau, t_end=1.0, eps=eps, picard_tol=1e-13)
        c_prev = np.tile([0.4, 0.3], (8, 1))
        step = advance_step(spec, grid, params, c_to_w(c_prev))
        shift = integrate(grid, w_to_c(step.w)) - integrate(grid, c_prev)
        predicted = -eps * tau * integrate(grid, step.w)
        np.testing.assert_allclose(shift, predicted, atol=1e-13)
        assert np.max(np.abs(shift)) <= eps * tau * grid.length * np.max(
            np.abs(step.w)
        ) * (1 + 1e-12)

    def test_smooth_step_telemetry(self):
        spec, grid, params, c0 = heat_setup(cells=32)
        w0 = c_to_w(regularize_initial(spec, c0, params.eta_floor))
        step = advance_step(spec, grid, params, w0)
        assert step.restarts == 0
        assert step.theta == 1.0
        assert 1 <= step.iterations <= 25
        assert step.final_increment <= 1e-9
        assert step.linear_residual <= 1e-12

    def test_converged_state_solves_plain_system(self):
        # the solver iterates an augmented splitting; its fixed point must
        # satisfy the unmodified frozen-coefficient system
        spec, grid, params, c0 = heat_setup(cells=16)
        c_prev = regularize_initial(spec, c0, params.eta_floor)
        step = advance_step(spec, grid, params, c_to_w(c_prev))
        S, b = assemble_linear_system(spec, grid, params, step.w, c_prev)
        resid = np.max(np.abs(S @ step.w.ravel() - b))
        scale = max(1.0, float(np.max(np.abs(b))))
        assert resid <= 1e-9 * scale

    def test_rough_data_converges_with_backtracking_budget(self):
        spec, grid, params, c0 = rough_setup()
        w0 = c_to_w(regularize_initial(spec, c0, params.eta_floor))
        step = advance_step(spec, grid, params, w0)
        assert step.iterations <= params.picard_max
        assert np.all(np.isfinite(step.w))
        cf = full_concentrations(w_to_c(step.w))
        assert cf.min() > 0.0

    def test_unit_iteration_budget_diverges_on_rough_data(self):
        spec, grid, params, c0 = rough_setup(picard_max=1)
        w0 = c_to_w(regularize_initial(spec, c0, params.eta_floor))
        with pytest.raises(NonlinearDivergence) as info:
            advance_step(spec, grid, params, w0)
        assert len(info.value.increments) >= 1

    def test_tiny_step_changes_state_little(self):
        # regression band: the floored composition step still moves by a few
        # 1e-5 in one tau = 1e-8 step because the initial gradients are huge
        spec, grid, params, c0 = rough_setup(tau=1e-8)
        c_reg = regularize_initial(spec, c0, params.eta_floor)
        step = advance_step(spec, grid, params, c_to_w(c_reg))
        dc = np.max(np.abs(w_to_c(step.w) - c_reg))
        assert 1e-7 <= dc <= 1e-4


def failing_verdict(t):
    return AuditVerdict(
        time=t,
        entropy_ok=False,
        entropy_margin=-1.0,
        mass_ok=True,
        mass_margin=0.0,
        bounds_ok=True,
        bounds_margin=0.1,
        dissipation_ok=True,
        dissipation_margin=0.0,
    )


class TestRunSimulation:
    def test_zero_t_end_yields_initial_record_only(self):
        spec, grid, params, c0 = heat_setup(t_end=0.0)
        result = run_simulation(spec, grid, params, c0)
        assert result.steps == 0
        assert result.t_final == 0.0
        assert len(result.records) == 1
        assert result.records[0].time == 0.0

    def test_heat_run_invariants(self):
        spec, grid, params, c0 = heat_setup(cells=32, t_end=0.02)
        result = run_simulation(spec, grid, params, c0)
        assert result.steps == 20
        assert result.t_final == pytest.approx(0.02)
        assert len(result.records) == 21
        assert len(result.verdicts) == 20
        assert all(v.passed for v in result.verdicts)
        assert result.clamp_count == 0
        entropies = [r.entropy for r in result.records]
        assert all(b < a for a, b in zip(entropies, entropies[1:]))
        assert min(r.min_c for r in result.records) > 0.0

    def test_mass_drift_matches_w_integral(self):
        spec, grid, params, c0 = heat_setup(cells=24, t_end=0.015)
        result = run_simulation(spec, grid, params, c0)
        drift = (
            integrate(grid, result.c) - result.initial_masses[: spec.n_reduced]
        )
        predicted = -params.eps * result.w_time_integral
        np.testing.assert_allclose(drift, predicted, atol=1e-12)

    def test_record_thinning_keeps_ends(self):
        spec, grid, params, c0 = heat_setup(t_end=0.02)
        result = run_simulation(spec, grid, params, c0, record_every=7)
        times = [r.time for r in result.records]
        np.testing.assert_allclose(times, [0.0, 0.007, 0.014, 0.02], atol=1e-12)

    def test_short_last_step_lands_on_t_end(self):
        spec, grid, params, c0 = heat_setup(t_end=0.0105)
        result = run_simulation(spec, grid, params, c0)
        assert result.steps == 11
        assert result.t_final == pytest.approx(0.0105, abs=1e-12)

    def test_hooks_see_every_step(self):
        spec, grid, params, c0 = heat_setup(t_end=0.005)
        seen = []

        def hook(k, t, c, w, record):
            assert c.shape == w.shape == (grid.cells, spec.n_reduced)
            assert record.time == pytest.approx(t)
            seen.append(k)

        run_simulation(spec, grid, params, c0, hooks=[hook])
        assert seen == [1, 2, 3, 4, 5]

    def test_enforce_mode_aborts_on_audit_failure(self, monkeypatch):
        spec, grid, params, c0 = heat_setup(t_end=0.01)
        monkeypatch.setattr(
            msdiff.stepper, "audit_step", lambda *a, **kw: failing_verdict(a[5])
        )
        with pytest.raises(AuditFailure) as info:
            run_simulation(spec, grid, params, c0)
        partial = info.value.partial
        assert isinstance(partial, SimulationResult)
        assert partial.steps == 1
        assert len(partial.records) == 2  # initial plus offending step

    def test_warn_mode_completes_with_warning(self, monkeypatch):
        spec, grid, params, c0 = heat_setup(t_end=0.003)
        monkeypatch.setattr(
            msdiff.stepper, "audit_step", lambda *a, **kw: failing_verdict(a[5])
        )
        with pytest.warns(RuntimeWarning, match="violated"):
            result = run_simulation(spec, grid, params, c0, audit_mode="warn")
        assert result.steps == 3

    def test_audit_off_records_no_verdicts(self):
        spec, grid, params, c0 = heat_setup(t_end=0.003)
        result = run_simulation(spec, grid, params, c0, audit_mode="off")
        assert result.verdicts == []
        assert result.steps == 3

    def test_divergence_exhausts_step_halving_and_aborts(self):
        spec, grid, params, c0 = rough_setup(picard_max=1, t_end=1e-3)
        with pytest.raises(SimulationAborted) as info:
            run_simulation(spec, grid, params, c0)
        partial = info.value.partial
        assert partial.steps == 0
        assert partial.tau_retries == 6
        assert len(partial.records) == 1

    def test_validation_of_run_arguments(self):
        spec, grid, params, c0 = heat_setup()
        with pytest.raises(ValidationError):
            run_simulation(spec, grid, params, c0, audit_mode="loud")
        with pytest.raises(ValidationError):
            run_simulation(spec, grid, params, c0, record_every=0)

    def test_zero_eps_rejected_at_run_time(self):
        spec, grid, params, c0 = heat_setup(eps=0.0)
        with pytest.raises(ValidationError):
            run_simulation(spec, grid, params, c0)

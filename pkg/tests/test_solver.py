import numpy as np
import pytest

from dbgd import (
    Bloop,
    ConfigurationError,
    ConstantStep,
    Dbgd,
    DivergenceError,
    DynamicBarrierMin,
    GradNormSquared,
    Penalty,
    ScheduledStep,
    SmoothnessProfile,
    SolverConfig,
    best_iterate,
    inequality_audit,
    quadratic_sanity_problem,
    run,
    scheduled_step,
    toy_problem,
)


class TestScheduledStep:
    def test_unit_budget(self):
        eta, beta = scheduled_step(SmoothnessProfile(1.0, 1.0), 1, 2.5)
        assert eta == 0.5 and beta == 1.0

    def test_balanced_exponent(self):
        eta, beta = scheduled_step(SmoothnessProfile(0.5, 0.5), 10**4, 1.0)
        assert eta == pytest.approx(0.1, rel=1e-12)
        assert beta == pytest.approx(0.1, rel=1e-12)

    def test_zero_exponent_keeps_full_barrier_weight(self):
        eta, beta = scheduled_step(SmoothnessProfile(2.0, 1.0), 1000, 0.0)
        assert beta == 1.0
        assert eta == pytest.approx(1.0 / (3.0 * 10.0), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            scheduled_step(SmoothnessProfile(1.0, 1.0), 0, 0.0)
        with pytest.raises(ValueError):
            scheduled_step(SmoothnessProfile(1.0, 1.0), 10, -0.5)


class TestRun:
    def test_penalty_zero_is_gradient_descent_on_upper(self):
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Penalty(0.0),
            step=ConstantStep(0.5),
            iterations=300,
            scale_penalty_step=False,
        )
        trace = run(problem, config, np.zeros(4))
        assert np.allclose(trace.final_x, np.ones(4), atol=1e-12)

    def test_scheduled_run_reaches_frozen_thresholds(self):
        # thresholds fixed from a calibration run of this configuration
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)),
            step=ScheduledStep(1.0),
            iterations=10**4,
        )
        trace = run(problem, config, 1.5 * np.ones(4))
        k = best_iterate(trace)
        assert trace.grad_g_sq[k] <= 1e-3
        assert trace.d_sq[k] <= 1e-2

    def test_toy_run_ends_fully_aligned_or_opposed(self):
        problem = toy_problem()
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)),
            step=ConstantStep(1e-2),
            iterations=1000,
        )
        trace = run(problem, config, np.array([-3.0, -1.0]))
        assert len(trace) == 1000
        assert trace.cos_defined[-1]
        assert abs(trace.cos_theta[-1]) >= 0.99

    def test_traces_are_bitwise_deterministic(self):
        problem = quadratic_sanity_problem(5)
        config = SolverConfig(
            method=Dbgd(GradNormSquared(0.5)),
            step=ConstantStep(0.3),
            iterations=200,
        )
        x0 = 0.3 * np.ones(5)
        a, b = run(problem, config, x0), run(problem, config, x0)
        for field in ("f", "g", "lam", "d_sq", "potential", "grad_g_sq"):
            assert np.array_equal(getattr(a, field), getattr(b, field))
        assert np.array_equal(a.final_x, b.final_x)

    def test_early_stop_certifies_tolerances(self):
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)),
            step=ConstantStep(0.4),
            iterations=10**4,
            stop_tolerances=(1e-2, 1e-3),
        )
        trace = run(problem, config, 0.1 * np.ones(4))
        assert trace.stopped_early
        assert len(trace) < 10**4
        assert trace.d_sq[-1] <= 1e-2
        assert trace.grad_g_sq[-1] <= 1e-3

    def test_descent_inequalities_hold_on_quadratic(self):
        problem = quadratic_sanity_problem(6, box_radius=0.5)
        eta, beta = 0.4, 1.0
        config = SolverConfig(
            method=Dbgd(GradNormSquared(beta)),
            step=ConstantStep(eta),
            iterations=500,
        )
        trace = run(problem, config, 0.1 * np.ones(6))
        report = inequality_audit(trace, problem.smoothness, eta, beta)
        assert report.total_violations == 0

    def test_divergence_is_reported_with_iteration(self):
        problem = toy_problem()
        config = SolverConfig(
            method=Penalty(1000.0),
            step=ConstantStep(1e-2),
            iterations=200,
            scale_penalty_step=False,  # deliberately unstable
        )
        with np.errstate(over="ignore"), pytest.raises(DivergenceError) as err:
            run(problem, config, np.array([-3.0, -1.0]))
        assert err.value.iteration >= 0

    def test_dimension_mismatch_is_config_error(self):
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Penalty(0.0), step=ConstantStep(0.1), iterations=10
        )
        with pytest.raises(ConfigurationError):
            run(problem, config, np.zeros(3))
        with pytest.raises(ConfigurationError):
            run(problem, config, np.array([np.nan, 0.0, 0.0, 0.0]))

    def test_scheduled_step_requires_grad_norm_rule(self):
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Penalty(1.0), step=ScheduledStep(0.0), iterations=10
        )
        with pytest.raises(ConfigurationError):
            run(problem, config, np.zeros(4))
        config = SolverConfig(
            method=Dbgd(DynamicBarrierMin(1.0, 1.0, 0.0)),
            step=ScheduledStep(0.0),
            iterations=10,
        )
        with pytest.raises(ConfigurationError):
            run(problem, config, np.zeros(4))

    def test_large_constant_step_records_warning(self):
        problem = quadratic_sanity_problem(4)
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)),
            step=ConstantStep(0.6),  # above 1/(L_f + L_g) = 0.5
            iterations=5,
        )
        trace = run(problem, config, 0.1 * np.ones(4))
        assert any("exceeds" in w for w in trace.warnings)

    def test_penalty_step_scaling(self):
        problem = quadratic_sanity_problem(2)
        base = SolverConfig(method=Penalty(4.0), step=ConstantStep(0.5), iterations=1)
        scaled = run(problem, base, np.ones(2))
        assert scaled.eta == pytest.approx(0.1)
        unscaled = run(
            problem,
            SolverConfig(
                method=Penalty(4.0),
                step=ConstantStep(0.5),
                iterations=1,
                scale_penalty_step=False,
            ),
            np.ones(2),
        )
        assert unscaled.eta == 0.5

    def test_record_all_iterates(self):
        problem = quadratic_sanity_problem(3)
        config = SolverConfig(
            method=Penalty(0.0),
            step=ConstantStep(0.5),
            iterations=4,
            record_iterates="all",
            scale_penalty_step=False,
        )
        x0 = np.zeros(3)
        trace = run(problem, config, x0)
        assert trace.iterates.shape == (4, 3)
        assert np.array_equal(trace.iterates[0], x0)

    def test_potential_labels(self):
        problem = quadratic_sanity_problem(3)
        x0 = 0.2 * np.ones(3)
        pen = run(
            problem,
            SolverConfig(method=Penalty(1.0), step=ConstantStep(0.1), iterations=3),
            x0,
        )
        assert pen.potential_kind == "direction-only"
        assert np.allclose(pen.potential, 0.5 * pen.d_sq)
        blp = run(
            problem,
            SolverConfig(method=Bloop(0.5), step=ConstantStep(0.1), iterations=3),
            x0,
        )
        assert blp.potential_kind == "full"
        assert blp.beta == 0.5
        expected = 0.5 * blp.d_sq + (0.5 / (1.0 * 0.1)) * blp.grad_g_sq
        assert np.allclose(blp.potential, expected)

    def test_potential_is_nonnegative(self):
        problem = toy_problem()
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)), step=ConstantStep(1e-3), iterations=500
        )
        trace = run(problem, config, np.array([0.5, 0.5]))
        assert np.all(trace.potential >= 0.0)
        assert len(trace.f) == len(trace.potential) <= 500


class TestBestIterate:
    def _trace_with_potential(self, values):
        problem = quadratic_sanity_problem(2)
        config = SolverConfig(
            method=Penalty(0.0), step=ConstantStep(0.1), iterations=len(values)
        )
        trace = run(problem, config, np.zeros(2))
        trace.potential[:] = values
        return trace

    def test_argmin(self):
        assert best_iterate(self._trace_with_potential([3.0, 1.0, 2.0])) == 1

    def test_tie_breaks_to_smallest_index(self):
        assert best_iterate(self._trace_with_potential([1.0, 1.0])) == 0

    def test_monotone_decreasing_picks_last(self):
        assert best_iterate(self._trace_with_potential([5.0, 4.0, 3.0, 2.0])) == 3


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method=Penalty(0.0), step=ConstantStep(0.1), iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(
            method=Penalty(0.0),
            step=ConstantStep(0.1),
            iterations=1,
            record_iterates="some",
        )
    with pytest.raises(ValueError):
        ConstantStep(0.0)
    with pytest.raises(ValueError):
        ScheduledStep(-1.0)
    with pytest.raises(ValueError):
        Penalty(-2.0)

import numpy as np
import pytest

from tracksplit.config import SolverConfig, preset_config, validate_config
from tracksplit.operators import seminorm
from tracksplit.outer import (
    ProxFunction,
    best_fb_certificate,
    condition_check_inexact_fb,
    condition_check_pdps_inexact,
    fb_outer_step,
    mismatch_error_budget,
    mismatch_error_term,
    mismatched_pdps_step,
    pdps_outer_step,
    prox,
    prox_subgrad_violation,
    prox_value,
    run_exact_baseline,
    run_single_loop,
)
from tracksplit.problems import exact_gradient


class TestProx:
    def test_quadratic(self):
        g = ProxFunction("quadratic", gamma=1.0)
        assert prox(g, 1.0, np.array([3.0]))[0] == pytest.approx(1.5)

    def test_soft_threshold(self):
        g = ProxFunction("l1", weight=1.0)
        assert prox(g, 1.0, np.array([0.5]))[0] == 0.0
        assert prox(g, 1.0, np.array([-2.5]))[0] == pytest.approx(-1.5)

    def test_box_projection(self):
        g = ProxFunction("box", lo=[0.0], hi=[1.0])
        assert prox(g, 1.0, np.array([2.0]))[0] == 1.0

    def test_box_quadratic(self):
        g = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-0.25], hi=[0.25])
        assert prox(g, 1.0, np.array([1.0]))[0] == pytest.approx(0.25)
        assert prox(g, 1.0, np.array([0.3]))[0] == pytest.approx(0.15)

    def test_values(self):
        assert prox_value(ProxFunction("zero"), np.ones(3)) == 0.0
        assert prox_value(ProxFunction("box", lo=[0.0], hi=[1.0]), np.array([2.0])) == np.inf
        g = ProxFunction("quadratic", gamma=2.0, center=[1.0])
        assert prox_value(g, np.array([3.0])) == pytest.approx(4.0)

    def test_subgrad_violation(self):
        gl1 = ProxFunction("l1", weight=1.0)
        assert prox_subgrad_violation(gl1, np.array([2.0]), np.array([1.0])) == 0.0
        assert prox_subgrad_violation(gl1, np.array([0.0]), np.array([0.7])) == 0.0
        assert prox_subgrad_violation(gl1, np.array([2.0]), np.array([0.0])) == pytest.approx(1.0)
        gb = ProxFunction("box", lo=[0.0], hi=[1.0])
        assert prox_subgrad_violation(gb, np.array([1.0]), np.array([5.0])) == 0.0
        assert prox_subgrad_violation(gb, np.array([0.5]), np.array([5.0])) == pytest.approx(5.0)

    def test_prox_optimality_element(self, rng):
        # (v - prox(v))/tau is always a valid subgradient at the prox point
        kinds = [
            ProxFunction("zero"),
            ProxFunction("quadratic", gamma=0.7, center=[0.2, -1.0]),
            ProxFunction("l1", weight=0.3),
            ProxFunction("box", lo=[-1.0, -1.0], hi=[1.0, 0.5]),
            ProxFunction("box_quadratic", gamma=0.5, center=[0.0, 0.0], lo=[-1.0, -1.0], hi=[1.0, 1.0]),
        ]
        for g in kinds:
            for _ in range(50):
                v = rng.standard_normal(2) * 2.0
                tau = rng.uniform(0.2, 2.0)
                x = prox(g, tau, v)
                q = (v - x) / tau
                assert prox_subgrad_violation(g, x, q) < 1e-9

    def test_unsupported_kind(self):
        with pytest.raises(ValueError):
            ProxFunction("entropy")


class TestFbOuterStep:
    def test_gradient_step(self, bq1):
        g = exact_gradient(bq1, np.array([0.0]))
        x_next, qtil, subg = fb_outer_step(np.array([0.0]), g, 1.0, ProxFunction("zero"))
        assert x_next[0] == pytest.approx(0.5)
        assert qtil[0] == pytest.approx(-0.5)
        assert np.all(subg == 0.0)

    def test_fixed_point_at_stationarity(self, bq1):
        x = np.array([2.0])
        x_next, _, _ = fb_outer_step(x, exact_gradient(bq1, x), 0.7, ProxFunction("zero"))
        assert np.allclose(x_next, x, atol=1e-14)


class TestPdpsOuterStep:
    def test_saddle_reached_in_one_step(self):
        g = ProxFunction("quadratic", gamma=1.0, center=[1.0])
        h = ProxFunction("quadratic", gamma=1.0, center=[0.0])
        z, y = pdps_outer_step(np.zeros(1), np.zeros(1), np.zeros(1), 1.0, 1.0, [[1.0]], g, h)
        assert (z[0], y[0]) == (pytest.approx(0.5), pytest.approx(0.5))
        z2, y2 = pdps_outer_step(z, y, np.zeros(1), 1.0, 1.0, [[1.0]], g, h)
        assert np.allclose([z2[0], y2[0]], [0.5, 0.5], atol=1e-15)

    def test_zero_coupling_decouples(self, rng):
        g = ProxFunction("quadratic", gamma=2.0, center=[1.0])
        h = ProxFunction("quadratic", gamma=0.5, center=[0.0])
        z0, y0 = rng.standard_normal(2)
        z, y = pdps_outer_step(np.array([z0]), np.array([y0]), np.zeros(1), 0.5, 0.5, [[0.0]], g, h)
        assert z[0] == pytest.approx(prox(g, 0.5, np.array([z0]))[0])
        assert y[0] == pytest.approx(prox(h, 0.5, np.array([y0]))[0])


class TestMismatchedStep:
    def test_reduces_to_exact_when_adjoint_correct(self, rng):
        g = ProxFunction("quadratic", gamma=1.0, center=[1.0])
        h = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-1.0], hi=[1.0])
        z0, y0 = np.array([0.3]), np.array([0.2])
        a = mismatched_pdps_step(z0, y0, 0.5, 0.5, [[1.0]], [[1.0]], g, h)
        b = pdps_outer_step(z0, y0, np.zeros(1), 0.5, 0.5, [[1.0]], g, h)
        assert np.array_equal(np.concatenate(a), np.concatenate(b))
        assert mismatch_error_term([[1.0]], [[1.0]], y0, 1.0) == 0.0

    def test_error_term_formula(self):
        val = mismatch_error_term([[1.0]], [[1.01]], np.array([0.5]), 1.0)
        assert val == pytest.approx(1.25e-5)

    def test_uniform_budget(self):
        h = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-1.0], hi=[1.0])
        eps = mismatch_error_budget([[1.0]], [[1.01]], h, 1.0)
        assert eps == pytest.approx(0.5 * (0.01 * 2.0) ** 2)

    def test_requires_strong_convexity_and_bounded_domain(self):
        h_box = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-1.0], hi=[1.0])
        with pytest.raises(ValueError):
            mismatched_pdps_step(np.zeros(1), np.zeros(1), 0.5, 0.5, [[1.0]], [[1.01]],
                                 ProxFunction("zero"), h_box)
        with pytest.raises(ValueError):
            mismatched_pdps_step(np.zeros(1), np.zeros(1), 0.5, 0.5, [[1.0]], [[1.01]],
                                 ProxFunction("quadratic", gamma=1.0), ProxFunction("quadratic", gamma=1.0))


class TestFbConditions:
    def test_exact_limit_recovers_step_rule(self):
        # theta = 0 and vanishing smoothing: the weak bound is tau L < 2
        rep = condition_check_inexact_fb(1.9 / 0.25, 0.25, 0.0, 0.0, 0.5, 0.0, 0.0)
        assert rep.weak_ok and rep.weak_value == pytest.approx(1.9)
        rep = condition_check_inexact_fb(2.1 / 0.25, 0.25, 0.0, 0.0, 0.5, 0.0, 0.0)
        assert not rep.weak_ok

    def test_no_curvature_only_weak(self):
        rep = condition_check_inexact_fb(0.5, 1.0, 0.5, 0.3, 0.5, 0.0, 0.0)
        assert rep.certifies("subdifferential")
        assert not rep.certifies("linear")
        assert rep.gamma < 0.0

    def test_certificate_search_on_bq1(self):
        cert = best_fb_certificate(0.2, 0.25, 0.0, 0.0, 0.25)
        assert cert["regime"] == "linear"
        assert cert["p"] > 1.05

    def test_gamma_tilde_guard(self):
        with pytest.raises(ValueError):
            condition_check_inexact_fb(0.1, 1.0, 0.5, 0.0, 0.5, 0.0, 0.0)


class TestPdpsConditions:
    def test_formula_collapse_exact(self):
        rep = condition_check_pdps_inexact(
            1.0, 1.0, 1.0, 1.0, 0.0, 0.0, beta=0.5, zeta=1.0,
            gamma_g=0.0, gamma_hstar=0.0, gamma_f=0.0, p=1.0, mode="smoothness",
        )
        assert rep.lambda_breve == pytest.approx(1.0)
        assert rep.certified
        rep2 = condition_check_pdps_inexact(
            1.0, 1.0, 0.5, 1.0, 0.0, 0.0, beta=0.5, zeta=1.0,
            gamma_g=0.0, gamma_hstar=0.0, gamma_f=0.0, p=1.0, mode="smoothness",
        )
        assert not rep2.certified  # needs lam >= L

    def test_excess_smoothing_blocks_certificate(self):
        rep = condition_check_pdps_inexact(
            1.0, 1.0, 1.0, 0.0, 0.0, 5.0, beta=0.5, zeta=1.0,
            gamma_g=1.0, gamma_hstar=1.0, gamma_f=0.0, p=1.0, mode="smoothness",
        )
        assert rep.gamma < 0.0 and not rep.certified

    def test_saddle_instance_certificate(self):
        rep = condition_check_pdps_inexact(
            1.0, 1.0, 0.0, 0.0, 0.0, 0.0, beta=0.5, zeta=1.0,
            gamma_g=1.0, gamma_hstar=1.0, gamma_f=0.0, p=1.0, mode="smoothness",
            K=np.array([[1.0]]),
        )
        assert rep.certified and rep.step_check


class TestRunSingleLoop:
    def test_bq1_converges(self, bq1_run):
        assert bq1_run.status == "converged"
        assert abs(bq1_run.xs[-1][0] - 2.0) <= 1e-6
        assert bq1_run.n_iterations <= 500

    def test_exact_mode_matches_plain_loop_bitwise(self, bq1):
        cfg = preset_config("bq1_baseline")
        trace = run_exact_baseline(bq1, cfg)
        x = np.array(cfg.x0, dtype=float)
        for k in range(trace.n_iterations):
            x = x - cfg.outer_tau * exact_gradient(bq1, x)
            assert np.array_equal(x, trace.xs[k + 1]), f"diverged at step {k}"

    def test_baseline_ledger_errors_zero(self, bq1_baseline_run):
        assert np.all(bq1_baseline_run.scalars["e_pk"] == 0.0)
        assert np.all(bq1_baseline_run.scalars["grad_err"] == 0.0)

    def test_baseline_value_monotonicity(self, bq1_baseline_run):
        assert np.all(bq1_baseline_run.scalars["gap"] <= 1e-15)

    def test_single_loop_matches_baseline_when_inner_exact(self, bq1):
        # unit inner step solves the scalar inner problem exactly, so the
        # single-loop trace coincides with the double-loop baseline
        cfg = preset_config("bq1_single_loop")
        cfg.inner_tau = 1.0
        cfg.warm_start = "presolve"
        cfg.budget = 60
        cfg.tolerance = 0.0
        single = run_single_loop(bq1, cfg)
        cfgb = preset_config("bq1_baseline")
        cfgb.budget = 60
        cfgb.tolerance = 0.0
        double = run_exact_baseline(bq1, cfgb)
        assert np.allclose(single.xs, double.xs, atol=1e-12)

    def test_implicit_form_identity(self, bq1_run):
        for k in range(bq1_run.n_iterations):
            step = bq1_run.xs[k + 1] - bq1_run.xs[k]
            assert np.max(np.abs(bq1_run.qtil[k] + bq1_run.M.apply(step))) <= 1e-12 * (
                1.0 + np.max(np.abs(bq1_run.qtil[k]))
            )

    def test_poisson_converges(self, poisson_run):
        assert poisson_run.status == "converged"
        assert poisson_run.scalars["residual"][-1] < 1e-6

    def test_poisson_counters(self, poisson_run):
        n = poisson_run.n_iterations
        assert poisson_run.counters["inner_splitting_steps"] == n
        assert poisson_run.counters["adjoint_splitting_steps"] == n

    def test_left_omega_status(self, poisson):
        cfg = preset_config("poisson_single_loop")
        cfg.warm_start = "zero"  # wild first estimates push the iterate out
        trace = run_single_loop(poisson, cfg)
        assert trace.status == "left-omega"

    def test_baseline_vs_single_loop_limits(self, bq1_run, bq1_baseline_run):
        gap = np.linalg.norm(bq1_run.xs[-1] - bq1_baseline_run.xs[-1])
        assert gap < 1e-6

    def test_basic_adjoint_variant_runs(self, bq1):
        cfg = preset_config("bq1_single_loop")
        cfg.adjoint_variant = "basic"
        cfg.budget = 120
        trace = run_single_loop(bq1, cfg)
        assert trace.ws.shape[1] == bq1.dim_u * bq1.dim_x
        assert abs(trace.xs[-1][0] - 2.0) < 1e-2

    def test_pdps_energy_nonincreasing_on_certified_run(self, pdps_saddle_run):
        d = np.array(
            [seminorm(pdps_saddle_run.M, x - pdps_saddle_run.xbar) for x in pdps_saddle_run.xs]
        )
        assert np.all(d[1:] <= d[:-1] + 1e-12)


class TestConfigValidation:
    def test_step_rule_rejected_at_load(self):
        raw = dict(preset_config("bq1_single_loop").to_dict())
        raw["outer_tau"] = 9.0
        cfg = SolverConfig.from_dict(raw)
        with pytest.raises(Exception, match="outer_tau"):
            validate_config(cfg)

    def test_inner_step_rule(self):
        raw = dict(preset_config("bq1_single_loop").to_dict())
        raw["inner_tau"] = 1.5
        with pytest.raises(Exception, match="inner_tau"):
            validate_config(SolverConfig.from_dict(raw))

    def test_pdps_step_rule(self):
        raw = dict(preset_config("pdps_saddle_1d").to_dict())
        raw["outer_tau"] = 2.0
        with pytest.raises(Exception, match="outer_tau"):
            validate_config(SolverConfig.from_dict(raw))

    def test_unknown_field_rejected(self):
        with pytest.raises(Exception, match="wibble"):
            SolverConfig.from_dict({"wibble": 1})

    def test_x0_length(self):
        raw = dict(preset_config("bq1_single_loop").to_dict())
        raw["x0"] = [0.0, 1.0]
        with pytest.raises(Exception, match="x0"):
            validate_config(SolverConfig.from_dict(raw))


class TestOuterState:
    def test_validation(self):
        from tracksplit.operators import SkewOperator, SymOperator
        from tracksplit.outer import OuterState

        M = SymOperator.identity(2)
        Xi = SkewOperator.zero(2)
        st = OuterState(x=np.zeros(2), method="fb", M=M, Xi=Xi, tau=0.5)
        assert st.step_check_passed
        with pytest.raises(ValueError):
            OuterState(x=np.zeros(2), method="fb", M=SymOperator.diag([1.0, -1.0]), Xi=Xi, tau=0.5)
        with pytest.raises(ValueError):
            OuterState(x=np.zeros(2), method="fb", M=M, Xi=Xi, tau=-1.0)
        with pytest.raises(ValueError):
            OuterState(x=np.zeros(2), method="pdps", M=M, Xi=Xi, tau=0.5, step_check_passed=False)
        with pytest.raises(ValueError):
            OuterState(x=np.zeros(3), method="fb", M=M, Xi=Xi, tau=0.5)


class TestDualDomainValidation:
    def test_initial_dual_outside_box_rejected(self):
        raw = dict(preset_config("pdps_mismatch_small").to_dict())
        raw["x0"] = [0.0, 5.0]
        with pytest.raises(Exception, match="x0"):
            validate_config(SolverConfig.from_dict(raw))

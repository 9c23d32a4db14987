"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines on the terminal.
"""

import time

import numpy as np
import pytest

from tracksplit.diagnostics import (
    check_descent_lemma,
    check_three_point_descent,
    check_three_point_mono,
    ergodic_values,
    linear_rate_fit,
    quasi_fejer_check,
    rp_budget_check,
)
from tracksplit.inner import iteration_matrix, jacobi_step, spectral_radius, measure_inner_tracking
from tracksplit.operators import (
    SymOperator,
    pdps_preconditioner,
    pdps_step_check,
    preconditioner_bounds_check,
    seminorm,
)
from tracksplit.outer import ProxFunction, mismatch_error_budget
from tracksplit.tracking import (
    TrackingConstants,
    analytic_tracking_constants,
    error_sum_bound,
    recursion_bound,
    theta,
    theta_closed_form_bound,
)


def _line(num: int, ok: bool, text: str) -> bool:
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {text}")
    return ok


def test_criterion_1_generic_recursion():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = np.inf
    for _ in range(100):
        ku, kw = rng.uniform(1.0 + 1e-6, 4.0, size=2)
        c = TrackingConstants(ku, kw, *rng.uniform(0.05, 2.0, size=3), 0.0, 0.0)
        alpha_u, alpha_w = rng.uniform(0.0, 2.0, size=2)
        k = int(rng.integers(1, 31))
        b = [rng.uniform(0.0, 2.0)]
        cc = [rng.uniform(0.0, 2.0)]
        d = rng.uniform(0.0, 1.5, size=k)
        for j in range(k):
            sb, sc = rng.random(2)
            b.append(sb * (b[-1] + c.pi_u * d[j]) / c.kappa_u)
            cc.append(sc * (cc[-1] + c.mu_u * b[-1] + c.pi_w * d[j]) / c.kappa_w)
        bound = recursion_bound(k, alpha_u, alpha_w, c, b[0], cc[0], d)
        worst = min(worst, bound - (alpha_u * b[-1] + alpha_w * cc[-1]))
    # equality-chain fixture: recursions taken with equality reach the bound
    ones = TrackingConstants(2.0, 2.0, 1.0, 1.0, 1.0, 0.0, 0.0)
    b = [1.0]
    cc = [1.0]
    d = np.linspace(0.2, 0.8, 12)
    for j in range(12):
        b.append((b[-1] + d[j]) / 2.0)
        cc.append((cc[-1] + b[-1] + d[j]) / 2.0)
    eq_bound = recursion_bound(12, 1.0, 1.0, ones, b[0], cc[0], d)
    eq_slack = eq_bound - (b[-1] + cc[-1])
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and abs(eq_slack) <= 1e-12 and elapsed < 1.0
    assert _line(1, ok, f"recursion bound: min slack {worst:.2e}, equality slack {eq_slack:.1e}, {elapsed:.2f}s")


def test_criterion_2_theta_closed_form():
    ones = TrackingConstants(2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    val = theta(1.0, ones)
    ok = abs(val - 10.0) <= 1e-9
    rng = np.random.default_rng(2)
    for _ in range(100):
        ku, kw = rng.uniform(1.0 + 1e-6, 4.0, size=2)
        c = TrackingConstants(ku, kw, *rng.uniform(0.05, 2.0, size=3), *rng.uniform(0.0, 2.0, size=2))
        p = rng.uniform(0.2, 0.98 * c.kappa)
        ok = ok and theta(p, c) <= theta_closed_form_bound(p, c) * (1.0 + 1e-9)
    assert _line(2, ok, f"theta(all-ones) = {val:.12f}; dominated by the closed-form bound on 100 tuples")


def test_criterion_3_inner_tracking(bq1_run_200, bq1, poisson):
    c = analytic_tracking_constants(bq1, inner_tau=0.5)
    assert c.kappa_u == pytest.approx(1.5) and c.pi_u == pytest.approx(0.5)
    res = measure_inner_tracking(bq1_run_200, c, None, instance=bq1)
    ok = res.min() >= -1e-11

    x = poisson.omega.center()
    A = poisson.linear_system.A(x)
    rho = spectral_radius(iteration_matrix(A, "jacobi"))
    ustar = np.linalg.solve(A, poisson.linear_system.b(x))
    u = ustar + np.random.default_rng(3).standard_normal(poisson.dim_u)
    errs = []
    for _ in range(50):
        u = jacobi_step(u, x, poisson.linear_system)
        errs.append(np.linalg.norm(u - ustar))
    measured = (errs[45] / errs[20]) ** (1.0 / 25.0)
    ok = ok and abs(measured - rho) <= 0.05 * rho
    assert _line(3, ok, f"tracking min slack {res.min():.2e}; Jacobi factor {measured:.4f} vs radius {rho:.4f}")


def test_criterion_4_gradient_error_bound(bq1_run_200, poisson_run):
    ok = True
    msgs = []
    for label, tr in (("bq1", bq1_run_200), ("poisson", poisson_run)):
        led = tr.ledger
        th = led.theta()
        n = min(tr.n_iterations, 200)
        lam_sq = np.asarray(led.lam_sq[:n])
        slacks = th**2 * lam_sq + tr.scalars["e_pk"][:n] - tr.scalars["grad_err"][:n] ** 2
        ok = ok and slacks.min() >= -1e-9
        total = sum(led.p**k * tr.scalars["e_pk"][k] for k in range(tr.n_iterations))
        bound = error_sum_bound(led)
        ok = ok and total <= bound + 1e-12
        msgs.append(f"{label}: min slack {slacks.min():.2e}, sum {total:.2e} <= bound {bound:.2e}")
    assert _line(4, ok, "; ".join(msgs))


def test_criterion_5_single_loop_convergence(bq1_certified_run):
    tr = bq1_certified_run
    ok = tr.n_iterations <= 500 and abs(tr.xs[-1][0] - 2.0) <= 1e-6
    ok = ok and tr.scalars["residual"][-1] < 1e-8
    fit = linear_rate_fit(tr, tr.xbar, window=100)
    p_cert = tr.certificates["p"]
    ok = ok and fit.status == "ok" and abs(fit.p_est - p_cert) <= 0.1 * p_cert
    ok = ok and tr.wall_time < 2.0
    assert _line(
        5,
        ok,
        f"|x_N - 2| = {abs(tr.xs[-1][0] - 2.0):.1e} in {tr.n_iterations} iters; "
        f"residual {tr.scalars['residual'][-1]:.1e}; p_est {fit.p_est:.4f} vs certified {p_cert:.4f}; "
        f"{tr.wall_time:.2f}s",
    )


def test_criterion_6_operator_lemmas():
    rng = np.random.default_rng(6)
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]])
    qf = lambda x: 0.5 * float(x @ (Q @ x))
    qg = lambda x: Q @ x
    ncf = lambda x: float(x[0] ** 2 / 2.0 - x[0] ** 4 / 12.0)
    ncg = lambda x: np.array([x[0] - x[0] ** 3 / 3.0])
    lam_nc, gam_nc = np.array([[1.25]]), np.array([[0.0]])

    pairs_q = [(rng.standard_normal(3), rng.standard_normal(3)) for _ in range(1000)]
    pairs_nc = [(np.array([rng.uniform(-1, 1)]), np.array([rng.uniform(-1.5, 1.5)])) for _ in range(1000)]
    triples_q = [tuple(rng.standard_normal((3, 3))) for _ in range(1000)]
    triples_nc = [
        (np.array([rng.uniform(-1, 1)]), np.array([rng.uniform(-1.5, 1.5)]), np.array([rng.uniform(-1, 1)]))
        for _ in range(1000)
    ]
    collapsed = [(x, x, xb) for x, xb in (rng.standard_normal((2, 3)) for _ in range(500))]

    reports = [
        check_descent_lemma(qf, qg, Q, pairs_q),
        check_descent_lemma(ncf, ncg, lam_nc, pairs_nc),
        check_three_point_descent(qf, qg, Q, Q, None, 1e-3, triples_q),
        check_three_point_descent(ncf, ncg, lam_nc, gam_nc, None, 0.7, triples_nc),
        check_three_point_mono(qg, Q, Q, 0.5, 1.0, triples_q),
        check_three_point_mono(ncg, lam_nc, gam_nc, 0.5, 1.0, triples_nc),
    ]
    ok = all(r.min_slack >= -1e-9 for r in reports)
    falsified = [
        not check_descent_lemma(qf, qg, 0.5 * Q, pairs_q).passed,
        not check_three_point_descent(qf, qg, Q, 2.0 * Q, None, 0.25, triples_q + collapsed).passed,
        not check_three_point_mono(qg, Q, 2.0 * Q, 0.25, 0.1, triples_q + collapsed).passed,
    ]
    ok = ok and all(falsified)
    worst = min(r.min_slack for r in reports)
    assert _line(6, ok, f"six lemma checks min slack {worst:.2e}; all three falsifications detected")


def test_criterion_7_exact_pdps(pdps_saddle_run):
    tr = pdps_saddle_run
    xstar = np.array([0.5, 0.5])
    dists = np.linalg.norm(tr.xs - xstar, axis=1)
    hit = int(np.argmax(dists <= 1e-10)) if np.any(dists <= 1e-10) else -1
    ok = 0 <= hit <= 100 and np.all(dists[hit:] <= 1e-10)

    I1 = SymOperator.identity(1)
    ok = ok and pdps_step_check(1.0, 1.0, 0.0, I1, I1, [[1.0]], [[1.0]])
    M = pdps_preconditioner(1.0, 1.0, I1, I1, [[1.0]])
    ok = ok and preconditioner_bounds_check(M, I1, I1, 0.0, 1.0, 1.0, 1.0, 1.0)

    g = ProxFunction("quadratic", gamma=1.0, center=[1.0])
    h = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-2.0], hi=[2.0])
    rep = ergodic_values(tr, g, h, [[1.0]], np.array([0.5]))
    ok = ok and tr.n_iterations >= 1000 and rep.passed
    ngap = np.arange(1, tr.n_iterations + 1) * rep.extras["gaps"]
    ok = ok and np.all(ngap <= rep.extras["ball"] + 1e-9)
    assert _line(
        7,
        ok,
        f"saddle hit at iter {hit}; step/preconditioner checks pass; "
        f"ergodic bound holds for N <= {tr.n_iterations} (max N*gap {ngap.max():.3f} <= ball {rep.extras['ball']:.3f})",
    )


def test_criterion_8_adjoint_mismatch(pdps_mismatch_run):
    tr = pdps_mismatch_run
    p = 1.25
    fejer = quasi_fejer_check(tr, tr.xbar, p)
    h = ProxFunction("box_quadratic", gamma=1.0, center=[0.0], lo=[-1.0], hi=[1.0])
    eps = mismatch_error_budget([[1.0]], [[1.01]], h, 1.0)
    rp = rp_budget_check(tr, p, eps)
    gamma = tr.certificates["mismatch_gamma"]
    ok = fejer.passed and rp.passed and 1.0 < p <= 1.0 + 2.0 * gamma
    assert _line(
        8,
        ok,
        f"quasi-fejer at p={p} min slack {fejer.min_slack:.2e}; "
        f"r_p partial sums within eps/(p-1) = {eps / (p - 1.0):.2e}",
    )


def test_criterion_9_descent_quasi_monotonicity(bq1_run, bq1_certified_run, bq1_baseline_run):
    ok = True
    msgs = []
    for label, tr in (
        ("bq1", bq1_run),
        ("bq1-certified", bq1_certified_run),
        ("baseline", bq1_baseline_run),
    ):
        eta = tr.certificates.get("eta_weak")
        assert eta is not None, f"{label} run is not certified"
        err = tr.scalars["errDesc"]
        slacks = np.empty(tr.n_iterations)
        for k in range(tr.n_iterations):
            step_sq = seminorm(tr.M, tr.xs[k + 1] - tr.xs[k]) ** 2
            slacks[k] = err[k] - tr.scalars["gap"][k] - eta * step_sq
        ok = ok and slacks.min() >= -1e-9
        msgs.append(f"{label}: min slack {slacks.min():.2e}")
    assert _line(9, ok, "; ".join(msgs))


def test_criterion_10_determinism_and_cost(tmp_path, poisson_run, bq1_run, bq1_certified_run, pdps_saddle_run):
    from tracksplit.cli import main

    main(["run", "--preset", "bq1_single_loop", "--out", str(tmp_path / "a"), "--budget", "120"])
    main(["run", "--preset", "bq1_single_loop", "--out", str(tmp_path / "b"), "--budget", "120"])
    a = (tmp_path / "a" / "bq1_single_loop" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "bq1_single_loop" / "trace.csv").read_bytes()
    ok = a == b

    n = poisson_run.n_iterations
    ok = ok and poisson_run.counters["inner_splitting_steps"] == n
    ok = ok and poisson_run.counters["adjoint_splitting_steps"] == n

    total = sum(tr.wall_time for tr in (poisson_run, bq1_run, bq1_certified_run, pdps_saddle_run))
    ok = ok and total < 30.0
    assert _line(
        10,
        ok,
        f"byte-identical traces; poisson: {n} iters = {poisson_run.counters['inner_splitting_steps']} "
        f"inner + {poisson_run.counters['adjoint_splitting_steps']} adjoint sweeps; "
        f"core runs took {total:.1f}s",
    )

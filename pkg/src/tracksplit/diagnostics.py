"""Per-step and per-run certificate checks over iterate traces.

Each check evaluates one proved inequality of the method family as a signed
slack series: nonnegative slack (within tolerance) certifies the inequality
held on the run.  Check names double as citation tags into the certificate
catalog in the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .adjoint import measure_adjoint_tracking
from .inner import measure_inner_tracking
from .operators import SkewOperator, SymOperator, quad_form, seminorm, young_companion
from .outer import ProxFunction, prox_subgrad_violation, prox_value
from .tracking import error_sum_bound
from .trace import IterateTrace

__all__ = [
    "CheckReport",
    "lagrangian_gap",
    "descent_check",
    "quasi_fejer_check",
    "subdiff_residual",
    "linear_rate_fit",
    "RateFit",
    "ergodic_values",
    "conjugate_value",
    "check_descent_lemma",
    "check_three_point_descent",
    "check_three_point_mono",
    "robbins_check",
    "RobbinsResult",
    "implicit_form_check",
    "weighted_step_sum_check",
    "error_sum_check",
    "gradient_error_report",
    "rp_budget_check",
    "run_all_checks",
]

BASE_TOL = 1e-9


@dataclass
class CheckReport:
    """Outcome of one inequality check over a run.

    ``scale`` is 1 + the largest term magnitude encountered; the pass
    tolerance is BASE_TOL * scale unless a check overrides it.
    """

    name: str
    citation: str
    slacks: np.ndarray
    tolerance: float
    extras: dict = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slacks)) if self.slacks.size else 0.0

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "citation": self.citation,
            "min_slack": self.min_slack,
            "pass": bool(self.passed),
            "tolerance": self.tolerance,
            "n": int(self.slacks.size),
        }


def _report(name: str, citation: str, slacks, scale: float = 0.0, tol: Optional[float] = None, **extras) -> CheckReport:
    slacks = np.asarray(slacks, dtype=float)
    tolerance = tol if tol is not None else BASE_TOL * (1.0 + scale)
    return CheckReport(name=name, citation=citation, slacks=slacks, tolerance=tolerance, extras=extras)


# ---------------------------------------------------------------------------
# Gap and per-step checks over traces
# ---------------------------------------------------------------------------

def lagrangian_gap(x, xbar, F_eval: Callable, G_eval: Callable, Xi: Optional[SkewOperator]) -> float:
    """Merit value [F+G](x) - [F+G](xbar) - <Xi x, xbar>; +inf outside Dom G."""
    gx = G_eval(x)
    if not np.isfinite(gx):
        return math.inf
    val = F_eval(x) + gx - F_eval(xbar) - G_eval(xbar)
    if Xi is not None:
        val -= float(Xi.apply(np.asarray(x, dtype=float)) @ np.asarray(xbar, dtype=float))
    return float(val)


def descent_check(
    trace: IterateTrace,
    lambda_breve: SymOperator,
    err_desc: Optional[np.ndarray] = None,
    eta: Optional[float] = None,
) -> CheckReport:
    """Per-step descent inequality of the implicit form.

    slack_k = <q^{k+1}, x^{k+1}-x^k> - G(x^{k+1};x^k)
              + ||x^{k+1}-x^k||^2_Lb / 2 + errDesc^k  >= 0.

    When ``eta`` is given, the derived value quasi-monotonicity
    G(x^{k+1};x^k) + eta ||x^{k+1}-x^k||^2_M <= errDesc^k is attached as a
    companion report.
    """
    n = trace.n_iterations
    err = np.asarray(err_desc if err_desc is not None else trace.scalars["errDesc"], dtype=float)
    gaps = trace.scalars["gap"]
    slacks = np.empty(n)
    scale = 0.0
    for k in range(n):
        step = trace.xs[k + 1] - trace.xs[k]
        inner = float(trace.qtil[k] @ step)
        half = 0.5 * quad_form(lambda_breve, step)
        slacks[k] = inner - gaps[k] + half + err[k]
        scale = max(scale, abs(inner), abs(gaps[k]), half, abs(err[k]))
    rep = _report("descent-step", "cert:descent-step", slacks, scale)
    if eta is not None and trace.M is not None:
        mono = np.empty(n)
        mscale = 0.0
        for k in range(n):
            step_m = seminorm(trace.M, trace.xs[k + 1] - trace.xs[k]) ** 2
            mono[k] = err[k] - gaps[k] - eta * step_m
            mscale = max(mscale, abs(gaps[k]), eta * step_m, abs(err[k]))
        rep.extras["companion"] = _report(
            "value-quasi-monotonicity", "cert:value-quasi-monotonicity", mono, mscale
        )
    return rep


def quasi_fejer_check(
    trace: IterateTrace,
    xbar: np.ndarray,
    p: float,
    err: Optional[np.ndarray] = None,
    delta: Optional[float] = None,
) -> CheckReport:
    """p-strongly quasi-Fejer monotonicity toward xbar in the M-seminorm.

    slack_k = ||x^k - xbar||^2_M / 2 + err^k - p ||x^{k+1} - xbar||^2_M / 2.
    With ``delta`` supplied, ball containment ||x^k - xbar||_M < delta is
    reported alongside.
    """
    if trace.M is None:
        raise ValueError("trace has no preconditioner")
    xbar = np.asarray(xbar, dtype=float)
    err = np.asarray(err if err is not None else trace.scalars["errMono"], dtype=float)
    n = trace.n_iterations
    slacks = np.empty(n)
    scale = 0.0
    dists = np.array([seminorm(trace.M, trace.xs[k] - xbar) for k in range(n + 1)])
    for k in range(n):
        slacks[k] = 0.5 * dists[k] ** 2 + err[k] - 0.5 * p * dists[k + 1] ** 2
        scale = max(scale, 0.5 * dists[k] ** 2, 0.5 * p * dists[k + 1] ** 2, abs(err[k]))
    rep = _report("quasi-fejer", "cert:quasi-fejer", slacks, scale, p=p)
    if delta is not None:
        ball = delta - dists
        rep.extras["ball"] = _report("non-escape-ball", "cert:non-escape-ball", ball, delta)
    return rep


def subdiff_residual(trace: IterateTrace, k: int, fprime: Callable[[np.ndarray], np.ndarray]) -> float:
    """Norm of the certified optimality-system element at x^{k+1}.

    Collapses to ||F'(x^{k+1}) - grad_est^k + q^{k+1}|| via the recorded
    subgradient element of the prox step.
    """
    return float(np.linalg.norm(np.asarray(fprime(trace.xs[k + 1]), dtype=float) - trace.grad_est[k] + trace.qtil[k]))


@dataclass(frozen=True)
class RateFit:
    p_est: Optional[float]
    status: str  # "ok" | "converged-exactly" | "too-short"
    window: int


def linear_rate_fit(trace: IterateTrace, xbar: np.ndarray, window: int) -> RateFit:
    """Least-squares geometric rate of ||x^k - xbar||^2_M over a trailing window.

    Returns p_est = exp(-slope); a plateau fits p_est ~ 1, a geometric decay
    d^2 ~ c^-k fits p_est = c.
    """
    if trace.M is None:
        raise ValueError("trace has no preconditioner")
    xbar = np.asarray(xbar, dtype=float)
    n = trace.n_iterations
    if n + 1 < window + 1:
        return RateFit(None, "too-short", window)
    dists = np.array([seminorm(trace.M, trace.xs[k] - xbar) for k in range(n + 1)])
    tail = dists[-window - 1 :]
    if np.any(tail <= 0.0) or np.any(tail**2 < 1e-280):
        return RateFit(None, "converged-exactly", window)
    ks = np.arange(tail.size, dtype=float)
    slope = np.polyfit(ks, np.log(tail**2), 1)[0]
    return RateFit(float(np.exp(-slope)), "ok", window)


def conjugate_value(h_star: ProxFunction, v: np.ndarray) -> float:
    """Convex conjugate of a proximable dual term, evaluated at v."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if h_star.kind == "zero":
        raise ValueError("conjugate of the zero function is an indicator; unsupported")
    if h_star.kind == "quadratic":
        a = h_star.center if h_star.center is not None else np.zeros(v.size)
        return float(a @ v + (v @ v) / (2.0 * h_star.gamma))
    if h_star.kind == "box":
        return float(np.sum(np.maximum(h_star.lo * v, h_star.hi * v)))
    if h_star.kind == "box_quadratic":
        a = h_star.center if h_star.center is not None else np.zeros(v.size)
        y = np.clip(a + v / h_star.gamma, h_star.lo, h_star.hi)
        return float(y @ v - 0.5 * h_star.gamma * np.sum((y - a) ** 2))
    raise ValueError(f"no conjugate rule for kind {h_star.kind!r}")


def ergodic_values(
    trace: IterateTrace,
    g: ProxFunction,
    h_star: ProxFunction,
    K: np.ndarray,
    zbar: np.ndarray,
    f_eval: Optional[Callable[[np.ndarray], float]] = None,
    f_convex: bool = True,
    ledger_sums: Optional[np.ndarray] = None,
) -> CheckReport:
    """Value-gap decay of the running primal averages against the ball bound.

    For each horizon N, checks
        [f+g+h o K](mean z^k) - [f+g+h o K](zbar)
            <= sup_{yhat in Dom h*} ||x^0 - (zbar, yhat)||^2_M / (2N)
               + ledger_sums[N] / N.
    Requires a convex smooth part (the value at the average is otherwise not
    comparable) and a bounded dual domain.
    """
    if not f_convex:
        raise ValueError("ergodic value bound requires a convex smooth part")
    if not np.isfinite(h_star.domain_diameter()):
        raise ValueError("ergodic value bound requires a bounded dual domain")
    if trace.M is None:
        raise ValueError("trace has no preconditioner")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    dz = K.shape[1]
    zbar = np.asarray(zbar, dtype=float)
    fe = f_eval if f_eval is not None else (lambda z: 0.0)

    def objective(z):
        return fe(z) + prox_value(g, z) + conjugate_value(h_star, K @ z)

    obj_bar = objective(zbar)
    x0 = trace.xs[0]
    ball = 0.0
    for corner in h_star.domain_corners():
        ref = np.concatenate([zbar, corner])
        ball = max(ball, seminorm(trace.M, x0 - ref) ** 2)

    n = trace.n_iterations
    zs = trace.xs[:, :dz]
    csum = np.cumsum(zs[:-1], axis=0)
    slacks = np.empty(n)
    gaps = np.empty(n)
    bounds = np.empty(n)
    scale = 0.0
    for N in range(1, n + 1):
        z_tilde = csum[N - 1] / N
        gaps[N - 1] = objective(z_tilde) - obj_bar
        extra = float(ledger_sums[N - 1]) / N if ledger_sums is not None else 0.0
        bounds[N - 1] = ball / (2.0 * N) + extra
        slacks[N - 1] = bounds[N - 1] - gaps[N - 1]
        scale = max(scale, abs(gaps[N - 1]), bounds[N - 1])
    return _report(
        "ergodic-values", "cert:ergodic-values", slacks, scale, gaps=gaps, bounds=bounds, ball=ball
    )


# ---------------------------------------------------------------------------
# Operator-relative regularity checks on sampled points
# ---------------------------------------------------------------------------

def _q(matrix: np.ndarray, v: np.ndarray) -> float:
    return float(v @ (matrix @ v))


def _entries(op) -> np.ndarray:
    return op.entries if isinstance(op, SymOperator) else np.atleast_2d(np.asarray(op, dtype=float))


def check_descent_lemma(F_eval, DF_eval, Lambda, sample_pairs) -> CheckReport:
    """Curvature upper bound: F(x) - F(z) - <DF(z), x-z> <= ||z-x||^2_Lambda / 2."""
    L = _entries(Lambda)
    slacks = []
    scale = 0.0
    for z, x in sample_pairs:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lhs = F_eval(x) - F_eval(z) - float(np.atleast_1d(DF_eval(z)) @ (x - z))
        rhs = 0.5 * _q(L, x - z)
        slacks.append(rhs - lhs)
        scale = max(scale, abs(lhs), rhs)
    return _report("operator-descent-lemma", "cert:operator-descent", slacks, scale)


def check_three_point_descent(
    F_eval, DF_eval, Lambda, Gamma, Gamma_abs, beta: float, samples
) -> CheckReport:
    """Three-point descent with curvature Lambda and monotonicity weight Gamma.

    samples are triples (z, x, xbar) with z, xbar in the monotonicity
    neighbourhood; x may range outside it.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    L, G = _entries(Lambda), _entries(Gamma)
    Gabs = _entries(Gamma_abs) if Gamma_abs is not None else young_companion(SymOperator(G)).entries
    A1 = G - beta * Gabs
    A2 = L + (1.0 / beta) * Gabs - G
    slacks = []
    scale = 0.0
    for z, x, xbar in samples:
        z, x, xbar = (np.atleast_1d(np.asarray(t, dtype=float)) for t in (z, x, xbar))
        lhs = float(np.atleast_1d(DF_eval(z)) @ (x - xbar))
        rhs = F_eval(x) - F_eval(xbar) + 0.5 * _q(A1, x - xbar) - 0.5 * _q(A2, x - z)
        slacks.append(lhs - rhs)
        scale = max(scale, abs(lhs), abs(rhs))
    return _report("three-point-descent", "cert:three-point-descent", slacks, scale)


def check_three_point_mono(DF_eval, Lambda, Gamma, beta: float, zeta: float, samples) -> CheckReport:
    """Three-point monotonicity with the curvature-shifted weight."""
    if beta <= 0.0 or zeta <= 0.0:
        raise ValueError("beta and zeta must be positive")
    L, G = _entries(Lambda), _entries(Gamma)
    Gt = G - 0.5 * zeta * L
    Gt_abs = young_companion(SymOperator(0.5 * (Gt + Gt.T))).entries
    A1 = Gt - beta * Gt_abs
    A2 = L / (2.0 * zeta) + (1.0 / beta) * Gt_abs - Gt
    slacks = []
    scale = 0.0
    for z, x, xbar in samples:
        z, x, xbar = (np.atleast_1d(np.asarray(t, dtype=float)) for t in (z, x, xbar))
        lhs = float((np.atleast_1d(DF_eval(z)) - np.atleast_1d(DF_eval(xbar))) @ (x - xbar))
        rhs = _q(A1, x - xbar) - _q(A2, x - z)
        slacks.append(lhs - rhs)
        scale = max(scale, abs(lhs), abs(rhs))
    return _report("three-point-monotonicity", "cert:three-point-monotonicity", slacks, scale)


@dataclass(frozen=True)
class RobbinsResult:
    limit_estimate: float
    d_partial_sums: np.ndarray
    violation_index: Optional[int]


def robbins_check(a, b, c, d, tol: float = 1e-12) -> RobbinsResult:
    """Verify the damped recursion a_{k+1} <= a_k (1+b_k) + c_k - d_k.

    All four series must be nonnegative.  Returns the final value of a as
    the limit estimate and the monotone partial sums of d; a violated index
    is reported in the result.
    """
    a, b, c, d = (np.asarray(t, dtype=float) for t in (a, b, c, d))
    if min(a.min(), b.min(), c.min(), d.min()) < 0.0:
        raise ValueError("series must be nonnegative")
    n = min(b.size, c.size, d.size, a.size - 1)
    violation = None
    for k in range(n):
        bound = a[k] * (1.0 + b[k]) + c[k] - d[k]
        if a[k + 1] > bound + tol * (1.0 + abs(bound)):
            violation = k
            break
    return RobbinsResult(
        limit_estimate=float(a[n]),
        d_partial_sums=np.cumsum(d[:n]),
        violation_index=violation,
    )


# ---------------------------------------------------------------------------
# Whole-run orchestration
# ---------------------------------------------------------------------------

def implicit_form_check(trace: IterateTrace, g: ProxFunction, h_star: Optional[ProxFunction] = None) -> CheckReport:
    """Bookkeeping identity of the implicit method.

    Verifies q^{k+1} = -M(x^{k+1}-x^k) to 1e-12 and that the recorded
    subgradient element is valid for the prox term(s) at x^{k+1}; for the
    primal-dual method the element is checked blockwise.
    """
    n = trace.n_iterations
    slacks = np.empty(n)
    mismatch = trace.method == "pdps-mismatch"
    for k in range(n):
        step = trace.xs[k + 1] - trace.xs[k]
        iden = float(np.max(np.abs(trace.qtil[k] + trace.M.apply(step))))
        if h_star is None:
            viol = prox_subgrad_violation(g, trace.xs[k + 1], trace.subgrad[k])
        else:
            dz = trace.xs.shape[1] - h_star_dim(h_star, trace)
            viol = max(
                prox_subgrad_violation(g, trace.xs[k + 1][:dz], trace.subgrad[k][:dz]),
                prox_subgrad_violation(h_star, trace.xs[k + 1][dz:], trace.subgrad[k][dz:]),
            )
            if not mismatch:
                # identity qtil - grad - Xi x^{k+1} = subgrad
                recon = trace.qtil[k] - trace.grad_est[k] - trace.Xi.apply(trace.xs[k + 1])
                iden = max(iden, float(np.max(np.abs(recon - trace.subgrad[k]))))
        slacks[k] = 1e-12 * (1.0 + float(np.max(np.abs(trace.qtil[k])))) - iden
        slacks[k] = min(slacks[k], -viol + 1e-9)
    return _report("implicit-form", "cert:implicit-form", slacks, 0.0, tol=0.0)


def h_star_dim(h_star: ProxFunction, trace: IterateTrace) -> int:
    if h_star.lo is not None:
        return h_star.lo.size
    if h_star.center is not None:
        return h_star.center.size
    return trace.ws.shape[1]


def weighted_step_sum_check(trace: IterateTrace, p: float, eta: float, r_p: float, xbar) -> CheckReport:
    """Budget-bounded version of the weighted squared-step sum bound.

    Checks sum_{k<N} p^{k-N} ||x^{k+1}-x^k||^2_M <= delta^2 / eta for every
    horizon N within the run, with delta^2 = ||x^0 - xbar||^2_M + 2 r_p.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    delta_sq = seminorm(trace.M, trace.xs[0] - np.asarray(xbar, dtype=float)) ** 2 + 2.0 * max(r_p, 0.0)
    steps = trace.scalars["step_norm_M"] ** 2
    n = steps.size
    slacks = np.empty(n)
    for N in range(1, n + 1):
        weights = p ** (np.arange(N) - N)
        slacks[N - 1] = delta_sq / eta - float(weights @ steps[:N])
    return _report("weighted-step-sum", "cert:weighted-step-sum", slacks, delta_sq / eta)


def error_sum_check(trace: IterateTrace) -> CheckReport:
    """Ledger error sums dominated by their closed-form bound."""
    if trace.ledger is None:
        raise ValueError("trace has no ledger")
    led = trace.ledger
    p = led.p
    epks = trace.scalars["e_pk"]
    bound = error_sum_bound(led)
    partial = 0.0
    slacks = np.empty(epks.size)
    for k in range(epks.size):
        partial += p**k * epks[k]
        slacks[k] = bound - partial
    return _report("error-sum", "cert:error-sum", slacks, abs(bound), bound=bound)


def gradient_error_report(trace: IterateTrace) -> CheckReport:
    """Per-step certified bound on the squared gradient-estimate error.

    Uses the recorded ledger columns: the bound at comparison point x^{k+1}
    is theta^2 lam^2(x^{k+1}, x^k) + e_{p,k}(x^{k+1}) against the stored
    estimate error of iteration k.
    """
    if trace.ledger is None:
        raise ValueError("gradient error check needs a ledger")
    led = trace.ledger
    n = trace.n_iterations
    th = led.theta()
    lam_sq = np.asarray(led.lam_sq[:n])
    rhs = th**2 * lam_sq + trace.scalars["e_pk"]
    lhs = trace.scalars["grad_err"] ** 2
    slacks = rhs - lhs
    return _report("gradient-error", "cert:gradient-error", slacks, float(np.max(np.abs(rhs)) if n else 0.0))


def rp_budget_check(trace: IterateTrace, p: float, epsilon: float) -> CheckReport:
    """Mismatch error budget: weighted partial sums below epsilon / (p-1)."""
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    err = trace.scalars["errMono"]
    n = err.size
    slacks = np.empty(n)
    bound = epsilon / (p - 1.0)
    for N in range(1, n + 1):
        weights = p ** (np.arange(N) - N)
        slacks[N - 1] = bound + 1e-12 - float(weights @ err[:N])
    return _report("rp-budget", "cert:rp-budget", slacks, bound, bound=bound)


def run_all_checks(trace: IterateTrace, enabled: Optional[list] = None) -> list[CheckReport]:
    """Run every check applicable to the trace's method; optionally a subset."""
    from .outer import mismatch_error_budget

    reports: list[CheckReport] = []
    cfg = trace.config
    method = trace.method

    def want(name: str) -> bool:
        return enabled is None or name in enabled

    g = _prox_from_dict(cfg.get("prox"))
    h_star = _prox_from_dict(cfg.get("h_star")) if cfg.get("h_star") else None

    if want("implicit-form"):
        reports.append(implicit_form_check(trace, g, h_star))

    certs = trace.certificates or {}
    if method.startswith("fb") and want("descent-step"):
        L = certs.get("L", 0.0)
        th = certs.get("theta", 0.0)
        gt = certs.get("gt_desc")
        dim = trace.xs.shape[1]
        lam_entries = L * np.eye(dim)
        if gt and th:
            lam_entries = (1.0 + th**2 / gt) * lam_entries + gt * trace.M.entries
        rep = descent_check(trace, SymOperator(lam_entries), eta=certs.get("eta_weak"))
        reports.append(rep)
        if "companion" in rep.extras:
            reports.append(rep.extras["companion"])

    if trace.ledger is not None:
        # tracking measurements read x^k directly; they apply to runs whose
        # iterate is the inner problem's parameter (forward-backward outer)
        fb_like = not method.startswith("pdps")
        if want("inner-tracking") and trace.n_iterations >= 2 and fb_like:
            slacks = measure_inner_tracking(trace, trace.constants, trace.ledger.step_metric)
            reports.append(_report("inner-tracking", "cert:inner-tracking", slacks, float(np.abs(slacks).max(initial=0.0))))
        if want("adjoint-tracking") and trace.n_iterations >= 2 and fb_like:
            slacks = measure_adjoint_tracking(
                trace, trace.constants, trace.ledger.step_metric, variant=cfg.get("adjoint_variant", "reduced")
            )
            reports.append(_report("adjoint-tracking", "cert:adjoint-tracking", slacks, float(np.abs(slacks).max(initial=0.0))))
        if want("gradient-error"):
            reports.append(gradient_error_report(trace))
        if want("error-sum"):
            reports.append(error_sum_check(trace))

    if trace.xbar is not None and want("quasi-fejer"):
        if method == "pdps-mismatch":
            p = cfg.get("p", 1.0)
            reports.append(quasi_fejer_check(trace, trace.xbar, p))
        elif method.startswith("fb") and certs.get("regime") in ("non-escape", "linear"):
            p_cert = certs.get("p", 1.0)
            reports.append(quasi_fejer_check(trace, trace.xbar, 1.0))
            if p_cert > 1.0:
                reports.append(
                    _rename(quasi_fejer_check(trace, trace.xbar, p_cert), "quasi-fejer-strong")
                )

    if method == "pdps-mismatch" and want("rp-budget"):
        K = np.atleast_2d(np.asarray(cfg["K"], dtype=float))
        Ka = np.atleast_2d(np.asarray(cfg["K_adj_mismatched"], dtype=float))
        eps = mismatch_error_budget(K, Ka, h_star, g.gamma_G)
        reports.append(rp_budget_check(trace, cfg.get("p", 1.25), eps))

    if method == "pdps-exact" and trace.xbar is not None and certs.get("regime") == "pdps-certified" and want("quasi-fejer"):
        reports.append(
            quasi_fejer_check(trace, trace.xbar, 1.0, err=np.zeros(trace.n_iterations))
        )

    if method == "pdps-exact" and h_star is not None and np.isfinite(h_star.domain_diameter()) and trace.xbar is not None and want("ergodic-values"):
        K = np.atleast_2d(np.asarray(cfg["K"], dtype=float))
        reports.append(ergodic_values(trace, g, h_star, K, trace.xbar[: K.shape[1]]))

    return reports


def _rename(rep: CheckReport, name: str) -> CheckReport:
    rep.name = name
    return rep


def _prox_from_dict(spec: Optional[dict]) -> ProxFunction:
    if spec is None:
        return ProxFunction("zero")
    return ProxFunction(
        kind=spec["kind"],
        gamma=float(spec.get("gamma", 0.0)),
        center=spec.get("center"),
        weight=float(spec.get("weight", 0.0)),
        lo=spec.get("lo"),
        hi=spec.get("hi"),
    )

"""Outer splitting methods with inexact gradient estimates.

Implements the prox library, the inexact forward-backward and primal-dual
steps (including a mismatched-adjoint variant), step-length/growth condition
checks, and the single-loop driver that interleaves one (or a few) inner and
adjoint solver sweeps with each outer step.

Every outer step is recorded in implicit form: the driver stores
q^{k+1} = -M(x^{k+1} - x^k), which lies in
grad_est + dG(x^{k+1}) + Xi x^{k+1} by construction of the prox steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adjoint import (
    basic_adjoint_step,
    differential_transform_basic,
    differential_transform_reduced,
    reduced_adjoint_step,
)
from .inner import fb_inner_step, gauss_seidel_step, jacobi_step
from .operators import (
    SkewOperator,
    SymOperator,
    dual_seminorm,
    pdps_preconditioner,
    pdps_step_check,
    seminorm,
)
from .problems import (
    BilevelInstance,
    exact_gradient,
    eval_objective,
    solve_basic_adjoint_exact,
    solve_inner_exact,
    solve_reduced_adjoint_exact,
)
from .tracking import (
    ErrorLedger,
    TrackingConstants,
    analytic_tracking_constants,
    empirical_tracking_constants,
    theta,
)
from .trace import IterateTrace

__all__ = [
    "ProxFunction",
    "prox",
    "prox_value",
    "prox_subgrad_violation",
    "fb_outer_step",
    "pdps_outer_step",
    "mismatched_pdps_step",
    "FBConditionReport",
    "PDPSConditionReport",
    "condition_check_inexact_fb",
    "condition_check_inexact_fb_mono",
    "best_fb_certificate",
    "condition_check_pdps_inexact",
    "estimate_outer_smoothness",
    "run_single_loop",
    "run_exact_baseline",
]


# ---------------------------------------------------------------------------
# Prox library
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProxFunction:
    """Closed-form proximable function.

    kinds: "zero"; "quadratic" gamma/2 ||x-a||^2; "l1" weight ||x||_1;
    "box" indicator of [lo, hi]; "box_quadratic" gamma/2 ||x-a||^2 + box
    indicator.  ``gamma_G`` is the strong-convexity modulus.
    """

    kind: str
    gamma: float = 0.0
    center: Optional[np.ndarray] = None
    weight: float = 0.0
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic", "l1", "box", "box_quadratic"):
            raise ValueError(f"unsupported prox kind {self.kind!r}")
        if self.kind in ("quadratic", "box_quadratic") and self.gamma < 0.0:
            raise ValueError("quadratic weight must be nonnegative")
        for name in ("center", "lo", "hi"):
            v = getattr(self, name)
            if v is not None:
                arr = np.atleast_1d(np.asarray(v, dtype=float))
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.kind in ("box", "box_quadratic"):
            if self.lo is None or self.hi is None or np.any(self.lo > self.hi):
                raise ValueError("box prox needs valid bounds")

    @property
    def gamma_G(self) -> float:
        return self.gamma if self.kind in ("quadratic", "box_quadratic") else 0.0

    def domain_diameter(self) -> float:
        if self.kind in ("box", "box_quadratic"):
            return float(np.linalg.norm(self.hi - self.lo))
        return np.inf

    def domain_corners(self) -> np.ndarray:
        if self.kind not in ("box", "box_quadratic"):
            raise ValueError("only box-domain kinds have corners")
        d = self.lo.size
        out = np.empty((2**d, d))
        for i in range(2**d):
            for j in range(d):
                out[i, j] = self.hi[j] if (i >> j) & 1 else self.lo[j]
        return out


def _center(g: ProxFunction, dim: int) -> np.ndarray:
    return g.center if g.center is not None else np.zeros(dim)


def prox(g: ProxFunction, tau: float, v: np.ndarray) -> np.ndarray:
    """Exact minimizer of g(x) + ||x - v||^2 / (2 tau)."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    v = np.asarray(v, dtype=float)
    if g.kind == "zero":
        return v.copy()
    if g.kind == "quadratic":
        a = _center(g, v.size)
        return (v + tau * g.gamma * a) / (1.0 + tau * g.gamma)
    if g.kind == "l1":
        t = tau * g.weight
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    if g.kind == "box":
        return np.clip(v, g.lo, g.hi)
    # box_quadratic: coordinatewise clip of the unconstrained quadratic prox
    a = _center(g, v.size)
    return np.clip((v + tau * g.gamma * a) / (1.0 + tau * g.gamma), g.lo, g.hi)


def prox_value(g: ProxFunction, x: np.ndarray) -> float:
    """Function value; +inf outside a box domain."""
    x = np.asarray(x, dtype=float)
    if g.kind == "zero":
        return 0.0
    if g.kind == "quadratic":
        return 0.5 * g.gamma * float(np.sum((x - _center(g, x.size)) ** 2))
    if g.kind == "l1":
        return g.weight * float(np.sum(np.abs(x)))
    inside = bool(np.all(x >= g.lo - 1e-12) and np.all(x <= g.hi + 1e-12))
    if not inside:
        return np.inf
    if g.kind == "box":
        return 0.0
    return 0.5 * g.gamma * float(np.sum((x - _center(g, x.size)) ** 2))


def prox_subgrad_violation(g: ProxFunction, x: np.ndarray, q: np.ndarray, tol: float = 1e-9) -> float:
    """How far q is from being a subgradient of g at x (0 means valid)."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if g.kind == "zero":
        return float(np.linalg.norm(q))
    if g.kind == "quadratic":
        return float(np.linalg.norm(q - g.gamma * (x - _center(g, x.size))))
    if g.kind == "l1":
        v = 0.0
        for xi, qi in zip(x, q):
            if xi > tol:
                v = max(v, abs(qi - g.weight))
            elif xi < -tol:
                v = max(v, abs(qi + g.weight))
            else:
                v = max(v, max(abs(qi) - g.weight, 0.0))
        return v
    # box kinds: residual after removing the quadratic part must be a valid
    # normal-cone element of the box at x
    r = q if g.kind == "box" else q - g.gamma * (x - _center(g, x.size))
    v = 0.0
    for xi, ri, lo, hi in zip(x, r, g.lo, g.hi):
        if xi < lo - tol or xi > hi + tol:
            return np.inf
        at_lo = xi <= lo + tol
        at_hi = xi >= hi - tol
        if at_lo and ri < 0.0:
            continue
        if at_hi and ri > 0.0:
            continue
        v = max(v, abs(ri))
    return v


# ---------------------------------------------------------------------------
# Outer steps
# ---------------------------------------------------------------------------

def fb_outer_step(
    x: np.ndarray, grad_estimate: np.ndarray, tau: float, G: ProxFunction
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward-backward step prox_{tau G}(x - tau grad).

    Returns (x_next, qtil, subgrad) where qtil = -(x_next - x)/tau is the
    implicit-form element and subgrad = qtil - grad_estimate is the recorded
    element of dG(x_next) from the prox optimality condition.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad_estimate, dtype=float)
    x_next = prox(G, tau, x - tau * grad)
    qtil = -(x_next - x) / tau
    return x_next, qtil, qtil - grad


def pdps_outer_step(
    z: np.ndarray,
    y: np.ndarray,
    grad_estimate_f: np.ndarray,
    tau: float,
    sigma: float,
    K: np.ndarray,
    g: ProxFunction,
    h_star: ProxFunction,
) -> tuple[np.ndarray, np.ndarray]:
    """One primal-dual step with an inexact gradient for the smooth part."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    z_next = prox(g, tau, z - tau * np.asarray(grad_estimate_f, dtype=float) - tau * (K.T @ y))
    y_next = prox(h_star, sigma, y + sigma * (K @ (2.0 * z_next - z)))
    return z_next, y_next


def mismatched_pdps_step(
    z: np.ndarray,
    y: np.ndarray,
    tau: float,
    sigma: float,
    K: np.ndarray,
    K_adj_mismatched: np.ndarray,
    g: ProxFunction,
    h_star: ProxFunction,
) -> tuple[np.ndarray, np.ndarray]:
    """Primal-dual step using a wrong adjoint in the primal update (f = 0).

    Requires a strongly convex g and a bounded dual domain for the error
    budget to be summable; the per-step error is
    ||(K_adj - K^T) y^k||^2 / (2 gamma_g).
    """
    if g.gamma_G <= 0.0:
        raise ValueError("mismatched adjoint needs a strongly convex primal term")
    if not np.isfinite(h_star.domain_diameter()):
        raise ValueError("mismatched adjoint needs a bounded dual domain")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Ka = np.atleast_2d(np.asarray(K_adj_mismatched, dtype=float))
    z_next = prox(g, tau, z - tau * (Ka @ y))
    y_next = prox(h_star, sigma, y + sigma * (K @ (2.0 * z_next - z)))
    return z_next, y_next


def mismatch_error_term(K, K_adj_mismatched, y, gamma_g: float) -> float:
    """Per-step monotonicity error of the mismatched primal update."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Ka = np.atleast_2d(np.asarray(K_adj_mismatched, dtype=float))
    return float(np.sum(((Ka - K.T) @ np.asarray(y, dtype=float)) ** 2)) / (2.0 * gamma_g)


def mismatch_error_budget(K, K_adj_mismatched, h_star: ProxFunction, gamma_g: float) -> float:
    """Uniform bound for the mismatch error over the dual domain."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Ka = np.atleast_2d(np.asarray(K_adj_mismatched, dtype=float))
    gap = float(np.linalg.norm(Ka - K.T, 2))
    return (gap * h_star.domain_diameter()) ** 2 / (2.0 * gamma_g)


# ---------------------------------------------------------------------------
# Step-length / growth condition checks
# ---------------------------------------------------------------------------

@dataclass
class OuterState:
    """State of one outer run: iterate, solver sub-states, ledger, geometry.

    ``x`` is the outer iterate (the stacked primal-dual pair for the
    primal-dual method).  The preconditioner must be PSD-checked and the
    coupling skew-adjoint; for the primal-dual method the step-length check
    must have passed before construction.
    """

    x: np.ndarray
    method: str  # "fb" | "pdps" | "pdps-mismatch"
    M: SymOperator
    Xi: SkewOperator
    tau: float
    sigma: float = 1.0
    inner: object = None
    adjoint: object = None
    ledger: object = None
    step_check_passed: bool = True

    def __post_init__(self):
        if not self.M.psd_checked:
            raise ValueError("outer preconditioner must be positive semi-definite")
        if self.M.dim != self.Xi.dim or self.M.dim != np.asarray(self.x).size:
            raise ValueError("inconsistent outer state dimensions")
        if self.tau <= 0.0 or self.sigma <= 0.0:
            raise ValueError("step sizes must be positive")
        if self.method.startswith("pdps") and not self.step_check_passed:
            raise ValueError("primal-dual step length check must pass before running")


@dataclass(frozen=True)
class FBConditionReport:
    """Outcome of the forward-backward growth conditions at given parameters."""

    tau: float
    L: float
    theta: float
    gamma_tilde: float
    beta: float
    zeta: Optional[float]
    weak_value: float
    weak_ok: bool
    strong_value: float
    strong_ok: bool
    gamma: float
    eta: float
    eta_weak: float
    regimes: tuple
    p: float

    def certifies(self, regime: str) -> bool:
        return regime in self.regimes


def _theta_over(gamma_tilde: float, th: float) -> float:
    if gamma_tilde > 0.0:
        return th**2 / gamma_tilde
    if th == 0.0:
        return 0.0
    raise ValueError("gamma_tilde must be positive when theta > 0")


def condition_check_inexact_fb(
    tau: float,
    L: float,
    theta_val: float,
    gamma_tilde: float,
    beta: float,
    gamma_G: float,
    gamma_F: float,
    eta: float = 0.0,
) -> FBConditionReport:
    """Growth conditions for inexact forward-backward at fixed free parameters.

    Checks the step bound 0 <= tau [(1 + theta^2/gt) L + 2(|gF|/beta - gF)]
    <= 1 - eta together with gamma := tau [gG + gF - beta |gF|] - gt >= 0,
    and the weaker bound 0 <= gt + tau (1 + theta^2/gt) L < 2.  With exact
    gradients (theta = 0, gt -> 0) the weak bound reduces to tau L < 2.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    to = _theta_over(gamma_tilde, theta_val)
    strong = tau * ((1.0 + to) * L + 2.0 * (abs(gamma_F) / beta - gamma_F))
    strong_ok = 0.0 <= strong <= 1.0 - eta
    gamma = tau * (gamma_G + gamma_F - beta * abs(gamma_F)) - gamma_tilde
    weak = gamma_tilde + tau * (1.0 + to) * L
    weak_ok = 0.0 <= weak < 2.0
    regimes = []
    if weak_ok:
        regimes.append("subdifferential")
    if strong_ok and gamma >= 0.0:
        regimes.append("non-escape")
    p = 1.0
    if strong_ok and gamma > 0.0:
        regimes.append("linear")
        p = 1.0 + gamma
    eta_out = max(1.0 - strong, 0.0) if strong_ok else 0.0
    return FBConditionReport(
        tau=tau,
        L=L,
        theta=theta_val,
        gamma_tilde=gamma_tilde,
        beta=beta,
        zeta=None,
        weak_value=weak,
        weak_ok=weak_ok,
        strong_value=strong,
        strong_ok=strong_ok,
        gamma=gamma,
        eta=eta_out,
        eta_weak=max(1.0 - weak / 2.0, 0.0) if weak_ok else 0.0,
        regimes=tuple(regimes),
        p=p,
    )


def condition_check_inexact_fb_mono(
    tau: float,
    L: float,
    theta_val: float,
    gamma_tilde: float,
    beta: float,
    zeta: float,
    gamma_G: float,
    gamma_F: float,
    eta: float = 0.0,
) -> FBConditionReport:
    """Monotonicity-route growth conditions; certifies up to p = 1 + 2 gamma."""
    if beta <= 0.0 or zeta <= 0.0:
        raise ValueError("beta and zeta must be positive")
    to = _theta_over(gamma_tilde, theta_val)
    gF = gamma_F - 0.5 * zeta * L
    strong = tau * ((1.0 / zeta + to) * L + 2.0 * (abs(gF) / beta - gF))
    strong_ok = 0.0 <= strong <= 1.0 - eta
    gamma = tau * (gamma_G + gF - beta * abs(gF)) - gamma_tilde
    regimes = []
    p = 1.0
    if strong_ok and gamma >= 0.0:
        regimes.append("non-escape")
    if strong_ok and gamma > 0.0:
        regimes.append("linear")
        p = 1.0 + 2.0 * gamma
    eta_out = max(1.0 - strong, 0.0) if strong_ok else 0.0
    return FBConditionReport(
        tau=tau,
        L=L,
        theta=theta_val,
        gamma_tilde=gamma_tilde,
        beta=beta,
        zeta=zeta,
        weak_value=np.inf,
        weak_ok=False,
        strong_value=strong,
        strong_ok=strong_ok,
        gamma=gamma,
        eta=eta_out,
        eta_weak=0.0,
        regimes=tuple(regimes),
        p=p,
    )


def best_fb_certificate(tau: float, L: float, theta_val: float, gamma_G: float, gamma_F: float) -> dict:
    """Search the free parameters for the strongest certifiable regime.

    Returns the weak-mode report at the minimizing gamma_tilde plus the
    smoothness- and monotonicity-route reports maximizing the certified p.
    """
    gt_weak = max(theta_val * np.sqrt(max(tau * L, 0.0)), 1e-12)
    weak = condition_check_inexact_fb(tau, L, theta_val, gt_weak, beta=0.5, gamma_G=gamma_G, gamma_F=gamma_F)

    betas = np.geomspace(1e-3, 1.0, 25)
    gts = np.geomspace(1e-7, 1.0, 40)
    best_smooth = None
    for b in betas:
        for gt in gts:
            rep = condition_check_inexact_fb(tau, L, theta_val, gt, b, gamma_G, gamma_F)
            if rep.strong_ok and rep.gamma >= 0.0:
                if best_smooth is None or rep.p > best_smooth.p:
                    best_smooth = rep
    best_mono = None
    zetas = np.geomspace(1e-3, 4.0, 25)
    for b in betas:
        for z in zetas:
            for gt in gts[::2]:
                rep = condition_check_inexact_fb_mono(tau, L, theta_val, gt, b, z, gamma_G, gamma_F)
                if rep.strong_ok and rep.gamma >= 0.0:
                    if best_mono is None or rep.p > best_mono.p:
                        best_mono = rep
    out = {"weak": weak, "smooth": best_smooth, "mono": best_mono}
    candidates = [r for r in (best_smooth, best_mono) if r is not None]
    out["p"] = max((r.p for r in candidates), default=1.0)
    out["regime"] = (
        "linear"
        if out["p"] > 1.0
        else ("non-escape" if candidates else ("subdifferential" if weak.weak_ok else "none"))
    )
    return out


@dataclass(frozen=True)
class PDPSConditionReport:
    mode: str
    gamma: float
    lambda_breve: float
    eta: float
    certified: bool
    p: float
    step_check: bool
    init_ball_ok: Optional[bool]


def condition_check_pdps_inexact(
    tau: float,
    sigma: float,
    lam: float,
    L: float,
    theta_val: float,
    gamma_tilde: float,
    beta: float,
    zeta: float,
    gamma_g: float,
    gamma_hstar: float,
    gamma_f: float,
    p: float,
    mode: str = "smoothness",
    K: Optional[np.ndarray] = None,
    M_z: Optional[SymOperator] = None,
    M_y: Optional[SymOperator] = None,
    x0=None,
    xbar=None,
    delta_z: Optional[float] = None,
    r_p: float = 0.0,
) -> PDPSConditionReport:
    """Growth conditions for primal-dual splitting with an inexact smooth part.

    mode "mono" certifies p <= 1 + 2 gamma through three-point monotonicity;
    mode "smoothness" certifies p <= 1 + gamma through the gap form.  When
    the coupling and preconditioner blocks are supplied, the basic step
    check and the initialization-ball condition are evaluated too.
    """
    if mode not in ("mono", "smoothness"):
        raise ValueError("mode must be 'mono' or 'smoothness'")
    to = _theta_over(gamma_tilde, theta_val)
    if mode == "mono":
        gf = gamma_f - 0.5 * zeta * L
        gamma = min((gamma_g + gf - beta * abs(gf)) * tau, gamma_hstar * sigma) / 2.0 - gamma_tilde
        lbreve = L / zeta + 2.0 * (abs(gf) / beta - gf) + 2.0 * to * L
        p_ok = (p - 1.0) / 2.0 <= gamma
    else:
        gamma = min((gamma_g + gamma_f - beta * abs(gamma_f)) * tau, gamma_hstar * sigma) / 2.0 - gamma_tilde
        lbreve = L + abs(gamma_f) / beta - gamma_f + to * L
        p_ok = p - 1.0 <= gamma
    lam_ok = 0.0 <= lbreve <= lam
    eta = 1.0 - lbreve / lam if (lam > 0.0 and lam_ok) else (1.0 if lbreve == 0.0 else 0.0)

    step_ok = True
    if K is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        dz, dy = K.shape[1], K.shape[0]
        Mz = M_z if M_z is not None else SymOperator.identity(dz)
        My = M_y if M_y is not None else SymOperator.identity(dy)
        step_ok = pdps_step_check(tau, sigma, lam, Mz, My, K, np.eye(dy))
    init_ok = None
    if x0 is not None and xbar is not None and delta_z is not None and K is not None:
        M = pdps_preconditioner(tau, sigma, M_z or SymOperator.identity(K.shape[1]), M_y or SymOperator.identity(K.shape[0]), K)
        radius_sq = lam**2 * delta_z**2 - 2.0 * r_p
        init_ok = bool(
            radius_sq > 0.0
            and seminorm(M, np.asarray(x0, dtype=float) - np.asarray(xbar, dtype=float)) ** 2 < radius_sq
        )
    certified = bool(p_ok and lam_ok and gamma >= 0.0 and step_ok and (init_ok is not False))
    return PDPSConditionReport(
        mode=mode,
        gamma=gamma,
        lambda_breve=lbreve,
        eta=eta,
        certified=certified,
        p=p,
        step_check=step_ok,
        init_ball_ok=init_ok,
    )


def estimate_outer_smoothness(
    instance: BilevelInstance, seed: int = 0, n_samples: int = 64, inflation: float = 1.05
) -> tuple[float, float]:
    """Sampled (L, gamma_F) of the outer objective: extremes of the Hessian
    spectrum over the admissible box, via central differences of the exact
    gradient, with a 5% safety margin on each side."""
    a = instance.analytic
    if a:
        return a["L_F"], a["gamma_F"]
    box = instance.constants_box
    rng = np.random.default_rng(seed)
    xs = np.vstack([box.sample(rng, n_samples), box.corners(), box.center()[None, :]])
    eps = 1e-5
    L = 0.0
    gamma_F = np.inf
    d = instance.dim_x
    for x in xs:
        H = np.empty((d, d))
        for j in range(d):
            ej = np.zeros(d)
            ej[j] = eps
            H[:, j] = (exact_gradient(instance, x + ej) - exact_gradient(instance, x - ej)) / (2 * eps)
        H = 0.5 * (H + H.T)
        eigs = np.linalg.eigvalsh(H)
        L = max(L, float(np.abs(eigs).max()))
        gamma_F = min(gamma_F, float(eigs.min()))
    L *= inflation
    gamma_F = gamma_F - (inflation - 1.0) * abs(gamma_F)
    return L, gamma_F


# ---------------------------------------------------------------------------
# Single-loop and baseline drivers
# ---------------------------------------------------------------------------

def _inner_sweeps(instance, u, x, cfg, counters):
    method = cfg.inner_method
    for _ in range(cfg.inner_steps):
        if method == "fb":
            u = fb_inner_step(u, x, cfg.inner_tau, instance)
        elif method == "jacobi":
            u = jacobi_step(u, x, instance.linear_system)
        elif method == "gauss_seidel":
            u = gauss_seidel_step(u, x, instance.linear_system)
        else:
            raise ValueError(f"unknown inner method {method!r}")
        counters["inner_splitting_steps"] += 1
    return u


def _adjoint_sweeps(instance, w, u_next, x, cfg, counters):
    for _ in range(cfg.adjoint_steps):
        if cfg.adjoint_variant == "reduced":
            w = reduced_adjoint_step(w, u_next, x, instance, cfg.adjoint_scheme)
        else:
            w = basic_adjoint_step(w, u_next, x, instance, cfg.adjoint_scheme)
        counters["adjoint_splitting_steps"] += 1
    return w


def _resolve_tracking_constants(instance, cfg, lambda_scale, dual_scale) -> TrackingConstants:
    if cfg.constants_mode == "analytic":
        return analytic_tracking_constants(
            instance,
            inner_tau=cfg.inner_tau,
            inner_steps=cfg.inner_steps,
            adjoint_steps=cfg.adjoint_steps,
            variant=cfg.adjoint_variant,
            lambda_scale=lambda_scale,
            dual_scale=dual_scale,
        )
    return empirical_tracking_constants(
        instance,
        scheme=cfg.inner_method if cfg.inner_method in ("jacobi", "gauss_seidel") else cfg.adjoint_scheme,
        inner_steps=cfg.inner_steps,
        adjoint_steps=cfg.adjoint_steps,
        variant=cfg.adjoint_variant,
        seed=cfg.seed,
        lambda_scale=lambda_scale,
        dual_scale=dual_scale,
    )


def run_single_loop(instance: Optional[BilevelInstance], cfg) -> IterateTrace:
    """Execute the configured experiment and return its trace.

    Dispatches on the outer method: forward-backward drives the bilevel
    single-loop (or exact) composition; the primal-dual outer drives either
    an exact saddle run or the mismatched-adjoint variant.
    """
    if cfg.outer_method == "fb":
        return _run_fb(instance, cfg, exact=cfg.inner_method == "exact")
    if cfg.outer_method == "pdps":
        return _run_pdps(instance, cfg)
    raise ValueError(f"unknown outer method {cfg.outer_method!r}")


def run_exact_baseline(instance: BilevelInstance, cfg) -> IterateTrace:
    """Double-loop comparator: exact inner and adjoint solves every step."""
    return _run_fb(instance, cfg, exact=True)


def _run_fb(instance: BilevelInstance, cfg, exact: bool) -> IterateTrace:
    t0 = time.perf_counter()
    if instance is None:
        raise ValueError("forward-backward runs need a bilevel instance")
    dx, du = instance.dim_x, instance.dim_u
    tau = cfg.outer_tau
    G = cfg.G if cfg.G is not None else ProxFunction("zero")
    L, gamma_F = estimate_outer_smoothness(instance, seed=cfg.seed)

    M = SymOperator.scaled_identity(dx, 1.0 / tau)
    Lam = SymOperator.scaled_identity(dx, L) if L > 0 else None
    lambda_scale = float(np.sqrt(L)) if L > 0 else 1.0
    dual_scale = float(np.sqrt(tau))

    counters = {
        "inner_splitting_steps": 0,
        "adjoint_splitting_steps": 0,
        "inner_direct_solves": 0,
        "adjoint_direct_solves": 0,
        "oracle_evals": 0,
    }

    constants = None
    th = 0.0
    if not exact:
        constants = _resolve_tracking_constants(instance, cfg, lambda_scale, dual_scale)
        th = theta(cfg.p, constants)
    fb_cert = best_fb_certificate(tau, L, th, G.gamma_G, gamma_F)
    gt_desc = cfg.gamma_tilde or max(fb_cert["weak"].gamma_tilde, 1e-12)
    # the errMono ledger column must use the gamma_tilde of whichever growth
    # route produced the certified p, or the two sides of the quasi-Fejer
    # inequality would be inconsistent
    candidates = [r for r in (fb_cert["smooth"], fb_cert["mono"]) if r is not None]
    best_rep = max(candidates, key=lambda r: r.p) if candidates else None
    gt_mono = cfg.gamma_tilde_mono or (best_rep.gamma_tilde if best_rep is not None else gt_desc)
    certs = {
        "L": L,
        "gamma_F": gamma_F,
        "theta": th,
        "gt_desc": gt_desc,
        "gt_mono": gt_mono,
        "eta_weak": fb_cert["weak"].eta_weak if fb_cert["weak"].weak_ok else None,
        "p": fb_cert["p"],
        "regime": fb_cert["regime"],
        "weak": fb_cert["weak"],
        "smooth": fb_cert["smooth"],
        "mono": fb_cert["mono"],
    }

    x = np.asarray(cfg.x0, dtype=float).copy()
    if not instance.in_omega(x):
        raise ValueError("initial iterate outside the admissible region")
    basic = cfg.adjoint_variant == "basic"
    w_shape = (du, dx) if basic else (instance.dim_w,)
    if cfg.warm_start == "presolve":
        u = solve_inner_exact(instance, x)
        w = solve_basic_adjoint_exact(instance, x) if basic else solve_reduced_adjoint_exact(instance, x)
        counters["inner_direct_solves"] += 1
        counters["adjoint_direct_solves"] += 1
    else:
        u = np.zeros(du)
        w = np.zeros(w_shape)

    from .adjoint import AdjointState
    from .inner import InnerState

    state = OuterState(
        x=x,
        method="fb",
        M=M,
        Xi=SkewOperator.zero(dx),
        tau=tau,
        inner=InnerState(u, cfg.inner_method or "exact", tau=max(cfg.inner_tau, 1e-300),
                         steps_per_iteration=cfg.inner_steps),
        adjoint=AdjointState(cfg.adjoint_variant, w, cfg.adjoint_scheme, cfg.adjoint_steps),
    )

    n = cfg.budget
    xs = np.zeros((n + 1, dx))
    us = np.zeros((n + 1, du))
    ws = np.zeros((n + 1, int(np.prod(w_shape))))
    grad_est = np.zeros((n, dx))
    qtils = np.zeros((n, dx))
    subgs = np.zeros((n, dx))
    cols = {name: np.zeros(n) for name in
            ("grad_err", "e_pk", "e_lip", "errDesc", "errMono", "gap", "step_norm_M", "dist_to_xbar_M", "residual")}
    xs[0] = x
    us[0] = u
    ws[0] = w.ravel()

    xbar = np.asarray(cfg.xbar if cfg.xbar is not None else instance.x_star, dtype=float)
    f_cur = eval_objective(instance, x)
    fp_cur = exact_gradient(instance, x)
    counters["oracle_evals"] += 2
    ledger = None
    status = "budget"
    steps_done = 0

    for k in range(n):
        if exact:
            u = solve_inner_exact(instance, x)
            counters["inner_direct_solves"] += 1
            if basic:
                w = solve_basic_adjoint_exact(instance, x)
            else:
                w = solve_reduced_adjoint_exact(instance, x)
            counters["adjoint_direct_solves"] += 1
            grad = exact_gradient(instance, x)
        else:
            u = _inner_sweeps(instance, u, x, cfg, counters)
            w = _adjoint_sweeps(instance, w, u, x, cfg, counters)
            if basic:
                grad = differential_transform_basic(w, u, instance)
            else:
                grad = differential_transform_reduced(w, u, x, instance)

        if k == 0 and constants is not None:
            su0 = solve_inner_exact(instance, x)
            sw0 = (
                solve_basic_adjoint_exact(instance, x)
                if basic
                else solve_reduced_adjoint_exact(instance, x)
            )
            counters["oracle_evals"] += 2
            ledger = ErrorLedger(
                constants=constants,
                p=cfg.p,
                d_u_init=float(np.linalg.norm(u - su0)),
                d_w_init=float(np.linalg.norm(np.ravel(w) - np.ravel(sw0))),
                step_metric=Lam,
                dx_metric=M,
                elip_variant=cfg.elip_variant,
            )

        x_next, qtil, subg = fb_outer_step(x, grad, tau, G)

        if ledger is not None:
            cols["e_pk"][k] = ledger.e_pk_current(x_next, x)
            cols["e_lip"][k] = ledger.e_lip_current()
            cols["errDesc"][k] = cols["e_pk"][k] / (2.0 * gt_desc)
            cols["errMono"][k] = cols["e_pk"][k] / (2.0 * gt_mono)
            ledger.append_step(x, x_next)

        f_next = eval_objective(instance, x_next)
        fp_next = exact_gradient(instance, x_next)
        counters["oracle_evals"] += 2
        cols["grad_err"][k] = dual_seminorm(M, grad - fp_cur)
        cols["gap"][k] = (f_next + prox_value(G, x_next)) - (f_cur + prox_value(G, x))
        cols["step_norm_M"][k] = seminorm(M, x_next - x)
        cols["dist_to_xbar_M"][k] = seminorm(M, x_next - xbar)
        cols["residual"][k] = float(np.linalg.norm(fp_next - grad + qtil))

        xs[k + 1] = x_next
        us[k + 1] = u
        ws[k + 1] = np.ravel(w)
        grad_est[k] = grad
        qtils[k] = qtil
        subgs[k] = subg
        steps_done = k + 1
        x, f_cur, fp_cur = x_next, f_next, fp_next
        state.x, state.inner.u, state.adjoint.value, state.ledger = x, u, w, ledger

        if not instance.in_omega(x):
            status = "left-omega"
            break
        if cols["residual"][k] < cfg.tolerance:
            status = "converged"
            break

    m = steps_done
    trace = IterateTrace(
        xs=xs[: m + 1],
        us=us[: m + 1],
        ws=ws[: m + 1],
        grad_est=grad_est[:m],
        qtil=qtils[:m],
        subgrad=subgs[:m],
        scalars={name: col[:m] for name, col in cols.items()},
        method="fb-exact" if exact else "fb-single-loop",
        status=status,
        config=cfg.to_dict(),
        xbar=xbar,
        counters=counters,
        instance=instance,
        ledger=ledger,
        constants=constants,
        M=M,
        Xi=SkewOperator.zero(dx),
        certificates=certs,
        wall_time=time.perf_counter() - t0,
    )
    return trace


def _pdps_objective_parts(cfg):
    g, h_star = cfg.G, cfg.h_star_obj
    K = np.atleast_2d(np.asarray(cfg.K, dtype=float))
    return g, h_star, K


def _lagrangian(g: ProxFunction, h_star: ProxFunction, K: np.ndarray, f_val: float, z, y) -> float:
    return f_val + prox_value(g, z) + float(y @ (K @ z)) - prox_value(h_star, y)


def _run_pdps(instance: Optional[BilevelInstance], cfg) -> IterateTrace:
    t0 = time.perf_counter()
    g, h_star, K = _pdps_objective_parts(cfg)
    dy, dz = K.shape
    tau, sigma = cfg.outer_tau, cfg.outer_sigma
    M = pdps_preconditioner(tau, sigma, SymOperator.identity(dz), SymOperator.identity(dy), K)
    Xi = SkewOperator.primal_dual(K)
    mismatch = cfg.K_adj_mismatched is not None
    Ka = np.atleast_2d(np.asarray(cfg.K_adj_mismatched, dtype=float)) if mismatch else None

    counters = {
        "inner_splitting_steps": 0,
        "adjoint_splitting_steps": 0,
        "inner_direct_solves": 0,
        "adjoint_direct_solves": 0,
        "oracle_evals": 0,
    }

    tracking = instance is not None and cfg.inner_method not in (None, "none", "exact")
    constants = None
    ledger = None
    gt_mono = cfg.gamma_tilde_mono or cfg.gamma_tilde or 1.0
    lam = cfg.lam

    z = np.asarray(cfg.x0, dtype=float)[:dz].copy()
    y = np.asarray(cfg.x0, dtype=float)[dz:].copy()
    if prox_value(h_star, y) == np.inf:
        raise ValueError("initial dual iterate outside the dual domain")

    state = OuterState(
        x=np.concatenate([z, y]),
        method="pdps-mismatch" if mismatch else "pdps",
        M=M,
        Xi=Xi,
        tau=tau,
        sigma=sigma,
        step_check_passed=pdps_step_check(
            tau, sigma, cfg.lam, SymOperator.identity(dz), SymOperator.identity(dy), K, np.eye(dy)
        ),
    )

    pdps_cert = condition_check_pdps_inexact(
        tau, sigma, cfg.lam, 0.0, 0.0, 0.0, beta=0.5, zeta=1.0,
        gamma_g=g.gamma_G, gamma_hstar=h_star.gamma_G, gamma_f=0.0,
        p=max(cfg.p, 1.0), mode="smoothness", K=K,
    )
    certificates = {
        "pdps": pdps_cert,
        "p": cfg.p,
        "regime": "pdps-certified" if pdps_cert.certified else "none",
    }
    if mismatch:
        gamma_mm = min(g.gamma_G * tau / 4.0, h_star.gamma_G * sigma / 2.0)
        certificates["mismatch_gamma"] = gamma_mm
        certificates["p_max"] = 1.0 + 2.0 * gamma_mm
        certificates["epsilon"] = mismatch_error_budget(K, Ka, h_star, g.gamma_G)
        if not 1.0 < cfg.p <= 1.0 + 2.0 * gamma_mm:
            certificates["regime"] = "none"

    du = instance.dim_u if tracking else 0
    dw = instance.dim_w if tracking else 0
    u = np.zeros(du)
    w = np.zeros(dw)
    if tracking:
        L_f, _ = estimate_outer_smoothness(instance, seed=cfg.seed)
        lambda_scale = float(np.sqrt(L_f)) if L_f > 0 else 1.0
        constants = _resolve_tracking_constants(instance, cfg, lambda_scale, 1.0)

    n = cfg.budget
    dxfull = dz + dy
    xs = np.zeros((n + 1, dxfull))
    us = np.zeros((n + 1, du))
    ws = np.zeros((n + 1, dw))
    grads = np.zeros((n, dxfull))
    qtils = np.zeros((n, dxfull))
    subgs = np.zeros((n, dxfull))
    cols = {name: np.zeros(n) for name in
            ("grad_err", "e_pk", "e_lip", "errDesc", "errMono", "gap", "step_norm_M", "dist_to_xbar_M", "residual")}
    xs[0] = np.concatenate([z, y])
    xbar = np.asarray(cfg.xbar, dtype=float) if cfg.xbar is not None else None

    status = "budget"
    steps_done = 0
    for k in range(n):
        grad_f = np.zeros(dz)
        if tracking:
            u = _inner_sweeps(instance, u, z, cfg, counters)
            w = _adjoint_sweeps(instance, w, u, z, cfg, counters)
            grad_f = differential_transform_reduced(w, u, z, instance)
            if k == 0:
                su0 = solve_inner_exact(instance, z)
                sw0 = solve_reduced_adjoint_exact(instance, z)
                counters["oracle_evals"] += 2
                ledger = ErrorLedger(
                    constants=constants,
                    p=cfg.p,
                    d_u_init=float(np.linalg.norm(u - su0)),
                    d_w_init=float(np.linalg.norm(w - sw0)),
                    step_metric=SymOperator.scaled_identity(dz, L_f) if L_f > 0 else None,
                    dx_metric=None,
                    elip_variant=cfg.elip_variant,
                )

        if mismatch:
            z_next, y_next = mismatched_pdps_step(z, y, tau, sigma, K, Ka, g, h_star)
            cols["errMono"][k] = mismatch_error_term(K, Ka, y, g.gamma_G)
        else:
            z_next, y_next = pdps_outer_step(z, y, grad_f, tau, sigma, K, g, h_star)

        x = np.concatenate([z, y])
        x_next = np.concatenate([z_next, y_next])
        qtil = -M.apply(x_next - x)
        # dG elements from the prox optimality conditions of the two blocks
        prim_in = z - tau * grad_f - tau * ((Ka if mismatch else K.T) @ y)
        dual_in = y + sigma * (K @ (2.0 * z_next - z))
        subg = np.concatenate([(prim_in - z_next) / tau, (dual_in - y_next) / sigma])

        if ledger is not None:
            cols["e_pk"][k] = ledger.e_pk_current(z_next, z)
            cols["e_lip"][k] = ledger.e_lip_current()
            cols["errMono"][k] = cols["e_pk"][k] / (2.0 * lam * gt_mono) if lam > 0 else 0.0
            ledger.append_step(z, z_next)
            fp = exact_gradient(instance, z)
            counters["oracle_evals"] += 1
            cols["grad_err"][k] = float(np.linalg.norm(grad_f - fp))

        f_cur = eval_objective(instance, z) if tracking else 0.0
        f_next = eval_objective(instance, z_next) if tracking else 0.0
        if tracking:
            counters["oracle_evals"] += 2
        cols["gap"][k] = _lagrangian(g, h_star, K, f_next, z_next, y) - _lagrangian(
            g, h_star, K, f_cur, z, y_next
        )
        cols["step_norm_M"][k] = seminorm(M, x_next - x)
        if xbar is not None:
            cols["dist_to_xbar_M"][k] = seminorm(M, x_next - xbar)
        certified_el = qtil.copy()
        if mismatch:
            certified_el[:dz] -= (Ka - K.T) @ y
        if tracking:
            fp_next = exact_gradient(instance, z_next)
            counters["oracle_evals"] += 1
            certified_el[:dz] += fp_next - grad_f
        cols["residual"][k] = float(np.linalg.norm(certified_el))

        xs[k + 1] = x_next
        if tracking:
            us[k + 1] = u
            ws[k + 1] = w
        grads[k] = np.concatenate([grad_f, np.zeros(dy)])
        qtils[k] = qtil
        subgs[k] = subg
        steps_done = k + 1
        z, y = z_next, y_next
        state.x, state.ledger = x_next, ledger
        if cols["residual"][k] < cfg.tolerance:
            status = "converged"
            break

    m = steps_done
    trace = IterateTrace(
        xs=xs[: m + 1],
        us=us[: m + 1],
        ws=ws[: m + 1],
        grad_est=grads[:m],
        qtil=qtils[:m],
        subgrad=subgs[:m],
        scalars={name: col[:m] for name, col in cols.items()},
        method="pdps-mismatch" if mismatch else ("pdps-single-loop" if tracking else "pdps-exact"),
        status=status,
        config=cfg.to_dict(),
        xbar=xbar,
        counters=counters,
        instance=instance,
        ledger=ledger,
        constants=constants,
        M=M,
        Xi=Xi,
        certificates=certificates,
        wall_time=time.perf_counter() - t0,
    )
    return trace

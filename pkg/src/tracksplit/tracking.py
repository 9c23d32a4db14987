"""Series quantities and error ledgers for tracked gradient estimates.

Given tracking constants (kappa_u, kappa_w, pi_u, pi_w, mu_u) of the inner
and adjoint algorithms and transform coefficients (alpha_u, alpha_w), the
estimate error of the composed gradient admits per-iteration bounds built
from the series

    iota_k = sum_{m=1..k} kappa_u^-m kappa_w^-(k+1-m),
    psi_j  = alpha_u kappa_u^-j pi_u + alpha_w [iota_j mu_u pi_u + kappa_w^-j pi_w],
    theta  = (kbar/p) sum_j p^j psi_j.

The ledger accumulates squared outer step lengths and evaluates the signed
per-iteration error terms e_{p,k} and their p=1 Lipschitz-form cousins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import estimate_transform_constants
from .inner import KAPPA_MARGIN, corner_spectral_radius, iteration_matrix, spectral_radius
from .operators import SymOperator, dual_seminorm, seminorm
from .problems import (
    BilevelInstance,
    solve_basic_adjoint_exact,
    solve_inner_exact,
    solve_reduced_adjoint_exact,
)

__all__ = [
    "TrackingConstants",
    "ErrorLedger",
    "iota",
    "psi",
    "theta",
    "theta_closed_form_bound",
    "e_pk",
    "e_lip",
    "error_sum_bound",
    "elip_sum_bound",
    "recursion_bound",
    "gradient_error_check",
    "descent_with_error_check",
    "lipschitz_with_error_check",
    "analytic_tracking_constants",
    "empirical_tracking_constants",
]

SERIES_TOL = 1e-12
PI_FLOOR = 1e-12


@dataclass(frozen=True)
class TrackingConstants:
    """Constants of the inner/adjoint tracking inequalities and transform.

    kappa_u and kappa_w are strict contraction factors (> 1); pi_u, pi_w
    penalize outer movement; mu_u couples adjoint error to inner error;
    alpha_u, alpha_w convert tracking errors to gradient-estimate error.
    """

    kappa_u: float
    kappa_w: float
    pi_u: float
    pi_w: float
    mu_u: float
    alpha_u: float
    alpha_w: float

    def __post_init__(self):
        if not (self.kappa_u > 1.0 and self.kappa_w > 1.0):
            raise ValueError("kappa_u and kappa_w must be strictly greater than 1")
        if min(self.pi_u, self.pi_w, self.mu_u) <= 0.0:
            raise ValueError("pi_u, pi_w, mu_u must be strictly positive")
        if min(self.alpha_u, self.alpha_w) < 0.0:
            raise ValueError("alpha_u, alpha_w must be nonnegative")

    @property
    def kappa(self) -> float:
        return min(self.kappa_u, self.kappa_w)

    @property
    def kappa_bar(self) -> float:
        return max(self.kappa_u, self.kappa_w)


def iota(k: int, kappa_u: float, kappa_w: float) -> float:
    """iota_k = sum_{m=1..k} kappa_u^-m kappa_w^-(k+1-m), with iota_0 = 0.

    Evaluated through the one-term recursion
    iota_{j+1} = (kappa_u^-(j+1) + iota_j) / kappa_w, which reproduces the
    finite sum exactly and keeps the recursion identity bitwise consistent.
    """
    if kappa_u <= 1.0 or kappa_w <= 1.0:
        raise ValueError("kappas must exceed 1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    total = 0.0
    for j in range(k):
        total = (kappa_u ** (-(j + 1)) + total) / kappa_w
    return total


def psi(j: int, c: TrackingConstants) -> float:
    """psi_j = alpha_u kappa_u^-j pi_u + alpha_w [iota_j mu_u pi_u + kappa_w^-j pi_w]."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    return c.alpha_u * c.kappa_u ** (-j) * c.pi_u + c.alpha_w * (
        iota(j, c.kappa_u, c.kappa_w) * c.mu_u * c.pi_u + c.kappa_w ** (-j) * c.pi_w
    )


def theta_closed_form_bound(p: float, c: TrackingConstants) -> float:
    """Closed-form upper estimate for theta via geometric sum formulae.

    The arithmetic-geometric term carries 1/p^2 only while p <= 1; beyond
    that the correct factor from the weighted iota sum is kbar/(kappa-p)^2.
    """
    k, kb = c.kappa, c.kappa_bar
    if not 0.0 < p < k:
        raise ValueError(f"p must lie in (0, kappa) = (0, {k})")
    return (c.alpha_u * c.pi_u + c.alpha_w * c.pi_w) * k * kb / (p * (k - p)) + (
        c.alpha_w * c.mu_u * c.pi_u * kb
    ) / (min(p, 1.0) ** 2 * (k - p) ** 2)


def theta(p: float, c: TrackingConstants, tol: float = SERIES_TOL) -> float:
    """theta = (kbar/p) sum_{j>=0} p^j psi_j, truncated with a certified tail.

    The geometric and arithmetic-geometric tails are bounded in closed form
    and added to the partial sum, so the result is always an upper estimate
    of the true series, and never exceeds the closed-form bound.
    """
    k = c.kappa
    if not 0.0 < p < k:
        raise ValueError(f"p must lie in (0, kappa) = (0, {k})")
    if c.alpha_u == 0.0 and c.alpha_w == 0.0:
        return 0.0
    s = p / k
    q_u = p / c.kappa_u
    q_w = p / c.kappa_w
    # Scaled accumulation: qu_j = (p/kappa_u)^j, wiota_j = p^j iota_j, all
    # bounded and decaying, so no intermediate overflow.
    qu_j = qw_j = 1.0
    wiota_j = 0.0
    partial = 0.0
    j = 0
    while True:
        partial += c.alpha_u * c.pi_u * qu_j + c.alpha_w * (
            c.mu_u * c.pi_u * wiota_j + c.pi_w * qw_j
        )
        # Geometric tails for the kappa_u / kappa_w parts; arithmetic-geometric
        # tail for the iota part via p^j iota_j <= (j/p) (p/kappa)^(j+1).
        m = j + 1
        tail_u = c.alpha_u * c.pi_u * q_u**m / (1.0 - q_u)
        tail_w = c.alpha_w * c.pi_w * q_w**m / (1.0 - q_w)
        tail_iota = (
            c.alpha_w
            * c.mu_u
            * c.pi_u
            * (s / p)
            * (s**m * (m * (1.0 - s) + s) / (1.0 - s) ** 2)
        )
        tail = tail_u + tail_w + tail_iota
        if tail <= tol * (1.0 + partial) or j > 100000:
            value = (c.kappa_bar / p) * (partial + tail)
            bound = theta_closed_form_bound(p, c)
            if value > bound * (1.0 + 1e-9) + 1e-300:
                raise AssertionError(
                    f"theta series estimate {value} exceeds closed-form bound {bound}"
                )
            return value
        wiota_j = (qu_j * q_u + p * wiota_j) / c.kappa_w
        qu_j *= q_u
        qw_j *= q_w
        j += 1


def _distance(metric: Optional[SymOperator], a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if metric is None:
        return float(np.linalg.norm(d))
    return seminorm(metric, d)


def _dual_distance(metric: Optional[SymOperator], a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if metric is None:
        return float(np.linalg.norm(d))
    return dual_seminorm(metric, d)


@dataclass
class ErrorLedger:
    """Append-only record of a run's step lengths and initial distances.

    ``lam_sq`` holds lam^2(x^{j+1}, x^j) in the step metric; ``dx_sq`` holds
    the corresponding d_X^2 steps (preconditioner seminorm).  Both start
    empty and grow by one entry per outer iteration.  The per-iteration
    error terms may be negative; they are stored and used with sign.
    """

    constants: TrackingConstants
    p: float
    d_u_init: float
    d_w_init: float
    step_metric: Optional[SymOperator] = None
    dx_metric: Optional[SymOperator] = None
    elip_variant: str = "lambda"  # or "dx": which squared step enters e_lip sums
    lam_sq: list = field(default_factory=list)
    dx_sq: list = field(default_factory=list)
    _theta_cache: dict = field(default_factory=dict)
    # Incremental geometric/arithmetic-geometric convolution state, so the
    # per-iteration error terms cost O(1) instead of O(k).
    _acc: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p < 1.0 or self.p >= self.constants.kappa:
            raise ValueError("p must lie in [1, kappa)")
        if self.d_u_init < 0.0 or self.d_w_init < 0.0:
            raise ValueError("initial distances must be nonnegative")
        if self.elip_variant not in ("lambda", "dx"):
            raise ValueError("elip_variant must be 'lambda' or 'dx'")
        self._acc = {
            "gu_p": 0.0, "gw_p": 0.0, "io_p": 0.0,
            "gu_1": 0.0, "gw_1": 0.0, "io_1": 0.0,
            "iota": 0.0, "ku_pow": 1.0, "kw_pow": 1.0, "p_pow": 1.0,
        }

    def theta(self, p: Optional[float] = None) -> float:
        key = self.p if p is None else float(p)
        if key not in self._theta_cache:
            self._theta_cache[key] = theta(key, self.constants)
        return self._theta_cache[key]

    def lam(self, x, x_other) -> float:
        return _distance(self.step_metric, x, x_other)

    def append_step(self, x_prev: np.ndarray, x_next: np.ndarray) -> None:
        lam_sq = self.lam(x_next, x_prev) ** 2
        dx_sq = _distance(self.dx_metric, x_next, x_prev) ** 2
        self.lam_sq.append(lam_sq)
        self.dx_sq.append(dx_sq)
        c, a = self.constants, self._acc
        hist = lam_sq if self.elip_variant == "lambda" else dx_sq
        a["gu_p"] = (a["gu_p"] + lam_sq) / (self.p * c.kappa_u)
        a["gw_p"] = (a["gw_p"] + lam_sq) / (self.p * c.kappa_w)
        a["io_p"] = a["gu_p"] / c.kappa_w + a["io_p"] / (self.p * c.kappa_w)
        a["gu_1"] = (a["gu_1"] + hist) / c.kappa_u
        a["gw_1"] = (a["gw_1"] + hist) / c.kappa_w
        a["io_1"] = a["gu_1"] / c.kappa_w + a["io_1"] / c.kappa_w
        a["ku_pow"] /= c.kappa_u
        a["kw_pow"] /= c.kappa_w
        a["p_pow"] *= self.p
        a["iota"] = (a["ku_pow"] + a["iota"]) / c.kappa_w

    def __len__(self) -> int:
        return len(self.lam_sq)

    def _init_terms(self, th: float, p_pow: float) -> float:
        c, a = self.constants, self._acc
        t_u = th * (c.alpha_u * a["ku_pow"] + c.alpha_w * a["iota"] * c.mu_u) / (c.pi_u * p_pow)
        t_w = th * c.alpha_w * a["kw_pow"] / (c.pi_w * p_pow)
        return t_u * self.d_u_init**2 + t_w * self.d_w_init**2

    def e_pk_current(self, x, x_k) -> float:
        """e_{p,k}(x) at the current iteration (history appended through k-1)."""
        c, a, th = self.constants, self._acc, self.theta()
        hist = th * (
            c.alpha_u * c.pi_u * a["gu_p"]
            + c.alpha_w * c.mu_u * c.pi_u * a["io_p"]
            + c.alpha_w * c.pi_w * a["gw_p"]
        )
        return self._init_terms(th, a["p_pow"]) + hist - th**2 * self.lam(x, x_k) ** 2

    def e_lip_current(self) -> float:
        """e_lip at the current iteration (history appended through k-1)."""
        c, a = self.constants, self._acc
        th1 = self.theta(1.0)
        hist = th1 * (
            c.alpha_u * c.pi_u * a["gu_1"]
            + c.alpha_w * c.mu_u * c.pi_u * a["io_1"]
            + c.alpha_w * c.pi_w * a["gw_1"]
        )
        return self._init_terms(th1, 1.0) + hist


def _epk_terms(k: int, ledger: ErrorLedger, p: float, th: float) -> float:
    """The three nonnegative terms of e_{p,k} (everything except -theta^2 lam^2)."""
    c = ledger.constants
    if k > len(ledger.lam_sq):
        raise ValueError(f"ledger holds {len(ledger.lam_sq)} steps, needs {k}")
    t_init_u = (
        th
        * (c.alpha_u * c.kappa_u ** (-k) + c.alpha_w * iota(k, c.kappa_u, c.kappa_w) * c.mu_u)
        / (c.pi_u * p**k)
        * ledger.d_u_init**2
    )
    t_init_w = th * c.alpha_w * c.kappa_w ** (-k) / (c.pi_w * p**k) * ledger.d_w_init**2
    t_hist = 0.0
    for j in range(k):
        t_hist += th * psi(k - j, c) / p ** (k - j) * ledger.lam_sq[j]
    return t_init_u + t_init_w + t_hist


def e_pk(k: int, x: np.ndarray, ledger: ErrorLedger, x_k: np.ndarray) -> float:
    """Signed per-iteration error term e_{p,k}(x) evaluated at comparison point x."""
    th = ledger.theta()
    return _epk_terms(k, ledger, ledger.p, th) - th**2 * ledger.lam(x, x_k) ** 2


def e_lip(k: int, ledger: ErrorLedger) -> float:
    """Lipschitz-form error term: e_{1,k} at x = x^k, so no subtracted term.

    The summed squared steps are lam^2 by default; the 'dx' variant follows
    the preconditioner seminorm instead (the two coincide when the step
    metric and preconditioner agree).
    """
    c = ledger.constants
    th1 = ledger.theta(1.0)
    if k > len(ledger.lam_sq):
        raise ValueError(f"ledger holds {len(ledger.lam_sq)} steps, needs {k}")
    hist = ledger.lam_sq if ledger.elip_variant == "lambda" else ledger.dx_sq
    t_init_u = (
        th1
        * (c.alpha_u * c.kappa_u ** (-k) + c.alpha_w * iota(k, c.kappa_u, c.kappa_w) * c.mu_u)
        / c.pi_u
        * ledger.d_u_init**2
    )
    t_init_w = th1 * c.alpha_w * c.kappa_w ** (-k) / c.pi_w * ledger.d_w_init**2
    t_hist = sum(th1 * psi(k - j, c) * hist[j] for j in range(k))
    return t_init_u + t_init_w + t_hist


def error_sum_bound(ledger: ErrorLedger) -> float:
    """Closed-form dominator of sum_k p^k e_{p,k}(x^{k+1}) over any horizon."""
    c = ledger.constants
    th = ledger.theta()
    k = c.kappa
    return ledger.d_u_init**2 / c.pi_u * (
        th * c.alpha_u * k / (k - 1.0) + th * c.alpha_w * c.mu_u / (k - 1.0) ** 2
    ) + ledger.d_w_init**2 / c.pi_w * (th * c.alpha_w * k / (k - 1.0))


def elip_sum_bound(ledger: ErrorLedger, n: Optional[int] = None) -> float:
    """Upper bound for sum_{k<N} e_lip^k: init-term sums plus (theta_1^2/kbar) sum lam^2."""
    c = ledger.constants
    th1 = ledger.theta(1.0)
    k = c.kappa
    hist = ledger.lam_sq if ledger.elip_variant == "lambda" else ledger.dx_sq
    if n is None:
        n = len(hist)
    init_part = ledger.d_u_init**2 * th1 / c.pi_u * (
        c.alpha_u * k / (k - 1.0) + c.alpha_w * c.mu_u / (k - 1.0) ** 2
    ) + ledger.d_w_init**2 * th1 / c.pi_w * (c.alpha_w * k / (k - 1.0))
    return init_part + th1**2 / c.kappa_bar * float(np.sum(hist[: max(n - 1, 0)]))


def recursion_bound(
    k: int,
    alpha_u: float,
    alpha_w: float,
    constants: TrackingConstants,
    b1: float,
    c1: float,
    d_history,
) -> float:
    """Right side of the generic two-sequence recursion estimate.

    Bounds alpha_u b_{k+1} + alpha_w c_{k+1} for sequences obeying
    kappa_u b_{j+1} <= b_j + pi_u d_j and
    kappa_w c_{j+1} <= c_j + mu_u b_{j+1} + pi_w d_j,
    given b_1, c_1 and d_1..d_k (``d_history``).
    """
    c = constants
    if b1 < 0.0 or c1 < 0.0:
        raise ValueError("b1 and c1 must be nonnegative")
    d = np.asarray(d_history, dtype=float)
    if d.size < k:
        raise ValueError(f"need {k} movement terms, got {d.size}")
    if np.any(d < 0.0):
        raise ValueError("movement terms must be nonnegative")
    coef_b1 = alpha_u * c.kappa_u ** (-k) + alpha_w * iota(k, c.kappa_u, c.kappa_w) * c.mu_u
    coef_c1 = alpha_w * c.kappa_w ** (-k)
    total = coef_b1 * b1 + coef_c1 * c1
    assert coef_b1 >= 0.0 and coef_c1 >= 0.0
    for j in range(k):
        coef = alpha_u * c.kappa_u ** (-(k - j)) * c.pi_u + alpha_w * (
            iota(k - j, c.kappa_u, c.kappa_w) * c.mu_u * c.pi_u
            + c.kappa_w ** (-(k - j)) * c.pi_w
        )
        assert coef >= 0.0
        total += coef * d[j]
    return total


def gradient_error_check(
    k: int,
    ledger: ErrorLedger,
    estimate: np.ndarray,
    exact: np.ndarray,
    dual_metric: Optional[SymOperator],
    x: np.ndarray,
    x_k: np.ndarray,
) -> float:
    """Slack of the squared gradient-error bound at comparison point x.

    Returns theta^2 lam^2(x, x^k) + e_{p,k}(x) - d*(estimate, exact)^2;
    nonnegative certifies the per-iteration bound.
    """
    lhs = _dual_distance(dual_metric, estimate, exact) ** 2
    rhs = ledger.theta() ** 2 * ledger.lam(x, x_k) ** 2 + e_pk(k, x, ledger, x_k)
    return rhs - lhs


def descent_with_error_check(
    k: int,
    ledger: ErrorLedger,
    estimate: np.ndarray,
    exact: np.ndarray,
    x: np.ndarray,
    xbar: np.ndarray,
    x_k: np.ndarray,
    gamma_tilde: float,
    d_x: Optional[SymOperator] = None,
) -> float:
    """Slack of the inner-product lower bound for the estimate error.

    Certifies <est - exact, x - xbar> >= -(gt/2) d_X^2(x, xbar)
    - theta^2/(2 gt) lam^2(x, x^k) - e_{p,k}(x)/(2 gt).
    """
    if gamma_tilde <= 0.0:
        raise ValueError("gamma_tilde must be positive")
    est = np.asarray(estimate, dtype=float)
    ex = np.asarray(exact, dtype=float)
    lhs = float((est - ex) @ (np.asarray(x, dtype=float) - np.asarray(xbar, dtype=float)))
    metric = d_x if d_x is not None else ledger.dx_metric
    rhs = (
        -0.5 * gamma_tilde * _distance(metric, x, xbar) ** 2
        - ledger.theta() ** 2 / (2.0 * gamma_tilde) * ledger.lam(x, x_k) ** 2
        - e_pk(k, x, ledger, x_k) / (2.0 * gamma_tilde)
    )
    return lhs - rhs


def inexact_descent_slack(
    k, ledger, estimate, F_eval, L, x, x_k, gamma_tilde, d_x=None
) -> float:
    """Slack of the assembled inexact descent inequality at (x, x^k)."""
    est = np.asarray(estimate, dtype=float)
    lhs = float(est @ (np.asarray(x) - np.asarray(x_k)))
    th = ledger.theta()
    metric = d_x if d_x is not None else ledger.dx_metric
    rhs = (
        F_eval(x)
        - F_eval(x_k)
        - 0.5 * (th**2 / gamma_tilde + L) * ledger.lam(x, x_k) ** 2
        - 0.5 * gamma_tilde * _distance(metric, x, x_k) ** 2
        - e_pk(k, x, ledger, x_k) / (2.0 * gamma_tilde)
    )
    return lhs - rhs


def inexact_three_point_slack(
    k, ledger, estimate, F_eval, L, beta, x, xbar, x_k, gamma_tilde, d_x=None
) -> float:
    """Slack of the assembled inexact three-point descent inequality."""
    est = np.asarray(estimate, dtype=float)
    lhs = float(est @ (np.asarray(x) - np.asarray(xbar)))
    th = ledger.theta()
    metric = d_x if d_x is not None else ledger.dx_metric
    rhs = (
        F_eval(x)
        - F_eval(xbar)
        + 0.5 * (beta - gamma_tilde) * _distance(metric, x, xbar) ** 2
        - 0.5 * (th**2 / gamma_tilde + L) * ledger.lam(x, x_k) ** 2
        - e_pk(k, x, ledger, x_k) / (2.0 * gamma_tilde)
    )
    return lhs - rhs


def lipschitz_with_error_check(
    k: int,
    ledger: ErrorLedger,
    estimate: np.ndarray,
    exact: np.ndarray,
    target: np.ndarray,
    vartheta: float,
    dual_metric: Optional[SymOperator] = None,
) -> float:
    """Slack of the Lipschitz-style bound against an arbitrary dual target.

    Certifies d*(est, target)^2/2 <= (1+vt)/2 d*(exact, target)^2
    + (1+1/vt)/2 e_lip^k.  ``exact`` is the true gradient at x^k.
    """
    if vartheta <= 0.0:
        raise ValueError("vartheta must be positive")
    lhs = 0.5 * _dual_distance(dual_metric, estimate, target) ** 2
    rhs = 0.5 * (1.0 + vartheta) * _dual_distance(dual_metric, exact, target) ** 2 + 0.5 * (
        1.0 + 1.0 / vartheta
    ) * e_lip(k, ledger)
    return rhs - lhs


def analytic_tracking_constants(
    instance: BilevelInstance,
    inner_tau: float,
    inner_steps: int = 1,
    adjoint_steps: int = 1,
    variant: str = "reduced",
    lambda_scale: float = 1.0,
    dual_scale: float = 1.0,
) -> TrackingConstants:
    """Closed-form tracking constants for the quadratic bilevel family.

    The forward-backward inner algorithm contracts by 1/(1+tau*gamma) per
    sweep; running m sweeps per outer iteration keeps kappa_u = 1+tau*gamma
    and shrinks the movement penalty to L_s (1+tau*gamma)^(1-m).  The scalar
    adjoint solve is exact, so any positive pi_w is valid; it is matched to
    the inner decay so the series stay informative.

    ``lambda_scale`` rescales movement penalties when the outer movement
    metric is lambda(x, x') = lambda_scale * ||x - x'||; ``dual_scale`` does
    the same for the transform coefficients in the dual seminorm.
    """
    a = instance.analytic
    if not a:
        raise ValueError(f"instance {instance.name} has no analytic constants")
    gamma = a["gamma"]
    kappa_u = 1.0 + inner_tau * gamma
    pi_u = max(a["L_s"] * kappa_u ** (1 - inner_steps) / lambda_scale, PI_FLOOR)
    kappa_w = kappa_u
    mu_u = kappa_w * a["L_wstar_u"]
    pi_w = max(a["L_Sw"] * kappa_w ** (1 - adjoint_steps) / lambda_scale, PI_FLOOR)
    tc = estimate_transform_constants(instance, "analytic", variant)
    return TrackingConstants(
        kappa_u=kappa_u,
        kappa_w=kappa_w,
        pi_u=pi_u,
        pi_w=pi_w,
        mu_u=mu_u,
        alpha_u=tc.alpha_u * dual_scale,
        alpha_w=tc.alpha_w * dual_scale,
    )


def empirical_tracking_constants(
    instance: BilevelInstance,
    scheme: str = "jacobi",
    inner_steps: int = 1,
    adjoint_steps: int = 1,
    variant: str = "reduced",
    seed: int = 0,
    n_samples: int = 1000,
    inflation: float = 1.05,
    lambda_scale: float = 1.0,
    dual_scale: float = 1.0,
) -> TrackingConstants:
    """Sampled tracking constants for linear-splitting inner/adjoint schemes.

    kappa is the reciprocal corner spectral radius of the splitting
    iteration matrix (with a small safety margin); Lipschitz-type suprema
    are maxima over a seeded sample of the admissible box, inflated by 5%.
    """
    if instance.linear_system is None or instance.omega is None:
        raise ValueError("empirical constants need a linear system on a bounded box")
    system = instance.linear_system
    box = instance.omega
    rng = np.random.default_rng(seed)

    rho_u = corner_spectral_radius(system, box, scheme)
    if rho_u >= 1.0:
        raise ValueError(f"splitting scheme diverges on the box: rho = {rho_u}")
    kappa_u = (1.0 - KAPPA_MARGIN) / rho_u
    rho_w = max(
        spectral_radius(iteration_matrix(system.A(x).T, scheme)) for x in box.corners()
    )
    if rho_w >= 1.0:
        raise ValueError(f"adjoint splitting diverges on the box: rho = {rho_w}")
    kappa_w = (1.0 - KAPPA_MARGIN) / rho_w

    xs = np.vstack([box.sample(rng, n_samples), box.corners()])
    l_s = max(
        float(np.linalg.norm(solve_basic_adjoint_exact(instance, x), 2)) for x in xs
    )
    l_wstar_u = 0.0
    l_jprime = 0.0
    eps = 1e-6
    for x in xs:
        su = solve_inner_exact(instance, x)
        e = rng.standard_normal(instance.dim_u)
        e /= float(np.linalg.norm(e))
        l_jprime = max(
            l_jprime,
            float(np.linalg.norm(instance.Jprime(su + eps * e) - instance.Jprime(su))) / eps,
        )
        l_wstar_u = max(
            l_wstar_u, float(np.linalg.norm(np.linalg.inv(system.A(x).T), 2))
        )
    l_wstar_u *= l_jprime

    # Finite-difference Jacobian of the adjoint solution map.
    l_sw = 0.0
    fd = 1e-6
    for x in xs[: min(len(xs), 200)]:
        cols = []
        for j in range(instance.dim_x):
            ej = np.zeros(instance.dim_x)
            ej[j] = fd
            wp = solve_reduced_adjoint_exact(instance, x + ej)
            wm = solve_reduced_adjoint_exact(instance, x - ej)
            cols.append((wp - wm) / (2.0 * fd))
        l_sw = max(l_sw, float(np.linalg.norm(np.column_stack(cols), 2)))

    pi_u = max(inflation * l_s * kappa_u * rho_u**inner_steps / lambda_scale, PI_FLOOR)
    mu_u = inflation * kappa_w * (1.0 + rho_w**adjoint_steps) * l_wstar_u
    pi_w = max(inflation * l_sw * kappa_w * rho_w**adjoint_steps / lambda_scale, PI_FLOOR)
    tc = estimate_transform_constants(
        instance, "empirical", variant, seed=seed, n_samples=n_samples, inflation=inflation
    )
    return TrackingConstants(
        kappa_u=kappa_u,
        kappa_w=kappa_w,
        pi_u=pi_u,
        pi_w=pi_w,
        mu_u=max(mu_u, PI_FLOOR),
        alpha_u=tc.alpha_u * dual_scale,
        alpha_w=tc.alpha_w * dual_scale,
    )

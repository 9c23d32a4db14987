"""Single-step inner algorithms (forward-backward, primal-dual, Jacobi and
Gauss-Seidel splitting) and measurement of their tracking residuals.

Each step function is a pure map: identical inputs give bitwise-identical
outputs.  The tracking residual of a run certifies, per iteration, the
parameter-change-aware contraction

    kappa_u * d_U(u^{k+1}, S_u(x^k)) <= d_U(u^k, S_u(x^{k-1}))
                                        + pi_u * lam(x^k, x^{k-1}).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operators import SymOperator, seminorm
from .problems import BilevelInstance, ParametricLinearSystem, solve_inner_exact

__all__ = [
    "InnerState",
    "InnerSaddle",
    "fb_inner_step",
    "pdps_inner_step",
    "jacobi_step",
    "gauss_seidel_step",
    "iteration_matrix",
    "corner_spectral_radius",
    "make_quadratic_saddle_inner",
    "measure_inner_tracking",
]

# Safety margin pulled off 1/rho when deriving kappa from a spectral radius.
KAPPA_MARGIN = 1e-6


@dataclass
class InnerState:
    """Current inner iterate plus the algorithm it is advanced by."""

    u: np.ndarray
    algorithm: str  # "fb" | "pdps" | "jacobi" | "gauss_seidel" | "exact"
    tau: float = 1.0
    sigma: float = 1.0
    steps_per_iteration: int = 1

    def __post_init__(self):
        if self.tau <= 0.0 or self.sigma <= 0.0:
            raise ValueError("step sizes must be positive")
        if self.steps_per_iteration < 1:
            raise ValueError("need at least one inner step per outer iteration")


def fb_inner_step(u: np.ndarray, x: np.ndarray, tau: float, instance: BilevelInstance) -> np.ndarray:
    """One forward-backward step prox_{tau g(.;x)}(u - tau grad f(u;x)).

    Requires tau * L_f <= 1 so the forward map is non-expansive.
    """
    if instance.fb is None:
        raise ValueError("instance carries no forward-backward splitting data")
    if tau * instance.fb.L_f > 1.0 + 1e-12:
        raise ValueError(f"step size violation: tau*L_f = {tau * instance.fb.L_f} > 1")
    v = u - tau * instance.fb.grad_f(u, x)
    return instance.fb.prox_g(v, tau, x)


@dataclass(frozen=True)
class InnerSaddle:
    """Saddle-structured inner problem for the primal-dual inner algorithm.

    The exact solution map returns the stacked primal-dual pair (z, y).
    """

    K: np.ndarray
    prox_primal: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    prox_dual: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    solution: Callable[[np.ndarray], np.ndarray]


def make_quadratic_saddle_inner(K) -> InnerSaddle:
    """Inner saddle with primal term ||z - x||^2/2 and dual term ||y||^2/2."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    dz = K.shape[1]

    def solution(x):
        z = np.linalg.solve(np.eye(dz) + K.T @ K, np.asarray(x, dtype=float))
        return np.concatenate([z, K @ z])

    return InnerSaddle(
        K=K,
        prox_primal=lambda v, tau, x: (v + tau * x) / (1.0 + tau),
        prox_dual=lambda v, sigma, x: v / (1.0 + sigma),
        solution=solution,
    )


def pdps_inner_step(
    z: np.ndarray,
    y: np.ndarray,
    x: np.ndarray,
    tau: float,
    sigma: float,
    saddle: InnerSaddle,
) -> tuple[np.ndarray, np.ndarray]:
    """One primal-dual step on the inner saddle problem at parameter x."""
    K = saddle.K
    if tau * sigma * float(np.linalg.norm(K, 2)) > 1.0 + 1e-12:
        raise ValueError("step size violation: tau*sigma*||K|| > 1")
    z_next = saddle.prox_primal(z - tau * (K.T @ y), tau, x)
    y_next = saddle.prox_dual(y + sigma * (K @ (2.0 * z_next - z)), sigma, x)
    return z_next, y_next


def _split(A: np.ndarray, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    if scheme == "jacobi":
        N = np.diag(np.diag(A))
    elif scheme == "gauss_seidel":
        N = np.tril(A)
    else:
        raise ValueError(f"unknown splitting scheme {scheme!r}")
    if np.any(np.abs(np.diag(A)) == 0.0):
        raise ValueError("zero diagonal entry in splitting")
    return N, A - N


def _splitting_step(A: np.ndarray, b: np.ndarray, u: np.ndarray, scheme: str) -> np.ndarray:
    N, M = _split(A, scheme)
    return np.linalg.solve(N, b - M @ u)


def jacobi_step(u: np.ndarray, x: np.ndarray, system: ParametricLinearSystem) -> np.ndarray:
    """One Jacobi sweep on A(x) u = b(x)."""
    return _splitting_step(system.A(np.asarray(x, dtype=float)), system.b(x), u, "jacobi")


def gauss_seidel_step(u: np.ndarray, x: np.ndarray, system: ParametricLinearSystem) -> np.ndarray:
    """One Gauss-Seidel sweep on A(x) u = b(x)."""
    return _splitting_step(system.A(np.asarray(x, dtype=float)), system.b(x), u, "gauss_seidel")


def iteration_matrix(A: np.ndarray, scheme: str) -> np.ndarray:
    """Error propagation matrix I - N^{-1} A of the splitting scheme."""
    N, _ = _split(A, scheme)
    return np.eye(A.shape[0]) - np.linalg.solve(N, A)

def spectral_radius(G: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(G)).max())


def corner_spectral_radius(system: ParametricLinearSystem, box, scheme: str) -> float:
    """Largest splitting-iteration spectral radius over the box corners."""
    return max(spectral_radius(iteration_matrix(system.A(x), scheme)) for x in box.corners())


def measure_inner_tracking(
    trace,
    constants,
    metric_lambda: Optional[SymOperator] = None,
    instance: Optional[BilevelInstance] = None,
) -> np.ndarray:
    """Per-iteration slack of the inner tracking inequality over a run.

    Returns, for k = 1..N-1,

        d_U(u^k, S_u(x^{k-1})) + pi_u * lam(x^k, x^{k-1})
            - kappa_u * d_U(u^{k+1}, S_u(x^k)),

    where lam is the ``metric_lambda`` seminorm (Euclidean when omitted) and
    the exact values S_u come from direct solves.  Nonnegative entries mean
    the tracking inequality held at that step.
    """
    inst = instance if instance is not None else trace.instance
    if inst is None:
        raise ValueError("an instance with exact oracles is required")
    xs, us = trace.xs, trace.us
    n_outer = xs.shape[0] - 1
    if n_outer < 2:
        raise ValueError("trace must contain at least two outer steps")
    su = [solve_inner_exact(inst, xs[k]) for k in range(n_outer)]
    out = np.empty(n_outer - 1)
    for k in range(1, n_outer):
        step = xs[k] - xs[k - 1]
        lam = (
            float(np.linalg.norm(step))
            if metric_lambda is None
            else seminorm(metric_lambda, step)
        )
        d_prev = float(np.linalg.norm(us[k] - su[k - 1]))
        d_next = float(np.linalg.norm(us[k + 1] - su[k]))
        out[k - 1] = d_prev + constants.pi_u * lam - constants.kappa_u * d_next
    return out

"""Parametric inner problems T(u, x) = 0 with exact solution/adjoint oracles,
the outer composition F = J o S_u, and two desk-scale instances:

* a quadratic bilevel family ("BQ1" at gamma=1, target=1, all dims 1), and
* a 1-D discretized diffusion system with two scalar coefficients.

The oracles here are the trusted side of every dual-route check: direct
(Newton/LU) solves, never splitting iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Box",
    "ParametricInnerProblem",
    "ParametricLinearSystem",
    "FBInnerData",
    "BilevelInstance",
    "solve_inner_exact",
    "solve_reduced_adjoint_exact",
    "solve_basic_adjoint_exact",
    "exact_gradient",
    "eval_objective",
    "make_quadratic_bilevel",
    "make_parametric_poisson",
]

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; membership is exact arithmetic on the bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("invalid box bounds")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def corners(self) -> np.ndarray:
        d = self.dim
        out = np.empty((2**d, d))
        for i in range(2**d):
            for j in range(d):
                out[i, j] = self.hi[j] if (i >> j) & 1 else self.lo[j]
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))


@dataclass(frozen=True)
class ParametricInnerProblem:
    """Inner constraint T(u, x) = 0 with partial-derivative evaluators.

    ``T(u, x)`` maps to R^dim_w; ``dTdu`` is (dim_w, dim_u) and ``dTdx``
    is (dim_w, dim_x).  dTdu must be invertible along solution paths.
    """

    dim_u: int
    dim_x: int
    dim_w: int
    T: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dTdu: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dTdx: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParametricLinearSystem:
    """Affine-in-parameter linear family A(x) u = b(x)."""

    dim: int
    dim_x: int
    A: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FBInnerData:
    """Smooth+prox splitting of an inner objective f(u; x) + g(u; x)."""

    grad_f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    prox_g: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    L_f: float
    gamma_g: float


@dataclass(frozen=True)
class BilevelInstance:
    """Outer objective F = J o S_u over a parametric inner problem.

    ``omega`` is the admissible region (None means the whole space and makes
    membership trivially true); ``constants_box`` is a bounded box used only
    for estimating suprema of derivative-type constants.
    """

    name: str
    inner: ParametricInnerProblem
    J: Callable[[np.ndarray], float]
    Jprime: Callable[[np.ndarray], np.ndarray]
    omega: Optional[Box]
    constants_box: Box
    fb: Optional[FBInnerData] = None
    linear_system: Optional[ParametricLinearSystem] = None
    F: Optional[Callable[[np.ndarray], float]] = None
    Fprime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    x_star: Optional[np.ndarray] = None
    analytic: dict = field(default_factory=dict)

    @property
    def dim_x(self) -> int:
        return self.inner.dim_x

    @property
    def dim_u(self) -> int:
        return self.inner.dim_u

    @property
    def dim_w(self) -> int:
        return self.inner.dim_w

    def in_omega(self, x: np.ndarray) -> bool:
        return True if self.omega is None else self.omega.contains(x)


def solve_inner_exact(instance: BilevelInstance, x: np.ndarray) -> np.ndarray:
    """Direct solve of T(u, x) = 0: Newton with dense linear solves.

    Converges in one iteration for the linear families shipped here.
    """
    inner = instance.inner
    x = np.asarray(x, dtype=float)
    u = np.zeros(inner.dim_u)
    for _ in range(NEWTON_MAXIT):
        r = inner.T(u, x)
        if float(np.linalg.norm(r)) <= NEWTON_TOL:
            return u
        Ju = inner.dTdu(u, x)
        try:
            step = np.linalg.solve(Ju, r)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular inner Jacobian") from exc
        u = u - step
    r = inner.T(u, x)
    if float(np.linalg.norm(r)) <= NEWTON_TOL * 10:
        return u
    raise ValueError(f"inner Newton did not converge: residual {np.linalg.norm(r):.3e}")


def solve_reduced_adjoint_exact(instance: BilevelInstance, x: np.ndarray) -> np.ndarray:
    """Covector w solving w dT/du(S_u(x), x) + J'(S_u(x)) = 0."""
    u = solve_inner_exact(instance, x)
    A = instance.inner.dTdu(u, x)
    try:
        return np.linalg.solve(A.T, -instance.Jprime(u))
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular dT/du in reduced adjoint") from exc


def solve_basic_adjoint_exact(instance: BilevelInstance, x: np.ndarray) -> np.ndarray:
    """Sensitivity p = S_u'(x) solving dT/du p + dT/dx = 0, columnwise."""
    u = solve_inner_exact(instance, x)
    A = instance.inner.dTdu(u, x)
    try:
        return np.linalg.solve(A, -instance.inner.dTdx(u, x))
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular dT/du in basic adjoint") from exc


def exact_gradient(instance: BilevelInstance, x: np.ndarray) -> np.ndarray:
    """Composed derivative J'(S_u(x)) S_u'(x) as a covector on X."""
    u = solve_inner_exact(instance, x)
    p = solve_basic_adjoint_exact(instance, x)
    return instance.Jprime(u) @ p


def eval_objective(instance: BilevelInstance, x: np.ndarray) -> float:
    """F(x), via the closed form when present, else J(S_u(x))."""
    if instance.F is not None:
        return float(instance.F(x))
    return float(instance.J(solve_inner_exact(instance, x)))


def eval_gradient(instance: BilevelInstance, x: np.ndarray) -> np.ndarray:
    """F'(x), via the closed form when present, else the reduced adjoint."""
    if instance.Fprime is not None:
        return np.asarray(instance.Fprime(x), dtype=float)
    w = solve_reduced_adjoint_exact(instance, x)
    u = solve_inner_exact(instance, x)
    return w @ instance.inner.dTdx(u, x)


def make_quadratic_bilevel(
    gamma: float,
    target,
    constants_halfwidth: float = 8.0,
) -> BilevelInstance:
    """Quadratic bilevel family: inner f(u;x) = ||u-x||^2/2, g = gamma||u||^2/2.

    T(u, x) = (1+gamma) u - x, S_u(x) = x/(1+gamma), J(u) = ||u-target||^2/2.
    Closed-form F, F', and x* attached.  "BQ1" is gamma=1, target=(1,).
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    t = np.atleast_1d(np.asarray(target, dtype=float))
    d = t.size
    c = 1.0 + gamma
    eye = np.eye(d)

    inner = ParametricInnerProblem(
        dim_u=d,
        dim_x=d,
        dim_w=d,
        T=lambda u, x: c * u - x,
        dTdu=lambda u, x: c * eye,
        dTdx=lambda u, x: -eye,
    )
    fb = FBInnerData(
        grad_f=lambda u, x: u - x,
        prox_g=lambda v, tau, x: v / (1.0 + tau * gamma),
        L_f=1.0,
        gamma_g=gamma,
    )
    x_star = c * t
    cbox = Box(x_star - constants_halfwidth, x_star + constants_halfwidth)
    analytic = {
        "L_s": 1.0 / c,                    # Lipschitz constant of S_u
        "L_F": 1.0 / c**2,                 # Lipschitz constant of F'
        "gamma_F": 1.0 / c**2,             # strong monotonicity of F'
        "L_Jprime": 1.0,
        "N_Su_prime": 1.0 / c,
        "L_wstar_u": 1.0 / c,              # Lipschitz in u of the adjoint solve
        "L_Sw": 1.0 / c**2,                # Lipschitz constant of S_w
        "M_dTdx": 1.0,
        "L_dTdx_u": 0.0,
        "gamma": gamma,
    }
    return BilevelInstance(
        name=f"quadratic_bilevel(gamma={gamma})",
        inner=inner,
        J=lambda u: 0.5 * float(np.sum((u - t) ** 2)),
        Jprime=lambda u: u - t,
        omega=None,
        constants_box=cbox,
        fb=fb,
        F=lambda x: 0.5 * float(np.sum((x / c - t) ** 2)),
        Fprime=lambda x: (x / c - t) / c,
        x_star=x_star,
        analytic=analytic,
    )


def _second_difference(n: int) -> np.ndarray:
    K = 2.0 * np.eye(n)
    idx = np.arange(n - 1)
    K[idx, idx + 1] = -1.0
    K[idx + 1, idx] = -1.0
    return K


def make_parametric_poisson(n: int, coeff_box, forcing_scale: float = 0.5) -> BilevelInstance:
    """1-D diffusion family A(x) u = b(x) with two scalar coefficients.

    A(x) = (1+x1) K + x2 I for K the second-difference matrix, b(x) affine
    in x.  The admissible box must keep x2 > 0 and x1 > -1 so that A(x)
    stays strictly diagonally dominant.  J(u) = ||u - u_ref||^2/2 with
    u_ref the inner solution at the box center, so the outer minimum is
    the center itself.

    The affine load is anchored so that S_u(x) = u_prof + A(x)^{-1} d for a
    fixed profile u_prof and a small mixed-mode forcing d; this keeps the
    solutions and their sensitivities at unit scale across the box.
    """
    if n < 4:
        raise ValueError("grid size must be at least 4")
    if isinstance(coeff_box, Box):
        box = coeff_box
    else:
        intervals = np.asarray(coeff_box, dtype=float)
        if intervals.shape != (2, 2):
            raise ValueError("coefficient box must give an interval per coefficient")
        box = Box(intervals[:, 0], intervals[:, 1])
    if box.dim != 2:
        raise ValueError("coefficient box must be two-dimensional")
    if box.lo[0] <= -1.0 or box.lo[1] <= 0.0:
        raise ValueError("coefficient box permits a singular or non-dominant system")

    K = _second_difference(n)
    grid = np.arange(1, n + 1) / (n + 1.0)
    u_prof = np.sin(np.pi * grid)
    d = forcing_scale * 4.0 * np.cos(3.0 * np.pi * grid) * grid * (1.0 - grid)
    b0 = K @ u_prof + d
    B = np.column_stack([K @ u_prof, u_prof])

    def A(x):
        return (1.0 + x[0]) * K + x[1] * np.eye(n)

    def b(x):
        return b0 + B @ np.asarray(x, dtype=float)

    system = ParametricLinearSystem(dim=n, dim_x=2, A=A, b=b)

    inner = ParametricInnerProblem(
        dim_u=n,
        dim_x=2,
        dim_w=n,
        T=lambda u, x: A(x) @ u - b(x),
        dTdu=lambda u, x: A(x),
        dTdx=lambda u, x: np.column_stack([K @ u - B[:, 0], u - B[:, 1]]),
    )

    x_ref = box.center()
    u_ref = np.linalg.solve(A(x_ref), b(x_ref))

    return BilevelInstance(
        name=f"parametric_poisson(n={n})",
        inner=inner,
        J=lambda u: 0.5 * float(np.sum((u - u_ref) ** 2)),
        Jprime=lambda u: u - u_ref,
        omega=box,
        constants_box=box,
        linear_system=system,
        x_star=x_ref,
        analytic={},
    )

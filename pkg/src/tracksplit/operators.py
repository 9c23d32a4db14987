"""Dense symmetric/skew operator calculus: seminorms, quadratic forms,
operator order, Young companions, and the primal-dual block preconditioner.

Everything here is finite-dimensional and dense (desk scale, dim <= ~512).
All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SymOperator",
    "SkewOperator",
    "BlockShape",
    "seminorm",
    "quad_form",
    "young_companion",
    "operator_leq",
    "dual_seminorm",
    "pdps_preconditioner",
    "pdps_step_check",
    "preconditioner_bounds_check",
]

# Relative eigenvalue tolerance for positive semi-definiteness checks.
PSD_TOL = 1e-9
# Anti/symmetry tolerance at construction.
SYM_TOL = 1e-12


def _as_matrix(entries) -> np.ndarray:
    m = np.asarray(entries, dtype=float)
    if m.ndim == 1 and m.size == 1:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"expected a nonempty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


@dataclass(frozen=True)
class SymOperator:
    """Self-adjoint map X -> X*, stored as a dense symmetric matrix.

    Entries are symmetrized at construction; asymmetry beyond SYM_TOL
    (relative) is rejected.  ``psd_checked`` is True only when the smallest
    eigenvalue is >= -PSD_TOL * (spectral norm).
    """

    entries: np.ndarray
    dim: int = field(init=False)
    psd_checked: bool = field(init=False)

    def __init__(self, entries):
        m = _as_matrix(entries)
        scale = max(1.0, float(np.abs(m).max()))
        if float(np.abs(m - m.T).max()) > SYM_TOL * scale:
            raise ValueError("matrix is not symmetric to within tolerance")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dim", m.shape[0])
        eigs = np.linalg.eigvalsh(m)
        spec = float(np.abs(eigs).max())
        object.__setattr__(self, "psd_checked", bool(float(eigs.min()) >= -PSD_TOL * spec))

    @staticmethod
    def identity(dim: int) -> "SymOperator":
        return SymOperator(np.eye(dim))

    @staticmethod
    def scaled_identity(dim: int, c: float) -> "SymOperator":
        return SymOperator(c * np.eye(dim))

    @staticmethod
    def diag(values) -> "SymOperator":
        return SymOperator(np.diag(np.asarray(values, dtype=float)))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, vector shape {x.shape}")
        return self.entries @ x

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2)) if self.dim else 0.0

    def __add__(self, other: "SymOperator") -> "SymOperator":
        return SymOperator(self.entries + other.entries)

    def __sub__(self, other: "SymOperator") -> "SymOperator":
        return SymOperator(self.entries - other.entries)

    def __mul__(self, c: float) -> "SymOperator":
        return SymOperator(float(c) * self.entries)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SkewOperator:
    """Skew-adjoint map X -> X*: <Xi x, x> = 0 for all x."""

    entries: np.ndarray
    dim: int = field(init=False)

    def __init__(self, entries):
        m = _as_matrix(entries)
        scale = max(1.0, float(np.abs(m).max()))
        if float(np.abs(m + m.T).max()) > SYM_TOL * scale:
            raise ValueError("matrix is not antisymmetric to within tolerance")
        m = 0.5 * (m - m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dim", m.shape[0])

    @staticmethod
    def zero(dim: int) -> "SkewOperator":
        return SkewOperator(np.zeros((dim, dim)))

    @staticmethod
    def primal_dual(K: np.ndarray) -> "SkewOperator":
        """Coupling [[0, K^T], [-K, 0]] on Z x Y for K: Z -> Y*."""
        K = np.atleast_2d(np.asarray(K, dtype=float))
        dy, dz = K.shape
        top = np.hstack([np.zeros((dz, dz)), K.T])
        bot = np.hstack([-K, np.zeros((dy, dy))])
        return SkewOperator(np.vstack([top, bot]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, vector shape {x.shape}")
        return self.entries @ x


@dataclass(frozen=True)
class BlockShape:
    """Dimensions of a coupled primal/dual pair with coupling K: Z -> Y*."""

    primal_dim: int
    dual_dim: int
    K: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.shape != (self.dual_dim, self.primal_dim):
            raise ValueError(
                f"K has shape {K.shape}, expected ({self.dual_dim}, {self.primal_dim})"
            )
        K.setflags(write=False)
        object.__setattr__(self, "K", K)


def seminorm(M: SymOperator, x: np.ndarray) -> float:
    """Seminorm ||x||_M = sqrt(<Mx, x>) for a PSD-checked M.

    Tiny negative radicands from roundoff are clamped to zero; anything
    materially negative is an error.
    """
    if not M.psd_checked:
        raise ValueError("seminorm requires a PSD-checked operator")
    r = quad_form(M, x)
    if r < 0.0:
        x = np.asarray(x, dtype=float)
        floor = -max(1e-12, PSD_TOL * M.spectral_norm() * float(x @ x))
        if r < floor:
            raise ValueError(f"negative radicand {r} in seminorm of PSD-checked operator")
        r = 0.0
    return float(np.sqrt(r))


def quad_form(G: SymOperator, x: np.ndarray) -> float:
    """Quadratic form q_G(x) = <Gx, x>; may be negative for indefinite G."""
    x = np.asarray(x, dtype=float)
    if x.shape != (G.dim,):
        raise ValueError(f"dimension mismatch: operator dim {G.dim}, vector shape {x.shape}")
    return float(x @ (G.entries @ x))


def young_companion(G: SymOperator) -> SymOperator:
    """Spectral absolute value |G| = V diag(|l_i|) V^T.

    Satisfies 2<Gx, z> <= ||x||^2_{|G|} + ||z||^2_{|G|} for all x, z.
    """
    w, V = np.linalg.eigh(G.entries)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(V))):
        raise ValueError("eigendecomposition produced non-finite values")
    A = (V * np.abs(w)) @ V.T
    return SymOperator(0.5 * (A + A.T))


def operator_leq(A: SymOperator, B: SymOperator, tol: float = PSD_TOL) -> bool:
    """Operator order A <= B: smallest eigenvalue of B - A above -tol (relative)."""
    if A.dim != B.dim:
        raise ValueError(f"dimension mismatch: {A.dim} vs {B.dim}")
    D = B.entries - A.entries
    eigs = np.linalg.eigvalsh(D)
    spec = float(np.abs(eigs).max())
    return bool(float(eigs.min()) >= -tol * max(1.0, spec))


def dual_seminorm(M: SymOperator, xstar: np.ndarray, rtol: float = 1e-8) -> float:
    """Dual seminorm ||x*||_{M^-1}, via pseudo-inverse when M is singular.

    Components of ``xstar`` outside the range of M are rejected: the dual
    seminorm of such a functional is unbounded.
    """
    if not M.psd_checked:
        raise ValueError("dual seminorm requires a PSD-checked operator")
    xstar = np.asarray(xstar, dtype=float)
    if xstar.shape != (M.dim,):
        raise ValueError(f"dimension mismatch: operator dim {M.dim}, vector shape {xstar.shape}")
    Minv = np.linalg.pinv(M.entries, rcond=1e-13, hermitian=True)
    y = Minv @ xstar
    resid = M.entries @ y - xstar
    scale = float(np.linalg.norm(xstar))
    if scale > 0.0 and float(np.linalg.norm(resid)) > rtol * max(1.0, M.spectral_norm()) * scale:
        raise ValueError("functional has a component outside the range of M")
    r = float(xstar @ y)
    return float(np.sqrt(max(r, 0.0)))


def pdps_preconditioner(
    tau: float, sigma: float, M_z: SymOperator, M_y: SymOperator, K: np.ndarray
) -> SymOperator:
    """Block preconditioner [[M_z/tau, -K^T], [-K, M_y/sigma]] on Z x Y."""
    if tau <= 0.0 or sigma <= 0.0:
        raise ValueError("step lengths must be positive")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    dy, dz = K.shape
    if M_z.dim != dz or M_y.dim != dy:
        raise ValueError(
            f"dimension mismatch: K {K.shape}, M_z dim {M_z.dim}, M_y dim {M_y.dim}"
        )
    top = np.hstack([M_z.entries / tau, -K.T])
    bot = np.hstack([-K, M_y.entries / sigma])
    return SymOperator(np.vstack([top, bot]))


def pdps_step_check(
    tau: float,
    sigma: float,
    lam: float,
    M_z: SymOperator,
    M_y: SymOperator,
    K_z: np.ndarray,
    K_y: np.ndarray,
    tol: float = PSD_TOL,
) -> bool:
    """Step length condition for the factored coupling K = K_y K_z.

    Requires K_y K_y^T <= M_y and tau*lam*M_z + tau*sigma*K_z^T K_z <= M_z.
    """
    if tau <= 0.0 or sigma <= 0.0 or lam < 0.0:
        raise ValueError("need tau, sigma > 0 and lam >= 0")
    K_z = np.atleast_2d(np.asarray(K_z, dtype=float))
    K_y = np.atleast_2d(np.asarray(K_y, dtype=float))
    if K_z.shape[1] != M_z.dim or K_y.shape[0] != M_y.dim or K_y.shape[1] != K_z.shape[0]:
        raise ValueError("inconsistent factor dimensions")
    dual_ok = operator_leq(SymOperator(K_y @ K_y.T), M_y, tol)
    primal_lhs = SymOperator(tau * lam * M_z.entries + tau * sigma * (K_z.T @ K_z))
    primal_ok = operator_leq(primal_lhs, M_z, tol)
    return dual_ok and primal_ok


def preconditioner_bounds_check(
    M: SymOperator,
    M_z: SymOperator,
    M_y: SymOperator,
    lam: float,
    gamma_z: float,
    gamma_y: float,
    tau: float,
    sigma: float,
    tol: float = PSD_TOL,
) -> bool:
    """Two-sided bounds on the block preconditioner.

    Checks lam*diag(M_z, 0) <= M and gamma*M <= diag(gamma_z*M_z, gamma_y*M_y)
    with gamma = min(gamma_z*tau, gamma_y*sigma) / 2.
    """
    dz, dy = M_z.dim, M_y.dim
    if M.dim != dz + dy:
        raise ValueError(f"dimension mismatch: M dim {M.dim}, blocks {dz}+{dy}")
    lower = np.zeros((dz + dy, dz + dy))
    lower[:dz, :dz] = lam * M_z.entries
    if not operator_leq(SymOperator(lower), M, tol):
        return False
    gamma = min(gamma_z * tau, gamma_y * sigma) / 2.0
    upper = np.zeros((dz + dy, dz + dy))
    upper[:dz, :dz] = gamma_z * M_z.entries
    upper[dz:, dz:] = gamma_y * M_y.entries
    return operator_leq(gamma * M, SymOperator(upper), tol)

"""Dense linear algebra helpers: matrix exponential, ZOH input matrix, RK4, tiny QP."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class NumericsError(ValueError):
    """Bad shapes or non-finite data passed to a numerics routine."""


class IntegrationError(ArithmeticError):
    pass


class QpInfeasibleError(ArithmeticError):
    """The half-space intersection of a least-distance QP is empty."""


# Pade coefficients and 1-norm thresholds for degrees 3..13 (Higham 2005).
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _as_matrix(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise NumericsError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericsError(f"{name} has non-finite entries")
    return A


def _pade(A: np.ndarray, m: int) -> np.ndarray:
    b = _PADE_COEFFS[m]
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    if m < 13:
        powers = [ident, A2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ A2)
        U = A @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    else:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return np.linalg.solve(V - U, V + U)


def expm(A, scale: float = 1.0) -> np.ndarray:
    """Return ``exp(A * scale)`` by scaling and squaring with a Pade approximant."""
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise NumericsError(f"expm needs a square matrix, got {A.shape}")
    if not np.isfinite(scale):
        raise NumericsError("scale must be finite")
    M = A * float(scale)
    norm = np.linalg.norm(M, 1)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            return _pade(M, m)
    s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    X = _pade(M / 2.0**s, 13)
    for _ in range(s):
        X = X @ X
    return X


def zoh_matrices(A, B, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete pair ``(exp(A ts), int_0^ts exp(A tau) dtau B)`` from one augmented exponential."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n = A.shape[0]
    if A.shape[1] != n:
        raise NumericsError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise NumericsError(f"B has {B.shape[0]} rows, expected {n}")
    if not ts > 0:
        raise NumericsError("ts must be positive")
    k = B.shape[1]
    aug = np.zeros((n + k, n + k))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = expm(aug, ts)
    return E[:n, :n].copy(), E[:n, n:].copy()


def zoh_input_matrix(A, B, ts: float) -> np.ndarray:
    """Input matrix of the zero-order-hold discretization; valid for singular ``A`` too."""
    return zoh_matrices(A, B, ts)[1]


def rk4_step(deriv: Callable[[np.ndarray], np.ndarray], x, dt: float) -> np.ndarray:
    """Advance ``x`` by one classical Runge-Kutta step of length ``dt``."""
    if not dt > 0:
        raise NumericsError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(deriv(x), dtype=float)
    k2 = np.asarray(deriv(x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(deriv(x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(deriv(x + dt * k3), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state produced by RK4 step")
    return out


@dataclass(frozen=True)
class QpProblem:
    """min 0.5*||target - u||^2  s.t.  normals[k] . u <= bounds[k]."""

    target: np.ndarray
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).ravel()
        normals = np.asarray(self.normals, dtype=float)
        if normals.size == 0:
            normals = np.zeros((0, target.size))
        normals = normals.reshape(-1, target.size)
        bounds = np.asarray(self.bounds, dtype=float).ravel()
        if bounds.size != normals.shape[0]:
            raise NumericsError(
                f"{normals.shape[0]} constraint normals but {bounds.size} bounds"
            )
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "bounds", bounds)

    def violation(self, u) -> np.ndarray:
        return self.normals @ np.asarray(u, dtype=float) - self.bounds


def solve_least_distance_qp(p: QpProblem, tol: float = 1e-9) -> np.ndarray:
    """Project ``p.target`` onto the polyhedron ``{u : normals @ u <= bounds}``.

    Every candidate active set is enumerated; for the handful of constraints we
    ever pass (one per control area) that is exact and cheap. The KKT point of
    each subset is kept if it is primal feasible and its multipliers are
    nonnegative; the closest such point wins.

    Raises :class:`QpInfeasibleError` when no subset yields a feasible point.
    """
    u = p.target
    G, b = p.normals, p.bounds
    if G.shape[0] == 0 or np.all(G @ u - b <= tol):
        return u.copy()

    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    best, best_dist = None, np.inf
    n_con = G.shape[0]
    for size in range(1, min(n_con, u.size) + 1):
        for subset in itertools.combinations(range(n_con), size):
            Gs = G[list(subset)]
            gram = Gs @ Gs.T
            if np.linalg.matrix_rank(gram) < size:
                continue
            lam = np.linalg.solve(gram, Gs @ u - b[list(subset)])
            if np.any(lam < -tol):
                continue
            cand = u - Gs.T @ lam
            if np.all(G @ cand - b <= tol * scale):
                dist = float(np.dot(cand - u, cand - u))
                if dist < best_dist:
                    best, best_dist = cand, dist
    if best is None:
        raise QpInfeasibleError("constraint set is empty: no feasible rectified input")
    return best


def check_finite(x: Sequence[float], what: str = "vector") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericsError(f"{what} has non-finite entries")
    return x

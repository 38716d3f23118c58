"""Quadratic-game data model, weighted norms and definiteness checks.

The game is defined by the cost

    J(x, sigma) = ||x||_Q^2 + ||x - sigma||_Delta^2 + 2 (C sigma + c)' x

shared by all agents; agents differ only in their constraint sets and
aggregation weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from mfnash.errors import InvalidInputError, InvalidMetricError

EIG_TOL = 1e-10
SYM_TOL = 1e-10


def default_tol_psd(M: np.ndarray) -> float:
    """Absolute eigenvalue margin used to separate ``>0`` from ``=0``."""
    return 1e-9 * (1.0 + float(np.max(np.sum(np.abs(M), axis=1), initial=0.0)))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def is_symmetric(M: np.ndarray, tol: float = SYM_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = 1.0 + float(np.max(np.abs(M), initial=0.0))
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= tol * scale)


# --------------------------------------------------------------------------
# symmetric eigenvalues


@njit(cache=True)
def _jacobi_kernel(A, tol, max_sweeps):
    n = A.shape[0]
    V = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += A[i, j] * A[i, j]
    fro = np.sqrt(fro)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        if np.sqrt(2.0 * off) <= tol * max(fro, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V, sweeps


def jacobi_eigh(M, tol: float = EIG_TOL, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted ascending; columns of the
    second array are the eigenvectors.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    A = 0.5 * (A + A.T)
    w, V, _ = _jacobi_kernel(np.ascontiguousarray(A), tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True)
class DefinitenessVerdict:
    kind: str  # "positive_definite" | "positive_semidefinite" | "indefinite"
    min_eigenvalue_estimate: float
    tol_psd: float

    @property
    def is_pd(self) -> bool:
        return self.kind == "positive_definite"

    @property
    def is_psd(self) -> bool:
        return self.kind != "indefinite"


def psd_check(M, tol_psd: float | None = None) -> DefinitenessVerdict:
    """Classify a symmetric matrix as PD, PSD (boundary) or indefinite.

    A minimum eigenvalue within ``tol_psd`` of zero counts as semidefinite.
    """
    M = np.asarray(M, dtype=float)
    if not is_symmetric(M):
        raise InvalidInputError("psd_check: matrix is not symmetric within tolerance")
    if tol_psd is None:
        tol_psd = default_tol_psd(M)
    w, _ = jacobi_eigh(M)
    lam = float(w[0]) if w.size else 0.0
    if lam > tol_psd:
        kind = "positive_definite"
    elif lam >= -tol_psd:
        kind = "positive_semidefinite"
    else:
        kind = "indefinite"
    return DefinitenessVerdict(kind, lam, float(tol_psd))


def is_positive_definite(P) -> bool:
    """Cholesky attempt; cheap PD test used for metric validation."""
    P = np.asarray(P, dtype=float)
    if not is_symmetric(P):
        return False
    try:
        np.linalg.cholesky(0.5 * (P + P.T))
    except np.linalg.LinAlgError:
        return False
    return True


def weighted_norm(x, P) -> float:
    """``sqrt(x' P x)`` for a symmetric positive definite ``P``."""
    P = np.asarray(P, dtype=float)
    if not is_positive_definite(P):
        raise InvalidMetricError("weighted_norm: metric must be symmetric positive definite")
    x = np.asarray(x, dtype=float)
    if x.shape != (P.shape[0],):
        raise InvalidInputError(f"weighted_norm: vector shape {x.shape} does not match metric {P.shape}")
    return float(np.sqrt(max(float(x @ P @ x), 0.0)))


# --------------------------------------------------------------------------
# game data


@dataclass(frozen=True, eq=False)
class CostParams:
    """Quadratic cost data ``(Q, Delta, C, c)`` on ``R^n``."""

    Q: np.ndarray
    Delta: np.ndarray
    C: np.ndarray
    c: np.ndarray
    tol_psd: float | None = None

    def __post_init__(self):
        Q, D, C, c = (_frozen(a) for a in (self.Q, self.Delta, self.C, self.c))
        n = c.shape[0] if c.ndim == 1 else -1
        for name, M in (("Q", Q), ("Delta", D), ("C", C)):
            if M.shape != (n, n):
                raise InvalidInputError(f"CostParams: {name} has shape {M.shape}, expected ({n}, {n})")
        if c.ndim != 1:
            raise InvalidInputError("CostParams: c must be a vector")
        for name, M in (("Q", Q), ("Delta", D)):
            if not is_symmetric(M):
                raise InvalidInputError(f"CostParams: {name} must be symmetric")
            if not psd_check(M, self.tol_psd).is_psd:
                raise InvalidInputError(f"CostParams: {name} must be positive semidefinite")
        if not psd_check(Q + D, self.tol_psd).is_pd:
            raise InvalidInputError("CostParams: Q + Delta must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Delta", D)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def cost(self, x, sigma) -> float:
        """Evaluate ``J(x, sigma)``."""
        x = np.asarray(x, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        d = x - sigma
        return float(x @ self.Q @ x + d @ self.Delta @ d + 2.0 * (self.C @ sigma + self.c) @ x)


@dataclass(frozen=True, eq=False)
class Agent:
    id: int
    weight: float
    constraint: object  # a convex_sets.ConstraintSet

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0:
            raise InvalidInputError(f"agent {self.id}: weight must be a nonnegative number")


@dataclass(frozen=True, eq=False)
class Population:
    """A game instance: cost data plus an ordered list of agents.

    Construction checks the aggregation-weight conditions and, unless
    ``check_feasibility`` is false, that every constraint set is nonempty.
    """

    params: CostParams
    agents: Sequence[Agent]
    a_bar: float = 1.0
    tol_sum: float | None = None
    check_feasibility: bool = True
    _meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        from mfnash.convex_sets import feasibility_check
        from mfnash.errors import InfeasibleAgentError

        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        N = len(agents)
        if N == 0:
            raise InvalidInputError("Population: at least one agent is required")
        ids = [a.id for a in agents]
        if len(set(ids)) != N:
            raise InvalidInputError("Population: agent ids must be unique")
        for a in agents:
            if a.weight > self.a_bar:
                raise InvalidInputError(f"agent {a.id}: weight {a.weight} exceeds a_bar={self.a_bar}")
            if a.constraint.n != self.params.n:
                raise InvalidInputError(
                    f"agent {a.id}: constraint dimension {a.constraint.n} != game dimension {self.params.n}")
        tol = self.tol_sum if self.tol_sum is not None else 1e-9 * N
        total = float(sum(a.weight for a in agents))
        if abs(total - N) > tol:
            raise InvalidInputError(f"Population: weights sum to {total!r}, expected N={N}")
        if self.check_feasibility:
            for a in agents:
                if not feasibility_check(a.constraint).feasible:
                    raise InfeasibleAgentError(a.id)

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.agents], dtype=float)

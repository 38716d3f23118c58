"""Strictly convex QPs ``min x'Hx + 2 f'x`` over polyhedral sets.

The numerical work happens in :mod:`mfnash.qp._kernel`; this module adds
validation, status reporting and the weighted projection built on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfnash.convex_sets import TOL_FEAS, BudgetBox, ConstraintSet, as_polyhedron, contains
from mfnash.errors import InvalidInputError, InvalidMetricError, QpFailure
from mfnash.model_core import is_positive_definite
from mfnash.qp import _kernel

STATUS_NAMES = {
    _kernel.STATUS_SOLVED: "solved",
    _kernel.STATUS_MAX_ITER: "max_iterations",
    _kernel.STATUS_INFEASIBLE: "infeasible",
}

_NO_MERIT = np.empty(0)


@dataclass(frozen=True)
class QpSettings:
    """Solver settings.

    With ``structured`` set, problems with a diagonal Hessian over a
    :class:`BudgetBox` are solved exactly by a multiplier search instead of
    the splitting method.
    """

    qp_tol: float = 1e-8
    max_iter: int = 20000
    rho0: float = 0.1
    polish: bool = True
    structured: bool = True

    def __post_init__(self):
        if not (self.qp_tol > 0):
            raise InvalidInputError("qp_tol must be positive")
        if int(self.max_iter) < 1:
            raise InvalidInputError("max_iter must be at least 1")
        if not (self.rho0 > 0):
            raise InvalidInputError("rho0 must be positive")


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Minimise ``x'Hx + 2 f'x`` over ``set``."""

    H: np.ndarray
    f: np.ndarray
    set: ConstraintSet

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        f = np.array(self.f, dtype=float)
        n = self.set.n
        if H.shape != (n, n) or f.shape != (n,):
            raise InvalidInputError(f"QpProblem: H {H.shape} and f {f.shape} do not match set dimension {n}")
        if not is_positive_definite(H):
            raise InvalidMetricError("QpProblem: H must be symmetric positive definite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Solver output.

    ``primal_residual`` is the largest absolute row violation after each row
    of ``G`` is scaled to unit max-norm; ``dual_residual`` is the stationarity
    error relative to the largest term. ``y`` are the multipliers in
    ``Hx + f + G'y = 0`` for the canonical polyhedron.
    """

    x_star: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    status: str
    y: np.ndarray
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def is_diagonal(H) -> bool:
    H = np.asarray(H)
    return bool(np.all(H == np.diag(np.diagonal(H))))


def _use_budget_path(st, H, s) -> bool:
    return st.structured and isinstance(s, BudgetBox) and is_diagonal(H) and bool(np.all(np.diagonal(H) > 0))


def _wrap(out) -> QpSolution:
    x, y, it, pr, dr, st, pol = out
    return QpSolution(x, int(it), float(pr), float(dr), STATUS_NAMES[int(st)], y, bool(pol))


def solve_qp_raw(H, f, G, l, u, qp_tol=1e-8, max_iter=20000, rho0=0.1, polish=True,
                 merit=None) -> QpSolution:
    """Kernel call on already validated data; infinite bounds allowed.

    Pass a float buffer of length ``>= max_iter`` as ``merit`` to record the
    per-iteration fixed-point residual of the splitting.
    """
    G = np.ascontiguousarray(G, dtype=float)
    l = np.clip(np.asarray(l, dtype=float), -_kernel.INFTY, _kernel.INFTY)
    u = np.clip(np.asarray(u, dtype=float), -_kernel.INFTY, _kernel.INFTY)
    buf = _NO_MERIT if merit is None else merit
    return _wrap(_kernel.admm_solve(np.ascontiguousarray(H, dtype=float),
                                    np.ascontiguousarray(f, dtype=float),
                                    G, np.ascontiguousarray(l), np.ascontiguousarray(u),
                                    float(qp_tol), int(max_iter), float(rho0), bool(polish), buf))


class QpSolver:
    """Solver with fixed settings.

    Instances keep no state between solves, so one instance may be used from
    several threads; the kernel releases the GIL.
    """

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()

    def solve(self, problem: QpProblem) -> QpSolution:
        return self.solve_unchecked(problem.H, problem.f, problem.set)

    def solve_unchecked(self, H, f, s: ConstraintSet) -> QpSolution:
        """Solve without re-validating ``H`` (caller guarantees ``H`` PD)."""
        st = self.settings
        if _use_budget_path(st, H, s):
            sol = _wrap(_kernel.budget_solve(np.ascontiguousarray(np.diagonal(H)), np.ascontiguousarray(f),
                                             s.lower, s.upper, s.budget_vector, s.budget_value))
        else:
            G, l, u = as_polyhedron(s).kernel_bounds
            sol = _wrap(_kernel.admm_solve(H, f, G, l, u, st.qp_tol, st.max_iter, st.rho0,
                                           st.polish, _NO_MERIT))
        if sol.solved and not contains(s, sol.x_star, TOL_FEAS):
            return QpSolution(sol.x_star, sol.iterations, sol.primal_residual,
                              sol.dual_residual, "max_iterations", sol.y, sol.polished)
        return sol

    def solve_many(self, H, F, s: ConstraintSet) -> list[QpSolution]:
        """Solve ``min x'Hx + 2 F[i]'x`` over the same set for every row of ``F``."""
        st = self.settings
        G, l, u = as_polyhedron(s).kernel_bounds
        k = F.shape[0]
        rep = lambda a: np.ascontiguousarray(np.broadcast_to(a, (k,) + a.shape))
        X, Y, it, pr, dr, status, pol = _kernel.admm_solve_many(
            H, np.ascontiguousarray(F), rep(G), rep(l), rep(u),
            st.qp_tol, st.max_iter, st.rho0, st.polish)
        return [_wrap((X[i], Y[i], it[i], pr[i], dr[i], status[i], pol[i])) for i in range(k)]

    def project(self, P, v, s: ConstraintSet) -> np.ndarray:
        P = np.ascontiguousarray(P, dtype=float)
        v = np.asarray(v, dtype=float)
        sol = self.solve_unchecked(P, -(P @ v), s)
        if not sol.solved:
            raise QpFailure(sol.status)
        return sol.x_star


def solve_qp(problem: QpProblem, qp_tol: float = 1e-8, max_iter: int = 20000,
             rho0: float = 0.1) -> QpSolution:
    """Solve a strictly convex QP over a polyhedral set.

    Examples
    --------
    >>> from mfnash.convex_sets import Box
    >>> sol = solve_qp(QpProblem(np.eye(1), np.zeros(1), Box([1.0], [2.0])))
    >>> sol.status, round(float(sol.x_star[0]), 12)
    ('solved', 1.0)
    """
    return QpSolver(QpSettings(qp_tol, max_iter, rho0)).solve(problem)


def weighted_projection(P, v, s: ConstraintSet, qp_tol: float = 1e-8,
                        max_iter: int = 20000) -> np.ndarray:
    """``argmin_{y in s} ||y - v||_P^2``.

    Raises
    ------
    InvalidMetricError
        If ``P`` is not symmetric positive definite.
    QpFailure
        If the underlying solve does not finish with status ``solved``.
    """
    P = np.asarray(P, dtype=float)
    if not is_positive_definite(P):
        raise InvalidMetricError("weighted_projection: P must be symmetric positive definite")
    v = np.asarray(v, dtype=float)
    if v.shape != (s.n,):
        raise InvalidInputError("weighted_projection: v does not match set dimension")
    return QpSolver(QpSettings(qp_tol, max_iter)).project(P, v, s)

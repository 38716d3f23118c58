"""Bounded polyhedral constraint sets with membership and feasibility tests.

Three representations are supported; all of them reduce to the canonical
form ``l <= G x <= u`` used by the QP engine (equalities are rows with
``l == u``, missing bounds are infinite).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from mfnash.errors import InvalidInputError

TOL_FEAS = 1e-7
PHASE1_EPS = 1e-8


def _vec(a, name) -> np.ndarray:
    v = np.array(a, dtype=float).reshape(-1) if np.ndim(a) <= 1 else None
    if v is None:
        raise InvalidInputError(f"{name} must be a vector")
    if np.any(np.isnan(v)):
        raise InvalidInputError(f"{name} contains NaN")
    v.setflags(write=False)
    return v


def _certify_bounded(G: np.ndarray, l: np.ndarray, u: np.ndarray, rounds: int = 50) -> bool:
    """Sufficient test that ``{x : l <= Gx <= u}`` is bounded.

    Interval bounds on each coordinate are tightened row by row (one-sided
    rows included) until every coordinate has finite bounds or nothing
    changes; if propagation stalls, two-sided rows of full column rank also
    certify boundedness.
    """
    m, n = G.shape
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    with np.errstate(invalid="ignore"):
        for _ in range(rounds):
            changed = False
            for j in range(m):
                g = G[j]
                cols = np.flatnonzero(g)
                if cols.size == 0:
                    continue
                gc = g[cols]
                # termwise range of g_k x_k
                t_lo = np.where(gc > 0, gc * lo[cols], gc * hi[cols])
                t_hi = np.where(gc > 0, gc * hi[cols], gc * lo[cols])
                for i, k in enumerate(cols):
                    rest_lo = np.sum(np.delete(t_lo, i))
                    rest_hi = np.sum(np.delete(t_hi, i))
                    up = u[j] - rest_lo  # bound on g_k x_k from above
                    dn = l[j] - rest_hi
                    a = gc[i]
                    nh, nl = (up / a, dn / a) if a > 0 else (dn / a, up / a)
                    if np.isfinite(nh) and nh < hi[k]:
                        hi[k] = nh
                        changed = True
                    if np.isfinite(nl) and nl > lo[k]:
                        lo[k] = nl
                        changed = True
            if np.all(np.isfinite(lo) & np.isfinite(hi)):
                return True
            if not changed:
                break
    two_sided = np.isfinite(l) & np.isfinite(u)
    rows = G[two_sided]
    return rows.shape[0] >= n and np.linalg.matrix_rank(rows) == n


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``{x : l <= G x <= u}``; use ``-inf``/``inf`` for absent bounds."""

    G: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2:
            raise InvalidInputError("Polyhedron: G must be a matrix")
        l, u = _vec(self.l, "l"), _vec(self.u, "u")
        if l.shape != (G.shape[0],) or u.shape != (G.shape[0],):
            raise InvalidInputError("Polyhedron: l and u must have one entry per row of G")
        if not np.all(np.isfinite(G)):
            raise InvalidInputError("Polyhedron: G must be finite")
        if np.any(l > u):
            raise InvalidInputError("Polyhedron: l <= u must hold componentwise")
        if not _certify_bounded(G, l, u):
            raise InvalidInputError("Polyhedron: could not certify that the set is bounded")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @cached_property
    def kernel_bounds(self):
        """Contiguous ``(G, l, u)`` with infinities clipped for the kernel."""
        lo = np.where(np.isfinite(self.l), self.l, -1e20)
        hi = np.where(np.isfinite(self.u), self.u, 1e20)
        return np.ascontiguousarray(self.G), np.ascontiguousarray(lo), np.ascontiguousarray(hi)


@dataclass(frozen=True, eq=False)
class Box:
    """``{x : lower <= x <= upper}`` with finite bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if lo.shape != hi.shape:
            raise InvalidInputError("Box: lower and upper must have the same length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("Box: bounds must be finite")
        if np.any(lo > hi):
            raise InvalidInputError("Box: lower <= upper must hold componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @cached_property
    def polyhedron(self) -> Polyhedron:
        return Polyhedron(np.eye(self.n), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class BudgetBox:
    """``{x : lower <= x <= upper, b'x = gamma}``."""

    lower: np.ndarray
    upper: np.ndarray
    budget_vector: np.ndarray
    budget_value: float

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        b = _vec(self.budget_vector, "budget_vector")
        if not (lo.shape == hi.shape == b.shape):
            raise InvalidInputError("BudgetBox: lower, upper and budget_vector must have the same length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(np.isfinite(b))):
            raise InvalidInputError("BudgetBox: bounds and budget vector must be finite")
        if np.any(lo > hi):
            raise InvalidInputError("BudgetBox: lower <= upper must hold componentwise")
        if not np.isfinite(self.budget_value):
            raise InvalidInputError("BudgetBox: budget_value must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "budget_vector", b)
        object.__setattr__(self, "budget_value", float(self.budget_value))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @cached_property
    def polyhedron(self) -> Polyhedron:
        G = np.vstack([np.eye(self.n), self.budget_vector[None, :]])
        g = self.budget_value
        return Polyhedron(G, np.append(self.lower, g), np.append(self.upper, g))


ConstraintSet = Union[Box, BudgetBox, Polyhedron]


@dataclass(frozen=True)
class FeasibilityCertificate:
    feasible: bool
    witness: np.ndarray | None
    violation: float


def as_polyhedron(s: ConstraintSet) -> Polyhedron:
    """Canonical ``l <= Gx <= u`` form of a constraint set (cached)."""
    if isinstance(s, Polyhedron):
        return s
    if isinstance(s, (Box, BudgetBox)):
        return s.polyhedron
    raise InvalidInputError(f"unsupported constraint set type {type(s).__name__}")


def _check_dim(s, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.n,):
        raise InvalidInputError(f"point of shape {x.shape} does not match set dimension {s.n}")
    return x


def violation(s: ConstraintSet, x) -> float:
    """Largest absolute constraint violation of ``x`` (0 when inside)."""
    x = _check_dim(s, x)
    if isinstance(s, Box):
        return float(max(np.max(s.lower - x, initial=0.0), np.max(x - s.upper, initial=0.0), 0.0))
    if isinstance(s, BudgetBox):
        box = max(np.max(s.lower - x, initial=0.0), np.max(x - s.upper, initial=0.0), 0.0)
        return float(max(box, abs(float(s.budget_vector @ x) - s.budget_value)))
    p = as_polyhedron(s)
    g = p.G @ x
    with np.errstate(invalid="ignore"):
        lo = np.max(np.where(np.isfinite(p.l), p.l - g, 0.0), initial=0.0)
        hi = np.max(np.where(np.isfinite(p.u), g - p.u, 0.0), initial=0.0)
    return float(max(lo, hi, 0.0))


def contains(s: ConstraintSet, x, tol_feas: float = TOL_FEAS) -> bool:
    """Membership test with absolute tolerance ``tol_feas`` on every row."""
    return violation(s, x) <= tol_feas


def feasibility_check(s: ConstraintSet, tol_feas: float = TOL_FEAS) -> FeasibilityCertificate:
    """Decide nonemptiness by a phase-1 QP.

    Minimises ``eps ||x||^2 + ||v||^2`` subject to ``l <= Gx + v <= u``, i.e.
    the squared constraint violation with a tiny regulariser that makes the
    problem strictly convex. The minimiser ``x`` is a witness exactly when it
    passes :func:`contains`.
    """
    from mfnash.qp.engine import solve_qp_raw

    p = as_polyhedron(s)
    G, l, u = p.kernel_bounds
    m, n = G.shape
    H = np.zeros((n + m, n + m))
    H[:n, :n] = PHASE1_EPS * np.eye(n)
    H[n:, n:] = np.eye(m)
    Gl = np.hstack([G, np.eye(m)])
    sol = solve_qp_raw(H, np.zeros(n + m), Gl, l, u, qp_tol=1e-10, max_iter=50000)
    x = sol.x_star[:n]
    viol = violation(s, x)
    if viol <= tol_feas:
        return FeasibilityCertificate(True, x, viol)
    return FeasibilityCertificate(False, None, viol)

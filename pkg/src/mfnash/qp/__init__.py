"""Strictly convex QP solver over polyhedra and weighted projections."""

from mfnash.qp.engine import (
    QpProblem,
    QpSettings,
    QpSolution,
    QpSolver,
    solve_qp,
    solve_qp_raw,
    weighted_projection,
)

__all__ = [
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpSolver",
    "solve_qp",
    "solve_qp_raw",
    "weighted_projection",
]

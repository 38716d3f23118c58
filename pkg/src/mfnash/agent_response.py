"""Optimal responses to a broadcast signal and best responses to opponents.

With ``H = Q + Delta``, the cost is, up to a constant in ``x``,

    J(x, z) = x'Hx + 2 ((C - Delta) z + c)' x

so the optimal response is the QP ``min_{x in X} x'Hx + 2 f(z)'x``. The same
point is the ``H``-weighted projection of the unconstrained minimiser
``xhat(z) = H^{-1}((Delta - C) z - c)`` onto ``X``.

For the best response an agent accounts for its own share ``mu = a_i/N`` of
the aggregate: ``sigma = mu y + s``. Expanding ``J(y, mu y + s)`` gives

    y' [Q + (1-mu)^2 Delta + mu (C + C')] y + 2 [-(1-mu) Delta s + C s + c]' y
    + s' Delta s
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mfnash.convex_sets import ConstraintSet
from mfnash.errors import DegenerateBestResponseError, InvalidInputError, QpFailure
from mfnash.model_core import Agent, CostParams
from mfnash.qp.engine import QpSettings, QpSolver

CROSS_CHECK_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class ResponseContext:
    """Precomputed data for repeated response evaluations under one cost."""

    params: CostParams
    settings: QpSettings = field(default_factory=QpSettings)
    cross_check: bool = False

    def __post_init__(self):
        p = self.params
        H = 0.5 * ((p.Q + p.Delta) + (p.Q + p.Delta).T)
        L = np.linalg.cholesky(H)
        K = np.linalg.solve(H, p.Delta - p.C)
        k0 = -np.linalg.solve(H, p.c)
        for name, val in (("H", H), ("chol", L), ("K", K), ("k0", k0)):
            val = np.ascontiguousarray(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "solver", QpSolver(self.settings))
        object.__setattr__(self, "C_minus_Delta", np.ascontiguousarray(p.C - p.Delta))

    @property
    def n(self) -> int:
        return self.params.n

    def direct_linear_term(self, z) -> np.ndarray:
        """``f(z) = (C - Delta) z + c`` of the direct optimal-response QP."""
        return self.C_minus_Delta @ z + self.params.c

    def projection_linear_term(self, z) -> np.ndarray:
        """``-H xhat(z)``, the linear term of the projection of ``xhat(z)``."""
        return -(self.H @ unconstrained_optimizer(self, z))


def _check_z(ctx, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (ctx.n,):
        raise InvalidInputError(f"signal of shape {z.shape} does not match dimension {ctx.n}")
    return z


def unconstrained_optimizer(ctx: ResponseContext, z) -> np.ndarray:
    """``(Q + Delta)^{-1} ((Delta - C) z - c)``."""
    z = _check_z(ctx, z)
    return ctx.K @ z + ctx.k0


def _solve(ctx, H, f, s: ConstraintSet, agent_id):
    sol = ctx.solver.solve_unchecked(H, np.ascontiguousarray(f), s)
    if not sol.solved:
        raise QpFailure(sol.status, agent_id=agent_id)
    return sol.x_star


def optimal_response(ctx: ResponseContext, agent: Agent, z, path: str = "projection") -> np.ndarray:
    """Minimiser of ``J(., z)`` over the agent's constraint set.

    Parameters
    ----------
    path : {"projection", "direct"}
        ``"projection"`` projects ``xhat(z)`` onto the set in the ``Q + Delta``
        metric; ``"direct"`` solves the cost QP as written. With
        ``ctx.cross_check`` set, both are computed and compared.
    """
    z = _check_z(ctx, z)
    if path == "projection":
        f = ctx.projection_linear_term(z)
    elif path == "direct":
        f = ctx.direct_linear_term(z)
    else:
        raise InvalidInputError(f"unknown response path {path!r}")
    x = _solve(ctx, ctx.H, f, agent.constraint, agent.id)
    if ctx.cross_check:
        other = "direct" if path == "projection" else "projection"
        g = ctx.direct_linear_term(z) if other == "direct" else ctx.projection_linear_term(z)
        x2 = _solve(ctx, ctx.H, g, agent.constraint, agent.id)
        gap = float(np.max(np.abs(x - x2), initial=0.0))
        if gap > CROSS_CHECK_FACTOR * ctx.settings.qp_tol * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            raise QpFailure("cross_check", f"response paths disagree by {gap:.3e}", agent_id=agent.id)
    return x


def best_response_problem(ctx: ResponseContext, s, mu: float):
    """Effective ``(H_eff, f_eff)`` of ``y -> J(y, mu y + s)``."""
    p = ctx.params
    s = _check_z(ctx, s)
    if not (0.0 <= mu <= 1.0):
        raise InvalidInputError(f"mu must lie in [0, 1], got {mu}")
    H = p.Q + (1.0 - mu) ** 2 * p.Delta + mu * (p.C + p.C.T)
    H = 0.5 * (H + H.T)
    f = -(1.0 - mu) * (p.Delta @ s) + p.C @ s + p.c
    return np.ascontiguousarray(H), np.ascontiguousarray(f)


def best_response(ctx: ResponseContext, agent: Agent, s, mu: float) -> np.ndarray:
    """Minimiser of ``y -> J(y, mu y + s)`` over the agent's set.

    Raises
    ------
    DegenerateBestResponseError
        If the effective Hessian is not positive definite.
    """
    H, f = best_response_problem(ctx, s, mu)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise DegenerateBestResponseError(
            f"agent {agent.id}: effective Hessian is not positive definite for mu={mu}") from None
    return _solve(ctx, H, f, agent.constraint, agent.id)

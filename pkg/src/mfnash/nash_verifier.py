"""epsilon-Nash certificates for a candidate mean-field fixed point.

At a signal ``zbar`` every agent plays ``xbar_i = x_i*(zbar)``. Agent ``i``
then faces the aggregate ``mu_i y + s_i`` with ``mu_i = a_i/N`` and
``s_i = (total - a_i xbar_i)/N``, ``total = sum_j a_j xbar_j``. The largest
unilateral improvement ``J(xbar_i, .) - min_y J(y, mu_i y + s_i)`` over agents
is ``epsilon_N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfnash.aggregation import _pool, aggregate, context_for, pairwise_sum, responses
from mfnash.agent_response import ResponseContext, best_response
from mfnash.model_core import Population
from mfnash.serialize import dumps


@dataclass(frozen=True)
class AgentGap:
    agent_id: int
    J_bar: float
    J_tilde_star: float
    gap: float


@dataclass(frozen=True, eq=False)
class NashCertificate:
    z_bar: np.ndarray
    residual: float
    records: tuple
    epsilon_N: float
    N: int
    normalization: float | None = None

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.records])

    @property
    def epsilon_relative(self) -> float | None:
        if self.normalization is None:
            return None
        return self.epsilon_N / abs(self.normalization)

    def with_normalization(self, value: float) -> "NashCertificate":
        return NashCertificate(self.z_bar, self.residual, self.records, self.epsilon_N, self.N, float(value))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "epsilon_N": self.epsilon_N,
            "normalization": self.normalization,
            "epsilon_relative": self.epsilon_relative,
            "residual": self.residual,
            "z_bar": [float(v) for v in self.z_bar],
            "agents": [
                {"id": r.agent_id, "J_bar": r.J_bar, "J_tilde_star": r.J_tilde_star, "gap": r.gap}
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def epsilon_nash(pop: Population, z_bar, ctx: ResponseContext | None = None, threads: int = 1,
                 metric_P=None) -> NashCertificate:
    """Unilateral-improvement certificate at ``z_bar``.

    Gaps are reported raw (tiny negative values are solver noise);
    ``epsilon_N`` clamps the maximum at zero.
    """
    ctx = ctx or context_for(pop)
    z_bar = np.array(z_bar, dtype=float)
    X = responses(pop, z_bar, ctx, threads)
    P = ctx.H if metric_P is None else np.asarray(metric_P, dtype=float)
    d = aggregate(pop, X) - z_bar
    residual = float(np.sqrt(max(d @ P @ d, 0.0)))
    a = pop.weights
    N = pop.N
    total = pairwise_sum(a[:, None] * X)
    cost = pop.params.cost

    def one(i: int) -> AgentGap:
        agent = pop.agents[i]
        xb = X[i]
        mu = agent.weight / N
        s = (total - agent.weight * xb) / N
        Jb = cost(xb, mu * xb + s)
        xt = best_response(ctx, agent, s, mu)
        Jt = cost(xt, mu * xt + s)
        return AgentGap(agent.id, Jb, Jt, Jb - Jt)

    idx = range(N)
    if threads > 1:
        records = tuple(_pool(threads).map(one, idx))
    else:
        records = tuple(one(i) for i in idx)
    eps = max(0.0, max(r.gap for r in records))
    return NashCertificate(z_bar, residual, records, float(eps), N)

"""The aggregation mapping ``A(z) = (1/N) sum_i a_i x_i*(z)``.

Agent responses are solved independently, in fixed-size chunks that may run
on worker threads; the weighted sum is then reduced by pairwise summation in
agent order, so the result does not depend on the number of threads.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mfnash.agent_response import ResponseContext
from mfnash.convex_sets import TOL_FEAS, BudgetBox, as_polyhedron
from mfnash.errors import InvalidInputError, InvalidMetricError, QpFailure
from mfnash.model_core import Population, is_positive_definite
from mfnash.qp import _kernel
from mfnash.qp.engine import STATUS_NAMES, QpSettings, is_diagonal

CHUNK = 16
PAIRWISE_BLOCK = 8

_pools: dict[int, ThreadPoolExecutor] = {}
_pool_lock = threading.Lock()


def _pool(threads: int) -> ThreadPoolExecutor:
    with _pool_lock:
        ex = _pools.get(threads)
        if ex is None:
            ex = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="mfnash")
            _pools[threads] = ex
        return ex


def pairwise_sum(rows: np.ndarray) -> np.ndarray:
    """Sum the rows of a 2-D array by a fixed binary tree."""
    k = rows.shape[0]
    if k <= PAIRWISE_BLOCK:
        acc = np.zeros(rows.shape[1])
        for i in range(k):
            acc = acc + rows[i]
        return acc
    h = k // 2
    return pairwise_sum(rows[:h]) + pairwise_sum(rows[h:])


@dataclass(frozen=True, eq=False)
class _Chunk:
    idx: np.ndarray  # positions in pop.agents
    G: np.ndarray
    l: np.ndarray
    u: np.ndarray
    budget: tuple | None  # (lower, upper, b, gamma) stacks for the exact path


def _plan(pop: Population, structured: bool) -> list[_Chunk]:
    """Chunks of consecutive agents whose canonical sets have equal shape."""
    key = ("plan", structured)
    cached = pop._meta.get(key)
    if cached is not None:
        return cached
    chunks: list[_Chunk] = []
    run: list[int] = []
    sig = None

    def flush():
        if not run:
            return
        sets = [pop.agents[i].constraint for i in run]
        bounds = [as_polyhedron(s).kernel_bounds for s in sets]
        budget = None
        if sig[0]:
            budget = tuple(np.ascontiguousarray(np.stack([getattr(s, name) for s in sets]))
                           for name in ("lower", "upper", "budget_vector", "budget_value"))
        chunks.append(_Chunk(np.array(run), np.ascontiguousarray(np.stack([b[0] for b in bounds])),
                             np.ascontiguousarray(np.stack([b[1] for b in bounds])),
                             np.ascontiguousarray(np.stack([b[2] for b in bounds])), budget))
        run.clear()

    diag_H = is_diagonal(pop.params.Q + pop.params.Delta)
    for i, a in enumerate(pop.agents):
        s = a.constraint
        this = (structured and diag_H and isinstance(s, BudgetBox), as_polyhedron(s).G.shape)
        if this != sig or len(run) == CHUNK:
            flush()
            sig = this
        run.append(i)
    flush()
    pop._meta[key] = chunks
    return chunks


def context_for(pop: Population, settings: QpSettings | None = None) -> ResponseContext:
    """Cached :class:`ResponseContext` for a population."""
    key = ("ctx", settings)
    ctx = pop._meta.get(key)
    if ctx is None:
        ctx = ResponseContext(pop.params, settings or QpSettings())
        pop._meta[key] = ctx
    return ctx


def _solve_chunk(ch: _Chunk, H, f, st: QpSettings):
    k = ch.idx.size
    F = np.ascontiguousarray(np.broadcast_to(f, (k, f.size)))
    if ch.budget is not None:
        lo, hi, b, g = ch.budget
        return _kernel.budget_solve_many(np.ascontiguousarray(np.diagonal(H)), F, lo, hi, b, g)
    return _kernel.admm_solve_many(H, F, ch.G, ch.l, ch.u, st.qp_tol, st.max_iter, st.rho0, st.polish)


def responses(pop: Population, z, ctx: ResponseContext | None = None, threads: int = 1,
              stats: dict | None = None) -> np.ndarray:
    """All optimal responses to ``z`` as an ``(N, n)`` array (agent order).

    When ``stats`` is given, the total and maximum QP iteration counts are
    accumulated into it.

    Raises
    ------
    QpFailure
        For the first agent (in order) whose solve did not succeed.
    """
    ctx = ctx or context_for(pop)
    z = np.asarray(z, dtype=float)
    if z.shape != (pop.n,):
        raise InvalidInputError(f"signal of shape {z.shape} does not match dimension {pop.n}")
    f = ctx.projection_linear_term(z)
    chunks = _plan(pop, ctx.settings.structured)
    st = ctx.settings
    if threads > 1 and len(chunks) > 1:
        outs = list(_pool(threads).map(lambda ch: _solve_chunk(ch, ctx.H, f, st), chunks))
    else:
        outs = [_solve_chunk(ch, ctx.H, f, st) for ch in chunks]
    X = np.empty((pop.N, pop.n))
    for ch, (Xc, _, iters, _, _, status, _) in zip(chunks, outs):
        if stats is not None:
            stats["qp_iterations"] = stats.get("qp_iterations", 0) + int(iters.sum())
            stats["max_qp_iterations"] = max(stats.get("max_qp_iterations", 0), int(iters.max()))
        Gx = np.einsum("kij,kj->ki", ch.G, Xc)
        viol = np.maximum(np.max(ch.l - Gx, axis=1), np.max(Gx - ch.u, axis=1))
        for r in range(ch.idx.size):
            if status[r] != _kernel.STATUS_SOLVED or viol[r] > TOL_FEAS:
                name = STATUS_NAMES[int(status[r])] if status[r] != _kernel.STATUS_SOLVED else "max_iterations"
                raise QpFailure(name, agent_id=pop.agents[ch.idx[r]].id)
        X[ch.idx] = Xc
    return X


def aggregate(pop: Population, X: np.ndarray) -> np.ndarray:
    """``(1/N) sum_i a_i X[i]`` with the fixed pairwise reduction."""
    return pairwise_sum(pop.weights[:, None] * X) / pop.N


@dataclass(frozen=True, eq=False)
class AggregationEvaluation:
    z: np.ndarray
    A_of_z: np.ndarray
    per_agent_responses: np.ndarray | None
    residual_P: float


def _metric(pop, ctx, metric_P):
    if metric_P is None:
        return ctx.H
    P = np.asarray(metric_P, dtype=float)
    if P.shape != (pop.n, pop.n) or not is_positive_definite(P):
        raise InvalidMetricError("metric must be a symmetric positive definite n x n matrix")
    return P


def evaluate(pop: Population, z, retain_responses: bool = False, metric_P=None,
             ctx: ResponseContext | None = None, threads: int = 1) -> AggregationEvaluation:
    """Evaluate ``A(z)`` and ``||A(z) - z||_P`` (default ``P = Q + Delta``)."""
    ctx = ctx or context_for(pop)
    P = _metric(pop, ctx, metric_P)
    z = np.array(z, dtype=float)
    X = responses(pop, z, ctx, threads)
    Az = aggregate(pop, X)
    d = Az - z
    return AggregationEvaluation(z, Az, X if retain_responses else None, float(np.sqrt(max(d @ P @ d, 0.0))))


def fixed_point_residual(pop: Population, z, metric_P=None, ctx: ResponseContext | None = None,
                         threads: int = 1) -> float:
    """``||A(z) - z||_P``."""
    return evaluate(pop, z, False, metric_P, ctx, threads).residual_P


class AggregationOracle:
    """Callable ``z -> A(z)`` bound to a population, counting evaluations."""

    def __init__(self, pop: Population, settings: QpSettings | None = None, threads: int = 1):
        self.pop = pop
        self.ctx = context_for(pop, settings)
        self.threads = max(1, int(threads))
        self.calls = 0
        self.stats: dict = {}

    def __call__(self, z) -> np.ndarray:
        self.calls += 1
        return aggregate(self.pop, responses(self.pop, z, self.ctx, self.threads, self.stats))

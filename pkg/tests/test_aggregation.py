import numpy as np
import pytest

from mfnash.agent_response import optimal_response
from mfnash.aggregation import (AggregationOracle, aggregate, context_for, evaluate,
                                fixed_point_residual, pairwise_sum, responses)
from mfnash.convex_sets import Box
from mfnash.fixed_point import IterationConfig, run
from mfnash.model_core import Agent, CostParams, Population
from mfnash.scenarios import build_pev_population, seeded_pev_spec, singleton_population


def _params(n):
    return CostParams(np.eye(n), np.eye(n), 0.5 * np.eye(n), np.full(n, 0.1))


def test_singleton_sets_give_constant_map():
    xc = np.array([0.3, -0.2])
    pop = singleton_population([xc] * 4)
    for z in (np.zeros(2), np.array([5.0, -5.0])):
        np.testing.assert_allclose(evaluate(pop, z).A_of_z, xc, atol=1e-12)


def test_single_agent_map_is_response():
    p = _params(3)
    ag = Agent(0, 1.0, Box(-np.ones(3), np.ones(3)))
    pop = Population(p, [ag])
    z = np.array([0.4, 2.0, -3.0])
    np.testing.assert_allclose(evaluate(pop, z).A_of_z, optimal_response(context_for(pop), ag, z), atol=1e-12)


def test_homogeneous_agents_map_equals_single_response():
    p = _params(2)
    box = Box([-0.2, -0.2], [0.2, 0.2])
    pop = Population(p, [Agent(i, 1.0, box) for i in range(5)])
    z = np.array([1.0, -1.0])
    ev = evaluate(pop, z, retain_responses=True)
    np.testing.assert_allclose(ev.A_of_z, ev.per_agent_responses[0], atol=1e-12)


def test_residual_examples():
    xc = np.array([1.0, 2.0, 3.0])
    pop = singleton_population([xc, xc])
    assert fixed_point_residual(pop, xc) == pytest.approx(0.0, abs=1e-12)
    d = np.array([0.5, -1.0, 2.0])
    P = np.diag([1.0, 2.0, 3.0])
    assert fixed_point_residual(pop, xc + d, metric_P=P) == pytest.approx(np.sqrt(d @ P @ d), rel=1e-12)


def test_residual_small_at_computed_fixed_point():
    pop = build_pev_population(seeded_pev_spec(T=6, N=10, delta=0.8))
    tr = run(pop, IterationConfig(kind="picard", stop_tol_abs=1e-9))
    assert tr.converged
    assert fixed_point_residual(pop, tr.z_final, metric_P=tr.metric_P) <= 1e-8


def test_weighted_aggregate_and_pairwise_sum():
    X = np.arange(12, dtype=float).reshape(4, 3)
    box = Box(np.zeros(3), np.full(3, 20.0))
    pop = Population(_params(3), [Agent(i, w, box) for i, w in enumerate([0.5, 1.5, 1.0, 1.0])], a_bar=2.0)
    np.testing.assert_allclose(aggregate(pop, X), (np.array([0.5, 1.5, 1.0, 1.0])[:, None] * X).sum(0) / 4)
    R = np.random.default_rng(0).standard_normal((37, 5))
    np.testing.assert_allclose(pairwise_sum(R), R.sum(0), atol=1e-13)


def test_thread_count_does_not_change_bits():
    pop = build_pev_population(seeded_pev_spec(T=8, N=40, delta=0.3, seed=11))
    z = np.linspace(0, 0.2, 8)
    ctx = context_for(pop)
    X1 = responses(pop, z, ctx, threads=1)
    X8 = responses(pop, z, ctx, threads=8)
    assert X1.tobytes() == X8.tobytes()
    assert aggregate(pop, X1).tobytes() == aggregate(pop, X8).tobytes()


def test_oracle_counts_calls():
    pop = singleton_population([np.zeros(2)])
    orc = AggregationOracle(pop)
    orc(np.zeros(2))
    orc(np.ones(2))
    assert orc.calls == 2

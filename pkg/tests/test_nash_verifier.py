import json

import numpy as np
import pytest

from mfnash.agent_response import best_response
from mfnash.aggregation import context_for
from mfnash.convex_sets import Box
from mfnash.fixed_point import IterationConfig, run
from mfnash.model_core import Agent, CostParams, Population
from mfnash.nash_verifier import epsilon_nash
from mfnash.scenarios import build_production_planning


def test_zero_weight_agent_has_no_gain():
    n = 2
    p = CostParams(np.eye(n), np.eye(n), 0.5 * np.eye(n), np.array([0.3, -0.1]))
    box = Box(-np.ones(n), np.ones(n))
    pop = Population(p, [Agent(0, 0.0, box), Agent(1, 2.0, box)], a_bar=2.0)
    tr = run(pop, IterationConfig(kind="picard", stop_tol_abs=1e-10))
    assert tr.converged
    cert = epsilon_nash(pop, tr.z_final)
    assert abs(cert.records[0].gap) <= 2 * 1e-8


def test_gaps_nonnegative_up_to_noise_and_certificate_fields():
    pop = build_production_planning(8, seed=7, T=8)
    tr = run(pop, IterationConfig(kind="krasnoselskij"))
    cert = epsilon_nash(pop, tr.z_final, threads=2)
    assert np.all(cert.gaps >= -1e-7)
    assert cert.epsilon_N == pytest.approx(max(0.0, cert.gaps.max()))
    d = json.loads(cert.to_json())
    assert d["N"] == 8 and len(d["agents"]) == 8
    assert cert.epsilon_relative is None
    assert cert.with_normalization(-2.0).epsilon_relative == pytest.approx(cert.epsilon_N / 2.0)


def test_best_response_never_worse_than_fixed_point_play():
    pop = build_production_planning(8, seed=3, T=6)
    tr = run(pop, IterationConfig(kind="krasnoselskij"))
    cert = epsilon_nash(pop, tr.z_final)
    for r in cert.records:
        assert r.J_tilde_star <= r.J_bar + 1e-7


def test_epsilon_decreases_with_population_size():
    eps = []
    for N in (8, 16, 32, 64):
        pop = build_production_planning(N, seed=7)
        tr = run(pop, IterationConfig(kind="krasnoselskij"))
        assert tr.converged
        eps.append(epsilon_nash(pop, tr.z_final).epsilon_N)
    assert all(b < a for a, b in zip(eps, eps[1:]))


def test_bar_costs_recomputed_from_aggregate():
    from mfnash.aggregation import evaluate
    pop = build_production_planning(6, seed=5, T=6)
    tr = run(pop, IterationConfig(kind="krasnoselskij", stop_tol_abs=1e-9))
    cert = epsilon_nash(pop, tr.z_final)
    ev = evaluate(pop, tr.z_final, retain_responses=True)
    for r, x in zip(cert.records, ev.per_agent_responses):
        J = pop.params.cost(x, ev.A_of_z)
        assert abs(J - r.J_bar) <= 1e-9 * (1 + abs(J))
        assert r.gap >= -2 * 1e-8 * (1 + abs(J))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfnash.agent_response import (ResponseContext, best_response, best_response_problem,
                                   optimal_response, unconstrained_optimizer)
from mfnash.convex_sets import Box, BudgetBox, Polyhedron
from mfnash.errors import DegenerateBestResponseError, InvalidInputError
from mfnash.model_core import Agent, CostParams
from mfnash.qp import QpSettings
from oracles import fd_gradient, random_spd


def _random_params(rng, n):
    Q = random_spd(rng, n, 10.0) * rng.uniform(0, 1)
    D = random_spd(rng, n, 10.0)
    C = rng.standard_normal((n, n))
    C = 0.5 * (C + C.T)
    return CostParams(Q, D, C, rng.standard_normal(n))


def test_unconstrained_examples():
    n = 3
    D = 2 * np.eye(n)
    c = np.array([1.0, -1.0, 0.5])
    ctx = ResponseContext(CostParams(np.eye(n), D, D.copy(), c))
    for z in (np.zeros(n), np.ones(n) * 7, np.array([1.0, -4.0, 2.0])):
        np.testing.assert_allclose(unconstrained_optimizer(ctx, z), -np.linalg.solve(np.eye(n) + D, c), atol=1e-14)
    ctx = ResponseContext(CostParams(np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros(2)))
    np.testing.assert_allclose(unconstrained_optimizer(ctx, [2.0, -6.0]), [1.0, -3.0], atol=1e-15)


@given(st.integers(0, 10 ** 6), st.integers(1, 5))
def test_unconstrained_optimizer_is_stationary(seed, n):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, n)
    z = rng.standard_normal(n)
    x = unconstrained_optimizer(ResponseContext(p), z)
    g = fd_gradient(lambda y: p.cost(y, z), x, h=1e-5)
    assert np.max(np.abs(g)) <= 1e-6 * (1 + np.abs(x).max() + np.abs(z).max())


def test_interior_response_is_unconstrained_optimizer():
    ctx = ResponseContext(CostParams(np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros(2)))
    x = optimal_response(ctx, Agent(0, 1.0, Box([-5.0, -5.0], [5.0, 5.0])), np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [0.5, 1.0], atol=1e-9)


def test_pinned_single_slot_response():
    ctx = ResponseContext(CostParams(np.zeros((1, 1)), 1e-4 * np.eye(1), np.eye(1), np.array([1.3])))
    ag = Agent(0, 1.0, BudgetBox([0.0], [1.0], [1.0], 0.37))
    for z in (0.0, 5.0, -3.0):
        assert optimal_response(ctx, ag, np.array([z]))[0] == pytest.approx(0.37, abs=1e-12)


@given(st.integers(0, 10 ** 6))
def test_response_paths_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    p = _random_params(rng, n)
    st_ = QpSettings(qp_tol=1e-9)
    ctx = ResponseContext(p, st_)
    G = np.vstack([np.eye(n), rng.standard_normal((2, n))])
    s = Polyhedron(G, np.concatenate([-np.ones(n), [-0.5, -np.inf]]), np.concatenate([np.ones(n), [0.5, 0.3]]))
    ag = Agent(0, 1.0, s)
    z = rng.standard_normal(n) * 2
    x1 = optimal_response(ctx, ag, z, path="projection")
    x2 = optimal_response(ctx, ag, z, path="direct")
    assert np.max(np.abs(x1 - x2)) <= 2 * st_.qp_tol * (1 + np.abs(x1).max())
    optimal_response(ResponseContext(p, st_, cross_check=True), ag, z)


def test_unknown_path_rejected():
    ctx = ResponseContext(CostParams(np.eye(1), np.eye(1), np.zeros((1, 1)), np.zeros(1)))
    with pytest.raises(InvalidInputError):
        optimal_response(ctx, Agent(0, 1.0, Box([0.0], [1.0])), np.zeros(1), path="other")


@given(st.integers(0, 10 ** 6), st.floats(0.0, 1.0))
def test_best_response_problem_matches_cost(seed, mu):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    p = _random_params(rng, n)
    ctx = ResponseContext(p)
    s = rng.standard_normal(n)
    H, f = best_response_problem(ctx, s, mu)
    y0 = np.zeros(n)
    base = p.cost(y0, s)
    for _ in range(3):
        y = rng.standard_normal(n)
        assert p.cost(y, mu * y + s) - base == pytest.approx(y @ H @ y + 2 * f @ y, rel=1e-9, abs=1e-9)
    np.testing.assert_allclose(fd_gradient(lambda y: p.cost(y, mu * y + s), y0, 1e-5), 2 * f,
                               atol=1e-6 * (1 + np.abs(f).max()))


def test_best_response_with_zero_weight_is_optimal_response():
    rng = np.random.default_rng(3)
    p = _random_params(rng, 3)
    ctx = ResponseContext(p)
    ag = Agent(0, 1.0, Box(-np.ones(3), np.ones(3)))
    s = rng.standard_normal(3)
    np.testing.assert_allclose(best_response(ctx, ag, s, 0.0), optimal_response(ctx, ag, s), atol=1e-9)


def test_best_response_full_weight_example():
    ctx = ResponseContext(CostParams(np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros(2)))
    y = best_response(ctx, Agent(0, 1.0, Box([-3.0, -3.0], [3.0, 3.0])), np.zeros(2), 1.0)
    np.testing.assert_allclose(y, 0.0, atol=1e-9)


def test_best_response_degenerate():
    D = np.eye(1)
    ctx = ResponseContext(CostParams(np.zeros((1, 1)), D, -2 * D, np.zeros(1)))
    with pytest.raises(DegenerateBestResponseError):
        best_response(ctx, Agent(0, 1.0, Box([0.0], [1.0])), np.zeros(1), 0.5)

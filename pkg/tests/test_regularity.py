import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfnash.model_core import CostParams
from mfnash.regularity import admissible_iterations, affine_regularity, classify
from oracles import random_spd


def _pev_params(delta, a=1.0, T=3):
    return CostParams(np.zeros((T, T)), delta * np.eye(T), a * np.eye(T), np.zeros(T))


def test_pev_threshold_examples():
    r = classify(_pev_params(0.8))
    assert r.is_CON and r.is_NE and r.is_SPC
    r = classify(_pev_params(0.5))
    assert r.is_NE and not r.is_CON
    r = classify(_pev_params(0.2))
    assert r.is_SPC and not r.is_NE


def test_fne_example():
    n = 2
    r = classify(CostParams(np.eye(n), 2 * np.eye(n), np.eye(n), np.zeros(n)))
    assert r.is_FNE


def test_contraction_margin_examples():
    r = classify(_pev_params(0.8, T=2))
    assert r.epsilon_con == pytest.approx(0.75, abs=1e-12)
    assert r.condition_details["block_matrix"].lambda_min == pytest.approx(0.6, abs=1e-12)
    assert classify(_pev_params(0.3)).epsilon_con == 0.0


def test_admissible_iterations_table():
    assert admissible_iterations(classify(_pev_params(0.8))) == ["picard", "krasnoselskij", "mann", "ishikawa"]
    ne = admissible_iterations(classify(_pev_params(0.5)))
    assert "picard" not in ne and "krasnoselskij" in ne
    assert admissible_iterations(classify(_pev_params(0.2))) == ["mann", "ishikawa"]


def test_no_property_warns():
    n = 2
    # C_sym - Delta is indefinite and M has a negative eigenvalue
    C = np.diag([3.0, -3.0])
    r = classify(CostParams(np.zeros((n, n)), np.eye(n), C, np.zeros(n)))
    assert not (r.is_CON or r.is_NE or r.is_FNE or r.is_SPC)
    with pytest.warns(RuntimeWarning):
        assert admissible_iterations(r) == []


def test_asymmetric_coupling_flag():
    n = 2
    C = np.array([[0.0, 0.5], [-0.5, 0.0]])
    r = classify(CostParams(np.eye(n), np.eye(n), C, np.zeros(n)))
    assert r.asymmetric_C_flag and not r.is_FNE


@settings(max_examples=1000)
@given(st.integers(0, 2 ** 32 - 1))
def test_implication_chain(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    Q = random_spd(rng, n) * rng.choice([0.0, 1.0])
    D = random_spd(rng, n)
    C = rng.standard_normal((n, n)) * rng.uniform(0, 3)
    C = 0.5 * (C + C.T)
    r = classify(CostParams(Q, D, C, np.zeros(n)))
    if r.is_CON:
        assert r.is_NE
    if r.is_FNE:
        assert r.is_NE
    if r.is_NE:
        assert r.is_SPC
    assert (r.epsilon_con > 0) == r.is_CON
    assert 0.0 <= r.epsilon_con <= 1.0 + 1e-12


def test_report_serializes():
    import json
    d = json.loads(classify(_pev_params(0.8)).to_json())
    assert d["is_CON"] is True


def test_affine_examples():
    P = np.eye(3)
    r = affine_regularity(-np.eye(3), np.zeros(3), P)
    assert r["NE"] and not r["CON"]
    assert affine_regularity(0.5 * np.eye(3), np.zeros(3), P)["CON"]
    r = affine_regularity(np.eye(3), np.ones(3), P)
    assert r["NE"] and r["PC"] and r["FNE"] and not r["CON"]

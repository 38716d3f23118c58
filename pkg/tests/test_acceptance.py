"""Acceptance criteria, one test and one PASS/FAIL line each."""

import csv
import json
import os

import numpy as np
import pytest

from mfnash.cli import run_scenario, run_sweep
from mfnash.config import parse_config
from mfnash.convex_sets import Box, BudgetBox, Polyhedron
from mfnash.fixed_point import IterationConfig, run
from mfnash.model_core import CostParams
from mfnash.qp import QpSettings, QpSolver, solve_qp_raw
from mfnash.regularity import affine_regularity, classify
from mfnash.scenarios import (LqAgentSpec, LqSpec, build_lq_population, build_pev_population,
                              seeded_pev_spec, singleton_population)
from oracles import active_set_qp, random_spd

N_GRID = [8, 16, 32, 64, 128, 256]
PP_CONFIG = {"scenario": "production_planning", "seed": 7,
             "production_planning": {"p0": 10, "rho": 1, "r": 1, "T": 20},
             "iteration": {"kind": "krasnoselskij", "lambda": 0.5, "stop_tol_abs": 1e-6},
             "sweep": {"N": N_GRID}}
PEV_CONFIG = {"scenario": "pev", "seed": 0,
              "pev": {"T": 12, "N": 50, "a": 1, "delta": 1e-4, "U": 1},
              "iteration": {"alpha0": 0.5, "alpha_p": 0.75}}
PEV_MANN = {"kind": "mann", "max_outer": 5000, "stop_tol_abs": 1e-5}
PEV_PICARD = {"kind": "picard"}


def _cfg(doc, iteration=None):
    d = json.loads(json.dumps(doc))
    if iteration:
        d.setdefault("iteration", {}).update(iteration)
    return parse_config(json.dumps(d))


def _run_1_and_2(root, threads):
    out = {}
    out["pp_dir"] = os.path.join(root, "pp")
    out["sweep"] = run_sweep(_cfg(PP_CONFIG), out=out["pp_dir"], threads=threads)
    out["picard_dir"] = os.path.join(root, "pev_picard")
    out["picard"] = run_scenario(_cfg(PEV_CONFIG, PEV_PICARD), out["picard_dir"], force=True, threads=threads)
    out["mann_dir"] = os.path.join(root, "pev_mann")
    out["mann"] = run_scenario(_cfg(PEV_CONFIG, PEV_MANN), out["mann_dir"], threads=threads)
    return out


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return {t: _run_1_and_2(str(tmp_path_factory.mktemp(f"threads{t}")), t) for t in (1, 8)}


def test_criterion_1_epsilon_nash_decay(runs, criterion):
    _, rows, _ = runs[1]["sweep"]
    converged = all(r["status"] == "converged" and r["residual"] <= 1e-6 for r in rows)
    eps = np.array([r["epsilon_N"] for r in rows])
    N = np.array([r["N"] for r in rows], dtype=float)
    decreasing = bool(np.all(np.diff(eps) < 0))
    slope = float(np.polyfit(np.log(N), np.log(eps), 1)[0]) if np.all(eps > 0) else float("nan")
    in_window = -1.5 <= slope <= -0.5
    criterion("C1 eps-Nash decay", converged and decreasing and in_window,
              f"converged={converged} strictly_decreasing={decreasing} slope={slope:.3f} "
              f"(window [-1.5, -0.5]) eps_N={np.array2string(eps, precision=4)}")


def test_criterion_2_pev_iteration_dichotomy(runs, criterion):
    pic = runs[1]["picard"].summary
    man = runs[1]["mann"].summary
    pic_ok = pic["status"] == "stagnated" and pic["residual"] >= 100 * 1e-6
    mann_ok = man["status"] == "converged" and man["residual"] <= 1e-5 and man["iterations"] <= 5000
    gap = man.get("valley_filling_gap")
    gap_ok = gap is not None and gap <= 1e-2 * man["demand_spread"]
    criterion("C2 PEV dichotomy", pic_ok and mann_ok and gap_ok,
              f"picard status={pic['status']} residual={pic['residual']:.3e} (need >= 1e-4); "
              f"mann status={man['status']} k={man['iterations']} residual={man['residual']:.3e} "
              f"(need <= 1e-5 within 5000); valley_gap={gap:.3e} (need <= {1e-2 * man['demand_spread']:.3e})")


def test_criterion_3_pev_regularity_thresholds(criterion):
    T, a = 12, 1.0
    bad = []
    for d in (0.05, 0.2, 0.49, 0.5, 0.51, 0.7, 1.2):
        r = classify(CostParams(np.zeros((T, T)), d * np.eye(T), a * np.eye(T), np.ones(T)))
        want = (d > 0.5, d >= 0.5, True)
        if (r.is_CON, r.is_NE, r.is_SPC) != want:
            bad.append(d)
    criterion("C3 PEV regularity thresholds", not bad, f"misclassified deltas={bad}")


def test_criterion_4_lq_thresholds(criterion):
    T = 6
    ag = LqAgentSpec(np.eye(1), np.eye(1), np.zeros(1), -10.0, 10.0, -2.0, 2.0)
    bad = []
    for g in (-1.2, -1.0, -0.5, 0.0, 0.5, 1.0, 1.2):
        spec = LqSpec(T, 1, 1, [ag, ag], [np.eye(1)] * T, [np.eye(1)] * T, np.array([1.0]), g)
        r = classify(build_lq_population(spec).params)
        if (r.is_CON, r.is_NE) != (abs(g) < 1, abs(g) <= 1):
            bad.append(g)
    criterion("C4 LQ thresholds", not bad, f"misclassified gammas={bad}")


def test_criterion_5_qp_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240501)
    worst, failures = 0.0, 0
    for trial in range(500):
        n = int(rng.integers(1, 7))
        H = random_spd(rng, n)
        x0 = rng.standard_normal(n)
        if trial % 2 == 0:
            # general QP, rows through a feasible point
            m = int(rng.integers(1, 11))
            G = rng.standard_normal((m, n))
            g0 = G @ x0
            l, u = g0 - rng.uniform(0, 2, m), g0 + rng.uniform(0, 2, m)
            eq = rng.random(m) < 0.2
            eq[np.cumsum(eq) > max(n - 1, 0)] = False
            l[eq] = u[eq] = g0[eq]
            l[rng.random(m) < 0.15] = -np.inf
            f = rng.standard_normal(n) * 3
            sol = solve_qp_raw(H, f, G, l, u)
        else:
            # weighted projection onto a bounded polyhedron
            extra = int(rng.integers(0, 10 - n + 1))
            G = np.vstack([np.eye(n), rng.standard_normal((extra, n))])
            g0 = G @ x0
            l, u = g0 - rng.uniform(0.1, 2, G.shape[0]), g0 + rng.uniform(0.1, 2, G.shape[0])
            v = x0 + rng.standard_normal(n) * 3
            f = -(H @ v)
            x = QpSolver().project(H, v, Polyhedron(G, l, u))
            sol = None
        ref = active_set_qp(H, f, G, l, u)
        xs = sol.x_star if sol is not None else x
        if (sol is not None and not sol.solved) or ref is None:
            failures += 1
            continue
        worst = max(worst, float(np.max(np.abs(xs - ref))))
    criterion("C5 QP oracle equivalence", failures == 0 and worst <= 1e-6,
              f"instances=500 failures={failures} max_inf_deviation={worst:.3e} (tol 1e-6)")


def _random_set(rng, n):
    lo = -rng.uniform(0.1, 2, n)
    hi = lo + rng.uniform(0.1, 3, n)
    kind = rng.integers(0, 3)
    if kind == 0:
        return Box(lo, hi)
    if kind == 1:
        b = rng.uniform(0.2, 2, n)
        return BudgetBox(lo, hi, b, float(b @ (lo + rng.uniform(0.1, 0.9) * (hi - lo))))
    k = int(rng.integers(1, 4))
    A = rng.standard_normal((k, n))
    mid = 0.5 * (lo + hi)
    return Polyhedron(np.vstack([np.eye(n), A]), np.concatenate([lo, A @ mid - rng.uniform(0, 1, k)]),
                      np.concatenate([hi, A @ mid + rng.uniform(0, 1, k)]))


def test_criterion_6_projection_firm_nonexpansiveness(criterion):
    rng = np.random.default_rng(6)
    st = QpSettings()
    solver = QpSolver(st)
    worst, violations = np.inf, 0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        P = np.diag(rng.uniform(0.2, 5, n)) if rng.random() < 0.3 else random_spd(rng, n, 50.0)
        s = _random_set(rng, n)
        v, w = rng.standard_normal(n) * 3, rng.standard_normal(n) * 3
        d = solver.project(P, v, s) - solver.project(P, w, s)
        slack = float(d @ P @ (v - w) - d @ P @ d)
        worst = min(worst, slack)
        violations += slack < -10 * st.qp_tol
    criterion("C6 projection FNE", violations == 0,
              f"samples=1000 violations={violations} min_slack={worst:.3e} (floor {-10 * st.qp_tol:.0e})")


def test_criterion_7_contraction_rate(criterion):
    pop = build_pev_population(seeded_pev_spec(T=12, N=50, a=1.0, delta=0.8))
    rep = classify(pop.params)
    ref = run(pop, IterationConfig(kind="picard", stop_tol_abs=1e-14, stop_tol_rel=0, max_outer=500), report=rep)
    tr = run(pop, IterationConfig(kind="picard"), report=rep)
    P = tr.metric_P
    zb = ref.z_final
    dist = np.array([np.sqrt(max((z - zb) @ P @ (z - zb), 0.0)) for z in tr.Z])
    # ratios are only meaningful while the error is well above the reference accuracy
    keep = dist[1:-1] > 1e-9
    ratios = (dist[2:] / dist[1:-1])[keep]
    bound = 1 - rep.epsilon_con + 1e-6
    ok = rep.is_CON and ratios.size > 0 and bool(np.all(ratios <= bound))
    criterion("C7 contraction rate", ok,
              f"is_CON={rep.is_CON} eps={rep.epsilon_con:.6f} max_ratio={ratios.max():.6f} "
              f"(bound {bound:.6f}) steps_checked={ratios.size}")


def test_criterion_8_degenerate_maps(criterion):
    pop = singleton_population([np.array([0.1, 0.9]), np.array([0.5, -0.3]), np.array([0.0, 0.0])])
    tr = run(pop, IterationConfig(kind="picard", warm_start=False))
    one_step = tr.converged and tr.iterations == 1
    r = affine_regularity(-np.eye(4), np.zeros(4), np.eye(4))
    ne_not_con = r["NE"] and not r["CON"]
    criterion("C8 degenerate maps", one_step and ne_not_con,
              f"singleton status={tr.status} k={tr.iterations}; minus-identity NE={r['NE']} CON={r['CON']}")


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_criterion_9_thread_determinism(runs, criterion):
    diffs, count = [], 0
    for key in ("pp_dir", "picard_dir", "mann_dir"):
        a, b = _tree_bytes(runs[1][key]), _tree_bytes(runs[8][key])
        count += len(a)
        if a.keys() != b.keys():
            diffs.append(f"{key}: file sets differ")
        diffs += [f"{key}/{k}" for k in a if k in b and a[k] != b[k]]
    criterion("C9 thread determinism", not diffs and count > 0,
              f"artifacts_compared={count} differing={diffs or 'none'}")

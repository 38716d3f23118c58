"""Scenario configuration: JSON schema, validation and population building."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from jsonschema import Draft202012Validator

from mfnash.convex_sets import Box, BudgetBox, Polyhedron
from mfnash.errors import ConfigError, InvalidInputError
from mfnash.fixed_point import KINDS, METRICS, IterationConfig
from mfnash.model_core import Agent, CostParams, Population
from mfnash.qp.engine import QpSettings

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_vec_or_num = {"oneOf": [_num, _vec]}
_vec_or_mat = {"oneOf": [_num, _vec, _mat]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_SET = {
    "oneOf": [
        _obj({"type": {"const": "box"}, "lower": _vec, "upper": _vec}, ["type", "lower", "upper"]),
        _obj({"type": {"const": "budget_box"}, "lower": _vec, "upper": _vec, "budget_vector": _vec,
              "budget_value": _num}, ["type", "lower", "upper", "budget_vector", "budget_value"]),
        _obj({"type": {"const": "polyhedron"}, "G": _mat,
              "l": {"type": "array", "items": {"type": ["number", "null"]}},
              "u": {"type": "array", "items": {"type": ["number", "null"]}}}, ["type", "G", "l", "u"]),
    ]
}

CONFIG_SCHEMA: dict = _obj(
    {
        "scenario": {"enum": ["lq", "production_planning", "pev", "custom"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "cross_check": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "pev": _obj({
            "T": {"type": "integer", "minimum": 1},
            "N": {"type": "integer", "minimum": 1},
            "a": _pos,
            "delta": _pos,
            "U": _vec_or_mat,
            "c": _vec,
            "gamma": _vec,
            "gamma_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        }),
        "production_planning": _obj({
            "N": {"type": "integer", "minimum": 1},
            "p0": _pos,
            "rho": _pos,
            "r": _pos,
            "T": {"type": "integer", "minimum": 1},
            "s0": _num,
        }),
        "lq": _obj({
            "T": {"type": "integer", "minimum": 1},
            "p": {"type": "integer", "minimum": 1},
            "m": {"type": "integer", "minimum": 1},
            "A": _vec_or_mat,
            "B": _vec_or_mat,
            "Q": _vec_or_mat,
            "R": _vec_or_mat,
            "eta": _vec_or_num,
            "gamma": _num,
            "agents": {"type": "array", "minItems": 1, "items": _obj({
                "s0": _vec_or_num,
                "s_lower": _vec_or_mat, "s_upper": _vec_or_mat,
                "u_lower": _vec_or_mat, "u_upper": _vec_or_mat,
                "A": _vec_or_mat, "B": _vec_or_mat,
                "weight": {"type": "number", "minimum": 0},
            }, ["s_lower", "s_upper", "u_lower", "u_upper"])},
        }, ["T", "agents", "gamma"]),
        "custom": _obj({
            "Q": _mat, "Delta": _mat, "C": _mat, "c": _vec,
            "a_bar": _pos,
            "agents": {"type": "array", "minItems": 1, "items": _obj({
                "weight": {"type": "number", "minimum": 0},
                "set": _SET,
            }, ["set"])},
        }, ["Q", "Delta", "C", "c", "agents"]),
        "iteration": _obj({
            "kind": {"enum": list(KINDS)},
            "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "alpha0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "alpha_p": {"type": "number", "minimum": 0, "maximum": 1},
            "ishikawa_alpha0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "ishikawa_beta0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "ishikawa_p": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
            "z0": _vec,
            "max_outer": {"type": "integer", "minimum": 1},
            "stop_tol_abs": {"type": "number", "minimum": 0},
            "stop_tol_rel": {"type": "number", "minimum": 0},
            "metric": {"enum": list(METRICS)},
            "warm_start": {"type": "boolean"},
            "stagnation": {"enum": ["auto", "on", "off"]},
        }),
        "qp": _obj({
            "qp_tol": _pos,
            "max_iter": {"type": "integer", "minimum": 1},
            "rho0": _pos,
            "polish": {"type": "boolean"},
            "structured": {"type": "boolean"},
        }),
        "output": _obj({
            "dir": {"type": "string"},
            "trace": {"type": "string"},
            "certificate": {"type": "string"},
            "report": {"type": "string"},
            "summary": {"type": "string"},
            "include_z": {"type": "boolean"},
        }),
        "sweep": _obj({"N": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}}),
    },
    ["scenario"],
)

PEV_DEFAULTS = {"T": 12, "N": 50, "a": 1.0, "delta": 1e-4, "U": 1.0, "gamma_range": [0.1, 0.9]}
PP_DEFAULTS = {"N": 64, "p0": 10.0, "rho": 1.0, "r": 1.0, "T": 20, "s0": 0.0}
OUTPUT_DEFAULTS = {"dir": "out", "trace": "trace.csv", "certificate": "certificate.json",
                   "report": "report.json", "summary": "summary.json", "include_z": True}
SWEEP_DEFAULTS = {"N": [8, 16, 32, 64, 128, 256]}

_validator = Draft202012Validator(CONFIG_SCHEMA)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: dict
    iteration: IterationConfig
    qp: QpSettings
    output: dict
    seed: int = 0
    cross_check: bool = False
    threads: int = 1
    sweep: dict = field(default_factory=lambda: dict(SWEEP_DEFAULTS))
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path)


def _semantic_checks(doc: dict) -> list:
    """Cross-field invariants the schema cannot express."""
    out = []
    kind = doc["scenario"]
    if kind in ("lq", "custom") and kind not in doc:
        out.append((kind, f"section required for scenario {kind!r}"))
    if kind == "pev":
        p = {**PEV_DEFAULTS, **doc.get("pev", {})}
        g = p.get("gamma")
        if g is not None:
            if "N" in doc.get("pev", {}) and len(g) != p["N"]:
                out.append(("pev/gamma", f"expected {p['N']} charge targets, got {len(g)}"))
            if any(v < 0 or v > 1 for v in g):
                out.append(("pev/gamma", "charge targets must lie in [0, 1]"))
        lo, hi = p["gamma_range"]
        if not (0 <= lo <= hi <= 1):
            out.append(("pev/gamma_range", "need 0 <= low <= high <= 1"))
        if "c" in p:
            if len(p["c"]) != p["T"]:
                out.append(("pev/c", f"expected {p['T']} entries"))
            if any(v < 0 for v in p["c"]):
                out.append(("pev/c", "inflexible demand must be nonnegative"))
    it = doc.get("iteration", {})
    a0, b0 = it.get("ishikawa_alpha0", 1.0), it.get("ishikawa_beta0", 1.0)
    if a0 > b0:
        out.append(("iteration/ishikawa_alpha0", "must not exceed ishikawa_beta0"))
    return out


def parse_config(text: str | bytes) -> ScenarioConfig:
    """Validate a JSON scenario document and fill in defaults.

    Raises
    ------
    ConfigError
        With one ``(path, message)`` entry per violation.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError([("", f"not valid UTF-8: {exc}")]) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"malformed JSON: {exc}")]) from None
    errors = sorted(_validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([(_path(e), e.message) for e in errors])
    sem = _semantic_checks(doc)
    if sem:
        raise ConfigError(sem)
    kind = doc["scenario"]
    if kind == "pev":
        params = {**PEV_DEFAULTS, **doc.get("pev", {})}
        if params.get("gamma") is not None:
            params["N"] = len(params["gamma"])
    elif kind == "production_planning":
        params = {**PP_DEFAULTS, **doc.get("production_planning", {})}
    else:
        params = dict(doc[kind])
    it = dict(doc.get("iteration", {}))
    if "lambda" in it:
        it["lam"] = it.pop("lambda")
    try:
        iteration = IterationConfig(**it)
        qp = QpSettings(**doc.get("qp", {}))
    except InvalidInputError as exc:
        raise ConfigError([("iteration", str(exc))]) from None
    return ScenarioConfig(kind, params, iteration, qp, {**OUTPUT_DEFAULTS, **doc.get("output", {})},
                          int(doc.get("seed", 0)), bool(doc.get("cross_check", False)),
                          int(doc.get("threads", 1)), {**SWEEP_DEFAULTS, **doc.get("sweep", {})}, doc)


# --------------------------------------------------------------------------
# population construction


def _as_mat(v, n) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(n)
    if a.ndim == 1:
        return np.diag(a) if a.size == n else a.reshape(n, -1)
    return a


def _bounds(v):
    return np.array([np.inf if x is None else x for x in v], dtype=float)


def _set_from(doc: dict):
    t = doc["type"]
    if t == "box":
        return Box(doc["lower"], doc["upper"])
    if t == "budget_box":
        return BudgetBox(doc["lower"], doc["upper"], doc["budget_vector"], doc["budget_value"])
    l = np.array([-np.inf if x is None else x for x in doc["l"]], dtype=float)
    return Polyhedron(doc["G"], l, _bounds(doc["u"]))


def build_population(cfg: ScenarioConfig, N: int | None = None) -> Population:
    """Population described by ``cfg``; ``N`` overrides the population size."""
    from mfnash.scenarios import (LqAgentSpec, LqSpec, PevSpec, build_lq_population,
                                  build_pev_population, build_production_planning,
                                  default_inflexible_demand, seeded_pev_spec)

    p = cfg.params
    if cfg.scenario == "production_planning":
        return build_production_planning(N or p["N"], cfg.seed, p["p0"], p["rho"], p["r"], p["T"], p["s0"])
    if cfg.scenario == "pev":
        T = p["T"]
        c = default_inflexible_demand(T) if p.get("c") is None else np.asarray(p["c"], dtype=float)
        if p.get("gamma") is not None:
            gamma = np.asarray(p["gamma"], dtype=float)
            if N is not None and N != gamma.size:
                raise ConfigError([("pev/gamma", f"explicit charge targets fix N={gamma.size}")])
        else:
            gamma = seeded_pev_spec(T, N or p["N"], p["a"], p["delta"], 1.0, cfg.seed, c,
                                    tuple(p["gamma_range"])).gamma
        spec = PevSpec(T, gamma, np.asarray(p["U"], dtype=float), p["a"], c, p["delta"])
        pop = build_pev_population(spec)
        pop._meta["pev_spec"] = spec
        return pop
    if cfg.scenario == "lq":
        T = p["T"]
        ps, ms = p.get("p", 1), p.get("m", 1)
        A0, B0 = p.get("A", 1.0), p.get("B", 1.0)
        agents = []
        for a in p["agents"]:
            agents.append(LqAgentSpec(_as_mat(a.get("A", A0), ps), np.asarray(a.get("B", B0), dtype=float).reshape(ps, ms),
                                      np.asarray(a.get("s0", 0.0), dtype=float).reshape(-1) * np.ones(ps),
                                      a["s_lower"], a["s_upper"], a["u_lower"], a["u_upper"], a.get("weight", 1.0)))

        def weights(v, d):
            arr = np.asarray(v, dtype=float)
            if arr.ndim == 3:
                return [x for x in arr]
            return [_as_mat(v, d)] * T

        spec = LqSpec(T, ps, ms, agents, weights(p.get("Q", 1.0), ps), weights(p.get("R", 1.0), ms),
                      np.asarray(p.get("eta", 0.0), dtype=float).reshape(-1) * np.ones(ps)
                      if np.ndim(p.get("eta", 0.0)) == 0 else np.asarray(p["eta"], dtype=float), p["gamma"])
        pop = build_lq_population(spec)
        pop._meta["lq_spec"] = spec
        return pop
    params = CostParams(p["Q"], p["Delta"], p["C"], p["c"])
    agents = [Agent(i, float(a.get("weight", 1.0)), _set_from(a["set"])) for i, a in enumerate(p["agents"])]
    return Population(params, agents, a_bar=float(p.get("a_bar", max(1.0, max(a.weight for a in agents)))))


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2)


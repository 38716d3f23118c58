"""Command-line front end.

Subcommands::

    mfnash classify    --config CFG [--out DIR]
    mfnash run         --config CFG [--out DIR] [--iteration KIND] [--force] [--threads N] [--seed S]
    mfnash verify-nash --config CFG --z PATH [--out DIR] [--threads N] [--seed S]
    mfnash sweep       --config CFG [--out DIR] [--N 8 16 ...] [--iteration KIND] [--force] [--threads N]
    mfnash schema

Exit codes: 0 converged, 2 stagnated or iteration limit, 3 configuration
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from mfnash import serialize
from mfnash.agent_response import ResponseContext, optimal_response
from mfnash.config import ScenarioConfig, build_population, parse_config, schema_json
from mfnash.errors import (ConfigError, DegenerateBestResponseError, InadmissibleIterationError,
                           InfeasibleAgentError, InvalidInputError, MfnashError, QpFailure)
from mfnash.fixed_point import KINDS, read_trace_csv, run
from mfnash.nash_verifier import NashCertificate, epsilon_nash
from mfnash.aggregation import context_for
from mfnash.regularity import RegularityReport, admissible_iterations, classify
from mfnash.scenarios import homogeneous_reference_cost, valley_filling_gap

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class RunArtifacts:
    report_path: str
    trace_path: str
    certificate_path: str
    summary_path: str
    summary: dict
    exit_code: int


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _out_dir(cfg: ScenarioConfig, out: str | None) -> str:
    d = out or cfg.output["dir"]
    try:
        os.makedirs(d, exist_ok=True)
    except OSError as exc:
        raise ConfigError([("output/dir", f"cannot create {d!r}: {exc}")]) from None
    if not os.access(d, os.W_OK):
        raise ConfigError([("output/dir", f"{d!r} is not writable")])
    return d


def _normalization(cfg: ScenarioConfig, pop, z_bar) -> float | None:
    if cfg.scenario == "production_planning":
        return homogeneous_reference_cost(pop, z_bar)
    return None


def _extra_diagnostics(cfg: ScenarioConfig, pop, z_bar) -> dict:
    if cfg.scenario != "pev":
        return {}
    spec = pop._meta["pev_spec"]
    mask = z_bar > ACTIVE_TOL
    out = {"active_slots": int(mask.sum()), "demand_spread": float(np.ptp(spec.c))}
    out["valley_filling_gap"] = valley_filling_gap(z_bar, spec.c, mask, spec.a) if mask.any() else None
    return out


def _check_kind(report: RegularityReport, kind: str, force: bool) -> list[str]:
    allowed = admissible_iterations(report, warn=False)
    if kind not in allowed and not force:
        raise InadmissibleIterationError(
            f"iteration {kind!r} is not certified for this game (admissible: {allowed or 'none'}); "
            "pass --force to run it anyway")
    return allowed


def _cross_check(pop, cfg: ScenarioConfig, z) -> None:
    ctx = ResponseContext(pop.params, cfg.qp, cross_check=True)
    for agent in pop.agents:
        optimal_response(ctx, agent, z)


def _solve_one(cfg: ScenarioConfig, pop, kind: str, force: bool, threads: int):
    report = classify(pop.params)
    allowed = _check_kind(report, kind, force)
    it = replace(cfg.iteration, kind=kind)
    trace = run(pop, it, threads=threads, settings=cfg.qp, report=report)
    if cfg.cross_check:
        _cross_check(pop, cfg, trace.z_final)
    ctx = context_for(pop, cfg.qp)
    cert = epsilon_nash(pop, trace.z_final, ctx, threads, metric_P=trace.metric_P)
    norm = _normalization(cfg, pop, trace.z_final)
    if norm is not None:
        cert = cert.with_normalization(norm)
    return report, allowed, trace, cert


def _summary(cfg, pop, kind, forced, allowed, trace, cert: NashCertificate) -> dict:
    eps_ok = math.isfinite(cert.epsilon_N)
    code = EXIT_OK if trace.converged and eps_ok else EXIT_NOT_CONVERGED
    s = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "N": pop.N,
        "n": pop.n,
        "iteration": kind,
        "forced": bool(forced and kind not in allowed),
        "admissible_iterations": allowed,
        "status": trace.status,
        "iterations": trace.iterations,
        "residual": trace.final_residual,
        "epsilon_N": cert.epsilon_N,
        "epsilon_relative": cert.epsilon_relative,
        "exit_code": code,
    }
    s.update(_extra_diagnostics(cfg, pop, trace.z_final))
    return s


def run_scenario(cfg: ScenarioConfig, out: str | None = None, iteration: str | None = None,
                 force: bool = False, threads: int | None = None) -> RunArtifacts:
    """Build, classify, iterate, verify and write all artifacts."""
    d = _out_dir(cfg, out)
    threads = threads or cfg.threads
    kind = iteration or cfg.iteration.kind
    pop = build_population(cfg)
    report, allowed, trace, cert = _solve_one(cfg, pop, kind, force, threads)
    o = cfg.output
    paths = {k: os.path.join(d, o[k]) for k in ("report", "trace", "certificate", "summary")}
    _write(paths["report"], serialize.dumps(report.to_dict()))
    trace.to_csv(paths["trace"], include_z=o["include_z"])
    _write(paths["certificate"], cert.to_json())
    summary = _summary(cfg, pop, kind, force, allowed, trace, cert)
    _write(paths["summary"], serialize.dumps(summary))
    return RunArtifacts(paths["report"], paths["trace"], paths["certificate"], paths["summary"],
                        summary, summary["exit_code"])


def run_sweep(cfg: ScenarioConfig, Ns=None, out: str | None = None, iteration: str | None = None,
              force: bool = False, threads: int | None = None) -> tuple[str, list[dict], int]:
    """Population-size sweep; writes one certificate per ``N`` and ``sweep.csv``."""
    d = _out_dir(cfg, out)
    threads = threads or cfg.threads
    kind = iteration or cfg.iteration.kind
    Ns = list(Ns or cfg.sweep["N"])
    rows = []
    code = EXIT_OK
    for N in Ns:
        pop = build_population(cfg, N=N)
        _, allowed, trace, cert = _solve_one(cfg, pop, kind, force, threads)
        _write(os.path.join(d, f"certificate_N{N}.json"), cert.to_json())
        trace.to_csv(os.path.join(d, f"trace_N{N}.csv"), include_z=cfg.output["include_z"])
        s = _summary(cfg, pop, kind, force, allowed, trace, cert)
        code = max(code, s["exit_code"])
        rows.append({"N": N, "status": trace.status, "iterations": trace.iterations,
                     "residual": trace.final_residual, "epsilon_N": cert.epsilon_N,
                     "normalization": cert.normalization, "epsilon_relative": cert.epsilon_relative})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["N", "status", "iterations", "residual", "epsilon_N", "normalization", "epsilon_relative"]
    w.writerow(cols)
    for r in rows:
        w.writerow([("%.17g" % r[c]) if isinstance(r[c], float) else ("" if r[c] is None else r[c]) for c in cols])
    path = os.path.join(d, "sweep.csv")
    _write(path, buf.getvalue())
    return path, rows, code


def _load_z(path: str, n: int) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith(("[", "{")):
        doc = json.loads(text)
        z = doc["z_bar"] if isinstance(doc, dict) else doc
        z = np.asarray(z, dtype=float)
    else:
        tab = read_trace_csv(text)
        if tab.Z is None:
            raise InvalidInputError("trace CSV has no z columns")
        z = tab.Z[-1]
    if z.shape != (n,):
        raise InvalidInputError(f"z has length {z.size}, expected {n}")
    return z


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfnash", description="Mean-field Nash equilibria for quadratic agent games.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, iteration=False):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON scenario file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, metavar="N", help="worker threads for agent solves")
        p.add_argument("--seed", type=int, metavar="U64", help="seed override for random scenarios")
        if iteration:
            p.add_argument("--iteration", choices=KINDS, help="iteration kind (overrides iteration.kind)")
            p.add_argument("--force", action="store_true", help="run even if the iteration is not certified")

    common(sub.add_parser("classify", help="regularity report only"))
    common(sub.add_parser("run", help="classify, iterate and verify"), iteration=True)
    p = sub.add_parser("verify-nash", help="certificate for a given signal")
    common(p)
    p.add_argument("--z", required=True, metavar="PATH", help="JSON vector or trace CSV (last row used)")
    p = sub.add_parser("sweep", help="population-size sweep")
    common(p, iteration=True)
    p.add_argument("--N", type=int, nargs="+", metavar="N", help="population sizes")
    sub.add_parser("schema", help="print the configuration JSON schema")
    return ap


def _load_cfg(args) -> ScenarioConfig:
    try:
        with open(args.config, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError([("", f"cannot read {args.config!r}: {exc}")]) from None
    cfg = parse_config(raw)
    if args.seed is not None:
        if not (0 <= args.seed < 2 ** 64):
            raise ConfigError([("seed", "must be an unsigned 64-bit integer")])
        cfg = cfg.with_overrides(seed=args.seed)
    if args.threads is not None and args.threads < 1:
        raise ConfigError([("threads", "must be at least 1")])
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "schema":
        print(schema_json())
        return EXIT_OK
    try:
        cfg = _load_cfg(args)
        if args.command == "classify":
            d = _out_dir(cfg, args.out)
            report = classify(build_population(cfg).params)
            text = serialize.dumps(report.to_dict())
            _write(os.path.join(d, cfg.output["report"]), text)
            sys.stdout.write(text)
            return EXIT_OK
        if args.command == "run":
            art = run_scenario(cfg, args.out, args.iteration, args.force, args.threads)
            sys.stdout.write(serialize.dumps(art.summary))
            return art.exit_code
        if args.command == "verify-nash":
            d = _out_dir(cfg, args.out)
            pop = build_population(cfg)
            z = _load_z(args.z, pop.n)
            cert = epsilon_nash(pop, z, context_for(pop, cfg.qp), args.threads or cfg.threads)
            norm = _normalization(cfg, pop, z)
            if norm is not None:
                cert = cert.with_normalization(norm)
            _write(os.path.join(d, cfg.output["certificate"]), cert.to_json())
            sys.stdout.write(serialize.dumps({"N": cert.N, "epsilon_N": cert.epsilon_N,
                                              "epsilon_relative": cert.epsilon_relative,
                                              "residual": cert.residual}))
            return EXIT_OK if math.isfinite(cert.epsilon_N) else EXIT_NUMERICAL
        if args.command == "sweep":
            path, rows, code = run_sweep(cfg, args.N, args.out, args.iteration, args.force, args.threads)
            with open(path, encoding="utf-8") as fh:
                sys.stdout.write(fh.read())
            return code
    except (ConfigError, InadmissibleIterationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QpFailure, DegenerateBestResponseError, InfeasibleAgentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MfnashError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

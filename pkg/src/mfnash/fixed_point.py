"""Feedback iterations on the aggregation mapping.

Four update rules are available, for an oracle ``A``:

=============  ==========================================================
picard         z+ = A(z)
krasnoselskij  z+ = (1 - lam) z + lam A(z)
mann           z+ = (1 - a_k) z + a_k A(z),        a_k = a0 / (k+1)^p
ishikawa       z+ = (1 - a_k) z + a_k A((1 - b_k) z + b_k A(z))
=============  ==========================================================

The Ishikawa schedules default to ``a_k = b_k = (k+2)^(-1/2)``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from mfnash.aggregation import AggregationOracle
from mfnash.errors import InvalidInputError, InvalidMetricError
from mfnash.model_core import Population, is_positive_definite
from mfnash.qp.engine import QpSettings

KINDS = ("picard", "krasnoselskij", "mann", "ishikawa")
METRICS = ("auto", "Q_plus_Delta", "Delta_minus_C", "C_minus_Delta", "identity")
STAGNATION_WINDOW = 100
STAGNATION_IMPROVEMENT = 1e-12


@dataclass(frozen=True)
class IterationConfig:
    """Parameters of one iteration run.

    ``alpha_p = 0`` gives a constant Mann step ``alpha0``; this does not meet
    the vanishing-step condition and is meant for comparison runs only.
    ``stagnation`` is ``"auto"`` (detector active for constant-step rules),
    ``"on"`` or ``"off"``.
    """

    kind: str = "krasnoselskij"
    lam: float = 0.5
    alpha0: float = 0.5
    alpha_p: float = 0.75
    ishikawa_alpha0: float = 1.0
    ishikawa_beta0: float = 1.0
    ishikawa_p: float = 0.5
    z0: tuple | None = None
    max_outer: int = 5000
    stop_tol_abs: float = 1e-6
    stop_tol_rel: float = 1e-8
    metric: str = "auto"
    warm_start: bool = True
    stagnation: str = "auto"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown iteration kind {self.kind!r}")
        if not (0.0 < self.lam < 1.0):
            raise InvalidInputError("lam must lie in (0, 1)")
        if not (0.0 < self.alpha0 <= 1.0):
            raise InvalidInputError("alpha0 must lie in (0, 1]")
        if not (0.0 <= self.alpha_p <= 1.0):
            raise InvalidInputError("alpha_p must lie in [0, 1]")
        if not (0.0 < self.ishikawa_alpha0 <= self.ishikawa_beta0 <= 1.0):
            raise InvalidInputError("Ishikawa schedules need 0 < alpha0 <= beta0 <= 1")
        if not (0.0 < self.ishikawa_p <= 0.5):
            raise InvalidInputError("ishikawa_p must lie in (0, 0.5] so that sum a_k b_k diverges")
        if int(self.max_outer) < 1:
            raise InvalidInputError("max_outer must be at least 1")
        if self.stop_tol_abs < 0 or self.stop_tol_rel < 0:
            raise InvalidInputError("stopping tolerances must be nonnegative")
        if self.metric not in METRICS:
            raise InvalidInputError(f"unknown metric {self.metric!r}")
        if self.stagnation not in ("auto", "on", "off"):
            raise InvalidInputError("stagnation must be 'auto', 'on' or 'off'")
        if self.z0 is not None:
            object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))

    def alpha(self, k: int) -> float:
        """Mann step at iteration ``k``."""
        return self.alpha0 / (k + 1) ** self.alpha_p

    def ishikawa_steps(self, k: int) -> tuple[float, float]:
        d = (k + 2) ** self.ishikawa_p
        return self.ishikawa_alpha0 / d, self.ishikawa_beta0 / d

    @property
    def constant_step(self) -> bool:
        return self.kind in ("picard", "krasnoselskij") or (self.kind == "mann" and self.alpha_p == 0.0)

    @property
    def detect_stagnation(self) -> bool:
        if self.stagnation == "auto":
            return self.constant_step
        return self.stagnation == "on"


def step(kind: str, k: int, z, config: IterationConfig, oracle: Callable, Az=None) -> np.ndarray:
    """One update of the chosen rule; ``Az`` may pass a precomputed ``A(z)``."""
    z = np.asarray(z, dtype=float)
    if Az is None:
        Az = oracle(z)
    if kind == "picard":
        return np.array(Az, dtype=float)
    if kind == "krasnoselskij":
        lam = config.lam
        return (1.0 - lam) * z + lam * Az
    if kind == "mann":
        a = config.alpha(k)
        return (1.0 - a) * z + a * Az
    if kind == "ishikawa":
        a, b = config.ishikawa_steps(k)
        y = (1.0 - b) * z + b * Az
        return (1.0 - a) * z + a * oracle(y)
    raise InvalidInputError(f"unknown iteration kind {kind!r}")


@dataclass(frozen=True, eq=False)
class ConvergenceTrace:
    """Iterates ``z_k`` with their residuals ``||A(z_k) - z_k||_P``.

    ``step_norm[k] = ||z_{k+1} - z_k||_P`` for the update computed at ``k``;
    at the terminal record the update is computed but not taken. ``z_final``
    is ``Z[-1]``.
    """

    k: np.ndarray
    Z: np.ndarray
    residual: np.ndarray
    step_norm: np.ndarray
    oracle_calls: np.ndarray
    qp_iterations: np.ndarray
    status: str
    kind: str
    metric_P: np.ndarray = field(repr=False)

    @property
    def z_final(self) -> np.ndarray:
        return self.Z[-1]

    @property
    def iterations(self) -> int:
        return int(self.k[-1])

    @property
    def final_residual(self) -> float:
        return float(self.residual[-1])

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_csv(self, path_or_buf=None, include_z: bool = True) -> str | None:
        """Write ``k,residual,step_norm[,z_0..]`` with 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["k", "residual", "step_norm"]
        if include_z:
            head += [f"z_{i}" for i in range(self.Z.shape[1])]
        w.writerow(head)
        for i in range(self.k.size):
            row = [str(int(self.k[i])), "%.17g" % self.residual[i], "%.17g" % self.step_norm[i]]
            if include_z:
                row += ["%.17g" % v for v in self.Z[i]]
            w.writerow(row)
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if isinstance(path_or_buf, (str, os.PathLike)):
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            path_or_buf.write(text)
        return None


@dataclass(frozen=True, eq=False)
class TraceTable:
    """Columns recovered from a trace CSV."""

    k: np.ndarray
    residual: np.ndarray
    step_norm: np.ndarray
    Z: np.ndarray | None


def read_trace_csv(path_or_text) -> TraceTable:
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], rows[1:]
    if head[:3] != ["k", "residual", "step_norm"]:
        raise InvalidInputError("not a trace CSV: unexpected header")
    k = np.array([int(r[0]) for r in body], dtype=np.int64)
    res = np.array([float(r[1]) for r in body])
    st = np.array([float(r[2]) for r in body])
    Z = None
    if len(head) > 3:
        Z = np.array([[float(v) for v in r[3:]] for r in body]).reshape(len(body), len(head) - 3)
    return TraceTable(k, res, st, Z)


def resolve_metric(pop: Population, name: str, report=None) -> np.ndarray:
    """Metric matrix for a name in :data:`METRICS`."""
    from mfnash.regularity import classify

    p = pop.params
    if name == "auto":
        report = report or classify(p)
        if report.is_NE:
            name = "Q_plus_Delta"
        elif report.is_FNE:
            name = "Delta_minus_C"
        elif report.is_SPC:
            name = "C_minus_Delta"
        else:
            name = "Q_plus_Delta"
    Cs = 0.5 * (p.C + p.C.T)
    P = {
        "Q_plus_Delta": p.Q + p.Delta,
        "Delta_minus_C": p.Delta - Cs,
        "C_minus_Delta": Cs - p.Delta,
        "identity": np.eye(p.n),
    }[name]
    if not is_positive_definite(P):
        raise InvalidMetricError(f"metric {name} is not positive definite for this game")
    return np.ascontiguousarray(P)


def _norm(d, P) -> float:
    return float(np.sqrt(max(float(d @ P @ d), 0.0)))


def _stagnated(res: list[float]) -> bool:
    k = len(res)
    if k <= STAGNATION_WINDOW:
        return False
    before = min(res[: k - STAGNATION_WINDOW])
    recent = min(res[k - STAGNATION_WINDOW:])
    return before - recent < STAGNATION_IMPROVEMENT


def run(pop: Population, config: IterationConfig, threads: int = 1, settings: QpSettings | None = None,
        oracle: Callable | None = None, metric_P=None, report=None) -> ConvergenceTrace:
    """Iterate until the step and residual tests pass or ``max_outer`` is hit.

    Stops at the first ``k`` with ``||z_{k+1} - z_k||_P <= abs + rel ||z_k||_P``
    and ``||A(z_k) - z_k||_P <= abs``, returning ``z_k`` (whose residual is
    certified by the trace). With ``warm_start`` the first update is
    ``z_1 = A(z_0)`` whatever the rule.
    """
    P = resolve_metric(pop, config.metric, report) if metric_P is None else np.asarray(metric_P, dtype=float)
    orc = oracle if oracle is not None else AggregationOracle(pop, settings, threads)
    z = np.zeros(pop.n) if config.z0 is None else np.array(config.z0, dtype=float)
    if z.shape != (pop.n,):
        raise InvalidInputError(f"z0 has length {z.size}, expected {pop.n}")
    Z, res, stp, calls, qpit = [], [], [], [], []
    status = "max_iterations"
    stats = getattr(orc, "stats", None)
    for k in range(config.max_outer + 1):
        c0 = getattr(orc, "calls", 0)
        q0 = stats.get("qp_iterations", 0) if stats is not None else 0
        Az = orc(z)
        r = _norm(Az - z, P)
        if k == 0 and config.warm_start:
            z_next = np.array(Az, dtype=float)
        else:
            z_next = step(config.kind, k, z, config, orc, Az=Az)
        s = _norm(z_next - z, P)
        Z.append(z.copy())
        res.append(r)
        stp.append(s)
        calls.append(getattr(orc, "calls", 0) - c0)
        qpit.append((stats.get("qp_iterations", 0) if stats is not None else 0) - q0)
        if s <= config.stop_tol_abs + config.stop_tol_rel * _norm(z, P) and r <= config.stop_tol_abs:
            status = "converged"
            break
        if config.detect_stagnation and _stagnated(res):
            status = "stagnated"
            break
        if k == config.max_outer:
            break
        z = z_next
    n = len(res)
    return ConvergenceTrace(np.arange(n, dtype=np.int64), np.array(Z), np.array(res), np.array(stp),
                            np.array(calls, dtype=np.int64), np.array(qpit, dtype=np.int64),
                            status, config.kind, P)


def with_kind(config: IterationConfig, kind: str) -> IterationConfig:
    return replace(config, kind=kind)

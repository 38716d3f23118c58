"""Regularity classification of the aggregation mapping.

Sufficient conditions, all decided by eigenvalue tests:

* CON in ``H_{Q+Delta}`` when the block matrix
  ``M = [[Q+Delta, Delta-C], [(Delta-C)', Q+Delta]]`` is positive definite;
  NE when it is positive semidefinite.
* FNE in ``H_{Delta-C}`` when ``Delta > C_sym >= -Q``.
* SPC in ``H_{C-Delta}`` when ``Delta < C_sym`` (or whenever NE holds).

``C_sym = (C + C')/2``. A non-symmetric ``C`` sets a flag and suppresses the
FNE and SPC-by-order verdicts, since those conditions are stated for
symmetric coupling only. A failed condition means "not certified", never
"property disproved".

The contraction margin ``epsilon_con`` is reported as the largest ``eps``
with ``M >= eps * blkdiag(Q+Delta, Q+Delta)``; with that normalisation the
optimal-response map contracts by ``1 - eps`` in ``H_{Q+Delta}``. The plain
``lambda_min(M)`` is kept in ``condition_details``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from mfnash.errors import InvalidMetricError
from mfnash.model_core import CostParams, default_tol_psd, is_positive_definite, jacobi_eigh

ITERATION_KINDS = ("picard", "krasnoselskij", "mann", "ishikawa")
SYM_TOL_C = 1e-10


def _lam_min(M) -> float:
    M = 0.5 * (M + M.T)
    return float(jacobi_eigh(M)[0][0])


def _tol(M, tol_psd):
    return default_tol_psd(M) if tol_psd is None else tol_psd * (1.0 + float(np.max(np.sum(np.abs(M), axis=1))))


@dataclass(frozen=True)
class Margin:
    """Minimum eigenvalue of a tested matrix against its threshold."""

    lambda_min: float
    threshold: float

    def to_dict(self):
        return {"lambda_min": self.lambda_min, "threshold": self.threshold}


@dataclass(frozen=True)
class RegularityReport:
    is_CON: bool
    is_NE: bool
    is_FNE: bool
    is_SPC: bool
    epsilon_con: float
    metrics: dict = field(repr=False)
    condition_details: dict = field(repr=False)
    asymmetric_C_flag: bool = False

    @property
    def strongest(self) -> str | None:
        for name in ("CON", "FNE", "NE", "SPC"):
            if getattr(self, "is_" + name):
                return name
        return None

    def certifying_metric(self) -> np.ndarray | None:
        """Metric in which the strongest certified property holds."""
        s = self.strongest
        if s in ("CON", "NE"):
            return np.asarray(self.metrics["Q_plus_Delta"])
        if s == "FNE":
            return np.asarray(self.metrics["Delta_minus_C"])
        if s == "SPC":
            return np.asarray(self.metrics["C_minus_Delta"])
        return None

    def to_dict(self) -> dict:
        return {
            "is_CON": self.is_CON,
            "is_NE": self.is_NE,
            "is_FNE": self.is_FNE,
            "is_SPC": self.is_SPC,
            "epsilon_con": self.epsilon_con,
            "asymmetric_C_flag": self.asymmetric_C_flag,
            "strongest": self.strongest,
            "admissible_iterations": admissible_iterations(self, warn=False),
            "condition_details": {k: v.to_dict() for k, v in self.condition_details.items()},
            "metrics": {k: np.asarray(v).tolist() for k, v in self.metrics.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def classify(params: CostParams, tol_psd: float | None = None) -> RegularityReport:
    """Certify CON / NE / FNE / SPC for the game defined by ``params``.

    ``tol_psd`` is a relative margin: strict inequalities are tested as
    ``lambda_min > tol_psd * (1 + ||M||_inf)``. ``None`` selects ``1e-9``.

    Examples
    --------
    >>> import numpy as np
    >>> d, a = 0.8, 1.0
    >>> r = classify(CostParams(np.zeros((2, 2)), d * np.eye(2), a * np.eye(2), np.zeros(2)))
    >>> r.is_CON, round(r.epsilon_con, 12)
    (True, 0.75)
    """
    Q, D, C = params.Q, params.Delta, params.C
    n = params.n
    H = Q + D
    details: dict[str, Margin] = {}

    E = D - C
    M = np.block([[H, E], [E.T, H]])
    tM = _tol(M, tol_psd)
    lam_M = _lam_min(M)
    details["block_matrix"] = Margin(lam_M, tM)
    is_ne = lam_M >= -tM

    # generalized margin: lambda_min of blkdiag(L,L)^{-1} M blkdiag(L,L)^{-T}
    Li = np.linalg.inv(np.linalg.cholesky(H))
    Bi = np.block([[Li, np.zeros((n, n))], [np.zeros((n, n)), Li]])
    Mn = Bi @ M @ Bi.T
    tMn = _tol(Mn, tol_psd)
    eps_gen = _lam_min(Mn)
    details["block_matrix_normalized"] = Margin(eps_gen, tMn)
    is_con = lam_M > tM and eps_gen > tMn

    asym = bool(np.max(np.abs(C - C.T), initial=0.0) > SYM_TOL_C * (1.0 + float(np.max(np.abs(C), initial=0.0))))
    Cs = 0.5 * (C + C.T)

    A1 = D - Cs
    A2 = Cs + Q
    t1, t2 = _tol(A1, tol_psd), _tol(A2, tol_psd)
    l1, l2 = _lam_min(A1), _lam_min(A2)
    details["Delta_minus_Csym"] = Margin(l1, t1)
    details["Csym_plus_Q"] = Margin(l2, t2)
    is_fne = (not asym) and l1 > t1 and l2 >= -t2

    A3 = Cs - D
    t3 = _tol(A3, tol_psd)
    l3 = _lam_min(A3)
    details["Csym_minus_Delta"] = Margin(l3, t3)
    spc_order = (not asym) and l3 > t3

    is_ne = is_ne or is_fne or is_con
    is_spc = is_ne or spc_order

    metrics = {"Q_plus_Delta": H, "Delta_minus_C": D - Cs, "C_minus_Delta": Cs - D, "identity": np.eye(n)}
    return RegularityReport(bool(is_con), bool(is_ne), bool(is_fne), bool(is_spc),
                            float(eps_gen) if is_con else 0.0, metrics, details, asym)


def admissible_iterations(report: RegularityReport, warn: bool = True) -> list[str]:
    """Iteration kinds with a convergence certificate, strongest first."""
    if report.is_CON or report.is_FNE:
        return list(ITERATION_KINDS)
    if report.is_NE:
        return ["krasnoselskij", "mann", "ishikawa"]
    if report.is_SPC:
        return ["mann", "ishikawa"]
    if warn:
        warnings.warn("no regularity property certified; no iteration is guaranteed to converge",
                      RuntimeWarning, stacklevel=2)
    return []


# --------------------------------------------------------------------------
# affine maps


@dataclass(frozen=True)
class AffineRegularityReport:
    verdicts: dict  # name -> bool
    margins: dict  # name -> Margin

    def __getitem__(self, name) -> bool:
        return self.verdicts[name]

    def to_dict(self):
        return {k: {"holds": self.verdicts[k], **self.margins[k].to_dict()} for k in self.verdicts}


def affine_regularity(A_mat, b, P, tol_psd: float | None = None) -> AffineRegularityReport:
    """Regularity of ``z -> A z + b`` in ``H_P`` via matrix inequalities.

    ===== ==============================
    CON   A'PA - P < 0
    NE    A'PA - P <= 0
    FNE   2A'PA <= A'P + PA
    SMON  A'P + PA > 0
    MON   A'P + PA >= 0
    PC    A'P + PA <= 2P
    ===== ==============================

    ``b`` does not enter any test.
    """
    A = np.asarray(A_mat, dtype=float)
    P = np.asarray(P, dtype=float)
    if not is_positive_definite(P):
        raise InvalidMetricError("affine_regularity: P must be symmetric positive definite")
    del b
    S = A.T @ P + P @ A
    tests = {
        "CON": (P - A.T @ P @ A, True),
        "NE": (P - A.T @ P @ A, False),
        "FNE": (S - 2.0 * A.T @ P @ A, False),
        "SMON": (S, True),
        "MON": (S, False),
        "PC": (2.0 * P - S, False),
    }
    verdicts, margins = {}, {}
    for name, (M, strict) in tests.items():
        t = _tol(M, tol_psd)
        lam = _lam_min(M)
        verdicts[name] = bool(lam > t) if strict else bool(lam >= -t)
        margins[name] = Margin(lam, t)
    return AffineRegularityReport(verdicts, margins)

"""Concrete game instances: constrained LQ tracking, production planning, PEV charging.

Random draws use :class:`SplitMix64`, a counter-based generator whose output
is fully specified below so populations can be reproduced bit for bit in any
language:

* draw ``i`` (0-based) of stream ``seed`` is ``mix(seed + (i + 1) * G)`` with
  ``G = 0x9E3779B97F4A7C15`` and all arithmetic modulo ``2**64``;
* ``mix(x)``: ``x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9``,
  ``x = (x ^ (x >> 27)) * 0x94D049BB133111EB``, ``x ^ (x >> 31)``;
* a uniform on ``[0, 1)`` is ``(draw >> 11) * 2**-53``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mfnash.convex_sets import Box, BudgetBox, Polyhedron, feasibility_check
from mfnash.errors import InfeasibleAgentError, InvalidInputError, UndefinedDiagnosticError
from mfnash.model_core import Agent, CostParams, Population, is_positive_definite

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(x: int) -> int:
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class SplitMix64:
    """Counter-based 64-bit generator; draw ``i`` depends only on ``(seed, i)``."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def at(self, i: int) -> int:
        return _mix((self.seed + (i + 1) * _GOLDEN) & _MASK)

    def next_u64(self) -> int:
        v = self.at(self.counter)
        self.counter += 1
        return v

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return low + (high - low) * u


# --------------------------------------------------------------------------
# constrained LQ tracking


@dataclass(frozen=True, eq=False)
class LqAgentSpec:
    """One agent's dynamics ``s_{t+1} = A s_t + B u_t`` and box constraints.

    Bounds are ``(T, p)`` arrays for states ``s_1..s_T`` and ``(T, m)`` arrays
    for inputs ``u_0..u_{T-1}``; vectors are broadcast over time.
    """

    A: np.ndarray
    B: np.ndarray
    s0: np.ndarray
    s_lower: np.ndarray
    s_upper: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class LqSpec:
    """Finite-horizon LQ population; ``Qw[t]`` weighs ``s_{t+1}``, ``Rw[t]`` weighs ``u_t``."""

    T: int
    p: int
    m: int
    agents: Sequence[LqAgentSpec]
    Qw: Sequence[np.ndarray]
    Rw: Sequence[np.ndarray]
    eta: np.ndarray
    gamma: float

    def __post_init__(self):
        if self.T < 1 or self.p < 1 or self.m < 1:
            raise InvalidInputError("LqSpec: T, p and m must be positive")
        if len(self.Qw) != self.T or len(self.Rw) != self.T:
            raise InvalidInputError("LqSpec: one state and one input weight per time step are required")
        for Qt in self.Qw:
            if np.shape(Qt) != (self.p, self.p) or not is_positive_definite(Qt):
                raise InvalidInputError("LqSpec: every Q_t must be a p x p positive definite matrix")
        for Rt in self.Rw:
            if np.shape(Rt) != (self.m, self.m) or not is_positive_definite(Rt):
                raise InvalidInputError("LqSpec: every R_t must be an m x m positive definite matrix")


def _time_bounds(b, T, d, name):
    b = np.asarray(b, dtype=float)
    if b.ndim <= 1:
        b = np.broadcast_to(b.reshape(-1) if b.ndim else np.full(d, float(b)), (T, d))
    if b.shape != (T, d):
        raise InvalidInputError(f"{name} must have shape ({T}, {d})")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError(f"{name} must be finite")
    return b.reshape(-1)


def lq_constraint(spec: LqSpec, ag: LqAgentSpec) -> Polyhedron:
    """Dynamics equalities plus state/input boxes over ``y = [s_1..s_T; u_0..u_{T-1}]``."""
    T, p, m = spec.T, spec.p, spec.m
    A = np.asarray(ag.A, dtype=float).reshape(p, p)
    B = np.asarray(ag.B, dtype=float).reshape(p, m)
    s0 = np.asarray(ag.s0, dtype=float).reshape(p)
    ns, nu = T * p, T * m
    n = ns + nu
    D = np.zeros((ns, n))
    rhs = np.zeros(ns)
    for t in range(T):
        r = slice(t * p, (t + 1) * p)
        D[r, t * p:(t + 1) * p] = np.eye(p)
        D[r, ns + t * m: ns + (t + 1) * m] = -B
        if t == 0:
            rhs[r] = A @ s0
        else:
            D[r, (t - 1) * p: t * p] = -A
    lo = np.concatenate([_time_bounds(ag.s_lower, T, p, "s_lower"), _time_bounds(ag.u_lower, T, m, "u_lower")])
    hi = np.concatenate([_time_bounds(ag.s_upper, T, p, "s_upper"), _time_bounds(ag.u_upper, T, m, "u_upper")])
    if np.any(lo > hi):
        raise InvalidInputError("lower bounds exceed upper bounds")
    G = np.vstack([D, np.eye(n)])
    return Polyhedron(G, np.concatenate([rhs, lo]), np.concatenate([rhs, hi]))


def lq_cost(spec: LqSpec) -> CostParams:
    T, p, m = spec.T, spec.p, spec.m
    ns, n = T * p, T * (p + m)
    Qs = np.zeros((ns, ns))
    for t, Qt in enumerate(spec.Qw):
        Qs[t * p:(t + 1) * p, t * p:(t + 1) * p] = Qt
    Q = np.zeros((n, n))
    for t, Rt in enumerate(spec.Rw):
        Q[ns + t * m: ns + (t + 1) * m, ns + t * m: ns + (t + 1) * m] = Rt
    Delta = np.zeros((n, n))
    Delta[:ns, :ns] = Qs
    C = (1.0 - spec.gamma) * Delta
    eta = np.asarray(spec.eta, dtype=float)
    eta_s = np.tile(eta.reshape(-1), T) if eta.size == p else eta.reshape(-1)
    if eta_s.size != ns:
        raise InvalidInputError(f"eta must have length p={p} or T*p={ns}")
    c = np.zeros(n)
    c[:ns] = -spec.gamma * (Qs @ eta_s)
    return CostParams(Q, Delta, C, c)


def build_lq_population(spec: LqSpec, check_feasibility: bool = True) -> Population:
    """Population over ``y = [s; u]`` with ``C = (1 - gamma) Delta``.

    Raises
    ------
    InfeasibleAgentError
        If some agent's dynamics and boxes admit no trajectory.
    """
    params = lq_cost(spec)
    agents = []
    for i, ag in enumerate(spec.agents):
        X = lq_constraint(spec, ag)
        if check_feasibility and not feasibility_check(X).feasible:
            raise InfeasibleAgentError(i)
        agents.append(Agent(i, float(ag.weight), X))
    a_bar = max(1.0, max(a.weight for a in agents))
    return Population(params, agents, a_bar=a_bar, check_feasibility=False)


def production_planning_spec(N: int, seed: int, p0: float = 10.0, rho: float = 1.0, r: float = 1.0,
                             T: int = 20, s0: float = 0.0) -> LqSpec:
    """Firms with ``s_{t+1} = s_t + u_t``, ``s in [0, sbar]``, ``|u| <= ubar``.

    ``sbar ~ U[0, 10]`` and ``ubar ~ U[0, sbar/5]`` are drawn per firm, in that
    order, from ``SplitMix64(seed)``.
    """
    if not (p0 > 0 and rho > 0 and r > 0):
        raise InvalidInputError("p0, rho and r must be positive")
    if N < 1 or T < 1:
        raise InvalidInputError("N and T must be positive")
    rng = SplitMix64(seed)
    agents = []
    for _ in range(N):
        sbar = rng.uniform(0.0, 10.0)
        ubar = rng.uniform(0.0, sbar / 5.0)
        agents.append(LqAgentSpec(np.ones((1, 1)), np.ones((1, 1)), np.array([s0]),
                                  np.zeros(1), np.array([sbar]), np.array([-ubar]), np.array([ubar])))
    return LqSpec(T, 1, 1, agents, [np.eye(1)] * T, [r * np.eye(1)] * T,
                  np.array([-p0 / rho]), -rho)


def build_production_planning(N: int, seed: int, p0: float = 10.0, rho: float = 1.0, r: float = 1.0,
                              T: int = 20, s0: float = 0.0) -> Population:
    """Production-planning population (``eta = -p0/rho``, ``gamma = -rho``)."""
    spec = production_planning_spec(N, seed, p0, rho, r, T, s0)
    pop = build_lq_population(spec)
    pop._meta["lq_spec"] = spec
    return pop


def homogeneous_reference_cost(pop: Population, z_bar, s_max: float = 5.0, u_max: float = 1.0,
                               s0: float = 0.0) -> float:
    """Optimal cost at ``z_bar`` of a firm with ``s in [0, s_max]``, ``|u| <= u_max``.

    Used to express production-planning gaps relative to a typical firm.
    """
    from mfnash.agent_response import optimal_response
    from mfnash.aggregation import context_for

    spec = pop._meta.get("lq_spec")
    if spec is None:
        raise InvalidInputError("population was not built from an LqSpec")
    ref = spec.agents[0]
    ag = LqAgentSpec(ref.A, ref.B, np.full(spec.p, s0),
                     np.zeros(spec.p), np.full(spec.p, s_max), np.full(spec.m, -u_max), np.full(spec.m, u_max))
    X = lq_constraint(spec, ag)
    ctx = context_for(pop)
    x = optimal_response(ctx, Agent(-1, 1.0, X), z_bar)
    return pop.params.cost(x, z_bar)


# --------------------------------------------------------------------------
# PEV charging


@dataclass(frozen=True, eq=False)
class PevSpec:
    """Charging population: ``0 <= u_i <= U_i``, ``1'u_i = gamma_i``."""

    T: int
    gamma: np.ndarray
    U: np.ndarray
    a: float
    c: np.ndarray
    delta: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).reshape(-1)
        N = g.size
        U = np.asarray(self.U, dtype=float)
        U = np.broadcast_to(U, (N, self.T)) if U.ndim <= 1 else U
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if U.shape != (N, self.T) or c.shape != (self.T,):
            raise InvalidInputError("PevSpec: U must be (N, T) and c must have length T")
        if not (self.a > 0):
            raise InvalidInputError("PevSpec: a must be positive")
        if not (self.delta > 0):
            raise InvalidInputError("PevSpec: delta must be positive")
        if np.any(g < 0) or np.any(g > 1):
            raise InvalidInputError("PevSpec: charge targets must lie in [0, 1]")
        if np.any(c < 0):
            raise InvalidInputError("PevSpec: inflexible demand must be nonnegative")
        if np.any(U < 0):
            raise InvalidInputError("PevSpec: upper bounds must be nonnegative")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "U", np.array(U))
        object.__setattr__(self, "c", c)

    @property
    def N(self) -> int:
        return self.gamma.size


def default_inflexible_demand(T: int) -> np.ndarray:
    """Smooth daily profile with a single valley (minimum at slot ``T/2 + 2``)."""
    t = np.arange(T)
    return 1.0 + 0.8 * np.cos(2.0 * np.pi * (t - 2) / T)


def seeded_pev_spec(T: int = 12, N: int = 50, a: float = 1.0, delta: float = 1e-4, U: float = 1.0,
                    seed: int = 0, c=None, gamma_range=(0.1, 0.9)) -> PevSpec:
    """PevSpec with charge targets ``gamma_i ~ U[gamma_range]`` from ``SplitMix64(seed)``."""
    rng = SplitMix64(seed)
    g = np.array([rng.uniform(*gamma_range) for _ in range(N)])
    cc = default_inflexible_demand(T) if c is None else np.asarray(c, dtype=float)
    return PevSpec(T, g, np.full((N, T), float(U)), a, cc, delta)


def build_pev_population(spec: PevSpec) -> Population:
    """``Q = 0``, ``Delta = delta I``, ``C = a I``, ``c`` = inflexible demand.

    Raises
    ------
    InfeasibleAgentError
        If some ``gamma_i`` exceeds ``1'U_i``.
    """
    T = spec.T
    params = CostParams(np.zeros((T, T)), spec.delta * np.eye(T), spec.a * np.eye(T), spec.c)
    w = np.ones(spec.N) if spec.weights is None else np.asarray(spec.weights, dtype=float)
    agents = []
    for i in range(spec.N):
        if spec.gamma[i] > spec.U[i].sum() + 1e-12:
            raise InfeasibleAgentError(i, f"agent {i}: charge target {spec.gamma[i]} exceeds capacity {spec.U[i].sum()}")
        agents.append(Agent(i, float(w[i]), BudgetBox(np.zeros(T), spec.U[i], np.ones(T), spec.gamma[i])))
    return Population(params, agents, a_bar=max(1.0, float(w.max())), check_feasibility=False)


def valley_filling_gap(z_bar, c, active_mask, a: float = 1.0) -> float:
    """Spread ``max - min`` of the total demand ``a z + c`` over active slots.

    Raises
    ------
    UndefinedDiagnosticError
        If no slot is active.
    """
    z = np.asarray(z_bar, dtype=float)
    c = np.asarray(c, dtype=float)
    mask = np.asarray(active_mask, dtype=bool)
    if not (z.shape == c.shape == mask.shape):
        raise InvalidInputError("z_bar, c and active_mask must have the same length")
    if not mask.any():
        raise UndefinedDiagnosticError("valley_filling_gap: no active time slot")
    d = a * z[mask] + c[mask]
    return float(d.max() - d.min())


def discount_tail_bound(L: float, beta: float, T: int) -> float:
    """``L beta^(T+1) / (1 - beta)``: gap between infinite- and ``T``-horizon discounted costs."""
    if not (0.0 < beta < 1.0):
        raise InvalidInputError("beta must lie in (0, 1)")
    if L < 0 or T < 0:
        raise InvalidInputError("L and T must be nonnegative")
    return float(L * beta ** (T + 1) / (1.0 - beta))


def singleton_population(points, params: CostParams | None = None) -> Population:
    """Agents whose sets are single points (boxes with equal bounds)."""
    pts = [np.asarray(p, dtype=float) for p in points]
    n = pts[0].size
    params = params or CostParams(np.eye(n), np.eye(n), np.zeros((n, n)), np.zeros(n))
    return Population(params, [Agent(i, 1.0, Box(p, p)) for i, p in enumerate(pts)])


__all__ = [
    "SplitMix64", "LqAgentSpec", "LqSpec", "PevSpec", "build_lq_population", "build_production_planning",
    "production_planning_spec", "build_pev_population", "seeded_pev_spec", "valley_filling_gap",
    "discount_tail_bound", "homogeneous_reference_cost", "default_inflexible_demand", "singleton_population",
    "lq_constraint", "lq_cost",
]

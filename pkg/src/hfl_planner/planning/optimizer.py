#!/usr/bin/env python3
"""
The latency-optimal local iteration count a and edge iteration
count b for a fixed UE-to-edge association.

The relaxed problem is solved by a Lagrangian dual subgradient iteration with
closed-form primal updates. A brute-force grid oracle and a concavity audit of
the cloud-round bound are provided for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from hfl_planner.core.errors import DualOvershootError, SearchSpaceError
from hfl_planner.core.logger import logger
from hfl_planner.planning.accuracy import AccuracyParams, cloud_rounds, derived_accuracies
from hfl_planner.planning.scenario import (
    Association,
    DelayTable,
    Resources,
    Scenario,
)

A_MIN = 1e-6
B_MAX = 1e12
MIN_ITERS = 5
BINDING_RTOL = 1e-12
SETTLE_SWEEPS = 200
SETTLE_RTOL = 1e-13


@dataclass(frozen=True)
class SolverOptions:
    """Options of the dual subgradient solver."""

    eta: float = 0.01
    tol: float = 1e-6
    max_iters: int = 10_000
    grid_max: int = 200
    min_eta: float = 1e-12

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.grid_max < 0:
            raise ValueError(f"grid_max must be >= 0, got {self.grid_max}")


@dataclass(frozen=True, eq=False)
class DualState:
    """Lagrange multipliers: `lam` per edge (scenario order), `mu` per UE."""

    lam: np.ndarray
    mu: np.ndarray
    step_size: float
    iteration: int = 0

    def __post_init__(self):
        if np.any(self.lam < 0) or np.any(self.mu < 0):
            raise ValueError("multipliers must be nonnegative")
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")

    @classmethod
    def initial(cls, table: DelayTable, step_size: float) -> "DualState":
        """Uniform start: 1/M per edge, 1/N per UE."""
        lam = np.full(table.num_edges, 1.0 / table.num_edges)
        mu = np.full(len(table.ue_ids), 1.0 / len(table.ue_ids))
        return cls(lam=lam, mu=mu, step_size=step_size)


@dataclass(frozen=True)
class Subgradients:
    lam: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True, eq=False)
class Plan:
    """Solved operating point.

    `tau`, `big_t`, `rounds` and `objective` refer to the integer point
    (a_int, b_int); `relaxed_objective` to (a_real, b_real).
    """

    a_real: float
    b_real: float
    a_int: int
    b_int: int
    tau: np.ndarray
    big_t: float
    cpu: Dict[int, float]
    power: Dict[int, float]
    rounds: float
    objective: float
    relaxed_objective: float
    local_accuracy: float
    edge_accuracy: float
    converged: bool = True
    iterations: int = 0
    dual: Optional[DualState] = None
    edge_ids: Tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        return {
            "a_real": self.a_real,
            "b_real": self.b_real,
            "a_int": self.a_int,
            "b_int": self.b_int,
            "tau": {str(m): float(t) for m, t in zip(self.edge_ids, self.tau)},
            "big_t": self.big_t,
            "rounds": self.rounds,
            "objective": self.objective,
            "relaxed_objective": self.relaxed_objective,
            "local_accuracy": self.local_accuracy,
            "edge_accuracy": self.edge_accuracy,
            "cpu_hz": {str(n): f for n, f in self.cpu.items()},
            "power_w": {str(n): p for n, p in self.power.items()},
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass(frozen=True, eq=False)
class StationarityResiduals:
    """Partial derivatives of the Lagrangian at a primal/dual point, with term scales."""

    d_a: float
    d_b: float
    d_t: float
    d_tau: np.ndarray
    scale_a: float
    scale_b: float
    scale_t: float
    scale_tau: np.ndarray

    def relative(self) -> Dict[str, float]:
        with np.errstate(divide="ignore", invalid="ignore"):
            tau_rel = np.where(self.scale_tau > 0, np.abs(self.d_tau) / self.scale_tau, 0.0)
        return {
            "a": abs(self.d_a) / self.scale_a if self.scale_a > 0 else abs(self.d_a),
            "b": abs(self.d_b) / self.scale_b if self.scale_b > 0 else abs(self.d_b),
            "T": abs(self.d_t) / self.scale_t if self.scale_t > 0 else abs(self.d_t),
            "tau": float(np.max(tau_rel)) if tau_rel.size else 0.0,
        }


def optimal_resources(scenario: Scenario) -> Resources:
    """Maximum CPU frequency and transmit power for every UE.

    Both only shorten per-round delays, so the optimum sits at the upper bounds.
    """
    return Resources.maximal(scenario)


def _bound_terms(a: float, b: float, params: AccuracyParams) -> Tuple[float, float, float, float]:
    """Return (K, f, f_a, f_b) for f = 1 - exp(-(b/gamma)(1 - exp(-a/zeta)))."""
    decay = math.exp(-a / params.zeta)
    local_progress = -math.expm1(-a / params.zeta)
    edge_decay = math.exp(-(b / params.gamma) * local_progress)
    f = -math.expm1(-(b / params.gamma) * local_progress)
    f_a = (b / (params.gamma * params.zeta)) * decay * edge_decay
    f_b = (local_progress / params.gamma) * edge_decay
    k = params.big_c * math.log(1.0 / params.epsilon)
    return k, f, f_a, f_b


def stationarity_residuals(
    dual: DualState,
    a: float,
    b: float,
    big_t: float,
    tau: np.ndarray,
    t_cmp: np.ndarray,
    edge_of: np.ndarray,
    params: AccuracyParams,
) -> StationarityResiduals:
    """Evaluate the Lagrangian stationarity conditions in a, b, T and tau_m."""
    k, f, f_a, f_b = _bound_terms(a, b, params)
    weighted_compute = float(np.dot(dual.mu, t_cmp))
    weighted_delay = float(np.dot(dual.lam, tau))
    edge_mu = np.bincount(edge_of, weights=dual.mu, minlength=len(dual.lam))
    # tau_m of an edge without UEs sits at its lower bound 0
    served = np.bincount(edge_of, minlength=len(dual.lam)) > 0
    return StationarityResiduals(
        d_a=-k * big_t * f_a / f**2 + weighted_compute,
        d_b=-k * big_t * f_b / f**2 + weighted_delay,
        d_t=k / f - float(dual.lam.sum()),
        d_tau=np.where(served, dual.lam * b - edge_mu, 0.0),
        scale_a=weighted_compute,
        scale_b=weighted_delay,
        scale_t=k / f,
        scale_tau=np.where(served, dual.lam * b, 0.0),
    )


def a_star(
    dual: DualState,
    t_cmp: np.ndarray,
    tau: np.ndarray,
    zeta: float,
    b: float = 1.0,
) -> float:
    """Local iteration count balancing the a- and b-stationarity conditions.

    Solves exp(a/zeta) - 1 = b * sum(lam tau) / (zeta * sum(mu t_cmp)). At b = 1
    this is a = zeta * ln(sum(lam tau) / (zeta * sum(mu t_cmp)) + 1).

    Args:
        dual: Current multipliers
        t_cmp: Per-UE local iteration times
        tau: Per-edge round delays
        zeta: Local-iteration constant
        b: Current edge iteration count

    Returns:
        a*, clamped below at A_MIN

    Raises:
        DualOvershootError: If sum(mu t_cmp) is not positive
    """
    weighted_compute = float(np.dot(dual.mu, t_cmp))
    if weighted_compute <= 0:
        raise DualOvershootError("degenerate multipliers: sum(mu * t_cmp) is zero")
    weighted_delay = float(np.dot(dual.lam, tau))
    a = zeta * math.log1p(b * weighted_delay / (zeta * weighted_compute))
    if a < A_MIN:
        logger.debug(f"a* = {a} clamped to {A_MIN}")
        return A_MIN
    return a


def _b_inputs(dual: DualState, a: float, params: AccuracyParams, big_t: float, tau: np.ndarray):
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    weighted_delay = float(np.dot(dual.lam, tau))
    if weighted_delay <= 0:
        raise DualOvershootError("sum(lambda * tau) must be positive")
    pressure = params.big_c * math.log(1.0 / params.epsilon) * big_t
    if pressure <= 0:
        raise DualOvershootError("cloud-round pressure C T ln(1/eps) must be positive")
    slope = -math.expm1(-a / params.zeta) / params.gamma
    return weighted_delay, pressure, slope


def b_closed_form(
    dual: DualState, a: float, params: AccuracyParams, big_t: float, tau: np.ndarray
) -> float:
    """Closed-form b* from the b-stationarity condition.

    With A = C T ln(1/eps), Y = 1 - exp(-a/zeta) and S = sum(lam tau), the
    condition reduces to a quadratic in x = exp(-bY/gamma) whose root in (0, 1)
    is x = 1 + (AY/gamma - sqrt(4 (AY/gamma) S + (AY/gamma)^2)) / (2S).
    The smaller root is evaluated as 2q / ((2q + s) + sqrt(4qs + s^2)) to avoid
    cancellation (q = S/A, s = Y/gamma).
    """
    weighted_delay, pressure, slope = _b_inputs(dual, a, params, big_t, tau)
    q = weighted_delay / pressure
    x = 2.0 * q / ((2.0 * q + slope) + math.sqrt(4.0 * q * slope + slope**2))
    return -math.log(x) / slope


def b_star(
    dual: DualState, a: float, params: AccuracyParams, big_t: float, tau: np.ndarray
) -> float:
    """Edge iteration count solving the b-stationarity condition by root finding.

    The derivative of the Lagrangian in b is increasing in b, so a bracket is
    grown around the closed-form estimate and refined with Brent's method.

    Raises:
        DualOvershootError: If no positive root exists below B_MAX
    """
    weighted_delay, pressure, slope = _b_inputs(dual, a, params, big_t, tau)

    def stationarity(b: float) -> float:
        u = slope * b
        gap = math.expm1(-u) ** 2
        if gap == 0.0:
            return -math.inf
        return weighted_delay - pressure * slope * math.exp(-u) / gap

    try:
        guess = b_closed_form(dual, a, params, big_t, tau)
    except (ValueError, ZeroDivisionError, OverflowError):
        guess = float("nan")
    if not (math.isfinite(guess) and guess > 0):
        guess = 1.0 / slope

    low, high = guess / 2.0, guess * 2.0
    while stationarity(low) >= 0:
        low /= 2.0
        if low < 1e-300:
            raise DualOvershootError("no positive root of the b-stationarity condition")
    while stationarity(high) <= 0:
        high *= 2.0
        if high > B_MAX:
            raise DualOvershootError(
                f"b-stationarity root exceeds {B_MAX:g}: multipliers overshoot"
            )

    return brentq(stationarity, low, high, xtol=1e-15 * guess, rtol=1e-14, maxiter=500)


def _recover(table: DelayTable, a: float, b: float) -> Tuple[np.ndarray, float]:
    tau = table.tau(a)
    return tau, table.cloud_delay(b, tau)


def recover_tau_T(
    scenario: Scenario,
    association: Association,
    a: float,
    b: float,
    resources: Optional[Resources] = None,
) -> Tuple[np.ndarray, float]:
    """Tightest (tau, T) for given (a, b): per-edge and cloud round maxima.

    Returns:
        Tuple of (tau in scenario edge order, T)
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    table = DelayTable.build(scenario, association, resources or optimal_resources(scenario))
    return _recover(table, a, b)


def _subgradients(
    table: DelayTable, tau: np.ndarray, big_t: float, a: float, b: float
) -> Subgradients:
    grad_lam = b * tau + table.t_edge - big_t
    grad_mu = table.ue_delays(a) - tau[table.edge_of]
    return Subgradients(lam=grad_lam, mu=grad_mu)


def subgradients(
    scenario: Scenario,
    association: Association,
    tau: np.ndarray,
    big_t: float,
    a: float,
    b: float,
    resources: Optional[Resources] = None,
) -> Subgradients:
    """Constraint residuals b tau_m + t_{m->c} - T (per edge) and a t_cmp + t_up - tau_m (per UE)."""
    table = DelayTable.build(scenario, association, resources or optimal_resources(scenario))
    return _subgradients(table, np.asarray(tau, dtype=float), big_t, a, b)


def dual_step(dual: DualState, grads: Subgradients, eta: float) -> DualState:
    """Projected subgradient step lam <- max(0, lam - eta grad), mu <- max(0, mu - eta grad).

    `solve` passes the negated constraint residuals, so multipliers of slack
    constraints shrink toward zero while binding ones are kept.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return DualState(
        lam=np.maximum(0.0, dual.lam - eta * grads.lam),
        mu=np.maximum(0.0, dual.mu - eta * grads.mu),
        step_size=eta,
        iteration=dual.iteration + 1,
    )


def rebalance(
    dual: DualState, table: DelayTable, a: float, b: float, params: AccuracyParams
) -> DualState:
    """Impose the T- and tau-stationarity conditions on the multipliers.

    Scales lam so that sum(lam) = R(a, b) and, per edge, mu so that
    sum(mu over the edge's UEs) = lam_m * b. Binding constraints whose
    multiplier was projected to zero are re-seeded first. Edges without UEs
    keep their lam but carry no mu.
    """
    tau, big_t = _recover(table, a, b)
    num_edges = table.num_edges
    counts = np.bincount(table.edge_of, minlength=num_edges)

    lam = dual.lam.copy()
    binding_edges = b * tau + table.t_edge >= big_t * (1.0 - BINDING_RTOL)
    total = lam.sum()
    edge_seed = dual.step_size * total / num_edges if total > 0 else 1.0
    lam = np.where(binding_edges & (lam == 0), edge_seed, lam)
    if not np.any(lam[table.active] > 0):
        # only idle edges carry weight: seed the served edge closest to binding
        served = np.flatnonzero(table.active)
        lam[served[np.argmax(b * tau[served] + table.t_edge[served])]] = edge_seed
    lam = lam * (cloud_rounds(a, b, params) / lam.sum())

    mu = dual.mu.copy()
    binding_ues = table.ue_delays(a) >= tau[table.edge_of] * (1.0 - BINDING_RTOL)
    edge_mu = np.bincount(table.edge_of, weights=mu, minlength=num_edges)
    ue_seed = np.where(
        edge_mu > 0, dual.step_size * edge_mu / np.maximum(counts, 1), 1.0
    )[table.edge_of]
    mu = np.where(binding_ues & (mu == 0), ue_seed, mu)
    edge_mu = np.bincount(table.edge_of, weights=mu, minlength=num_edges)
    scale = np.divide(lam * b, edge_mu, out=np.zeros(num_edges), where=edge_mu > 0)
    mu = mu * scale[table.edge_of]

    return replace(dual, lam=lam, mu=mu)


def _normalized(grads: Subgradients, dual: DualState, table: DelayTable, tau: np.ndarray, big_t: float) -> Subgradients:
    """Express residuals relative to the delays they compare, scaled by the multiplier mass."""
    edge_mu = np.bincount(table.edge_of, weights=dual.mu, minlength=table.num_edges)
    edge_tau = tau[table.edge_of]
    return Subgradients(
        lam=grads.lam * (dual.lam.sum() / big_t),
        mu=grads.mu * np.divide(
            edge_mu[table.edge_of], edge_tau, out=np.zeros_like(edge_tau), where=edge_tau > 0
        ),
    )


def _objective(table: DelayTable, params: AccuracyParams, a: float, b: float) -> Tuple[float, np.ndarray, float, float]:
    tau, big_t = _recover(table, a, b)
    rounds = cloud_rounds(a, b, params)
    return rounds * big_t, tau, big_t, rounds


def _round(table: DelayTable, params: AccuracyParams, a_real: float, b_real: float) -> Tuple[int, int]:
    a_candidates = sorted({max(1, math.floor(a_real)), max(1, math.ceil(a_real))})
    b_candidates = sorted({max(1, math.floor(b_real)), max(1, math.ceil(b_real))})
    best = None
    for a in a_candidates:
        for b in b_candidates:
            value = _objective(table, params, a, b)[0]
            if best is None or value < best[0]:
                best = (value, a, b)
    return best[1], best[2]


def round_plan(
    a_real: float,
    b_real: float,
    scenario: Scenario,
    association: Association,
    resources: Optional[Resources] = None,
) -> Tuple[int, int]:
    """Best of the four integer neighbours of (a_real, b_real), each clamped to >= 1."""
    if not (a_real > 0 and b_real > 0):
        raise ValueError("a_real and b_real must be positive")
    table = DelayTable.build(scenario, association, resources or optimal_resources(scenario))
    return _round(table, scenario.accuracy, a_real, b_real)


def _make_plan(
    table: DelayTable,
    params: AccuracyParams,
    resources: Resources,
    a_real: float,
    b_real: float,
    a_int: int,
    b_int: int,
    converged: bool,
    iterations: int,
    dual: Optional[DualState],
) -> Plan:
    objective, tau, big_t, rounds = _objective(table, params, a_int, b_int)
    local_accuracy, edge_accuracy = derived_accuracies(a_int, b_int, params)
    return Plan(
        a_real=float(a_real),
        b_real=float(b_real),
        a_int=int(a_int),
        b_int=int(b_int),
        tau=tau,
        big_t=big_t,
        cpu=dict(resources.cpu_freq),
        power=dict(resources.tx_power),
        rounds=rounds,
        objective=objective,
        relaxed_objective=_objective(table, params, a_real, b_real)[0],
        local_accuracy=local_accuracy,
        edge_accuracy=edge_accuracy,
        converged=converged,
        iterations=iterations,
        dual=dual,
        edge_ids=table.edge_ids,
    )


def _residuals(table: DelayTable, params: AccuracyParams, dual: DualState, a: float, b: float) -> Dict[str, float]:
    tau, big_t = _recover(table, a, b)
    residuals = stationarity_residuals(dual, a, b, big_t, tau, table.t_cmp, table.edge_of, params)
    return residuals.relative()


def _settle(
    table: DelayTable, params: AccuracyParams, dual: DualState, a: float, b: float
) -> Tuple[float, float, DualState]:
    """Repeat the primal updates and the rebalance with the multiplier ratios held fixed.

    Stops once (a, b) move by less than SETTLE_RTOL, which drives the a- and
    b-stationarity residuals to rounding level.
    """
    for _ in range(SETTLE_SWEEPS):
        tau, big_t = _recover(table, a, b)
        try:
            a_new = a_star(dual, table.t_cmp, tau, params.zeta, b)
            b_new = b_star(dual, a_new, params, big_t, tau)
        except DualOvershootError as e:
            logger.debug(f"Settling stopped: {e}")
            break
        dual = rebalance(dual, table, a_new, b_new, params)
        change = max(abs(a_new - a), abs(b_new - b)) / max(1.0, a_new)
        a, b = a_new, b_new
        if change < SETTLE_RTOL:
            break
    return a, b, dual


def solve_table(
    table: DelayTable,
    params: AccuracyParams,
    options: Optional[SolverOptions] = None,
    resources: Optional[Resources] = None,
) -> Plan:
    """Run the dual subgradient iteration on a prepared delay table.

    The iteration stops once (a, b) change by less than `options.tol` and,
    after settling, every relative stationarity residual is below `options.tol`.
    At a = A_MIN the a-residual is not required to vanish.
    """
    options = options or SolverOptions()
    resources = resources or Resources()
    eta = options.eta

    # Start from theta = 1/e and b = gamma
    a, b = params.zeta, params.gamma
    tau, big_t = _recover(table, a, b)
    dual = rebalance(DualState.initial(table, eta), table, a, b, params)

    converged = False
    iterations = 0
    for iteration in range(1, options.max_iters + 1):
        iterations = iteration
        try:
            a_new = a_star(dual, table.t_cmp, tau, params.zeta, b)
            b_new = b_star(dual, a_new, params, big_t, tau)
        except DualOvershootError as e:
            eta /= 2.0
            logger.debug(f"Iteration {iteration}: {e}; step size halved to {eta:g}")
            if eta < options.min_eta:
                logger.warning("Step size collapsed, stopping the dual iteration")
                break
            dual = replace(dual, step_size=eta)
            continue

        tau, big_t = _recover(table, a_new, b_new)
        residuals = _normalized(_subgradients(table, tau, big_t, a_new, b_new), dual, table, tau, big_t)
        # dual_step moves against its argument
        ascent = Subgradients(lam=-residuals.lam, mu=-residuals.mu)
        dual = rebalance(dual_step(dual, ascent, eta), table, a_new, b_new, params)

        change = max(abs(a_new - a), abs(b_new - b)) / max(1.0, a_new)
        a, b = a_new, b_new
        if iteration < MIN_ITERS or change >= options.tol:
            continue

        a, b, dual = _settle(table, params, dual, a, b)
        tau, big_t = _recover(table, a, b)
        stationarity = _residuals(table, params, dual, a, b)
        if a <= A_MIN:
            stationarity.pop("a")
        worst = max(stationarity.values())
        if worst < options.tol:
            converged = True
            break
        logger.debug(f"Iteration {iteration}: (a, b) settled but stationarity residual is {worst:.3g}")

    if converged:
        logger.debug(f"Dual iteration converged after {iterations} iterations: a={a:.6g}, b={b:.6g}")
    else:
        logger.warning(
            f"Dual iteration did not converge within {iterations} iterations (a={a:.6g}, b={b:.6g})"
        )

    a_int, b_int = _round(table, params, a, b)
    return _make_plan(table, params, resources, a, b, a_int, b_int, converged, iterations, dual)


def solve(
    scenario: Scenario,
    association: Association,
    options: Optional[SolverOptions] = None,
    resources: Optional[Resources] = None,
) -> Plan:
    """Solve for the latency-optimal (a, b) under a fixed association."""
    resources = resources or optimal_resources(scenario)
    table = DelayTable.build(scenario, association, resources)
    return solve_table(table, scenario.accuracy, options, resources)


def grid_oracle_table(
    table: DelayTable,
    params: AccuracyParams,
    a_values: Sequence[float],
    b_values: Sequence[float],
    resources: Optional[Resources] = None,
) -> Plan:
    """Exhaustive minimisation of R(a, b) T(a, b) over the given grid."""
    a_arr = np.asarray(a_values, dtype=float)
    b_arr = np.asarray(b_values, dtype=float)
    if a_arr.size == 0 or b_arr.size == 0:
        raise SearchSpaceError("grid oracle needs nonempty a and b ranges")

    ue_delays = a_arr[:, None] * table.t_cmp[None, :] + table.t_up[None, :]
    # edges without UEs keep tau = 0 and still pay their backhaul time
    tau = np.zeros((a_arr.size, table.num_edges))
    for m in np.flatnonzero(table.active):
        tau[:, m] = ue_delays[:, table.edge_of == m].max(axis=1)

    cloud = b_arr[None, :, None] * tau[:, None, :] + table.t_edge[None, None, :]
    objective = cloud_rounds(a_arr[:, None], b_arr[None, :], params) * cloud.max(axis=2)

    # argmin returns the first minimum in row-major order: smallest a, then smallest b
    i, j = np.unravel_index(np.argmin(objective), objective.shape)
    a, b = a_arr[i], b_arr[j]
    return _make_plan(
        table, params, resources or Resources(), a, b, a, b, True, int(objective.size), None
    )


def grid_oracle(
    scenario: Scenario,
    association: Association,
    a_range: Sequence[float],
    b_range: Sequence[float],
    resources: Optional[Resources] = None,
) -> Plan:
    """Exhaustive integer search for the minimum total time.

    Ties are broken toward the lexicographically smallest (a, b).
    """
    resources = resources or optimal_resources(scenario)
    table = DelayTable.build(scenario, association, resources)
    return grid_oracle_table(table, scenario.accuracy, list(a_range), list(b_range), resources)


def kkt_report(
    scenario: Scenario,
    association: Association,
    plan: Plan,
    resources: Optional[Resources] = None,
) -> Dict[str, float]:
    """Relative stationarity residuals of a solved plan at its relaxed point."""
    if plan.dual is None:
        raise ValueError("plan carries no multipliers")
    table = DelayTable.build(scenario, association, resources or optimal_resources(scenario))
    return _residuals(table, scenario.accuracy, plan.dual, plan.a_real, plan.b_real)


@dataclass
class ConcavityReport:
    """Outcome of the concavity audit of 1 - 1/R over an (a, b) grid."""

    zeta: float
    gamma: float
    points: int = 0
    region_points: int = 0
    f_aa_violations: List[Tuple[float, float]] = field(default_factory=list)
    det_violations: List[Tuple[float, float]] = field(default_factory=list)
    fd_mismatches: List[Tuple[float, float, str, float, float]] = field(default_factory=list)
    negative_det_outside_region: int = 0

    @property
    def ok(self) -> bool:
        return not (self.f_aa_violations or self.det_violations or self.fd_mismatches)


def _bound_shape(a, b, zeta: float, gamma: float):
    """-exp(-(b/gamma)(1 - exp(-a/zeta))): the bound's denominator minus its constant 1."""
    return -np.exp(-(b / gamma) * -np.expm1(-a / zeta))


def concavity_check(
    params: AccuracyParams,
    a_grid: Sequence[float],
    b_grid: Sequence[float],
    rtol: float = 1e-4,
    det_atol: float = 1e-12,
) -> ConcavityReport:
    """Audit the Hessian of f(a, b) = 1 - exp(-(b/gamma) g(a/zeta)), g(x) = 1 - e^-x.

    Checks f_aa < 0 everywhere, a nonnegative Hessian determinant where
    kt(2 - t) >= 1 - t (k = b/gamma, t = g(a/zeta)), and agreement of the
    analytic second derivatives with central finite differences.
    """
    zeta, gamma = params.zeta, params.gamma
    a, b = np.meshgrid(
        np.asarray(a_grid, dtype=float), np.asarray(b_grid, dtype=float), indexing="ij"
    )
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("concavity grids must be positive")

    t = -np.expm1(-a / zeta)
    k = b / gamma
    decay = np.exp(-a / zeta)
    edge_decay = np.exp(-k * t)

    f_aa = (b / (gamma * zeta**2)) * decay * edge_decay * (-k * decay - 1.0)
    f_bb = -((t / gamma) ** 2) * edge_decay
    f_ab = (1.0 / (gamma * zeta)) * decay * edge_decay * (1.0 - k * t)
    det = f_aa * f_bb - f_ab**2
    region = k * t * (2.0 - t) >= 1.0 - t

    report = ConcavityReport(zeta=zeta, gamma=gamma, points=int(a.size), region_points=int(region.sum()))
    report.f_aa_violations = [(float(x), float(y)) for x, y in zip(a[f_aa >= 0], b[f_aa >= 0])]
    bad_det = region & (det < -det_atol)
    report.det_violations = [(float(x), float(y)) for x, y in zip(a[bad_det], b[bad_det])]
    report.negative_det_outside_region = int(np.sum(~region & (det < 0)))

    # Steps follow the local length scales of the exponent in each direction
    h_a = 1e-3 * zeta * np.minimum(1.0, 1.0 / np.maximum(k * decay, 1e-300))
    h_b = 1e-3 * gamma / t

    def shape(da, db):
        return _bound_shape(a + da, b + db, zeta, gamma)

    centre = shape(0.0, 0.0)
    fd_aa = (shape(h_a, 0.0) - 2.0 * centre + shape(-h_a, 0.0)) / h_a**2
    fd_bb = (shape(0.0, h_b) - 2.0 * centre + shape(0.0, -h_b)) / h_b**2
    fd_ab = (
        shape(h_a, h_b) - shape(h_a, -h_b) - shape(-h_a, h_b) + shape(-h_a, -h_b)
    ) / (4.0 * h_a * h_b)

    roundoff = 1e2 * np.finfo(float).eps * np.abs(centre) * (1.0 + k * t)
    ab_scale = (1.0 / (gamma * zeta)) * decay * edge_decay * (1.0 + k * t)
    checks = (
        ("f_aa", f_aa, fd_aa, np.abs(f_aa), roundoff / h_a**2),
        ("f_bb", f_bb, fd_bb, np.abs(f_bb), roundoff / h_b**2),
        ("f_ab", f_ab, fd_ab, ab_scale, roundoff / (h_a * h_b)),
    )
    for name, analytic, numeric, scale, floor in checks:
        bad = np.abs(numeric - analytic) > rtol * scale + floor
        for i, j in zip(*np.nonzero(bad)):
            report.fd_mismatches.append(
                (float(a[i, j]), float(b[i, j]), name, float(analytic[i, j]), float(numeric[i, j]))
            )

    logger.debug(
        f"Concavity check zeta={zeta}, gamma={gamma}: {len(report.f_aa_violations)} f_aa, "
        f"{len(report.det_violations)} determinant, {len(report.fd_mismatches)} finite-difference violations"
    )
    return report

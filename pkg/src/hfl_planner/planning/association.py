#!/usr/bin/env python3
"""
UE-to-edge association minimising the largest per-UE round
delay a * t_cmp + t_up, for a fixed local iteration count a.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set

import numpy as np

from hfl_planner.core.errors import ScenarioError, SearchSpaceError
from hfl_planner.core.logger import logger
from hfl_planner.planning.scenario import (
    Association,
    DelayTable,
    Resources,
    Scenario,
    compute_time_vector,
    snr_matrix,
    uplink_time_matrix,
)

DEFAULT_ORACLE_LIMIT = 10**6
ORACLE_CHUNK = 1 << 16


@dataclass(frozen=True)
class AssociationResult:
    """An association with its max per-UE round delay (the epigraph value z)."""

    association: Association
    max_latency: float
    strategy: str
    conflict_resolutions: int = 0

    def to_dict(self) -> Dict:
        return {
            "strategy": self.strategy,
            "max_latency": self.max_latency,
            "conflict_resolutions": self.conflict_resolutions,
            "assignment": {str(n): m for n, m in self.association.assignment.items()},
        }


def evaluate_max_latency(
    scenario: Scenario,
    association: Association,
    a: float,
    resources: Optional[Resources] = None,
) -> float:
    """Largest a * t_cmp + t_up over all UEs under the association."""
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    table = DelayTable.build(scenario, association, resources)
    return float(np.max(table.ue_delays(a)))


def _result(
    scenario: Scenario,
    edge_of: List[int],
    a: float,
    resources: Optional[Resources],
    strategy: str,
    conflict_resolutions: int = 0,
) -> AssociationResult:
    association = Association.from_indices(scenario, edge_of)
    return AssociationResult(
        association=association,
        max_latency=evaluate_max_latency(scenario, association, a, resources),
        strategy=strategy,
        conflict_resolutions=conflict_resolutions,
    )


def _ranked(ratio: np.ndarray, ue_ids: np.ndarray, column: int, pool) -> List[int]:
    """UE positions from `pool` ordered by decreasing SNR at an edge, lower id first on ties."""
    return sorted(pool, key=lambda n: (-ratio[n, column], ue_ids[n]))


def _assign_leftovers(
    scenario: Scenario, ratio: np.ndarray, chosen: List[Set[int]]
) -> List[int]:
    """Attach UEs held by no edge to the best-SNR edge with residual capacity."""
    capacity = [edge.capacity for edge in scenario.edges]
    edge_ids = [edge.id for edge in scenario.edges]
    edge_of = [-1] * scenario.num_ues
    for m, members in enumerate(chosen):
        for n in members:
            edge_of[n] = m

    leftovers = sorted(
        (n for n in range(scenario.num_ues) if edge_of[n] < 0),
        key=lambda n: scenario.ues[n].id,
    )
    for n in leftovers:
        open_edges = [m for m in range(scenario.num_edges) if len(chosen[m]) < capacity[m]]
        if not open_edges:
            raise ScenarioError(
                f"infeasible capacities: no edge left for UE {scenario.ues[n].id}"
            )
        m = min(open_edges, key=lambda k: (-ratio[n, k], edge_ids[k]))
        chosen[m].add(n)
        edge_of[n] = m
    if leftovers:
        logger.debug(f"Assigned {len(leftovers)} leftover UEs after selection")
    return edge_of


def _first_conflict(scenario: Scenario, chosen: List[Set[int]]):
    """Smallest (UE id, earlier edge, later edge) with the UE held by both edges."""
    holders: Dict[int, List[int]] = {}
    for m, members in enumerate(chosen):
        for n in members:
            holders.setdefault(n, []).append(m)
    conflicts = [
        (scenario.ues[n].id, edges[0], edges[1], n)
        for n, edges in holders.items()
        if len(edges) > 1
    ]
    if not conflicts:
        return None
    _, j, i, n = min(conflicts)
    return n, j, i


def propose(
    scenario: Scenario, a: float, resources: Optional[Resources] = None
) -> AssociationResult:
    """Conflict-resolving SNR association.

    Every edge, in scenario order, claims its `capacity` UEs of largest uplink
    SNR. A UE claimed by two edges j < i is resolved by handing one of the two
    edges the best-SNR UE held by nobody, over both edges; that edge gives up
    the conflicting UE. Without such a UE, the conflicting UE stays only with
    the edge where its SNR is higher (the earlier edge on ties). UEs held by no
    edge at the end join the best-SNR edge with room left.
    """
    ratio = snr_matrix(scenario, resources)
    ue_ids = np.array([ue.id for ue in scenario.ues])
    edge_ids = [edge.id for edge in scenario.edges]
    everyone = range(scenario.num_ues)

    chosen: List[Set[int]] = [
        set(_ranked(ratio, ue_ids, m, everyone)[: edge.capacity])
        for m, edge in enumerate(scenario.edges)
    ]

    resolutions = 0
    while (conflict := _first_conflict(scenario, chosen)) is not None:
        n, j, i = conflict
        held = set().union(*chosen)
        candidates = [k for k in everyone if k not in held]
        if candidates:
            replacement, target = min(
                ((k, m) for k in candidates for m in (j, i)),
                key=lambda pair: (-ratio[pair[0], pair[1]], ue_ids[pair[0]], edge_ids[pair[1]]),
            )
            chosen[target].discard(n)
            chosen[target].add(replacement)
        else:
            weaker = j if ratio[n, j] < ratio[n, i] else i
            chosen[weaker].discard(n)
        resolutions += 1

    logger.debug(f"Proposed association resolved {resolutions} conflicts")
    edge_of = _assign_leftovers(scenario, ratio, chosen)
    return _result(scenario, edge_of, a, resources, "proposed", resolutions)


def greedy(
    scenario: Scenario, a: float, resources: Optional[Resources] = None
) -> AssociationResult:
    """Edges in order each take the best-SNR UEs still unassigned, up to capacity."""
    ratio = snr_matrix(scenario, resources)
    ue_ids = np.array([ue.id for ue in scenario.ues])
    unassigned = set(range(scenario.num_ues))
    chosen: List[Set[int]] = []
    for m, edge in enumerate(scenario.edges):
        picked = _ranked(ratio, ue_ids, m, unassigned)[: edge.capacity]
        unassigned.difference_update(picked)
        chosen.append(set(picked))
    edge_of = _assign_leftovers(scenario, ratio, chosen)
    return _result(scenario, edge_of, a, resources, "greedy")


def random_assoc(
    scenario: Scenario,
    seed: int,
    a: float = 1.0,
    resources: Optional[Resources] = None,
) -> AssociationResult:
    """Shuffle the UEs and deal them round-robin over edges with residual capacity.

    `a` only affects the reported max latency.
    """
    rng = np.random.default_rng(seed)
    capacity = [edge.capacity for edge in scenario.edges]
    loads = [0] * scenario.num_edges
    edge_of = [-1] * scenario.num_ues
    cursor = 0
    for n in rng.permutation(scenario.num_ues):
        for _ in range(scenario.num_edges):
            m = cursor % scenario.num_edges
            cursor += 1
            if loads[m] < capacity[m]:
                break
        else:
            raise ScenarioError("infeasible capacities: no edge left for random assignment")
        loads[m] += 1
        edge_of[int(n)] = m
    return _result(scenario, edge_of, a, resources, "random")


def exhaustive_oracle(
    scenario: Scenario,
    a: float,
    resources: Optional[Resources] = None,
    limit: int = DEFAULT_ORACLE_LIMIT,
) -> AssociationResult:
    """Global minimiser of the max latency by enumerating all M^N assignments.

    Assignments are visited in lexicographic order of per-UE edge positions and
    the first minimiser is kept.

    Raises:
        SearchSpaceError: If M^N exceeds `limit`
    """
    num_ues, num_edges = scenario.num_ues, scenario.num_edges
    total = num_edges**num_ues
    if total > limit:
        raise SearchSpaceError(
            f"exhaustive search over {num_edges}^{num_ues} assignments exceeds limit {limit}"
        )

    delays = a * compute_time_vector(scenario, resources)[:, None] + uplink_time_matrix(
        scenario, resources
    )
    capacity = np.array([edge.capacity for edge in scenario.edges])
    shape = (num_edges,) * num_ues
    rows = np.arange(num_ues)

    best_value, best_combo = np.inf, None
    for start in range(0, total, ORACLE_CHUNK):
        index = np.arange(start, min(start + ORACLE_CHUNK, total))
        combos = np.stack(np.unravel_index(index, shape), axis=1)
        loads = (combos[:, :, None] == np.arange(num_edges)).sum(axis=1)
        values = delays[rows, combos].max(axis=1)
        values[np.any(loads > capacity, axis=1)] = np.inf
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value, best_combo = values[k], combos[k]

    if best_combo is None:
        raise ScenarioError("infeasible capacities: no assignment fits")
    logger.debug(f"Exhaustive search over {total} assignments: best {best_value:.6g} s")
    return _result(scenario, best_combo.tolist(), a, resources, "oracle")


STRATEGIES: Dict[str, Callable[..., AssociationResult]] = {
    "proposed": propose,
    "greedy": greedy,
    "random": random_assoc,
    "oracle": exhaustive_oracle,
}


def associate(
    scenario: Scenario,
    strategy: str,
    a: float,
    resources: Optional[Resources] = None,
    seed: int = 0,
    limit: int = DEFAULT_ORACLE_LIMIT,
) -> AssociationResult:
    """Run the named association strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(
            f"unknown strategy {strategy!r}, expected one of {sorted(STRATEGIES)}"
        )
    if strategy == "random":
        return random_assoc(scenario, seed, a, resources)
    if strategy == "oracle":
        return exhaustive_oracle(scenario, a, resources, limit)
    return STRATEGIES[strategy](scenario, a, resources)

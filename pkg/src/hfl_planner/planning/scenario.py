#!/usr/bin/env python3
"""
Deployment model: UEs, edge servers, the free-space uplink channel and the
per-round delay formulas of three-layer hierarchical federated learning.

Every latency figure used by the planner is computed here.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from hfl_planner.core.errors import ConstraintViolation, ScenarioError
from hfl_planner.planning.accuracy import AccuracyParams, cloud_rounds

SPEED_OF_LIGHT = 3e8
MIN_DISTANCE_M = 1.0
CAPACITY_EPS = 1e-12

Position = Tuple[float, float]


def _as_position(value, owner: str) -> Position:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{owner}: position must be a pair of numbers, got {value!r}")
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ScenarioError(f"{owner}: position must be finite, got {value!r}")
    return (x, y)


def _require_positive(owner: str, **values) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ScenarioError(f"{owner}: {name} must be positive, got {value}")


@dataclass(frozen=True)
class Ue:
    """A user equipment holding a local dataset."""

    id: int
    position: Position
    cpu_freq_max: float
    cycles_per_sample: float
    dataset_size: int
    tx_power_max: float
    model_size: float

    def __post_init__(self):
        owner = f"UE {self.id}"
        object.__setattr__(self, "position", _as_position(self.position, owner))
        _require_positive(
            owner,
            cpu_freq_max=self.cpu_freq_max,
            cycles_per_sample=self.cycles_per_sample,
            tx_power_max=self.tx_power_max,
            model_size=self.model_size,
        )
        if self.dataset_size < 1:
            raise ScenarioError(f"{owner}: dataset_size must be >= 1, got {self.dataset_size}")


@dataclass(frozen=True)
class EdgeServer:
    """An edge aggregator with a bandwidth budget and a backhaul to the cloud."""

    id: int
    position: Position
    total_bandwidth: float
    per_ue_bandwidth: float
    uplink_rate_to_cloud: float
    edge_model_size: float

    def __post_init__(self):
        owner = f"edge {self.id}"
        object.__setattr__(self, "position", _as_position(self.position, owner))
        _require_positive(
            owner,
            total_bandwidth=self.total_bandwidth,
            per_ue_bandwidth=self.per_ue_bandwidth,
            uplink_rate_to_cloud=self.uplink_rate_to_cloud,
        )
        if self.edge_model_size < 0:
            raise ScenarioError(f"{owner}: edge_model_size must be >= 0")
        if self.per_ue_bandwidth > self.total_bandwidth:
            raise ScenarioError(
                f"{owner}: per_ue_bandwidth {self.per_ue_bandwidth} exceeds total_bandwidth {self.total_bandwidth}"
            )

    @property
    def capacity(self) -> int:
        """Number of UEs the edge can serve: floor(total / per-UE bandwidth)."""
        return int(math.floor(self.total_bandwidth / self.per_ue_bandwidth * (1 + CAPACITY_EPS)))


@dataclass(frozen=True)
class Scenario:
    """Full deployment description.

    The carrier is stored as a frequency; `carrier_wavelength` is derived.
    """

    ues: Tuple[Ue, ...]
    edges: Tuple[EdgeServer, ...]
    noise_power: float
    carrier_hz: float
    accuracy: AccuracyParams

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(self.ues))
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.ues:
            raise ScenarioError("scenario needs at least one UE")
        if not self.edges:
            raise ScenarioError("scenario needs at least one edge server")
        _require_positive("scenario", noise_power=self.noise_power, carrier_hz=self.carrier_hz)

        for kind, items in (("UE", self.ues), ("edge", self.edges)):
            duplicates = [i for i, n in Counter(item.id for item in items).items() if n > 1]
            if duplicates:
                raise ScenarioError(f"duplicate {kind} ids: {sorted(duplicates)}")

        total_capacity = sum(edge.capacity for edge in self.edges)
        if total_capacity < len(self.ues):
            raise ScenarioError(
                f"infeasible scenario: total edge capacity {total_capacity} < {len(self.ues)} UEs"
            )

    @property
    def carrier_wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def ue_index(self) -> Dict[int, int]:
        return {ue.id: i for i, ue in enumerate(self.ues)}

    @cached_property
    def edge_index(self) -> Dict[int, int]:
        return {edge.id: i for i, edge in enumerate(self.edges)}

    def ue(self, ue_id: int) -> Ue:
        if ue_id not in self.ue_index:
            raise ScenarioError(f"unknown UE id {ue_id}")
        return self.ues[self.ue_index[ue_id]]

    def edge(self, edge_id: int) -> EdgeServer:
        if edge_id not in self.edge_index:
            raise ScenarioError(f"unknown edge id {edge_id}")
        return self.edges[self.edge_index[edge_id]]

    def with_accuracy(self, accuracy: AccuracyParams) -> "Scenario":
        return replace(self, accuracy=accuracy)

    def with_epsilon(self, epsilon: float) -> "Scenario":
        return replace(self, accuracy=replace(self.accuracy, epsilon=epsilon))


@dataclass(frozen=True)
class Resources:
    """Per-UE CPU frequency (Hz) and transmit power (W), keyed by UE id."""

    cpu_freq: Dict[int, float] = field(default_factory=dict)
    tx_power: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def maximal(cls, scenario: Scenario) -> "Resources":
        return cls(
            cpu_freq={ue.id: ue.cpu_freq_max for ue in scenario.ues},
            tx_power={ue.id: ue.tx_power_max for ue in scenario.ues},
        )


@dataclass(frozen=True)
class Association:
    """UE id -> edge id mapping (dense form of the binary association matrix)."""

    assignment: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(sorted(self.assignment.items())))

    @classmethod
    def from_indices(cls, scenario: Scenario, edge_of: Sequence[int]) -> "Association":
        """Build from per-UE edge positions (scenario order)."""
        return cls(
            {ue.id: scenario.edges[int(m)].id for ue, m in zip(scenario.ues, edge_of)}
        )

    def loads(self) -> Dict[int, int]:
        return dict(Counter(self.assignment.values()))

    def members(self, edge_id: int) -> List[int]:
        return [n for n, m in self.assignment.items() if m == edge_id]

    def edge_indices(self, scenario: Scenario) -> np.ndarray:
        return np.array(
            [scenario.edge_index[self.assignment[ue.id]] for ue in scenario.ues], dtype=int
        )

    def validate(self, scenario: Scenario) -> None:
        """Check that every UE is assigned exactly once and no edge exceeds its capacity."""
        ue_ids = set(scenario.ue_index)
        assigned = set(self.assignment)
        if assigned != ue_ids:
            missing = sorted(ue_ids - assigned)
            extra = sorted(assigned - ue_ids)
            raise ScenarioError(
                f"association must cover each UE exactly once (missing {missing}, unknown {extra})"
            )
        for edge_id, load in self.loads().items():
            edge = scenario.edge(edge_id)
            if load > edge.capacity:
                raise ScenarioError(
                    f"edge {edge_id} assigned {load} UEs, capacity is {edge.capacity}"
                )


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def channel_gain(
    ue_pos: Position,
    edge_pos: Position,
    wavelength: float,
    min_distance: Optional[float] = None,
) -> float:
    """Free-space channel gain (wavelength / (4 pi d))^2.

    Args:
        ue_pos: UE coordinates in meters
        edge_pos: Edge server coordinates in meters
        wavelength: Carrier wavelength in meters
        min_distance: If given, distances below it are clamped up to it

    Raises:
        ValueError: If the positions coincide and no clamp applies
    """
    distance = math.hypot(ue_pos[0] - edge_pos[0], ue_pos[1] - edge_pos[1])
    if min_distance is not None:
        distance = max(distance, min_distance)
    if distance <= 0:
        raise ValueError("coincident positions: free-space gain is singular")
    return (wavelength / (4.0 * math.pi * distance)) ** 2


def uplink_rate(bandwidth: float, gain: float, tx_power: float, noise_power: float) -> float:
    """Shannon rate B log2(1 + g p / N0) in bits/s."""
    _require_positive(
        "uplink_rate", bandwidth=bandwidth, gain=gain, tx_power=tx_power, noise_power=noise_power
    )
    return bandwidth * math.log1p(gain * tx_power / noise_power) / math.log(2.0)


def snr(
    ue: Ue,
    edge: EdgeServer,
    tx_power: float,
    noise_power: float,
    wavelength: float,
    min_distance: float = MIN_DISTANCE_M,
) -> float:
    gain = channel_gain(ue.position, edge.position, wavelength, min_distance)
    return gain * tx_power / noise_power


def local_compute_time(ue: Ue, cpu_freq: float) -> float:
    """Time of one local iteration, C_n D_n / f_n."""
    if not 0 < cpu_freq <= ue.cpu_freq_max:
        raise ConstraintViolation(
            f"UE {ue.id}: cpu frequency {cpu_freq} outside (0, {ue.cpu_freq_max}]"
        )
    return ue.cycles_per_sample * ue.dataset_size / cpu_freq


def ue_uplink_time(
    ue: Ue,
    edge: EdgeServer,
    tx_power: float,
    noise_power: float,
    wavelength: float,
    min_distance: float = MIN_DISTANCE_M,
) -> float:
    """Time for the UE to upload its model to the edge, d_n / r_{n,m}."""
    if not 0 < tx_power <= ue.tx_power_max:
        raise ConstraintViolation(
            f"UE {ue.id}: transmit power {tx_power} outside (0, {ue.tx_power_max}]"
        )
    gain = channel_gain(ue.position, edge.position, wavelength, min_distance)
    rate = uplink_rate(edge.per_ue_bandwidth, gain, tx_power, noise_power) if gain > 0 else 0.0
    if rate <= 0:
        raise ScenarioError(f"zero uplink rate between UE {ue.id} and edge {edge.id}")
    return ue.model_size / rate


def edge_uplink_time(edge: EdgeServer) -> float:
    """Time for the edge to upload its model to the cloud, d_m / r_m."""
    return edge.edge_model_size / edge.uplink_rate_to_cloud


def compute_time_vector(scenario: Scenario, resources: Optional[Resources] = None) -> np.ndarray:
    """Per-UE local iteration times in scenario order."""
    resources = resources or Resources.maximal(scenario)
    return np.array(
        [local_compute_time(ue, resources.cpu_freq[ue.id]) for ue in scenario.ues]
    )


def snr_matrix(scenario: Scenario, resources: Optional[Resources] = None) -> np.ndarray:
    """N x M uplink SNR matrix (distances clamped to 1 m)."""
    resources = resources or Resources.maximal(scenario)
    for ue in scenario.ues:
        power = resources.tx_power[ue.id]
        if not 0 < power <= ue.tx_power_max:
            raise ConstraintViolation(
                f"UE {ue.id}: transmit power {power} outside (0, {ue.tx_power_max}]"
            )
    ue_xy = np.array([ue.position for ue in scenario.ues])
    edge_xy = np.array([edge.position for edge in scenario.edges])
    distance = np.linalg.norm(ue_xy[:, None, :] - edge_xy[None, :, :], axis=2)
    distance = np.maximum(distance, MIN_DISTANCE_M)
    gain = (scenario.carrier_wavelength / (4.0 * math.pi * distance)) ** 2
    power = np.array([resources.tx_power[ue.id] for ue in scenario.ues])
    return gain * power[:, None] / scenario.noise_power


def uplink_time_matrix(scenario: Scenario, resources: Optional[Resources] = None) -> np.ndarray:
    """N x M matrix of UE-to-edge upload times."""
    ratio = snr_matrix(scenario, resources)
    bandwidth = np.array([edge.per_ue_bandwidth for edge in scenario.edges])
    rate = bandwidth[None, :] * np.log1p(ratio) / math.log(2.0)
    if np.any(rate <= 0):
        n, m = np.argwhere(rate <= 0)[0]
        raise ScenarioError(
            f"zero uplink rate between UE {scenario.ues[n].id} and edge {scenario.edges[m].id}"
        )
    model_size = np.array([ue.model_size for ue in scenario.ues])
    return model_size[:, None] / rate


@dataclass(frozen=True, eq=False)
class DelayTable:
    """Delay components of one (scenario, association, resources) triple.

    Arrays follow scenario order: `t_cmp`, `t_up` and `edge_of` per UE,
    `t_edge` per edge server.
    """

    ue_ids: Tuple[int, ...]
    edge_ids: Tuple[int, ...]
    t_cmp: np.ndarray
    t_up: np.ndarray
    edge_of: np.ndarray
    t_edge: np.ndarray

    @classmethod
    def build(
        cls,
        scenario: Scenario,
        association: Association,
        resources: Optional[Resources] = None,
    ) -> "DelayTable":
        association.validate(scenario)
        resources = resources or Resources.maximal(scenario)
        t_up = np.array(
            [
                ue_uplink_time(
                    ue,
                    scenario.edge(association.assignment[ue.id]),
                    resources.tx_power[ue.id],
                    scenario.noise_power,
                    scenario.carrier_wavelength,
                )
                for ue in scenario.ues
            ]
        )
        return cls(
            ue_ids=tuple(ue.id for ue in scenario.ues),
            edge_ids=tuple(edge.id for edge in scenario.edges),
            t_cmp=compute_time_vector(scenario, resources),
            t_up=t_up,
            edge_of=association.edge_indices(scenario),
            t_edge=np.array([edge_uplink_time(edge) for edge in scenario.edges]),
        )

    @property
    def num_edges(self) -> int:
        return len(self.edge_ids)

    @cached_property
    def active(self) -> np.ndarray:
        """Edges with at least one assigned UE."""
        return np.bincount(self.edge_of, minlength=self.num_edges) > 0

    def ue_delays(self, a: float) -> np.ndarray:
        return a * self.t_cmp + self.t_up

    def tau(self, a: float) -> np.ndarray:
        """Per-edge round delay; zero for edges without UEs."""
        tau = np.zeros(self.num_edges)
        np.maximum.at(tau, self.edge_of, self.ue_delays(a))
        return tau

    def cloud_delay(self, b: float, tau: np.ndarray) -> float:
        """Cloud round delay over every edge; an edge without UEs still uploads its model."""
        return float(np.max(b * tau + self.t_edge))

    def scaled(self, factor: float) -> "DelayTable":
        """Same table with every delay multiplied by `factor`."""
        return replace(
            self,
            t_cmp=self.t_cmp * factor,
            t_up=self.t_up * factor,
            t_edge=self.t_edge * factor,
        )


def edge_round_delay(
    scenario: Scenario,
    association: Association,
    edge_id: int,
    a: float,
    resources: Optional[Resources] = None,
) -> float:
    """Edge round delay tau_m = max over the edge's UEs of a t_cmp + t_up."""
    position = scenario.edge_index.get(edge_id)
    if position is None:
        raise ScenarioError(f"unknown edge id {edge_id}")
    table = DelayTable.build(scenario, association, resources)
    return float(table.tau(a)[position])


def cloud_round_delay(
    scenario: Scenario,
    association: Association,
    a: float,
    b: float,
    resources: Optional[Resources] = None,
) -> float:
    """Cloud round delay T = max over all edges of b tau_m + t_{m->c}."""
    table = DelayTable.build(scenario, association, resources)
    return table.cloud_delay(b, table.tau(a))


def total_time(
    scenario: Scenario,
    association: Association,
    a: float,
    b: float,
    resources: Optional[Resources] = None,
) -> float:
    """Total training latency R(a, b) * T(a, b)."""
    rounds = cloud_rounds(a, b, scenario.accuracy)
    return rounds * cloud_round_delay(scenario, association, a, b, resources)

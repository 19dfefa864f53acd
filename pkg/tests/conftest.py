#!/usr/bin/env python3
"""
Shared pytest fixtures for hfl-planner unit tests.
"""

import json

import numpy as np
import pytest

from hfl_planner.planning.accuracy import AccuracyParams
from hfl_planner.planning.flsim import QuadraticTask
from hfl_planner.planning.scenario import Association, EdgeServer, Scenario, Ue

TX_POWER_W = 0.01  # 10 dBm
NOISE_W = 1e-13
CARRIER_HZ = 28e9


def make_ue(ue_id, position, cycles=2.5e4, samples=500, cpu=2e9, power=TX_POWER_W, bits=1e6):
    return Ue(
        id=ue_id,
        position=position,
        cpu_freq_max=cpu,
        cycles_per_sample=cycles,
        dataset_size=samples,
        tx_power_max=power,
        model_size=bits,
    )


def make_edge(edge_id, position, capacity=4, per_ue=1e6, rate=2e5, bits=1e6):
    return EdgeServer(
        id=edge_id,
        position=position,
        total_bandwidth=capacity * per_ue,
        per_ue_bandwidth=per_ue,
        uplink_rate_to_cloud=rate,
        edge_model_size=bits,
    )


@pytest.fixture
def accuracy():
    """Accuracy constants used by the hand-built scenarios."""
    return AccuracyParams(zeta=2.0, gamma=3.0, big_c=1.0, epsilon=0.1)


@pytest.fixture
def golden_scenario(accuracy):
    """Two edges and eight UEs with heterogeneous compute and distances."""
    ues = [
        make_ue(0, (100.0, 120.0), cycles=1.0e4, samples=300),
        make_ue(1, (60.0, 250.0), cycles=3.0e4, samples=700),
        make_ue(2, (180.0, 40.0), cycles=2.0e4, samples=450),
        make_ue(3, (20.0, 20.0), cycles=4.0e4, samples=250),
        make_ue(4, (330.0, 300.0), cycles=1.5e4, samples=800),
        make_ue(5, (420.0, 180.0), cycles=2.5e4, samples=600),
        make_ue(6, (480.0, 470.0), cycles=3.5e4, samples=350),
        make_ue(7, (260.0, 420.0), cycles=1.2e4, samples=500),
    ]
    edges = [
        make_edge(0, (150.0, 150.0), capacity=5),
        make_edge(1, (350.0, 350.0), capacity=5, rate=1e5, bits=2e6),
    ]
    return Scenario(ues=ues, edges=edges, noise_power=NOISE_W, carrier_hz=CARRIER_HZ, accuracy=accuracy)


@pytest.fixture
def golden_association():
    """Nearest-edge association of the golden scenario."""
    return Association({0: 0, 1: 0, 2: 0, 3: 0, 4: 1, 5: 1, 6: 1, 7: 1})


@pytest.fixture
def symmetric_scenario(accuracy):
    """Two UEs equidistant from two single-slot edges."""
    ues = [make_ue(0, (50.0, 10.0)), make_ue(1, (50.0, -10.0))]
    edges = [make_edge(0, (0.0, 0.0), capacity=1), make_edge(1, (100.0, 0.0), capacity=1)]
    return Scenario(ues=ues, edges=edges, noise_power=NOISE_W, carrier_hz=CARRIER_HZ, accuracy=accuracy)


@pytest.fixture
def single_ue_scenario():
    """One UE behind one edge with a slow backhaul."""
    return Scenario(
        ues=[make_ue(0, (100.0, 100.0))],
        edges=[make_edge(0, (150.0, 150.0), capacity=1, bits=1e7)],
        noise_power=NOISE_W,
        carrier_hz=CARRIER_HZ,
        accuracy=AccuracyParams(zeta=2.0, gamma=4.0, big_c=1.0, epsilon=0.1),
    )


@pytest.fixture
def minimal_scenario_doc():
    """Smallest scenario document accepted by the loader."""
    return {
        "ues": [{"position": [100.0, 200.0]}, {"position": [400.0, 300.0]}],
        "edges": [{}],
        "accuracy": {"zeta": 3, "gamma": 5},
    }


@pytest.fixture
def write_json(tmp_path):
    """Write a document into tmp_path and return the file path."""

    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)

    return _write


@pytest.fixture
def shared_quadratics():
    """Four identity-curvature tasks on two edges with distinct centers."""
    centers = [[1.0, 0.0, 2.0], [-1.0, 3.0, 0.5], [2.0, -2.0, 1.0], [0.0, 1.0, -3.0]]
    tasks = [
        QuadraticTask(np.eye(3), np.array(c), w)
        for c, w in zip(centers, [300.0, 500.0, 200.0, 400.0])
    ]
    return tasks, [0, 0, 1, 1]


@pytest.fixture
def idle_edge_scenario(golden_scenario):
    """UEs 0-3 of the golden scenario, all on edge 0; edge 1 (20 s backhaul) serves nobody."""
    scenario = Scenario(
        ues=golden_scenario.ues[:4],
        edges=golden_scenario.edges,
        noise_power=golden_scenario.noise_power,
        carrier_hz=golden_scenario.carrier_hz,
        accuracy=golden_scenario.accuracy,
    )
    return scenario, Association({n: 0 for n in range(4)})

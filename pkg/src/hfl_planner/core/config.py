#!/usr/bin/env python3
"""
Scenario files, defaults and the seeded scenario generator.

Scenario files are JSON. Unknown keys are rejected and every error names the
offending field path, e.g. `ues[2].cpu_freq_max_hz`.
"""

import json
import math
import os
import tempfile
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from hfl_planner.core.errors import ScenarioError
from hfl_planner.core.logger import logger
from hfl_planner.planning.accuracy import AccuracyParams
from hfl_planner.planning.scenario import (
    EdgeServer,
    Scenario,
    Ue,
    dbm_to_watts,
)

# Defaults for omitted fields and generated scenarios
AREA_M = 500.0
GRID_PITCH_M = 150.0
CAPACITY_SLACK = 1.5
DEFAULT_CPU_FREQ_HZ = 2e9
DEFAULT_TX_POWER_DBM = 10.0
DEFAULT_CYCLES_PER_SAMPLE = 2.5e4
DEFAULT_DATASET_SIZE = 500
DEFAULT_MODEL_SIZE_BITS = 1e6
DEFAULT_EDGE_MODEL_SIZE_BITS = 1e6
DEFAULT_PER_UE_BANDWIDTH_HZ = 1e6
DEFAULT_CLOUD_RATE_BPS = 2e5
DEFAULT_NOISE_POWER_W = 1e-13
DEFAULT_CARRIER_GHZ = 28.0
DEFAULT_BIG_C = 1.0
DEFAULT_EPSILON = 0.25
GENERATED_CYCLES_RANGE = (1e4, 4e4)
GENERATED_DATASET_RANGE = (200, 800)
ACCURACY_CONSTANT_RANGE = (1, 10)

TOP_LEVEL_KEYS = {"seed", "noise_power_w", "carrier_ghz", "carrier_hz", "accuracy", "ues", "edges"}
UE_KEYS = {
    "id",
    "position",
    "cpu_freq_max_hz",
    "cycles_per_sample",
    "dataset_size",
    "tx_power_max",
    "model_size_bits",
}
EDGE_KEYS = {
    "id",
    "position",
    "total_bandwidth_hz",
    "per_ue_bandwidth_hz",
    "uplink_rate_to_cloud_bps",
    "edge_model_size_bits",
}
ACCURACY_KEYS = {
    "zeta",
    "gamma",
    "big_c",
    "epsilon",
    "smoothness_l",
    "strong_convexity_beta",
    "delta",
}


def reject_unknown(data: Mapping[str, Any], allowed: Iterable[str], path: str) -> None:
    """Raise ScenarioError naming the first key of `data` not in `allowed`."""
    if not isinstance(data, Mapping):
        raise ScenarioError(f"{path or 'document'}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ScenarioError(f"{where}: unknown key")


def _field(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _number(
    data: Mapping[str, Any], key: str, path: str, default=None, positive: bool = False
) -> Optional[float]:
    if key not in data:
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{_field(path, key)}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(f"{_field(path, key)}: must be positive, got {value!r}")
    return float(value)


def _integer(data: Mapping[str, Any], key: str, path: str, default=None) -> Optional[int]:
    if key not in data:
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{_field(path, key)}: expected an integer, got {value!r}")
    return value


def _power(value: Any, path: str) -> float:
    """Power as {"dbm": x}, {"w": x} or a bare number of watts."""
    if isinstance(value, Mapping):
        reject_unknown(value, {"dbm", "w"}, path)
        if len(value) != 1:
            raise ScenarioError(f"{path}: give exactly one of 'dbm' or 'w'")
        unit = next(iter(value))
        if unit == "dbm":
            return dbm_to_watts(_number(value, unit, path))
        return _number(value, unit, path, positive=True)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ScenarioError(f"{path}: expected a power object or positive watts, got {value!r}")
    return float(value)


def _position(data: Mapping[str, Any], path: str, default=None) -> Tuple[float, float]:
    if "position" not in data:
        if default is None:
            raise ScenarioError(f"{path}.position: required")
        return default
    value = data["position"]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ScenarioError(f"{path}.position: expected [x, y] in meters, got {value!r}")
    return (float(value[0]), float(value[1]))


def grid_positions(
    num_edges: int,
    area: float = AREA_M,
    pitch: float = GRID_PITCH_M,
) -> List[Tuple[float, float]]:
    """Edge positions on a centered ceil(sqrt(M)) x ceil(sqrt(M)) grid.

    Cells closest to the center of the area are used first, row-major among ties.
    A single edge sits at the center.
    """
    if num_edges < 1:
        raise ScenarioError(f"num_edges must be >= 1, got {num_edges}")
    side = math.ceil(math.sqrt(num_edges))
    cells = [(row, col) for row in range(side) for col in range(side)]
    # Offsets in half-pitch units keep the distance ordering exact
    cells.sort(
        key=lambda rc: ((2 * rc[0] - side + 1) ** 2 + (2 * rc[1] - side + 1) ** 2, rc[0], rc[1])
    )
    centre = area / 2.0
    return [
        (centre + (col - (side - 1) / 2.0) * pitch, centre + (row - (side - 1) / 2.0) * pitch)
        for row, col in cells[:num_edges]
    ]


def default_total_bandwidth(per_ue_bandwidth: float, num_ues: int, num_edges: int) -> float:
    """Bandwidth budget leaving CAPACITY_SLACK headroom over an even UE split."""
    return per_ue_bandwidth * math.ceil(CAPACITY_SLACK * num_ues / num_edges)


def draw_accuracy_constants(rng: np.random.Generator) -> Tuple[float, float]:
    low, high = ACCURACY_CONSTANT_RANGE
    zeta, gamma = rng.integers(low, high + 1, size=2)
    return float(zeta), float(gamma)


def _accuracy(data: Mapping[str, Any], seed: Optional[int]) -> AccuracyParams:
    path = "accuracy"
    reject_unknown(data, ACCURACY_KEYS, path)
    values = {key: _number(data, key, path) for key in ACCURACY_KEYS}
    smoothness = (values["smoothness_l"], values["strong_convexity_beta"], values["delta"])
    derive_gamma = values["gamma"] is None and None not in smoothness

    if values["zeta"] is None or (values["gamma"] is None and not derive_gamma):
        if seed is None:
            raise ScenarioError("accuracy.zeta: zeta and gamma are required unless a top-level seed is given")
        zeta, gamma = draw_accuracy_constants(np.random.default_rng(seed))
        if values["zeta"] is None:
            values["zeta"] = zeta
        if values["gamma"] is None and not derive_gamma:
            values["gamma"] = gamma

    kwargs = {
        "zeta": values["zeta"],
        "big_c": values["big_c"] if values["big_c"] is not None else DEFAULT_BIG_C,
        "epsilon": values["epsilon"] if values["epsilon"] is not None else DEFAULT_EPSILON,
    }
    if derive_gamma:
        return AccuracyParams.from_smoothness(
            smoothness_l=values["smoothness_l"],
            strong_convexity_beta=values["strong_convexity_beta"],
            delta=values["delta"],
            **kwargs,
        )
    return AccuracyParams(
        gamma=values["gamma"],
        smoothness_l=values["smoothness_l"],
        strong_convexity_beta=values["strong_convexity_beta"],
        delta=values["delta"],
        **kwargs,
    )


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    """Build a validated Scenario from a parsed scenario document."""
    reject_unknown(data, TOP_LEVEL_KEYS, "")
    seed = _integer(data, "seed", "")
    if "carrier_ghz" in data and "carrier_hz" in data:
        raise ScenarioError("carrier_hz: give either carrier_hz or carrier_ghz, not both")

    for key in ("ues", "edges"):
        if not isinstance(data.get(key), list) or not data[key]:
            raise ScenarioError(f"{key}: expected a nonempty list")
    ue_docs, edge_docs = data["ues"], data["edges"]
    num_ues, num_edges = len(ue_docs), len(edge_docs)

    ues = []
    for i, doc in enumerate(ue_docs):
        path = f"ues[{i}]"
        reject_unknown(doc, UE_KEYS, path)
        tx_power = (
            _power(doc["tx_power_max"], f"{path}.tx_power_max")
            if "tx_power_max" in doc
            else dbm_to_watts(DEFAULT_TX_POWER_DBM)
        )
        try:
            ues.append(
                Ue(
                    id=_integer(doc, "id", path, i),
                    position=_position(doc, path),
                    cpu_freq_max=_number(doc, "cpu_freq_max_hz", path, DEFAULT_CPU_FREQ_HZ, True),
                    cycles_per_sample=_number(
                        doc, "cycles_per_sample", path, DEFAULT_CYCLES_PER_SAMPLE, True
                    ),
                    dataset_size=_integer(doc, "dataset_size", path, DEFAULT_DATASET_SIZE),
                    tx_power_max=tx_power,
                    model_size=_number(doc, "model_size_bits", path, DEFAULT_MODEL_SIZE_BITS, True),
                )
            )
        except ScenarioError as e:
            raise ScenarioError(f"{path}: {e}") from e

    placement = grid_positions(num_edges)
    edges = []
    for i, doc in enumerate(edge_docs):
        path = f"edges[{i}]"
        reject_unknown(doc, EDGE_KEYS, path)
        per_ue = _number(doc, "per_ue_bandwidth_hz", path, DEFAULT_PER_UE_BANDWIDTH_HZ, True)
        total = _number(
            doc,
            "total_bandwidth_hz",
            path,
            default_total_bandwidth(per_ue, num_ues, num_edges),
            True,
        )
        try:
            edges.append(
                EdgeServer(
                    id=_integer(doc, "id", path, i),
                    position=_position(doc, path, placement[i]),
                    total_bandwidth=total,
                    per_ue_bandwidth=per_ue,
                    uplink_rate_to_cloud=_number(
                        doc, "uplink_rate_to_cloud_bps", path, DEFAULT_CLOUD_RATE_BPS, True
                    ),
                    edge_model_size=_number(
                        doc, "edge_model_size_bits", path, DEFAULT_EDGE_MODEL_SIZE_BITS
                    ),
                )
            )
        except ScenarioError as e:
            raise ScenarioError(f"{path}: {e}") from e

    if "carrier_hz" in data:
        carrier_hz = _number(data, "carrier_hz", "", positive=True)
    else:
        carrier_hz = _number(data, "carrier_ghz", "", DEFAULT_CARRIER_GHZ, True) * 1e9
    noise = _power(data["noise_power_w"], "noise_power_w") if "noise_power_w" in data else DEFAULT_NOISE_POWER_W

    return Scenario(
        ues=ues,
        edges=edges,
        noise_power=noise,
        carrier_hz=carrier_hz,
        accuracy=_accuracy(data.get("accuracy", {}), seed),
    )


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Explicit document form of a scenario; loading it gives back an equal Scenario."""
    accuracy = {
        key: getattr(scenario.accuracy, key)
        for key in sorted(ACCURACY_KEYS)
        if getattr(scenario.accuracy, key) is not None
    }
    return {
        "carrier_hz": scenario.carrier_hz,
        "noise_power_w": scenario.noise_power,
        "accuracy": accuracy,
        "ues": [
            {
                "id": ue.id,
                "position": list(ue.position),
                "cpu_freq_max_hz": ue.cpu_freq_max,
                "cycles_per_sample": ue.cycles_per_sample,
                "dataset_size": ue.dataset_size,
                "tx_power_max": {"w": ue.tx_power_max},
                "model_size_bits": ue.model_size,
            }
            for ue in scenario.ues
        ],
        "edges": [
            {
                "id": edge.id,
                "position": list(edge.position),
                "total_bandwidth_hz": edge.total_bandwidth,
                "per_ue_bandwidth_hz": edge.per_ue_bandwidth,
                "uplink_rate_to_cloud_bps": edge.uplink_rate_to_cloud,
                "edge_model_size_bits": edge.edge_model_size,
            }
            for edge in scenario.edges
        ],
    }


def read_json(path: str) -> Any:
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON ({e})") from e


def write_text_atomic(path: str, text: str) -> None:
    """Write `text` to a temporary file next to `path` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".hfl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except Exception:
        os.unlink(tmp_path)
        raise


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario file, filling omitted fields with defaults."""
    scenario = scenario_from_dict(read_json(path))
    logger.info(f"Loaded scenario from {path}: {scenario.num_ues} UEs, {scenario.num_edges} edges")
    return scenario


def save_scenario(scenario: Scenario, path: str) -> None:
    write_text_atomic(path, json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def generate_scenario(
    seed: int,
    num_ues: int,
    num_edges: int,
    epsilon: float = DEFAULT_EPSILON,
) -> Scenario:
    """Seeded random deployment in the default square area.

    UEs are uniform in the square with random cycles per sample and dataset
    sizes; edges sit on the centered grid; zeta and gamma are integers in [1, 10].
    The random stream depends on (seed, num_ues, num_edges) only, so sweeping
    epsilon keeps the deployment fixed.
    """
    if num_ues < 1 or num_edges < 1:
        raise ScenarioError(f"need at least one UE and one edge, got {num_ues} and {num_edges}")
    if seed < 0:
        raise ScenarioError(f"seed must be nonnegative, got {seed}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, num_ues, num_edges]))
    positions = rng.uniform(0.0, AREA_M, size=(num_ues, 2))
    cycles = rng.uniform(*GENERATED_CYCLES_RANGE, size=num_ues)
    low, high = GENERATED_DATASET_RANGE
    sizes = rng.integers(low, high + 1, size=num_ues)
    zeta, gamma = draw_accuracy_constants(rng)

    tx_power = dbm_to_watts(DEFAULT_TX_POWER_DBM)
    ues = [
        Ue(
            id=n,
            position=(float(x), float(y)),
            cpu_freq_max=DEFAULT_CPU_FREQ_HZ,
            cycles_per_sample=float(cycles[n]),
            dataset_size=int(sizes[n]),
            tx_power_max=tx_power,
            model_size=DEFAULT_MODEL_SIZE_BITS,
        )
        for n, (x, y) in enumerate(positions)
    ]
    total_bandwidth = default_total_bandwidth(DEFAULT_PER_UE_BANDWIDTH_HZ, num_ues, num_edges)
    edges = [
        EdgeServer(
            id=m,
            position=position,
            total_bandwidth=total_bandwidth,
            per_ue_bandwidth=DEFAULT_PER_UE_BANDWIDTH_HZ,
            uplink_rate_to_cloud=DEFAULT_CLOUD_RATE_BPS,
            edge_model_size=DEFAULT_EDGE_MODEL_SIZE_BITS,
        )
        for m, position in enumerate(grid_positions(num_edges))
    ]
    return Scenario(
        ues=ues,
        edges=edges,
        noise_power=DEFAULT_NOISE_POWER_W,
        carrier_hz=DEFAULT_CARRIER_GHZ * 1e9,
        accuracy=AccuracyParams(zeta=zeta, gamma=gamma, big_c=DEFAULT_BIG_C, epsilon=epsilon),
    )

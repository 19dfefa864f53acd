#!/usr/bin/env python3
"""
Experiment sweeps: the planning pipeline run over a grid of scenarios and
written as a CSV result table.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import pandas as pd

from hfl_planner.core.config import (
    generate_scenario,
    read_json,
    reject_unknown,
    write_text_atomic,
)
from hfl_planner.core.errors import PlannerError, ScenarioError
from hfl_planner.core.logger import logger
from hfl_planner.planning.association import (
    DEFAULT_ORACLE_LIMIT,
    STRATEGIES,
    AssociationResult,
    associate,
    evaluate_max_latency,
)
from hfl_planner.planning.optimizer import Plan, SolverOptions, solve
from hfl_planner.planning.scenario import Scenario

AXES = ("epsilon", "ues_per_edge", "num_edges")
CSV_COLUMNS = [
    "scenario_id",
    "seed",
    "axis",
    "axis_value",
    "strategy",
    "a_int",
    "b_int",
    "a_real",
    "b_real",
    "R",
    "T",
    "objective",
    "max_latency",
    "converged",
    "iterations",
    "error",
]
FLOAT_FORMAT = "%.12g"

SPEC_KEYS = {"axis", "values", "seeds", "strategies", "solver", "base", "refine_passes"}
SOLVER_KEYS = {"eta", "tol", "max_iters"}
BASE_KEYS = {"num_ues", "num_edges", "epsilon"}


@dataclass(frozen=True)
class SweepSpec:
    """One experiment axis swept over values and seeds, for each strategy."""

    axis: str
    values: Tuple[float, ...]
    seeds: Tuple[int, ...]
    strategies: Tuple[str, ...] = ("proposed",)
    solver: SolverOptions = field(default_factory=SolverOptions)
    num_ues: int = 100
    num_edges: int = 5
    epsilon: float = 0.25
    refine_passes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if self.axis not in AXES:
            raise ScenarioError(f"axis: expected one of {list(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ScenarioError("values: at least one axis value is required")
        if not self.seeds:
            raise ScenarioError("seeds: at least one seed is required")
        if not self.strategies:
            raise ScenarioError("strategies: at least one strategy is required")
        for i, value in enumerate(self.values):
            if not value > 0:
                raise ScenarioError(f"values[{i}]: axis values must be positive, got {value}")
            if self.axis == "epsilon" and not value < 1:
                raise ScenarioError(f"values[{i}]: epsilon must lie in (0, 1), got {value}")
            if self.axis != "epsilon" and value != int(value):
                raise ScenarioError(f"values[{i}]: {self.axis} must be an integer, got {value}")
        for i, seed in enumerate(self.seeds):
            if seed < 0:
                raise ScenarioError(f"seeds[{i}]: seeds must be nonnegative, got {seed}")
        for i, strategy in enumerate(self.strategies):
            if strategy not in STRATEGIES:
                raise ScenarioError(
                    f"strategies[{i}]: unknown strategy {strategy!r}, expected one of {sorted(STRATEGIES)}"
                )
        if self.refine_passes < 0:
            raise ScenarioError(f"refine_passes: must be >= 0, got {self.refine_passes}")


def sweep_spec_from_dict(data: Mapping[str, Any]) -> SweepSpec:
    reject_unknown(data, SPEC_KEYS, "")
    for key in ("axis", "values", "seeds"):
        if key not in data:
            raise ScenarioError(f"{key}: required")
    solver = data.get("solver", {})
    base = data.get("base", {})
    reject_unknown(solver, SOLVER_KEYS, "solver")
    reject_unknown(base, BASE_KEYS, "base")
    try:
        return SweepSpec(
            axis=data["axis"],
            values=tuple(data["values"]),
            seeds=tuple(data["seeds"]),
            strategies=tuple(data.get("strategies", ("proposed",))),
            solver=SolverOptions(**solver),
            refine_passes=data.get("refine_passes", 1),
            **base,
        )
    except TypeError as e:
        raise ScenarioError(f"invalid sweep spec: {e}") from e


def load_sweep_spec(path: str) -> SweepSpec:
    spec = sweep_spec_from_dict(read_json(path))
    logger.info(
        f"Loaded sweep over {spec.axis} with {len(spec.values)} values, {len(spec.seeds)} seeds "
        f"and strategies {', '.join(spec.strategies)}"
    )
    return spec


@dataclass(frozen=True)
class ResultRow:
    """One (axis value, seed, strategy) cell of a sweep."""

    scenario_id: str
    seed: int
    axis: str
    axis_value: float
    strategy: str
    a_int: Optional[int] = None
    b_int: Optional[int] = None
    a_real: float = math.nan
    b_real: float = math.nan
    R: float = math.nan
    T: float = math.nan
    objective: float = math.nan
    max_latency: float = math.nan
    converged: bool = False
    iterations: int = 0
    error: str = ""

    def as_record(self) -> Dict[str, Any]:
        return asdict(self)


def plan_deployment(
    scenario: Scenario,
    strategy: str = "proposed",
    options: Optional[SolverOptions] = None,
    seed: int = 0,
    refine_passes: int = 1,
    a0: Optional[float] = None,
    limit: int = DEFAULT_ORACLE_LIMIT,
) -> Tuple[AssociationResult, Plan]:
    """Associate at a bootstrap a, solve for (a, b), then re-associate and re-solve.

    The bootstrap a defaults to zeta (local accuracy 1/e). Each refine pass
    re-associates at the rounded a of the previous plan.
    """
    a = scenario.accuracy.zeta if a0 is None else a0
    assoc = associate(scenario, strategy, a, seed=seed, limit=limit)
    plan = solve(scenario, assoc.association, options)
    for _ in range(refine_passes):
        assoc = associate(scenario, strategy, plan.a_int, seed=seed, limit=limit)
        plan = solve(scenario, assoc.association, options)
    return assoc, plan


def cell_scenario(spec: SweepSpec, axis_value: float, seed: int) -> Scenario:
    if spec.axis == "epsilon":
        return generate_scenario(seed, spec.num_ues, spec.num_edges, epsilon=axis_value)
    if spec.axis == "ues_per_edge":
        return generate_scenario(
            seed, int(axis_value) * spec.num_edges, spec.num_edges, epsilon=spec.epsilon
        )
    return generate_scenario(seed, spec.num_ues, int(axis_value), epsilon=spec.epsilon)


def scenario_id(axis: str, axis_value: float, seed: int) -> str:
    return f"{axis}={axis_value:g}/seed={seed}"


def run_cell(spec: SweepSpec, axis_value: float, seed: int, strategy: str) -> ResultRow:
    """Run the pipeline for one cell; failures are recorded in the row."""
    ident = dict(
        scenario_id=scenario_id(spec.axis, axis_value, seed),
        seed=seed,
        axis=spec.axis,
        axis_value=axis_value,
        strategy=strategy,
    )
    try:
        scenario = cell_scenario(spec, axis_value, seed)
        assoc, plan = plan_deployment(
            scenario, strategy, spec.solver, seed=seed, refine_passes=spec.refine_passes
        )
        max_latency = evaluate_max_latency(scenario, assoc.association, plan.a_int)
    except (PlannerError, ValueError) as e:
        logger.warning(f"Cell {ident['scenario_id']} ({strategy}) failed: {e}")
        return ResultRow(**ident, error=str(e))

    logger.debug(
        f"Cell {ident['scenario_id']} ({strategy}): a={plan.a_int}, b={plan.b_int}, "
        f"objective={plan.objective:.6g} s"
    )
    return ResultRow(
        **ident,
        a_int=plan.a_int,
        b_int=plan.b_int,
        a_real=plan.a_real,
        b_real=plan.b_real,
        R=plan.rounds,
        T=plan.big_t,
        objective=plan.objective,
        max_latency=max_latency,
        converged=plan.converged,
        iterations=plan.iterations,
    )


def run_sweep(spec: SweepSpec, workers: int = 1) -> pd.DataFrame:
    """Run every (axis value, seed, strategy) cell.

    Cells run in parallel; rows come back in spec order so the table does not
    depend on `workers`.
    """
    cells = [
        (value, seed, strategy)
        for value in spec.values
        for seed in spec.seeds
        for strategy in spec.strategies
    ]
    logger.info(f"Running {len(cells)} sweep cells with {workers} workers")

    with ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(executor.map(lambda cell: run_cell(spec, *cell), cells))

    failed = sum(1 for row in rows if row.error)
    if failed:
        logger.warning(f"{failed} of {len(rows)} sweep cells failed")
    return results_frame(rows)


def results_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    frame = pd.DataFrame([row.as_record() for row in rows], columns=CSV_COLUMNS)
    return frame.astype({"a_int": "Int64", "b_int": "Int64"})


def results_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_results(frame: pd.DataFrame, path: str) -> None:
    """Write the result table to `path` via a temporary file and rename."""
    write_text_atomic(path, results_csv(frame))
    logger.info(f"Wrote {len(frame)} result rows to {path}")

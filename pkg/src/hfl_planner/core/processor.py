#!/usr/bin/env python3
"""Command orchestration for hfl-planner: one function per CLI command."""

import json
from dataclasses import replace
from typing import Any, Callable, Dict, Optional

import numpy as np

from hfl_planner.core.config import (
    generate_scenario,
    load_scenario,
    write_text_atomic,
)
from hfl_planner.core.display import (
    display_association,
    display_check,
    display_plan,
    display_simulation,
    display_sweep_summary,
)
from hfl_planner.core.logger import logger
from hfl_planner.core.sweep import (
    load_sweep_spec,
    plan_deployment,
    results_csv,
    run_sweep,
    write_results,
)
from hfl_planner.planning.accuracy import AccuracyParams
from hfl_planner.planning.association import associate
from hfl_planner.planning.flsim import generate_tasks, run, write_loss_curve
from hfl_planner.planning.optimizer import (
    SolverOptions,
    concavity_check,
    grid_oracle,
    kkt_report,
)
from hfl_planner.planning.scenario import Scenario

SOLVER_FLAGS = ("eta", "tol", "max_iters", "grid_max")
CHECK_GRID = np.linspace(0.1, 100.0, 50)
CHECK_CONSTANTS = range(1, 11)


def solver_options(config: Dict, base: Optional[SolverOptions] = None) -> SolverOptions:
    """Solver options from the command flags; flags left unset keep `base`."""
    base = base or SolverOptions()
    overrides = {key: config[key] for key in SOLVER_FLAGS if config.get(key) is not None}
    return replace(base, **overrides)


def write_json(path: str, payload: Dict) -> None:
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote results to {path}")


def scenario_for(config: Dict) -> Scenario:
    """Load the scenario file, or generate one from the seed when none is given."""
    if config.get("scenario"):
        return load_scenario(config["scenario"])
    logger.info(
        f"Generating scenario with seed {config['seed']}: {config['ues']} UEs, {config['edges']} edges"
    )
    return generate_scenario(config["seed"], config["ues"], config["edges"])


def run_optimize(config: Dict) -> Dict:
    """Associate, solve for (a, b) and compare with the grid oracle."""
    scenario = scenario_for(config)
    options = solver_options(config)
    assoc, plan = plan_deployment(
        scenario, config["strategy"], options, seed=config["seed"], a0=config.get("a")
    )

    grid = None
    if options.grid_max > 0:
        grid_range = range(1, options.grid_max + 1)
        grid = grid_oracle(scenario, assoc.association, grid_range, grid_range)

    display_association(assoc)
    display_plan(plan, grid)

    results = {
        "converged": plan.converged,
        "plan": plan.to_dict(),
        "association": assoc.to_dict(),
    }
    if grid is not None:
        results["grid"] = {"a": grid.a_int, "b": grid.b_int, "objective": grid.objective}
    if config.get("out"):
        write_json(config["out"], results)
    return results


def run_associate(config: Dict) -> Dict:
    scenario = scenario_for(config)
    a = config.get("a") or scenario.accuracy.zeta
    result = associate(scenario, config["strategy"], a, seed=config["seed"])
    display_association(result)

    results = {"converged": True, "a": a, "association": result.to_dict()}
    if config.get("out"):
        write_json(config["out"], results)
    return results


def run_simulate(config: Dict) -> Dict:
    """Plan a deployment, then train synthetic quadratic tasks under that plan."""
    scenario = scenario_for(config)
    assoc, plan = plan_deployment(
        scenario, config["strategy"], solver_options(config), seed=config["seed"]
    )
    a = config.get("a") or plan.a_int
    b = config.get("b") or plan.b_int

    tasks = generate_tasks(
        config["seed"],
        scenario.num_ues,
        config["dim"],
        beta=config["beta"],
        smoothness=config["smoothness"],
        weights=[ue.dataset_size for ue in scenario.ues],
    )
    logger.info(f"Simulating {len(tasks)} UEs (dim {config['dim']}) with a={a}, b={b}")
    report = run(
        tasks,
        assoc.association.edge_indices(scenario),
        int(a),
        int(b),
        epsilon=config["epsilon"],
        max_rounds=config["max_rounds"],
        round_time=plan.big_t,
    )
    display_simulation(report)

    if config.get("out"):
        write_loss_curve(report, config["out"])
    return {**report.summary(), "a": int(a), "b": int(b), "predicted_rounds": plan.rounds}


def run_sweep_command(config: Dict) -> Dict:
    spec = load_sweep_spec(config["spec"])
    options = solver_options(config, spec.solver)
    spec = replace(spec, solver=options)

    frame = run_sweep(spec, workers=config["workers"])
    if config.get("out"):
        write_results(frame, config["out"])
    else:
        print(results_csv(frame), end="")
    if config.get("verbose"):
        display_sweep_summary(frame)

    errors = int((frame["error"] != "").sum())
    return {
        "rows": len(frame),
        "errors": errors,
        "ok": errors == 0,
        "converged": bool(frame["converged"].all()),
    }


def run_check(config: Dict) -> Dict:
    """Concavity audit over zeta, gamma in 1..10, plus KKT residuals for a scenario if given."""
    reports = [
        concavity_check(AccuracyParams(zeta=float(zeta), gamma=float(gamma)), CHECK_GRID, CHECK_GRID)
        for zeta in CHECK_CONSTANTS
        for gamma in CHECK_CONSTANTS
    ]

    kkt = None
    if config.get("scenario"):
        scenario = load_scenario(config["scenario"])
        assoc, plan = plan_deployment(
            scenario, config["strategy"], solver_options(config), seed=config["seed"]
        )
        kkt = kkt_report(scenario, assoc.association, plan)

    display_check(reports, kkt)
    ok = all(report.ok for report in reports)
    results = {"ok": ok, "converged": True, "violating_pairs": sum(not r.ok for r in reports)}
    if kkt is not None:
        results["kkt"] = kkt
    if config.get("out"):
        write_json(config["out"], results)
    return results


COMMANDS: Dict[str, Callable[[Dict], Dict]] = {
    "optimize": run_optimize,
    "associate": run_associate,
    "simulate": run_simulate,
    "sweep": run_sweep_command,
    "check": run_check,
}


def process_command(config: Dict[str, Any]) -> Dict:
    """Run the command named in the configuration."""
    command = config["command"]
    logger.info(f"Starting hfl-planner {command}")
    logger.debug(f"Configuration: {config}")
    try:
        results = COMMANDS[command](config)
    except Exception as e:
        logger.error(f"Error running {command}: {e}", exc_info=True)
        raise
    logger.info(f"hfl-planner {command} completed")
    return results

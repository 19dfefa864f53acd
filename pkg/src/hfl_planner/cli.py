#!/usr/bin/env python3
"""
Main application runner for hfl-planner.
Supports CLI execution.
"""

import argparse
import sys
from typing import Dict, List, Optional

from hfl_planner.core.logger import logger, setup_logging
from hfl_planner.core.processor import process_command
from hfl_planner.planning.association import STRATEGIES

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def common_parser() -> argparse.ArgumentParser:
    """Flags shared by every command."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed for generated scenarios, tasks and random association (default: 0)",
    )
    parser.add_argument(
        "--out",
        type=str,
        help="Write results to this file (JSON, or CSV for sweep and simulate)",
    )
    parser.add_argument(
        "--eta", type=float, help="Dual subgradient step size (default: 0.01)"
    )
    parser.add_argument(
        "--tol", type=float, help="Relative convergence tolerance on (a, b) (default: 1e-6)"
    )
    parser.add_argument(
        "--max-iters",
        type=int,
        help="Maximum dual iterations (default: 10000)",
    )
    parser.add_argument(
        "--grid-max",
        type=int,
        help="Upper bound of the integer grid oracle over a and b, 0 disables it (default: 200)",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=4,
        help="Number of parallel workers for sweep cells (default: 4)",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Show detailed summaries",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging level (default: INFO)",
    )
    return parser


def add_scenario_arguments(parser: argparse.ArgumentParser, required: bool = False) -> None:
    parser.add_argument(
        "scenario",
        nargs=None if required else "?",
        help="Scenario JSON file" + ("" if required else " (generated from --seed when omitted)"),
    )
    parser.add_argument(
        "--ues", type=int, default=100, help="UEs in a generated scenario (default: 100)"
    )
    parser.add_argument(
        "--edges", type=int, default=5, help="Edges in a generated scenario (default: 5)"
    )
    parser.add_argument(
        "--strategy",
        choices=sorted(STRATEGIES),
        default="proposed",
        help="UE-to-edge association strategy (default: proposed)",
    )


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Minimum-latency planning for hierarchical federated learning"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    common = common_parser()

    optimize = commands.add_parser(
        "optimize", parents=[common], help="Solve for the latency-optimal a, b and association"
    )
    add_scenario_arguments(optimize)
    optimize.add_argument(
        "--a", type=float, help="Local iterations used for the first association (default: zeta)"
    )

    associate = commands.add_parser(
        "associate", parents=[common], help="Associate UEs to edges for a fixed a"
    )
    add_scenario_arguments(associate)
    associate.add_argument("--a", type=float, help="Local iterations per edge round (default: zeta)")

    simulate = commands.add_parser(
        "simulate", parents=[common], help="Train synthetic quadratic tasks under a solved plan"
    )
    add_scenario_arguments(simulate)
    simulate.add_argument("--a", type=int, help="Override the planned local iterations")
    simulate.add_argument("--b", type=int, help="Override the planned edge iterations")
    simulate.add_argument("--dim", type=int, default=10, help="Model dimension (default: 10)")
    simulate.add_argument(
        "--epsilon", type=float, default=0.01, help="Target relative gap (default: 0.01)"
    )
    simulate.add_argument(
        "--max-rounds", type=int, default=1000, help="Cap on cloud rounds (default: 1000)"
    )
    simulate.add_argument(
        "--beta", type=float, default=1.0, help="Strong convexity of the tasks (default: 1.0)"
    )
    simulate.add_argument(
        "--smoothness", type=float, default=10.0, help="Smoothness L of the tasks (default: 10.0)"
    )

    sweep = commands.add_parser(
        "sweep", parents=[common], help="Run an experiment sweep and write a CSV table"
    )
    sweep.add_argument("spec", help="Sweep spec JSON file")

    check = commands.add_parser(
        "check", parents=[common], help="Concavity audit and, for a scenario, KKT residuals"
    )
    check.add_argument("scenario", nargs="?", help="Scenario JSON file for the KKT report")
    check.add_argument(
        "--strategy",
        choices=sorted(STRATEGIES),
        default="proposed",
        help="Association strategy for the KKT report (default: proposed)",
    )

    return parser.parse_args(args)


def exit_code(results: Dict) -> int:
    if not results.get("ok", True):
        return EXIT_ERROR
    if not results.get("converged", True):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(args: Optional[List[str]] = None) -> int:
    """Main entry point for hfl-planner."""

    # Parse arguments
    parsed_args = parse_args(args)

    # Convert namespace to dict for easier handling
    config = vars(parsed_args)

    # Initialize logging
    setup_logging(log_level=config["log_level"])

    try:
        results = process_command(config)
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"{e}", exc_info=True)
        return EXIT_ERROR

    code = exit_code(results)
    if code == EXIT_NOT_CONVERGED:
        logger.warning("Finished without convergence")
    return code


if __name__ == "__main__":
    sys.exit(main())

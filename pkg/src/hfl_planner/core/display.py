#!/usr/bin/env python3
"""
Display functions for hfl-planner results to stdout.
"""

from typing import Dict, List, Optional

import pandas as pd

from hfl_planner.core.logger import logger
from hfl_planner.planning.association import AssociationResult
from hfl_planner.planning.flsim import SimulationReport
from hfl_planner.planning.optimizer import ConcavityReport, Plan


def display_association(result: AssociationResult) -> None:
    """Display the UEs served by each edge and the max round delay."""
    print(f"\nAssociation ({result.strategy}):\n")
    loads = result.association.loads()
    for edge_id in sorted(loads):
        members = result.association.members(edge_id)
        print(f"  Edge {edge_id}: {loads[edge_id]} UEs -> {', '.join(str(n) for n in members)}")
    print(f"\n  Max per-UE round delay: {result.max_latency:.6g} s")
    if result.conflict_resolutions:
        print(f"  Conflicts resolved: {result.conflict_resolutions}")


def display_plan(plan: Plan, grid: Optional[Plan] = None) -> None:
    """Display a solved plan, optionally next to the grid oracle."""
    logger.debug(f"Displaying plan a={plan.a_int}, b={plan.b_int}")
    print("\n=== Operating plan ===\n")
    print(f"Local iterations a:   {plan.a_int}   (relaxed {plan.a_real:.6g})")
    print(f"Edge iterations b:    {plan.b_int}   (relaxed {plan.b_real:.6g})")
    print(f"Cloud rounds R:       {plan.rounds:.6g}")
    print(f"Cloud round delay T:  {plan.big_t:.6g} s")
    print(f"Total time R*T:       {plan.objective:.6g} s")
    print(f"Local accuracy:       {plan.local_accuracy:.4g}")
    print(f"Edge accuracy:        {plan.edge_accuracy:.4g}")
    status = "converged" if plan.converged else "NOT converged"
    print(f"Solver:               {status} after {plan.iterations} iterations")

    if grid is not None:
        gap = plan.objective / grid.objective - 1.0
        print(
            f"\nGrid oracle: a={grid.a_int}, b={grid.b_int}, total {grid.objective:.6g} s "
            f"(plan is {100 * gap:+.3f}%)"
        )
    print("-" * 80)


def display_simulation(report: SimulationReport) -> None:
    print("\n=== Training simulation ===\n")
    for key, value in report.summary().items():
        print(f"  {key}: {value}")
    print()
    print(report.curve.tail(5).to_string(index=False))


def display_sweep_summary(frame: pd.DataFrame) -> None:
    """Mean objective and latency per (axis value, strategy)."""
    if frame.empty:
        logger.info("No sweep rows to display")
        return
    summary = (
        frame.groupby(["axis_value", "strategy"], sort=True)[["objective", "max_latency"]]
        .mean()
        .reset_index()
    )
    print(f"\nSweep over {frame['axis'].iloc[0]} ({len(frame)} cells):\n")
    print(summary.to_string(index=False))
    failed = int((frame["error"] != "").sum())
    if failed:
        print(f"\n{failed} cell(s) failed, see the error column")


def display_check(reports: List[ConcavityReport], kkt: Optional[Dict[str, float]] = None) -> None:
    print("\n=== Concavity check ===\n")
    bad = [r for r in reports if not r.ok]
    total = sum(r.points for r in reports)
    print(f"  {len(reports)} (zeta, gamma) pairs, {total} grid points")
    print(f"  Pairs with violations: {len(bad)}")
    for report in bad:
        print(
            f"    zeta={report.zeta:g}, gamma={report.gamma:g}: "
            f"{len(report.f_aa_violations)} f_aa, {len(report.det_violations)} determinant, "
            f"{len(report.fd_mismatches)} finite-difference"
        )

    if kkt is not None:
        print("\n=== KKT residuals (relative) ===\n")
        for name, value in kkt.items():
            print(f"  {name}: {value:.3e}")

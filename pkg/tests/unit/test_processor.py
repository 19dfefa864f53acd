#!/usr/bin/env python3
"""
Unit tests for processor.py
"""

import json

import pandas as pd
import pytest
from unittest.mock import MagicMock, patch

from hfl_planner.core.processor import (
    COMMANDS,
    process_command,
    run_associate,
    run_check,
    run_optimize,
    run_simulate,
    run_sweep_command,
    scenario_for,
    solver_options,
)
from hfl_planner.core.sweep import SweepSpec
from hfl_planner.planning.optimizer import ConcavityReport, SolverOptions


def base_config(**overrides):
    config = {
        "command": "optimize",
        "scenario": None,
        "seed": 0,
        "ues": 20,
        "edges": 2,
        "strategy": "proposed",
        "eta": None,
        "tol": None,
        "max_iters": None,
        "grid_max": None,
        "workers": 2,
        "out": None,
        "verbose": False,
        "a": None,
    }
    config.update(overrides)
    return config


def mock_plan(converged=True):
    plan = MagicMock()
    plan.converged = converged
    plan.a_int = 3
    plan.b_int = 4
    plan.rounds = 7.0
    plan.big_t = 0.5
    plan.to_dict.return_value = {"a_int": 3, "b_int": 4}
    return plan


def mock_assoc():
    assoc = MagicMock()
    assoc.to_dict.return_value = {"strategy": "proposed"}
    return assoc


class TestProcessorFunctions:
    """Tests for individual processor functions."""

    def test_solver_options_defaults(self):
        """Test that unset flags keep the default options."""
        assert solver_options(base_config()) == SolverOptions()

    def test_solver_options_overrides(self):
        """Test that set flags replace the base options."""
        base = SolverOptions(eta=0.5, max_iters=10)
        options = solver_options(base_config(tol=1e-3, grid_max=0), base)
        assert options.eta == 0.5
        assert options.max_iters == 10
        assert options.tol == 1e-3
        assert options.grid_max == 0

    @patch("hfl_planner.core.processor.load_scenario")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_scenario_for_generates(self, mock_generate, mock_load):
        """Test that a seeded scenario is generated without a file."""
        scenario_for(base_config(seed=5))

        mock_generate.assert_called_once_with(5, 20, 2)
        mock_load.assert_not_called()

    @patch("hfl_planner.core.processor.load_scenario")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_scenario_for_loads(self, mock_generate, mock_load):
        """Test that a scenario file takes precedence."""
        scenario_for(base_config(scenario="s.json"))

        mock_load.assert_called_once_with("s.json")
        mock_generate.assert_not_called()

    @patch("hfl_planner.core.processor.display_plan")
    @patch("hfl_planner.core.processor.display_association")
    @patch("hfl_planner.core.processor.grid_oracle")
    @patch("hfl_planner.core.processor.plan_deployment")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_run_optimize(
        self, mock_generate, mock_plan_deployment, mock_grid, mock_show_assoc, mock_show_plan, tmp_path
    ):
        """Test run_optimize with the grid comparison and a JSON output file."""
        plan, assoc = mock_plan(), mock_assoc()
        grid = MagicMock(a_int=3, b_int=5, objective=1.25)
        mock_plan_deployment.return_value = (assoc, plan)
        mock_grid.return_value = grid
        out = tmp_path / "plan.json"

        results = run_optimize(base_config(grid_max=10, out=str(out)))

        assert results["converged"] is True
        assert results["grid"] == {"a": 3, "b": 5, "objective": 1.25}
        assert mock_grid.call_args[0][2] == range(1, 11)
        mock_show_plan.assert_called_once_with(plan, grid)
        mock_show_assoc.assert_called_once_with(assoc)
        assert json.loads(out.read_text())["plan"] == {"a_int": 3, "b_int": 4}

    @patch("hfl_planner.core.processor.display_plan")
    @patch("hfl_planner.core.processor.display_association")
    @patch("hfl_planner.core.processor.grid_oracle")
    @patch("hfl_planner.core.processor.plan_deployment")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_run_optimize_without_grid(
        self, mock_generate, mock_plan_deployment, mock_grid, mock_show_assoc, mock_show_plan
    ):
        """Test that grid_max 0 skips the oracle."""
        mock_plan_deployment.return_value = (mock_assoc(), mock_plan(converged=False))

        results = run_optimize(base_config(grid_max=0, a=2.0))

        assert results["converged"] is False
        assert "grid" not in results
        mock_grid.assert_not_called()
        assert mock_plan_deployment.call_args[1]["a0"] == 2.0

    @patch("hfl_planner.core.processor.display_association")
    @patch("hfl_planner.core.processor.associate")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_run_associate_defaults_a_to_zeta(self, mock_generate, mock_associate, mock_display):
        """Test that the association is built at a = zeta when no a is given."""
        mock_generate.return_value.accuracy.zeta = 4.0
        mock_associate.return_value = mock_assoc()

        results = run_associate(base_config(strategy="greedy"))

        assert results["a"] == 4.0
        mock_associate.assert_called_once_with(mock_generate.return_value, "greedy", 4.0, seed=0)

    @patch("hfl_planner.core.processor.write_loss_curve")
    @patch("hfl_planner.core.processor.display_simulation")
    @patch("hfl_planner.core.processor.run")
    @patch("hfl_planner.core.processor.generate_tasks")
    @patch("hfl_planner.core.processor.plan_deployment")
    @patch("hfl_planner.core.processor.generate_scenario")
    def test_run_simulate(
        self, mock_generate, mock_plan_deployment, mock_tasks, mock_run, mock_display, mock_write
    ):
        """Test that the simulation uses the plan's counts unless overridden."""
        scenario = mock_generate.return_value
        scenario.num_ues = 2
        scenario.ues = [MagicMock(dataset_size=300), MagicMock(dataset_size=500)]
        assoc = mock_assoc()
        assoc.association.edge_indices.return_value = [0, 1]
        mock_plan_deployment.return_value = (assoc, mock_plan())
        mock_tasks.return_value = ["task0", "task1"]
        mock_run.return_value.summary.return_value = {"rounds": 6, "converged": True}

        config = base_config(
            command="simulate", b=9, dim=3, epsilon=0.05, max_rounds=50, beta=1.0, smoothness=10.0, out="c.csv"
        )
        results = run_simulate(config)

        assert results == {"rounds": 6, "converged": True, "a": 3, "b": 9, "predicted_rounds": 7.0}
        assert mock_tasks.call_args[1]["weights"] == [300, 500]
        mock_run.assert_called_once_with(
            ["task0", "task1"], [0, 1], 3, 9, epsilon=0.05, max_rounds=50, round_time=0.5
        )
        mock_write.assert_called_once_with(mock_run.return_value, "c.csv")

    @patch("hfl_planner.core.processor.display_sweep_summary")
    @patch("hfl_planner.core.processor.write_results")
    @patch("hfl_planner.core.processor.run_sweep")
    @patch("hfl_planner.core.processor.load_sweep_spec")
    def test_run_sweep_command(self, mock_load, mock_run_sweep, mock_write, mock_summary):
        """Test the sweep summary counts and CLI solver overrides."""
        mock_load.return_value = SweepSpec(
            axis="epsilon", values=(0.1,), seeds=(0,), solver=SolverOptions(eta=0.02)
        )
        mock_run_sweep.return_value = pd.DataFrame(
            {"error": ["", "infeasible"], "converged": [True, False]}
        )

        results = run_sweep_command(
            base_config(command="sweep", spec="sweep.json", max_iters=50, out="r.csv", verbose=True)
        )

        assert results == {"rows": 2, "errors": 1, "ok": False, "converged": False}
        spec = mock_run_sweep.call_args[0][0]
        assert spec.solver == SolverOptions(eta=0.02, max_iters=50)
        assert mock_run_sweep.call_args[1] == {"workers": 2}
        mock_write.assert_called_once_with(mock_run_sweep.return_value, "r.csv")
        mock_summary.assert_called_once()

    @patch("hfl_planner.core.processor.display_sweep_summary")
    @patch("hfl_planner.core.processor.results_csv")
    @patch("hfl_planner.core.processor.run_sweep")
    @patch("hfl_planner.core.processor.load_sweep_spec")
    @patch("builtins.print")
    def test_run_sweep_to_stdout(self, mock_print, mock_load, mock_run_sweep, mock_csv, mock_summary):
        """Test that the table goes to stdout without --out."""
        mock_load.return_value = SweepSpec(axis="num_edges", values=(2,), seeds=(0,))
        mock_run_sweep.return_value = pd.DataFrame({"error": [""], "converged": [True]})
        mock_csv.return_value = "header\nrow\n"

        results = run_sweep_command(base_config(command="sweep", spec="sweep.json"))

        assert results["ok"] is True
        mock_print.assert_called_once_with("header\nrow\n", end="")
        mock_summary.assert_not_called()

    @patch("hfl_planner.core.processor.display_check")
    @patch("hfl_planner.core.processor.concavity_check")
    def test_run_check(self, mock_concavity, mock_display):
        """Test the audit over all 100 (zeta, gamma) pairs."""
        mock_concavity.side_effect = lambda params, a_grid, b_grid: ConcavityReport(
            zeta=params.zeta,
            gamma=params.gamma,
            det_violations=[(1.0, 1.0)] if params.zeta == params.gamma == 1.0 else [],
        )

        results = run_check(base_config(command="check"))

        assert mock_concavity.call_count == 100
        assert results == {"ok": False, "converged": True, "violating_pairs": 1}
        assert mock_display.call_args[0][1] is None

    @patch("hfl_planner.core.processor.display_check")
    @patch("hfl_planner.core.processor.kkt_report")
    @patch("hfl_planner.core.processor.plan_deployment")
    @patch("hfl_planner.core.processor.load_scenario")
    @patch("hfl_planner.core.processor.concavity_check")
    def test_run_check_with_scenario(
        self, mock_concavity, mock_load, mock_plan_deployment, mock_kkt, mock_display
    ):
        """Test that a scenario adds the KKT residuals."""
        mock_concavity.side_effect = lambda params, a_grid, b_grid: ConcavityReport(params.zeta, params.gamma)
        mock_plan_deployment.return_value = (mock_assoc(), mock_plan())
        mock_kkt.return_value = {"a": 1e-8}

        results = run_check(base_config(command="check", scenario="s.json"))

        assert results["ok"] is True
        assert results["kkt"] == {"a": 1e-8}
        mock_load.assert_called_once_with("s.json")


class TestProcessCommand:
    """Tests for command dispatch."""

    def test_commands(self):
        """Test that every CLI command has a handler."""
        assert set(COMMANDS) == {"optimize", "associate", "simulate", "sweep", "check"}

    def test_dispatch(self):
        """Test that process_command calls the named handler."""
        handler = MagicMock(return_value={"converged": True})
        with patch.dict(COMMANDS, {"optimize": handler}):
            results = process_command(base_config())

        assert results == {"converged": True}
        handler.assert_called_once()

    def test_error_is_reraised(self):
        """Test that handler errors propagate after being logged."""
        handler = MagicMock(side_effect=ValueError("bad scenario"))
        with patch.dict(COMMANDS, {"check": handler}):
            with pytest.raises(ValueError, match="bad scenario"):
                process_command(base_config(command="check"))

#!/usr/bin/env python3
"""
Unit tests for cli.py
"""

import pytest
from unittest.mock import patch

from hfl_planner.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, exit_code, main, parse_args
from hfl_planner.core.errors import ScenarioError


class TestApp:
    """Tests for the command line entry point."""

    def test_parse_args_defaults(self):
        """Test parse_args with default values."""
        args = parse_args(["optimize"])

        assert args.command == "optimize"
        assert args.scenario is None
        assert args.seed == 0
        assert args.ues == 100
        assert args.edges == 5
        assert args.strategy == "proposed"
        assert args.eta is None
        assert args.tol is None
        assert args.max_iters is None
        assert args.grid_max is None
        assert args.workers == 4
        assert args.out is None
        assert args.verbose is False
        assert args.log_level == "INFO"

    def test_parse_args_custom_values(self):
        """Test parse_args with custom values."""
        args = parse_args(
            [
                "simulate",
                "scenario.json",
                "--seed",
                "7",
                "--strategy",
                "greedy",
                "--eta",
                "0.05",
                "--max-iters",
                "300",
                "--dim",
                "4",
                "--epsilon",
                "0.05",
                "--b",
                "3",
                "--out",
                "curve.csv",
                "-v",
                "--log-level",
                "DEBUG",
            ]
        )

        assert args.scenario == "scenario.json"
        assert args.seed == 7
        assert args.strategy == "greedy"
        assert args.eta == 0.05
        assert args.max_iters == 300
        assert args.dim == 4
        assert args.epsilon == 0.05
        assert args.b == 3
        assert args.a is None
        assert args.out == "curve.csv"
        assert args.verbose is True
        assert args.log_level == "DEBUG"

    def test_parse_args_sweep_needs_spec(self):
        """Test that the sweep command requires a spec file."""
        with pytest.raises(SystemExit):
            parse_args(["sweep"])

    def test_parse_args_unknown_strategy(self):
        """Test that strategies are limited to the registry."""
        with pytest.raises(SystemExit):
            parse_args(["associate", "--strategy", "nearest"])

    @pytest.mark.parametrize(
        "results,code",
        [
            ({"converged": True}, EXIT_OK),
            ({"converged": False}, EXIT_NOT_CONVERGED),
            ({"ok": False, "converged": True}, EXIT_ERROR),
            ({"rows": 3}, EXIT_OK),
        ],
    )
    def test_exit_code(self, results, code):
        """Test the mapping from results to exit codes."""
        assert exit_code(results) == code

    @patch("hfl_planner.cli.process_command")
    @patch("hfl_planner.cli.setup_logging")
    def test_main_success(self, mock_setup_logging, mock_process_command):
        """Test main function successful execution."""
        mock_process_command.return_value = {"converged": True}

        result = main(["optimize", "--ues", "20", "--edges", "2", "--verbose"])

        assert result == 0
        mock_setup_logging.assert_called_once_with(log_level="INFO")
        config = mock_process_command.call_args[0][0]
        assert config["command"] == "optimize"
        assert config["ues"] == 20
        assert config["verbose"] is True

    @patch("hfl_planner.cli.process_command")
    @patch("hfl_planner.cli.setup_logging")
    def test_main_not_converged(self, mock_setup_logging, mock_process_command):
        """Test that an unconverged solve exits with 2."""
        mock_process_command.return_value = {"converged": False}

        assert main(["optimize"]) == 2

    @patch("hfl_planner.cli.process_command")
    @patch("hfl_planner.cli.setup_logging")
    def test_main_invalid_input(self, mock_setup_logging, mock_process_command):
        """Test that a scenario error exits with 1."""
        mock_process_command.side_effect = ScenarioError("ues[0].position: required")

        assert main(["optimize", "bad.json"]) == 1

    @patch("hfl_planner.cli.process_command")
    @patch("hfl_planner.cli.setup_logging")
    def test_main_exception(self, mock_setup_logging, mock_process_command):
        """Test main function with exception."""
        mock_process_command.side_effect = Exception("Test error")

        result = main(["check"])

        assert result == 1
        mock_setup_logging.assert_called_once()
        mock_process_command.assert_called_once()

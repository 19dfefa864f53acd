#!/usr/bin/env python3
"""
Exception types raised by the planner.

Validation problems subclass ValueError so callers can treat them as bad input.
"""


class PlannerError(Exception):
    """Base class for planner errors."""


class ScenarioError(PlannerError, ValueError):
    """Invalid or infeasible scenario description."""


class ConstraintViolation(ScenarioError):
    """A resource setting lies outside its allowed range."""


class InsufficientWorkError(PlannerError, ValueError):
    """Local/edge iteration counts too small for the cloud-round bound to be finite."""


class SearchSpaceError(PlannerError, ValueError):
    """Search range empty or larger than the configured limit."""


class DualOvershootError(PlannerError, RuntimeError):
    """The multipliers admit no positive stationary edge-iteration count."""

#!/usr/bin/env python3
"""
Iteration-count model for hierarchical federated learning.

Links the local accuracy theta, the edge accuracy mu and the global accuracy
epsilon to the local iteration count a, the edge iteration count b and the
number of cloud rounds R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from hfl_planner.core.errors import InsufficientWorkError, ScenarioError

DENOMINATOR_FLOOR = 1e-300
GAMMA_REL_TOL = 1e-9


@dataclass(frozen=True)
class AccuracyParams:
    """Constants of the iteration-count model.

    Attributes:
        zeta: Local-iteration constant (loss-function dependent)
        gamma: Edge-iteration constant
        big_c: Constant of the cloud-round bound
        epsilon: Target global accuracy, in (0, 1)
        smoothness_l: Optional smoothness constant L
        strong_convexity_beta: Optional strong-convexity constant beta
        delta: Optional constant delta; with L and beta it fixes gamma = 2L^2/(beta^2 delta)
    """

    zeta: float
    gamma: float
    big_c: float = 1.0
    epsilon: float = 0.25
    smoothness_l: Optional[float] = None
    strong_convexity_beta: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        for name in ("zeta", "gamma", "big_c"):
            value = getattr(self, name)
            if not value > 0:
                raise ScenarioError(f"accuracy.{name} must be positive, got {value}")
        if not 0 < self.epsilon < 1:
            raise ScenarioError(
                f"accuracy.epsilon must lie in (0, 1), got {self.epsilon}"
            )
        for name in ("smoothness_l", "strong_convexity_beta", "delta"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ScenarioError(f"accuracy.{name} must be positive, got {value}")

        if None not in (self.smoothness_l, self.strong_convexity_beta, self.delta):
            expected = implied_gamma(
                self.smoothness_l, self.strong_convexity_beta, self.delta
            )
            if abs(self.gamma - expected) > GAMMA_REL_TOL * expected:
                raise ScenarioError(
                    f"accuracy.gamma={self.gamma} disagrees with 2L^2/(beta^2 delta)={expected}"
                )

    @classmethod
    def from_smoothness(
        cls,
        zeta: float,
        smoothness_l: float,
        strong_convexity_beta: float,
        delta: float,
        big_c: float = 1.0,
        epsilon: float = 0.25,
    ) -> "AccuracyParams":
        """Build parameters whose gamma is derived from L, beta and delta."""
        return cls(
            zeta=zeta,
            gamma=implied_gamma(smoothness_l, strong_convexity_beta, delta),
            big_c=big_c,
            epsilon=epsilon,
            smoothness_l=smoothness_l,
            strong_convexity_beta=strong_convexity_beta,
            delta=delta,
        )


def implied_gamma(smoothness_l: float, strong_convexity_beta: float, delta: float) -> float:
    return 2.0 * smoothness_l**2 / (strong_convexity_beta**2 * delta)


def local_iters(theta: float, zeta: float) -> float:
    """Local iterations needed to reach local accuracy theta: a = zeta * ln(1/theta)."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    return zeta * math.log(1.0 / theta)


def theta_of(a: float, zeta: float) -> float:
    """Local accuracy reached after a local iterations (inverse of local_iters)."""
    if a < 0:
        raise ValueError(f"a must be nonnegative, got {a}")
    return math.exp(-a / zeta)


def edge_iters(mu: float, theta: float, gamma: float) -> float:
    """Edge iterations needed to reach edge accuracy mu given local accuracy theta."""
    if not 0 < mu <= 1:
        raise ValueError(f"mu must lie in (0, 1], got {mu}")
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    return gamma * math.log(1.0 / mu) / (1.0 - theta)


def mu_of(b: float, theta: float, gamma: float) -> float:
    """Edge accuracy reached after b edge iterations (inverse of edge_iters)."""
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    return math.exp(-(b / gamma) * (1.0 - theta))


def cloud_rounds(a, b, params: AccuracyParams, epsilon: Optional[float] = None):
    """Number of cloud rounds R(a, b) needed to reach the global accuracy.

    Accepts scalars or numpy arrays for a and b (broadcast together).

    Args:
        a: Local iterations per edge round
        b: Edge rounds per cloud round
        params: Accuracy model constants
        epsilon: Override of params.epsilon; 1 is accepted and yields zero rounds

    Returns:
        R = C ln(1/eps) / (1 - exp(-(b/gamma)(1 - exp(-a/zeta)))), as float or array

    Raises:
        InsufficientWorkError: If the denominator underflows below 1e-300
    """
    eps = params.epsilon if epsilon is None else epsilon
    if not 0 < eps <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")

    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise ValueError("a and b must be positive")

    local_progress = -np.expm1(-a_arr / params.zeta)
    denominator = -np.expm1(-(b_arr / params.gamma) * local_progress)
    if np.any(denominator < DENOMINATOR_FLOOR):
        raise InsufficientWorkError(
            "insufficient local/edge work: cloud-round bound is not finite"
        )

    rounds = params.big_c * math.log(1.0 / eps) / denominator
    if np.ndim(rounds) == 0:
        return float(rounds)
    return rounds


def global_accuracy_gap(loss_now: float, loss_init: float, loss_opt: float) -> float:
    """Relative optimality gap (F(w_t) - F*) / (F(w_0) - F*)."""
    if loss_init <= loss_opt:
        raise ValueError(
            f"initial loss {loss_init} must exceed the optimal loss {loss_opt}"
        )
    return (loss_now - loss_opt) / (loss_init - loss_opt)


def derived_accuracies(a: float, b: float, params: AccuracyParams) -> Tuple[float, float]:
    """Local and edge accuracies (theta, mu) implied by an (a, b) pair."""
    theta = theta_of(a, params.zeta)
    return theta, mu_of(b, theta, params.gamma)

#!/usr/bin/env python3
"""
Hierarchical federated training loop on synthetic strongly convex quadratics.

UEs run full-gradient descent on F_n(w) = 1/2 (w - c_n)^T A_n (w - c_n); edges
average their UEs' models every `a` local steps and the cloud averages the
edge models every `b` edge rounds. The exact optimum is known in closed form,
so the relative optimality gap of the global model can be tracked exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hfl_planner.core.config import write_text_atomic
from hfl_planner.core.logger import logger
from hfl_planner.planning.accuracy import global_accuracy_gap

MAX_DIM = 50
CURVE_COLUMNS = ["round", "simulated_time_s", "global_loss", "gap"]


@dataclass(frozen=True, eq=False)
class QuadraticTask:
    """Local loss of one UE: curvature A_n (SPD), center c_n and weight D_n."""

    curvature: np.ndarray
    center: np.ndarray
    weight: float

    def __post_init__(self):
        curvature = np.atleast_2d(np.asarray(self.curvature, dtype=float))
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "curvature", curvature)
        object.__setattr__(self, "center", center)

        dim = center.shape[0]
        if center.ndim != 1 or curvature.shape != (dim, dim):
            raise ValueError(
                f"curvature of shape {curvature.shape} does not match center of shape {center.shape}"
            )
        if dim > MAX_DIM:
            raise ValueError(f"task dimension {dim} exceeds {MAX_DIM}")
        if not np.allclose(curvature, curvature.T, rtol=1e-12, atol=1e-12):
            raise ValueError("curvature must be symmetric")
        if np.linalg.eigvalsh(curvature)[0] <= 0:
            raise ValueError("curvature must be positive definite")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.curvature)


def _check_dim(task: QuadraticTask, omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != task.center.shape:
        raise ValueError(f"model of shape {omega.shape} does not match task dimension {task.dim}")
    return omega


def local_loss(task: QuadraticTask, omega) -> float:
    """F_n(w) = 1/2 (w - c_n)^T A_n (w - c_n)."""
    diff = _check_dim(task, omega) - task.center
    return 0.5 * float(diff @ task.curvature @ diff)


def gradient(task: QuadraticTask, omega) -> np.ndarray:
    return task.curvature @ (_check_dim(task, omega) - task.center)


@dataclass(frozen=True, eq=False)
class TaskSet:
    """Stacked view of all UE tasks with the cached global optimum."""

    tasks: Tuple[QuadraticTask, ...]

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ValueError("at least one task is required")
        dims = {task.dim for task in self.tasks}
        if len(dims) != 1:
            raise ValueError(f"tasks have inconsistent dimensions {sorted(dims)}")

    @cached_property
    def curvatures(self) -> np.ndarray:
        return np.stack([task.curvature for task in self.tasks])

    @cached_property
    def centers(self) -> np.ndarray:
        return np.stack([task.center for task in self.tasks])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([task.weight for task in self.tasks], dtype=float)

    @cached_property
    def smoothness(self) -> float:
        return float(max(task.eigenvalues[-1] for task in self.tasks))

    @cached_property
    def optimum(self) -> np.ndarray:
        """w* = (sum D_n A_n)^-1 sum D_n A_n c_n."""
        total = np.einsum("n,nij->ij", self.weights, self.curvatures)
        rhs = np.einsum("n,nij,nj->i", self.weights, self.curvatures, self.centers)
        try:
            return np.linalg.solve(total, rhs)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"singular aggregate curvature: {e}") from e

    @cached_property
    def optimal_loss(self) -> float:
        return self.loss(self.optimum)

    def loss(self, omega) -> float:
        diff = np.asarray(omega, dtype=float)[None, :] - self.centers
        per_ue = 0.5 * np.einsum("ni,nij,nj->n", diff, self.curvatures, diff)
        return float(per_ue @ self.weights / self.weights.sum())


def global_loss(tasks: Sequence[QuadraticTask], omega) -> float:
    """F(w) = sum D_n F_n(w) / sum D_n."""
    return TaskSet(tasks).loss(omega)


def global_optimum(tasks: Sequence[QuadraticTask]) -> np.ndarray:
    return TaskSet(tasks).optimum


def _check_step(step_size: float, smoothness: float) -> None:
    if not 0 < step_size < 2.0 / smoothness:
        raise ValueError(
            f"step size {step_size} outside (0, 2/L) with L = {smoothness:.6g}"
        )


def local_gd(task: QuadraticTask, omega, steps: int, step_size: float) -> np.ndarray:
    """Run `steps` full-gradient descent steps on the task's local loss."""
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    _check_step(step_size, float(task.eigenvalues[-1]))
    omega = _check_dim(task, omega).copy()
    for _ in range(steps):
        omega = omega - step_size * (task.curvature @ (omega - task.center))
    return omega


def _weighted_mean(models, weights) -> np.ndarray:
    models = np.asarray(models, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if models.shape[0] == 0:
        raise ValueError("cannot aggregate an empty set of models")
    if weights.shape != (models.shape[0],) or np.any(weights <= 0):
        raise ValueError("aggregation needs one positive weight per model")
    return weights @ models / weights.sum()


def edge_aggregate(models, weights) -> np.ndarray:
    """D-weighted mean of the models of one edge's UEs."""
    return _weighted_mean(models, weights)


def cloud_aggregate(edge_models, edge_weights) -> np.ndarray:
    """D-weighted mean of edge models; each edge weighs the data of all its UEs."""
    return _weighted_mean(edge_models, edge_weights)


@dataclass
class TrainState:
    global_model: np.ndarray
    ue_models: np.ndarray
    step: int = 0
    history: List[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class SimulationReport:
    rounds: int
    local_steps: int
    converged: bool
    final_gap: float
    final_model: np.ndarray
    curve: pd.DataFrame

    def summary(self) -> Dict:
        return {
            "rounds": self.rounds,
            "local_steps": self.local_steps,
            "converged": self.converged,
            "final_gap": self.final_gap,
        }


def run(
    tasks: Sequence[QuadraticTask],
    edge_of: Sequence[int],
    a: int,
    b: int,
    step_size: Optional[float] = None,
    epsilon: float = 0.1,
    max_rounds: int = 1000,
    round_time: float = 0.0,
    initial_model=None,
) -> SimulationReport:
    """Train until the global gap reaches epsilon or `max_rounds` cloud rounds pass.

    Args:
        tasks: One quadratic task per UE
        edge_of: Edge label of each UE, same order as `tasks`
        a: Local steps per edge aggregation
        b: Edge aggregations per cloud aggregation
        step_size: GD step size, defaults to 1/L
        epsilon: Target relative gap, in (0, 1)
        max_rounds: Cap on cloud rounds, at least 1
        round_time: Wall-clock seconds charged per cloud round in the loss curve
        initial_model: Starting model for every UE, zeros by default

    Returns:
        SimulationReport; `converged` is False when the round cap was hit
    """
    taskset = TaskSet(tasks)
    edge_of = np.asarray(edge_of, dtype=int)
    if edge_of.shape != (len(taskset.tasks),):
        raise ValueError("edge_of needs one label per task")
    if a < 1 or b < 1:
        raise ValueError(f"a and b must be >= 1, got a={a}, b={b}")
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    step_size = 1.0 / taskset.smoothness if step_size is None else step_size
    _check_step(step_size, taskset.smoothness)

    dim = taskset.centers.shape[1]
    start = np.zeros(dim) if initial_model is None else np.asarray(initial_model, dtype=float)
    state = TrainState(global_model=start.copy(), ue_models=np.tile(start, (len(edge_of), 1)))

    initial_loss = taskset.loss(start)
    optimal_loss = taskset.optimal_loss
    state.history.append(initial_loss)
    rows = [(0, 0.0, initial_loss, 1.0)]
    groups = [np.flatnonzero(edge_of == label) for label in np.unique(edge_of)]
    edge_weights = np.array([taskset.weights[members].sum() for members in groups])

    if initial_loss <= optimal_loss:
        logger.info("Initial model is already optimal")
        return SimulationReport(
            0, 0, True, 0.0, start, pd.DataFrame([(0, 0.0, initial_loss, 0.0)], columns=CURVE_COLUMNS)
        )

    gap = 1.0
    converged = False
    for cloud_round in range(1, max_rounds + 1):
        for _ in range(b):
            for n, task in enumerate(taskset.tasks):
                state.ue_models[n] = local_gd(task, state.ue_models[n], a, step_size)
            state.step += a
            for members in groups:
                state.ue_models[members] = edge_aggregate(
                    state.ue_models[members], taskset.weights[members]
                )

        edge_models = np.stack([state.ue_models[members[0]] for members in groups])
        state.global_model = cloud_aggregate(edge_models, edge_weights)
        state.ue_models[:] = state.global_model

        loss = taskset.loss(state.global_model)
        gap = global_accuracy_gap(loss, initial_loss, optimal_loss)
        state.history.append(loss)
        rows.append((cloud_round, cloud_round * round_time, loss, gap))
        if gap <= epsilon:
            converged = True
            break

    if converged:
        logger.info(f"Reached gap {gap:.3g} <= {epsilon} after {cloud_round} cloud rounds")
    else:
        logger.warning(f"Round cap {max_rounds} reached with gap {gap:.3g} > {epsilon}")

    return SimulationReport(
        rounds=cloud_round,
        local_steps=state.step,
        converged=converged,
        final_gap=gap,
        final_model=state.global_model,
        curve=pd.DataFrame(rows, columns=CURVE_COLUMNS),
    )


def write_loss_curve(report: SimulationReport, path: str) -> None:
    """Write the loss curve as CSV, replacing `path` atomically."""
    write_text_atomic(path, report.curve.to_csv(index=False, float_format="%.12g", lineterminator="\n"))


def generate_tasks(
    seed: int,
    num_ues: int,
    dim: int,
    beta: float = 1.0,
    smoothness: float = 10.0,
    shared_curvature: bool = False,
    center_scale: float = 1.0,
    weights: Optional[Sequence[float]] = None,
) -> List[QuadraticTask]:
    """Seeded quadratic tasks with eigenvalues uniform in [beta, smoothness].

    Eigenbases are random orthogonal matrices. With `shared_curvature` every UE
    gets the same A and only the centers differ. `weights` (e.g. the dataset
    sizes of a scenario's UEs) replaces the drawn sample counts.
    """
    if weights is not None and len(weights) != num_ues:
        raise ValueError(f"expected {num_ues} weights, got {len(weights)}")
    if num_ues < 1:
        raise ValueError(f"num_ues must be >= 1, got {num_ues}")
    if not 1 <= dim <= MAX_DIM:
        raise ValueError(f"dim must lie in [1, {MAX_DIM}], got {dim}")
    if not 0 < beta <= smoothness:
        raise ValueError(f"need 0 < beta <= L, got beta={beta}, L={smoothness}")

    rng = np.random.default_rng(seed)

    def draw_curvature() -> np.ndarray:
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        spectrum = rng.uniform(beta, smoothness, dim)
        curvature = (basis * spectrum) @ basis.T
        return 0.5 * (curvature + curvature.T)

    common = draw_curvature() if shared_curvature else None
    tasks = []
    for n in range(num_ues):
        curvature = common if shared_curvature else draw_curvature()
        center = rng.normal(0.0, center_scale, dim)
        weight = float(rng.integers(200, 801))
        if weights is not None:
            weight = float(weights[n])
        tasks.append(QuadraticTask(curvature, center, weight))
    return tasks


def certify_assumption(
    task: QuadraticTask,
    beta: float,
    smoothness: float,
    rng: Optional[np.random.Generator] = None,
    trials: int = 100,
) -> bool:
    """Check strong convexity and smoothness of the local loss on random model pairs."""
    rng = rng or np.random.default_rng(0)
    slack = 1e-9
    for _ in range(trials):
        w, w_prime = rng.standard_normal((2, task.dim))
        delta = w - w_prime
        grad_gap = gradient(task, w) - gradient(task, w_prime)
        norm_sq = float(delta @ delta)
        if beta * norm_sq > float(grad_gap @ delta) * (1 + slack):
            logger.debug(f"Strong convexity with beta={beta} fails")
            return False
        if np.linalg.norm(grad_gap) > smoothness * math.sqrt(norm_sq) * (1 + slack):
            logger.debug(f"Smoothness with L={smoothness} fails")
            return False
    return True

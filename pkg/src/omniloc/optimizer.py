"""Adam with plateau step-size decay, and the per-candidate refinement loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import LocalPoseParam, Panorama, PointCloud, Pose
from .sampler import sampling_loss_grad

DEFAULT_ALPHA = 0.1
DECAY_FACTOR = 0.8
PATIENCE = 5


@dataclass
class AdamState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(6))
    v: np.ndarray = field(default_factory=lambda: np.zeros(6))
    step_count: int = 0
    alpha: float = DEFAULT_ALPHA
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8


@dataclass
class SchedulerState:
    best_loss: float = float("inf")
    stall_count: int = 0
    decay_factor: float = DECAY_FACTOR
    patience: int = PATIENCE


@dataclass
class RefinementTrace:
    loss_history: list
    final_param: LocalPoseParam
    final_loss: float

    @property
    def final_pose(self) -> Pose:
        return self.final_param.to_pose()


def adam_step(state: AdamState, grad: np.ndarray, param: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns the new state and parameters."""
    grad = np.asarray(grad, dtype=np.float64)
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_param = np.asarray(param, dtype=np.float64) - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps_adam)
    return replace(state, m=m, v=v, step_count=t), new_param


def scheduler_update(state: SchedulerState, adam: AdamState, new_loss: float) -> tuple[SchedulerState, AdamState]:
    """Multiply the step size by ``decay_factor`` after ``patience`` non-improving losses.

    Ties count as stalls.  The stall counter restarts after every decay;
    Adam's moment estimates are kept.
    """
    if new_loss < state.best_loss:
        return replace(state, best_loss=new_loss, stall_count=0), adam
    stalls = state.stall_count + 1
    if stalls >= state.patience:
        return replace(state, stall_count=0), replace(adam, alpha=adam.alpha * state.decay_factor)
    return replace(state, stall_count=stalls), adam


def run_adam(
    value_and_grad: Callable[[LocalPoseParam], tuple[float, np.ndarray]],
    start: LocalPoseParam,
    n_iter: int,
    alpha0: float = DEFAULT_ALPHA,
    gravity_known: bool = False,
    decay_factor: float = DECAY_FACTOR,
    patience: int = PATIENCE,
) -> RefinementTrace:
    """Generic scheduled-Adam loop over the 6-vector ``(omega, tau)``.

    ``value_and_grad`` returns the loss at a parameter and its gradient.  A
    non-finite loss freezes the parameters for the rest of the run.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    mask = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 1.0]) if gravity_known else np.ones(6)
    adam = AdamState(alpha=alpha0)
    sched = SchedulerState(decay_factor=decay_factor, patience=patience)
    param = start
    loss, grad = value_and_grad(param)
    history = [loss]
    frozen = not np.isfinite(loss)
    for _ in range(n_iter):
        if frozen:
            history.append(loss)
            continue
        adam, vec = adam_step(adam, grad * mask, param.vector())
        vec = vec * mask + start.vector() * (1.0 - mask)
        param = param.with_vector(vec)
        loss, grad = value_and_grad(param)
        history.append(loss)
        if not np.isfinite(loss):
            frozen = True
            continue
        sched, adam = scheduler_update(sched, adam, loss)
    return RefinementTrace(history, param, history[-1])


def refine(
    cloud: PointCloud,
    image: Panorama,
    start: Pose,
    n_iter: int,
    alpha0: float = DEFAULT_ALPHA,
    gravity_known: bool = False,
    decay_factor: float = DECAY_FACTOR,
    patience: int = PATIENCE,
) -> RefinementTrace:
    """Minimise the sampling loss from ``start`` with ``n_iter`` Adam steps.

    With ``gravity_known`` only the yaw component of the rotation increment
    moves, so the camera's vertical axis never changes.
    """

    def value_and_grad(p: LocalPoseParam):
        g = sampling_loss_grad(cloud, image, p)
        return g.loss, g.vector

    return run_adam(value_and_grad, LocalPoseParam.at(start), n_iter, alpha0, gravity_known, decay_factor, patience)

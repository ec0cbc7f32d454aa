"""Scaled conjugate gradient minimisation (Moller, 1993).

A batch, Hessian-free method: second-order information along the search
direction comes from a one-sided difference of gradients, and a
Levenberg-Marquardt style scale keeps the local quadratic model positive
definite. There is no learning rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class NumericalError(RuntimeError):
    """The objective produced a non-finite value or gradient."""

    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = iterate


@dataclass
class SCGState:
    theta: np.ndarray
    direction: np.ndarray
    residual: np.ndarray
    sigma: float
    lam: float
    lam_bar: float = 0.0
    success: bool = True
    iteration: int = 0


@dataclass
class SCGResult:
    theta: np.ndarray
    value: float
    iterations: int
    converged: bool
    # objective at theta0 followed by the value after each accepted step
    accepted_values: list = field(default_factory=list)
    # value after every iteration (repeats the last value on rejected steps)
    trace: list = field(default_factory=list)


def _evaluate(objective: Objective, theta: np.ndarray):
    value, grad = objective(theta)
    value = float(value)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite objective at iterate (value={value})", theta.copy())
    return value, np.asarray(grad, dtype=np.float64)


def scg_minimize(
    objective: Objective,
    theta0,
    max_iters: int,
    *,
    sigma: float = 1e-5,
    lambda0: float = 1e-6,
    grad_tol: float = 1e-8,
    callback: Callable[[SCGState, float], None] | None = None,
) -> SCGResult:
    """Minimise ``objective`` (returning value and gradient) from ``theta0``.

    Every loop pass counts as one iteration, whether or not its step is
    accepted. Stops after ``max_iters`` passes or once the gradient norm
    drops to ``grad_tol``.
    """
    theta = np.array(theta0, dtype=np.float64).ravel()
    value, grad = _evaluate(objective, theta)
    result = SCGResult(theta, value, 0, False, [value], [])
    if np.linalg.norm(grad) <= grad_tol:
        result.converged = True
        return result

    n = theta.size
    r = -grad
    state = SCGState(theta, r.copy(), r, sigma, lambda0)
    delta = 0.0
    p_sq = 0.0

    for k in range(1, max_iters + 1):
        state.iteration = k
        p = state.direction
        if state.success:
            p_sq = float(p @ p)
            sigma_k = sigma / np.sqrt(p_sq)
            _, g_shift = _evaluate(objective, theta + sigma_k * p)
            s = (g_shift + r) / sigma_k  # r == -grad(theta)
            delta = float(p @ s)

        delta += (state.lam - state.lam_bar) * p_sq
        if delta <= 0.0:
            state.lam_bar = 2.0 * (state.lam - delta / p_sq)
            delta = -delta + state.lam * p_sq
            state.lam = state.lam_bar

        mu = float(p @ r)
        if mu <= 0.0:
            # lost descent (only possible through round-off): restart on steepest descent
            state.direction = r.copy()
            state.success = True
            state.lam_bar = 0.0
            result.trace.append(value)
            continue
        alpha = mu / delta

        trial = theta + alpha * p
        trial_value, trial_grad = _evaluate(objective, trial)
        comparison = 2.0 * delta * (value - trial_value) / (mu * mu)

        if comparison >= 0.0:
            theta = trial
            value = trial_value
            r_new = -trial_grad
            state.lam_bar = 0.0
            state.success = True
            if k % n == 0:
                state.direction = r_new.copy()
            else:
                beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
                state.direction = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                state.lam *= 0.25
            result.accepted_values.append(value)
        else:
            state.lam_bar = state.lam
            state.success = False

        if comparison < 0.25:
            state.lam += delta * (1.0 - comparison) / p_sq

        state.theta = theta
        state.residual = r
        result.trace.append(value)
        if callback is not None:
            callback(state, value)

        if np.linalg.norm(r) <= grad_tol:
            result.converged = True
            break

    result.theta = theta
    result.value = value
    result.iterations = state.iteration
    log.debug("scg: %d iterations, f=%.6g, converged=%s", state.iteration, value, result.converged)
    return result

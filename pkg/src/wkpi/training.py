"""Gradient-descent training of the mixture weight against the trace cost.

Full-batch steps use Armijo backtracking on the objective (total cost plus
the coefficient penalty); minibatch steps reuse the last accepted
full-batch step size and are re-validated by a full evaluation every 25
iterations.  Training stops once consecutive full evaluations of the
total cost change by at most ``cost_tolerance``, or at the iteration cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import CostModel, WkpiParams, image_matrix, mixture_penalty
from .weights import GaussianMixtureWeight

_FULL_EVAL_PERIOD = 25
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``minibatch_size=None`` selects full-batch for up to 500 images and a
    256-image minibatch beyond that.
    """

    minibatch_size: int | None = None
    max_iterations: int = 2000
    cost_tolerance: float = 1e-4
    penalty_constant: float = 1.0
    ls_initial_step: float = 1.0
    ls_backtrack: float = 0.5
    ls_sufficient_decrease: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.minibatch_size is not None and self.minibatch_size < 1:
            raise ValueError("minibatch_size must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.cost_tolerance > 0:
            raise ValueError("cost_tolerance must be positive")
        if self.penalty_constant < 0:
            raise ValueError("penalty_constant must be non-negative")
        if not 0.0 < self.ls_backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.ls_initial_step <= 0 or self.ls_sufficient_decrease <= 0:
            raise ValueError("line-search constants must be positive")


@dataclass
class TrainResult:
    weight: GaussianMixtureWeight
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    initial_tc: float = math.nan
    final_tc: float = math.nan
    initial_objective: float = math.nan
    best_objective: float = math.nan
    iterations: int = 0


def _sanitize(params: np.ndarray, spread_floor: float) -> np.ndarray:
    out = params.reshape(-1, 4).copy()
    out[:, 2] = np.maximum(out[:, 2], spread_floor)
    out[:, 3] = np.maximum(out[:, 3], 0.0)
    return out.ravel()


def _armijo_step(model, weight, params, obj, grad, cfg, spread_floor, step0):
    """Backtracking line search along the negative gradient.

    Returns (params, weight, objective, tc, accepted step or None).
    Trial points are clamped before evaluation so the accepted point is
    exactly the one kept.
    """
    gnorm2 = float(grad @ grad)
    if gnorm2 == 0.0:
        return params, weight, obj, model.total_cost(weight), None
    eta = step0
    for _ in range(_MAX_BACKTRACKS):
        trial = _sanitize(params - eta * grad, spread_floor)
        trial_weight = GaussianMixtureWeight.from_parameters(trial)
        tc_trial = model.total_cost(trial_weight)
        obj_trial = tc_trial + mixture_penalty(trial_weight, cfg.penalty_constant)
        if obj_trial <= obj - cfg.ls_sufficient_decrease * eta * gnorm2:
            return trial, trial_weight, obj_trial, tc_trial, eta
        eta *= cfg.ls_backtrack
    return params, weight, obj, model.total_cost(weight), None


def train_metric(
    images,
    labels,
    init: GaussianMixtureWeight,
    cfg: TrainConfig,
    p: WkpiParams,
    cost_model: CostModel | None = None,
) -> TrainResult:
    """Minimize total cost + coefficient penalty over the 4m mixture parameters.

    Returns the best parameters seen at a full evaluation and the
    per-iteration trace of the accepted objective (minibatch iterations
    record the minibatch objective).  Spreads are floored at 1e-6 times
    the grid diagonal; coefficients are clamped at zero after each step.

    ``cost_model`` lets callers reuse a prebuilt full-batch workspace when
    training several mixtures against the same images and bandwidth.
    """
    pixmat, grid = image_matrix(images)
    n = pixmat.shape[0]
    x_min, x_max, y_min, y_max = grid.bounding_box
    spread_floor = 1e-6 * math.hypot(x_max - x_min, y_max - y_min)

    batch_size = cfg.minibatch_size
    if batch_size is None:
        batch_size = n if n <= 500 else 256
    full_mode = batch_size >= n

    full_model = cost_model
    if full_model is None:
        full_model = CostModel(
            pixmat, labels, grid.centers, p.kernel_sigma, p.kernel_variant
        )
    elif full_model.pixmat.shape != pixmat.shape or full_model.kernel_sigma != p.kernel_sigma:
        raise ValueError("cost_model does not match the images and kernel bandwidth")
    rng = np.random.default_rng(cfg.rng_seed)
    labels = np.asarray(labels, dtype=np.intp)

    params = _sanitize(init.as_parameters(), spread_floor)
    weight = GaussianMixtureWeight.from_parameters(params)
    step = cfg.ls_initial_step
    trace = []
    result = TrainResult(weight=weight)
    last_full_tc = None
    best_obj = math.inf

    for it in range(1, cfg.max_iterations + 1):
        result.iterations = it
        is_full = full_mode or (it - 1) % _FULL_EVAL_PERIOD == 0
        if is_full:
            tc, obj, grad = full_model.total_cost_and_gradient(
                weight, cfg.penalty_constant
            )
            if it == 1:
                result.initial_tc = tc
                result.initial_objective = obj
            if obj < best_obj:
                best_obj = obj
                result.weight = weight
            if last_full_tc is not None and abs(tc - last_full_tc) <= cfg.cost_tolerance:
                result.final_tc = tc
                break
            last_full_tc = tc
            params, weight, obj, tc, accepted = _armijo_step(
                full_model, weight, params, obj, grad, cfg, spread_floor, cfg.ls_initial_step
            )
            if accepted is not None:
                step = accepted
            trace.append(obj)
            if obj < best_obj:
                best_obj = obj
                result.weight = weight
            result.final_tc = tc
        else:
            model = None
            for _ in range(10):  # redraw batches that miss a class entirely
                idx = np.sort(rng.choice(n, size=batch_size, replace=False))
                try:
                    model = CostModel(
                        pixmat[idx],
                        labels[idx],
                        grid.centers,
                        p.kernel_sigma,
                        p.kernel_variant,
                        class_count=full_model.class_count,
                    )
                    break
                except ValueError:
                    model = None
            if model is None:
                raise RuntimeError(
                    f"could not draw a minibatch of size {batch_size} covering all classes"
                )
            _, obj_b, grad = model.total_cost_and_gradient(weight, cfg.penalty_constant)
            params = _sanitize(params - step * grad, spread_floor)
            weight = GaussianMixtureWeight.from_parameters(params)
            trace.append(obj_b)

    result.trace = np.array(trace)
    result.best_objective = best_obj
    return result

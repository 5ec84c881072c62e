"""Penalty composition and end-to-end gradient assembly.

penalty = alpha * |l_opening - l_dilation|, added to an externally supplied
cross-entropy scalar when one is given. The gradient with respect to the raw
class scores is produced by replaying the single tape that recorded the whole
pipeline (softmax, pair channels, both morphology passes, the losses).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, ValidationError
from . import tensor as T
from .dilation import dilate_stack
from .opening import iteration_budget, open_stack
from .pairmap import build_pair_stack, normalize_scores, prune_pairs


@dataclass
class PenaltyReport:
    l_opening: float
    l_dilation: float
    alpha: float
    penalty: float
    precision: str
    total: float | None = None
    grad: np.ndarray | None = None
    per_pair_mass: dict = field(default_factory=dict)
    iterations_used: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


def combine_total(penalty: float, cross_entropy: float) -> float:
    """Add the penalty to an external cross-entropy loss value."""
    if cross_entropy < 0:
        raise ContractError("cross-entropy must be >= 0")
    return cross_entropy + penalty


def compute_penalty(scores, cfg, with_grad: bool = False,
                    cross_entropy: float | None = None,
                    catalog=None) -> PenaltyReport:
    """Run the full pipeline on a (C, H, W) score tensor.

    cfg.losses selects which of the two passes run; a disabled pass
    contributes 0. with_grad additionally backpropagates the penalty to a
    gradient over the scores. Deterministic for identical inputs, independent
    of cfg.workers.
    """
    cfg.validate()
    arr = scores.values if isinstance(scores, T.Tensor) else np.asarray(scores)
    if arr.ndim != 3:
        raise DimensionError(f"scores must be (C, H, W), got rank {arr.ndim}")
    if arr.shape[0] < 2 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise DimensionError(f"degenerate score dims {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("scores contain non-finite values")
    arr = arr.astype(T.DTYPES[cfg.precision], copy=True)

    tape = T.Tape() if with_grad else None
    leaf = T.Tensor(arr, tape=tape)
    budget = iteration_budget(arr.shape[1], arr.shape[2], cfg.iterations_override)

    timing = {}
    t_start = time.perf_counter()
    t0 = time.perf_counter()
    probs = normalize_scores(leaf)
    stack = build_pair_stack(probs)
    if cfg.pair_mode == "infeasible_only":
        if catalog is None:
            raise ConfigError("pair_mode=infeasible_only needs a constraint catalog")
        stack = prune_pairs(stack, catalog, "infeasible_only")
    timing["pair_stack"] = time.perf_counter() - t0

    l_open, l_dil = 0.0, 0.0
    open_node = dil_node = None
    per_pair = {"opening": [], "dilation": []}
    iters = {"opening": [], "dilation": []}

    if "opening" in cfg.losses:
        t0 = time.perf_counter()
        res = open_stack(stack, budget, cfg.epsilon, workers=cfg.resolve_workers())
        timing["opening"] = time.perf_counter() - t0
        l_open, open_node = res.loss, res.loss_node
        per_pair["opening"] = res.per_pair_mass
        iters["opening"] = res.iterations_used
    if "dilation" in cfg.losses:
        t0 = time.perf_counter()
        res = dilate_stack(stack, budget, cfg.epsilon, cfg.bg_tol,
                           workers=cfg.resolve_workers())
        timing["dilation"] = time.perf_counter() - t0
        l_dil, dil_node = res.loss, res.loss_node
        per_pair["dilation"] = res.per_pair_mass
        iters["dilation"] = res.iterations_used

    penalty = cfg.alpha * abs(l_open - l_dil)

    grad = None
    if with_grad:
        t0 = time.perf_counter()
        if open_node is not None and dil_node is not None:
            diff = T.subtract(open_node, dil_node)
        else:
            diff = open_node if open_node is not None else dil_node
        if diff is not None:
            penalty_node = T.multiply(T.abs_value(diff), cfg.alpha)
            tape.backward(penalty_node)
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(arr)
        timing["backward"] = time.perf_counter() - t0

    timing["total"] = time.perf_counter() - t_start
    report = PenaltyReport(
        l_opening=l_open, l_dilation=l_dil, alpha=cfg.alpha, penalty=penalty,
        precision=cfg.precision, grad=grad, per_pair_mass=per_pair,
        iterations_used=iters, timing=timing,
    )
    if cross_entropy is not None:
        report.total = combine_total(penalty, cross_entropy)
    return report

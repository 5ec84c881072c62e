"""Class-score normalization and the ordered-pair channel stack.

For every ordered class pair (i, j) the stack holds a nonnegative map that is
nonzero only on pixels whose full-class argmax is i or j: the probability of
the winning class on that support, minus the support mean, rectified. On a
constant-confidence input every channel is identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CatalogError, ConfigError, DimensionError
from . import tensor as T


@dataclass
class PairStack:
    """values: (C*(C-1), H, W) channel volume; pairs[k] is channel k's
    (inner, outer) class ids. channels holds the per-channel tape nodes when
    the stack was built for differentiation, else None.
    """
    values: np.ndarray
    pairs: list
    channels: list | None = None
    support: np.ndarray | None = None  # (K, H, W) bool, channel supports

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]


def ordered_pairs(num_classes: int) -> list:
    """Row-major enumeration of all ordered pairs (i, j), i != j."""
    return [(i, j) for i in range(num_classes) for j in range(num_classes) if j != i]


def normalize_scores(scores: T.Tensor) -> T.Tensor:
    """Per-pixel softmax across the class axis of a (C, H, W) score tensor."""
    if scores.values.ndim != 3:
        raise DimensionError(f"scores must be (C, H, W), got rank {scores.values.ndim}")
    if scores.values.shape[0] < 2:
        raise DimensionError("need at least 2 classes to normalize scores")
    return T.softmax_channels(scores)


def build_pair_stack(probs: T.Tensor, ignore_mask=None) -> PairStack:
    """Assemble the C*(C-1) ordered-pair channels from normalized scores.

    Argmax ties resolve to the lowest class index. Pixels under ignore_mask
    are excluded from every support. Channels are differentiable through the
    probabilities when probs carries a tape; channel values off the support
    are exactly 0 with exactly 0 gradient.
    """
    if probs.values.ndim != 3:
        raise DimensionError("build_pair_stack needs rank-3 probabilities")
    num_classes = probs.values.shape[0]
    if num_classes < 2:
        raise DimensionError("need at least 2 classes to build a pair stack")
    h, w = probs.values.shape[1:]
    argmax = np.argmax(probs.values, axis=0)  # first max wins: lowest class id
    valid = np.ones((h, w), dtype=bool)
    if ignore_mask is not None:
        valid &= ~np.asarray(ignore_mask).astype(bool)

    pairs = ordered_pairs(num_classes)
    taped = probs.tape is not None
    channel_nodes = [] if taped else None
    planes = np.empty((len(pairs), h, w), dtype=probs.values.dtype)
    supports = np.empty((len(pairs), h, w), dtype=bool)
    for k, (i, j) in enumerate(pairs):
        support = ((argmax == i) | (argmax == j)) & valid
        sup_f = support.astype(probs.values.dtype)
        selected = T.class_probability_map(probs, argmax, support)
        mean = T.masked_mean(selected, support)
        channel = T.multiply(T.rectifier(T.subtract(selected, mean)), sup_f)
        planes[k] = channel.values
        supports[k] = support
        if taped:
            channel_nodes.append(channel)
    return PairStack(values=planes, pairs=pairs, channels=channel_nodes,
                     support=supports)


def prune_pairs(stack: PairStack, catalog, mode: str) -> PairStack:
    """mode="all" returns the stack unchanged; "infeasible_only" keeps only
    channels whose pair the catalog marks infeasible, in original order.
    """
    if mode == "all":
        return stack
    if mode != "infeasible_only":
        raise ConfigError(f"unknown prune mode {mode!r}")
    verdicts = catalog.verdicts()
    keep = []
    for k, pair in enumerate(stack.pairs):
        if pair not in verdicts:
            raise CatalogError(f"catalog does not cover pair {pair}")
        if verdicts[pair] == "infeasible":
            keep.append(k)
    return PairStack(
        values=stack.values[keep] if keep else
        np.empty((0,) + stack.values.shape[1:], dtype=stack.values.dtype),
        pairs=[stack.pairs[k] for k in keep],
        channels=[stack.channels[k] for k in keep] if stack.channels is not None else None,
        support=stack.support[keep] if stack.support is not None else None,
    )

"""Selective dilation of discontinued segments.

Growth happens on the background cells edge-adjacent to a channel's original
foreground (the band). Each sweep takes the 4-neighbor average of the marker
(frame excluded as a growth source), subtracts the mean of the strictly
positive offsets inside the band, rectifies, and adds the survivors back. A
background cell flanked by two segments receives twice the offset of a cell on
a free boundary, so only gap growth outlives the mean threshold: a lone
rectangle grows by exactly 0, while a one-pixel gap between collinear bars
acquires a bridge. The readout keeps grown background only; its l1 mass is the
dilation loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import map_indexed
from .errors import ConfigError, ContractError, DimensionError
from . import tensor as T
from .pairmap import PairStack


@dataclass
class DilationResult:
    bridge: np.ndarray           # (channels, H, W), >= 0, zero on foreground
    loss: float
    per_pair_mass: list
    iterations_used: list
    loss_node: T.Tensor | None = None


def rectify(current: T.Tensor, grown: T.Tensor, growth_mask=None) -> T.Tensor:
    """Keep only growth offsets strictly above their own positive mean.

    offset = grown - current; the mean is taken over strictly positive
    offsets (inside growth_mask when given), survivors are rectified and
    confined to the same cells, then added back onto current. A uniform
    positive offset field is suppressed entirely.
    """
    if current.values.shape != grown.values.shape:
        raise DimensionError(
            f"rectify dims mismatch: {current.values.shape} vs {grown.values.shape}")
    offset = T.subtract(grown, current)
    mask = offset.values > 0
    if growth_mask is not None:
        mask = mask & np.asarray(growth_mask).astype(bool)
    mean = T.masked_mean(offset, mask)
    survivors = T.multiply(T.rectifier(T.subtract(offset, mean)),
                           mask.astype(current.values.dtype))
    return T.add(survivors, current)


def _growth_band(fg: np.ndarray) -> np.ndarray:
    """Background cells edge-adjacent to the foreground, padded coords."""
    band = np.zeros_like(fg)
    band[1:, :] |= fg[:-1, :]
    band[:-1, :] |= fg[1:, :]
    band[:, 1:] |= fg[:, :-1]
    band[:, :-1] |= fg[:, 1:]
    band &= ~fg
    return band


def dilate_channel(b: T.Tensor, iterations: int, epsilon: float, bg_tol: float):
    """Grow one nonnegative channel selectively; returns (bridge, converged_at).

    bridge is the interior readout restricted to the channel's original
    background (values <= bg_tol), so it is exactly 0 on the foreground.
    """
    if b.values.ndim != 2:
        raise DimensionError(f"dilate_channel needs a rank-2 channel, got rank {b.values.ndim}")
    if iterations < 1:
        raise ConfigError("dilate_channel needs iterations >= 1")
    if bg_tol < 0:
        raise ConfigError("dilate_channel needs bg_tol >= 0")
    if (b.values < 0).any():
        raise ContractError("dilate_channel requires a nonnegative channel")

    padded = T.pad_frame(b, 1.0)
    fg_pad = np.zeros(padded.values.shape, dtype=bool)
    fg_pad[1:-1, 1:-1] = b.values > bg_tol
    band = _growth_band(fg_pad)
    band[0, :] = band[-1, :] = band[:, 0] = band[:, -1] = False

    marker = padded
    converged_at = iterations
    for sweep in range(1, iterations + 1):
        # the constant frame anchors the marker but must not seed growth
        interior = T.pad_frame(T.crop_frame(marker), 0.0)
        grown = rectify(marker, T.cross_avg(interior), growth_mask=band)
        grown = T.pad_frame(T.crop_frame(grown), 1.0)
        if np.array_equal(grown.values, marker.values):
            converged_at = sweep
            marker = grown
            break
        marker = grown

    readout = T.guarded_max_normalize(marker, epsilon)
    bg_interior = (~fg_pad[1:-1, 1:-1]).astype(b.values.dtype)
    bridge = T.multiply(T.crop_frame(readout), bg_interior)
    return bridge, converged_at


def dilate_stack(stack: PairStack, iterations: int, epsilon: float,
                 bg_tol: float, workers: int | None = None) -> DilationResult:
    """Dilate every channel; loss is the channel-order sum of l1 masses."""
    taped = stack.channels is not None
    num = stack.num_channels
    h, w = stack.values.shape[1:] if num else (0, 0)

    def run(k):
        chan = stack.channels[k] if taped else T.Tensor(stack.values[k])
        return dilate_channel(chan, iterations, epsilon, bg_tol)

    results = map_indexed(run, num, None if taped else workers)

    bridge = np.zeros((num, h, w), dtype=stack.values.dtype)
    per_pair = []
    iters = []
    loss = 0.0
    loss_node = None
    for k, (grown, used) in enumerate(results):
        bridge[k] = grown.values
        iters.append(used)
        mass_node = T.l1(grown)
        mass = float(mass_node.values)
        per_pair.append((stack.pairs[k], mass))
        loss += mass
        if taped:
            loss_node = mass_node if loss_node is None else T.add(loss_node, mass_node)
    return DilationResult(bridge=bridge, loss=loss, per_pair_mass=per_pair,
                          iterations_used=iters, loss_node=loss_node)

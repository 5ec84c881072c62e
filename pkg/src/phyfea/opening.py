"""Area opening of enclosed segments by border-seeded reconstruction.

Each pair channel is framed with constant 1; a marker starting as that frame
grows inward one pixel per sweep (3x3 max-pool masked by the channel) until a
fixpoint or the iteration budget. Foreground the marker reaches reads out as
feasible; what it cannot reach is the anomaly map, whose l1 mass is the
opening loss. For a binary channel the anomaly is exactly the set of
foreground components not 8-connected to the border, provided the budget
covers their geodesic distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import map_indexed
from .errors import ConfigError, ContractError, DimensionError
from . import tensor as T
from .pairmap import PairStack


@dataclass
class OpeningResult:
    anomaly: np.ndarray          # (channels, H, W), >= 0
    loss: float
    per_pair_mass: list          # [(pair, mass), ...] in channel order
    iterations_used: list        # per-channel sweep count at exit
    loss_node: T.Tensor | None = None  # set when run on a tape


def iteration_budget(height: int, width: int, override: int | None = None) -> int:
    """Default sweep budget: max(2, floor(max(H, W) / 2)); an explicit
    override wins. override = 0 is a configuration error.
    """
    if height < 1 or width < 1:
        raise DimensionError(f"iteration budget needs extents >= 1, got {height}x{width}")
    if override is not None:
        if override < 1:
            raise ConfigError("iteration override must be >= 1")
        return int(override)
    return max(2, max(height, width) // 2)


def open_channel(b: T.Tensor, iterations: int, epsilon: float):
    """Reconstruct one nonnegative channel from its border.

    Returns (anomaly, converged_at): anomaly is the interior part of the
    channel not reached by the marker (soft values kept as-is), converged_at
    the sweep index where the marker stopped changing (== iterations if it
    never did). Border-touching regions read out to exactly 0 loss and
    gradient as long as the marker values they receive stay >= epsilon.
    """
    if b.values.ndim != 2:
        raise DimensionError(f"open_channel needs a rank-2 channel, got rank {b.values.ndim}")
    if iterations < 1:
        raise ConfigError("open_channel needs iterations >= 1")
    if (b.values < 0).any():
        raise ContractError("open_channel requires a nonnegative channel")

    padded = T.pad_frame(b, 1.0)
    ring = np.zeros_like(padded.values)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = 1
    marker = T.Tensor(ring, tape=b.tape)

    converged_at = iterations
    for sweep in range(1, iterations + 1):
        grown = T.multiply(T.pool3(marker, "max"), padded)
        # the frame stays at exactly 1 no matter what the channel holds
        grown = T.pad_frame(T.crop_frame(grown), 1.0)
        if np.array_equal(grown.values, marker.values):
            converged_at = sweep
            marker = grown
            break
        marker = grown

    reached = T.saturate(marker, epsilon)
    anomaly = T.crop_frame(T.subtract(padded, T.multiply(padded, reached)))
    return anomaly, converged_at


def open_stack(stack: PairStack, iterations: int, epsilon: float,
               workers: int | None = None) -> OpeningResult:
    """Open every channel; the loss is the sum of per-channel l1 masses,
    accumulated in channel order. Runs channel-parallel when no tape is
    attached (a tape is confined to one worker).
    """
    taped = stack.channels is not None
    num = stack.num_channels
    h, w = stack.values.shape[1:] if num else (0, 0)

    def run(k):
        chan = stack.channels[k] if taped else T.Tensor(stack.values[k])
        return open_channel(chan, iterations, epsilon)

    results = map_indexed(run, num, None if taped else workers)

    anomaly = np.zeros((num, h, w), dtype=stack.values.dtype)
    per_pair = []
    iters = []
    loss = 0.0
    loss_node = None
    for k, (anom, used) in enumerate(results):
        anomaly[k] = anom.values
        iters.append(used)
        mass_node = T.l1(anom)
        mass = float(mass_node.values)
        per_pair.append((stack.pairs[k], mass))
        loss += mass
        if taped:
            loss_node = mass_node if loss_node is None else T.add(loss_node, mass_node)
    return OpeningResult(anomaly=anomaly, loss=loss, per_pair_mass=per_pair,
                         iterations_used=iters, loss_node=loss_node)

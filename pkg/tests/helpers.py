"""Independent reference implementations used to validate the engine.

Everything here is deliberately naive: plain loops, BFS flood fill, and
direct numpy translations of the sweep recurrences with no shared code with
the package (the analyzer uses scipy internally, so the component oracles
here are pure Python on purpose).
"""

from collections import deque

import numpy as np

NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
NEIGHBORS_8 = NEIGHBORS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def bfs_components(mask, connectivity=8):
    """Connected components of a boolean mask as a list of pixel sets."""
    offs = NEIGHBORS_8 if connectivity == 8 else NEIGHBORS_4
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            comp = set()
            queue = deque([(r0, c0)])
            seen[r0, c0] = True
            while queue:
                r, c = queue.popleft()
                comp.add((r, c))
                for dr, dc in offs:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        queue.append((rr, cc))
            comps.append(comp)
    return comps


def border_unreachable_bfs(binary):
    """Foreground pixels with no 8-connected path to a border foreground pixel."""
    fg = np.asarray(binary) > 0
    h, w = fg.shape
    reach = np.zeros_like(fg)
    queue = deque()
    for r in range(h):
        for c in range(w):
            if fg[r, c] and (r in (0, h - 1) or c in (0, w - 1)):
                reach[r, c] = True
                queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        for dr, dc in NEIGHBORS_8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and fg[rr, cc] and not reach[rr, cc]:
                reach[rr, cc] = True
                queue.append((rr, cc))
    return fg & ~reach


def _pool3_max(m):
    h, w = m.shape
    p = np.zeros((h + 2, w + 2), dtype=m.dtype)
    p[1:-1, 1:-1] = m
    out = p[0:h, 0:w].copy()
    for di in range(3):
        for dj in range(3):
            np.maximum(out, p[di:di + h, dj:dj + w], out=out)
    return out


def _cross_avg(m):
    h, w = m.shape
    p = np.zeros((h + 2, w + 2), dtype=m.dtype)
    p[1:-1, 1:-1] = m
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4.0


def reference_open(b, iterations, epsilon=1e-8, early_exit=True):
    """Border-seeded reconstruction; returns (anomaly, converged_at)."""
    b = np.asarray(b, dtype=np.float64)
    h, w = b.shape
    padded = np.ones((h + 2, w + 2))
    padded[1:-1, 1:-1] = b
    marker = np.ones((h + 2, w + 2))
    marker[1:-1, 1:-1] = 0.0
    it = 0
    for t in range(iterations):
        nxt = _pool3_max(marker) * padded
        nxt[0, :] = 1
        nxt[-1, :] = 1
        nxt[:, 0] = 1
        nxt[:, -1] = 1
        it = t + 1
        if early_exit and np.array_equal(nxt, marker):
            break
        marker = nxt
    reached = np.where(marker < epsilon, marker / epsilon, 1.0)
    anomaly = padded - padded * reached
    return anomaly[1:-1, 1:-1], it


def reference_dilate(b, iterations, epsilon=1e-8, bg_tol=1e-6, early_exit=True):
    """Selective gap growth; returns (bridge, converged_at)."""
    b = np.asarray(b, dtype=np.float64)
    h, w = b.shape
    fg = b > bg_tol
    pad_fg = np.zeros((h + 2, w + 2), dtype=bool)
    pad_fg[1:-1, 1:-1] = fg
    adjacent = (pad_fg[:-2, 1:-1] | pad_fg[2:, 1:-1]
                | pad_fg[1:-1, :-2] | pad_fg[1:-1, 2:])
    band = np.zeros((h + 2, w + 2), dtype=bool)
    band[1:-1, 1:-1] = adjacent & ~fg
    marker = np.ones((h + 2, w + 2))
    marker[1:-1, 1:-1] = b
    it = 0
    for t in range(iterations):
        interior = marker.copy()
        interior[0, :] = 0
        interior[-1, :] = 0
        interior[:, 0] = 0
        interior[:, -1] = 0
        grown = np.zeros_like(marker)
        grown[1:-1, 1:-1] = _cross_avg(interior[1:-1, 1:-1])
        offset = grown - marker
        mask = (offset > 0) & band
        mu = offset[mask].mean() if mask.any() else 0.0
        nxt = np.maximum(offset - mu, 0.0) * mask + marker
        nxt[0, :] = 1
        nxt[-1, :] = 1
        nxt[:, 0] = 1
        nxt[:, -1] = 1
        it = t + 1
        if early_exit and np.array_equal(nxt, marker):
            break
        marker = nxt
    readout = marker / max(marker.max(), epsilon)
    bridge = readout[1:-1, 1:-1] * (b <= bg_tol)
    return bridge, it


def planted_corpus():
    """Twelve 9x9 label maps over 5 classes with planted enclosure counts.

    Co-occurring unordered pairs: {0,1} x4, {0,2} x1, {0,3} x5, {1,2} x1,
    {0,4} x1 -> 10 ordered co-occurring pairs. Enclosure occurrences:
    (1,0)=4, (2,0)=1, (3,0)=5. With threshold 3 that makes 3 constraint
    pairs (30.0% of 10) of which exactly one, (2,0), is sub-threshold
    (1/3 infeasible).
    """
    def block_in_frame(outer, inner):
        a = np.full((9, 9), outer, dtype=np.uint8)
        a[3:6, 3:6] = inner
        return a

    maps = [block_in_frame(0, 1) for _ in range(4)]
    maps.append(block_in_frame(0, 2))
    maps.extend(block_in_frame(0, 3) for _ in range(5))
    halves = np.full((9, 9), 1, dtype=np.uint8)
    halves[:, 5:] = 2
    maps.append(halves)
    border_touch = np.zeros((9, 9), dtype=np.uint8)
    border_touch[0:4, 0:4] = 4
    maps.append(border_touch)
    return maps


def two_bar_channel(n=7, value=0.5, gap=1, bar_len=2, row=None):
    """Two collinear horizontal bars separated by the given gap."""
    b = np.zeros((n, n))
    r = n // 2 if row is None else row
    total = 2 * bar_len + gap
    c0 = (n - total) // 2
    b[r, c0:c0 + bar_len] = value
    b[r, c0 + bar_len + gap:c0 + total] = value
    return b, c0 + bar_len

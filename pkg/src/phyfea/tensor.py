"""Dense tensor substrate with reverse-mode differentiation.

A Tensor wraps a numpy array (rank 2 or 3, single or double precision). Ops
that receive a Tensor whose tape is set append one backward closure per call;
Tape.backward replays them in exact reverse execution order. Tensors are
treated as immutable once produced.

All ops are pure functions and deterministic: identical inputs give
bit-identical outputs and gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

DTYPES = {"single": np.float32, "double": np.float64}

# Flip on in tests to assert finiteness after every op.
CHECK_FINITE = False

# 3x3 window offsets in row-major order; ties in pool3-max resolve to the
# first offset in this order.
_POOL3_OFFSETS = [(-1, -1), (-1, 0), (-1, 1),
                  (0, -1), (0, 0), (0, 1),
                  (1, -1), (1, 0), (1, 1)]

# 4-neighborhood used by cross_avg: up, down, left, right.
_CROSS_OFFSETS = [(-1, 0), (1, 0), (0, -1), (0, 1)]


class Tape:
    """Ordered record of backward closures for one logical computation."""

    def __init__(self):
        self._records = []

    def record(self, backward_fn):
        self._records.append(backward_fn)

    def __len__(self):
        return len(self._records)

    def backward(self, root: "Tensor"):
        """Seed d(root)/d(root) = 1 and sweep the records in reverse."""
        if root.tape is not self:
            raise ContractError("backward root was not recorded on this tape")
        if root.values.ndim != 0:
            raise ContractError("backward requires a scalar root")
        root.grad = np.ones_like(root.values)
        for fn in reversed(self._records):
            fn()


class Tensor:
    """Immutable value holder; .grad is populated by Tape.backward."""

    __slots__ = ("values", "grad", "tape")

    def __init__(self, values, tape: Tape | None = None, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if CHECK_FINITE and not np.isfinite(arr).all():
            raise ContractError("non-finite values in tensor")
        self.values = arr
        self.grad = None
        self.tape = tape

    @property
    def dims(self):
        return self.values.shape

    def _bump(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"Tensor(dims={self.values.shape}, dtype={self.values.dtype})"


def _out(values, tape):
    t = Tensor(values, tape=tape)
    return t


def _require_rank2(t: Tensor, op: str):
    if t.values.ndim != 2:
        raise DimensionError(f"{op} requires a rank-2 tensor, got rank {t.values.ndim}")
    h, w = t.values.shape
    if h < 1 or w < 1:
        raise DimensionError(f"{op} requires extents >= 1, got {t.values.shape}")


def _shifted(a: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """out[r, c] = a[r + dr, c + dc], zero where that index is out of bounds."""
    h, w = a.shape
    out = np.zeros_like(a)
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = a[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    return out


def pad_frame(t: Tensor, value: float) -> Tensor:
    """Surround a rank-2 tensor with a one-pixel constant ring."""
    _require_rank2(t, "pad_frame")
    h, w = t.values.shape
    vals = np.full((h + 2, w + 2), value, dtype=t.values.dtype)
    vals[1:-1, 1:-1] = t.values
    out = _out(vals, t.tape)
    if t.tape is not None:
        def backward():
            t._bump(out.grad[1:-1, 1:-1])
        t.tape.record(backward)
    return out


def crop_frame(t: Tensor) -> Tensor:
    """Drop the outermost ring of a rank-2 tensor."""
    _require_rank2(t, "crop_frame")
    h, w = t.values.shape
    if h < 3 or w < 3:
        raise DimensionError(f"crop_frame needs extents >= 3, got {t.values.shape}")
    out = _out(t.values[1:-1, 1:-1].copy(), t.tape)
    if t.tape is not None:
        def backward():
            g = np.zeros_like(t.values)
            g[1:-1, 1:-1] = out.grad
            t._bump(g)
        t.tape.record(backward)
    return out


def pool3(t: Tensor, kind: str) -> Tensor:
    """Same-size 3x3 pooling; out-of-bounds cells contribute value 0.

    kind="max" routes the gradient to the winning window cell (first in
    row-major order on ties); kind="avg" divides by the constant 9 regardless
    of clipping and scatters upstream/9 over the in-bounds window cells.
    """
    _require_rank2(t, "pool3")
    if kind not in ("max", "avg"):
        raise ContractError(f"pool3 kind must be 'max' or 'avg', got {kind!r}")
    a = t.values
    if kind == "avg":
        vals = _shifted(a, *_POOL3_OFFSETS[0])
        for off in _POOL3_OFFSETS[1:]:
            vals = vals + _shifted(a, *off)
        vals = vals / 9
        out = _out(vals, t.tape)
        if t.tape is not None:
            def backward():
                g = _shifted(out.grad, -_POOL3_OFFSETS[0][0], -_POOL3_OFFSETS[0][1])
                for off in _POOL3_OFFSETS[1:]:
                    g = g + _shifted(out.grad, -off[0], -off[1])
                t._bump(g / 9)
            t.tape.record(backward)
        return out

    if t.tape is None:
        vals = _shifted(a, *_POOL3_OFFSETS[0])
        for off in _POOL3_OFFSETS[1:]:
            np.maximum(vals, _shifted(a, *off), out=vals)
        return _out(vals, None)

    stackv = np.stack([_shifted(a, *off) for off in _POOL3_OFFSETS])
    vals = stackv.max(axis=0)
    winners = np.argmax(stackv, axis=0)  # first max in row-major window order
    out = _out(vals, t.tape)
    h, w = a.shape
    off_r = np.array([o[0] for o in _POOL3_OFFSETS])
    off_c = np.array([o[1] for o in _POOL3_OFFSETS])

    def backward():
        rr = np.arange(h)[:, None] + off_r[winners]
        cc = np.arange(w)[None, :] + off_c[winners]
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        g = np.zeros_like(a)
        np.add.at(g, (rr[ok], cc[ok]), out.grad[ok])
        t._bump(g)
    t.tape.record(backward)
    return out


def cross_avg(t: Tensor) -> Tensor:
    """Average of the four edge-adjacent neighbors, out-of-bounds as 0.

    The center cell is excluded and the divisor is the constant 4, so a cell
    flanked by two occupied neighbors receives strictly more than a cell with
    one.
    """
    _require_rank2(t, "cross_avg")
    a = t.values
    vals = _shifted(a, *_CROSS_OFFSETS[0])
    for off in _CROSS_OFFSETS[1:]:
        vals = vals + _shifted(a, *off)
    vals = vals / 4
    out = _out(vals, t.tape)
    if t.tape is not None:
        def backward():
            g = _shifted(out.grad, -_CROSS_OFFSETS[0][0], -_CROSS_OFFSETS[0][1])
            for off in _CROSS_OFFSETS[1:]:
                g = g + _shifted(out.grad, -off[0], -off[1])
            t._bump(g / 4)
        t.tape.record(backward)
    return out


def rectifier(t: Tensor) -> Tensor:
    """Elementwise max(x, 0); gradient passes only where x > 0."""
    active = t.values > 0
    out = _out(np.where(active, t.values, 0), t.tape)
    if t.tape is not None:
        def backward():
            t._bump(np.where(active, out.grad, 0))
        t.tape.record(backward)
    return out


def masked_mean(t: Tensor, mask) -> Tensor:
    """Mean of t over mask-1 cells; 0 (with zero gradient) on empty support.

    The mask is a constant: it is not differentiated through.
    """
    m = np.asarray(mask)
    if m.shape != t.values.shape:
        raise DimensionError(f"masked_mean mask shape {m.shape} != tensor {t.values.shape}")
    m = m.astype(bool)
    count = int(m.sum())
    if count == 0:
        val = t.values.dtype.type(0)
    else:
        val = (t.values.dtype.type)(t.values[m].sum() / count)
    out = _out(np.asarray(val, dtype=t.values.dtype), t.tape)
    if t.tape is not None:
        def backward():
            if count:
                g = np.zeros_like(t.values)
                g[m] = out.grad / count
                t._bump(g)
        t.tape.record(backward)
    return out


def multiply(a: Tensor, b) -> Tensor:
    """Elementwise product; b may be a Tensor, ndarray constant, or scalar.

    A scalar (rank-0) Tensor broadcasts against a rank-2 one.
    """
    b_is_tensor = isinstance(b, Tensor)
    bv = b.values if b_is_tensor else np.asarray(b, dtype=a.values.dtype)
    out = _out(a.values * bv, a.tape)
    if a.tape is not None:
        def backward():
            ga = out.grad * bv
            if ga.shape != a.values.shape:
                ga = ga.sum()
            a._bump(ga)
            if b_is_tensor and b.tape is not None:
                gb = out.grad * a.values
                if gb.shape != b.values.shape:
                    gb = gb.sum()
                b._bump(gb)
        a.tape.record(backward)
    return out


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; b may be a Tensor, ndarray constant, or scalar."""
    b_is_tensor = isinstance(b, Tensor)
    bv = b.values if b_is_tensor else np.asarray(b, dtype=a.values.dtype)
    out = _out(a.values + bv, a.tape)
    if a.tape is not None:
        def backward():
            ga = out.grad
            if ga.shape != a.values.shape:
                ga = ga.sum()
            a._bump(ga)
            if b_is_tensor and b.tape is not None:
                gb = out.grad
                if gb.shape != b.values.shape:
                    gb = gb.sum()
                b._bump(gb)
        a.tape.record(backward)
    return out


def subtract(a: Tensor, b) -> Tensor:
    """Elementwise difference; b may be a Tensor, ndarray constant, or scalar."""
    b_is_tensor = isinstance(b, Tensor)
    bv = b.values if b_is_tensor else np.asarray(b, dtype=a.values.dtype)
    out = _out(a.values - bv, a.tape)
    if a.tape is not None:
        def backward():
            ga = out.grad
            if ga.shape != a.values.shape:
                ga = ga.sum()
            a._bump(ga)
            if b_is_tensor and b.tape is not None:
                gb = -out.grad
                if gb.shape != b.values.shape:
                    gb = gb.sum()
                b._bump(gb)
        a.tape.record(backward)
    return out


def guarded_max_normalize(t: Tensor, epsilon: float) -> Tensor:
    """Divide by max(global max, epsilon); the denominator is a constant
    during differentiation.
    """
    if epsilon <= 0:
        raise ConfigError("guarded_max_normalize needs epsilon > 0")
    if (t.values < 0).any():
        raise ContractError("guarded_max_normalize requires nonnegative input")
    denom = max(float(t.values.max()) if t.values.size else 0.0, epsilon)
    out = _out(t.values / denom, t.tape)
    if t.tape is not None:
        def backward():
            t._bump(out.grad / denom)
        t.tape.record(backward)
    return out


def saturate(t: Tensor, epsilon: float) -> Tensor:
    """Elementwise x / max(x, epsilon) on nonnegative input.

    Cells at or above epsilon read exactly 1 (zero gradient); cells below
    ramp linearly with slope 1/epsilon. This leaves fully-reconstructed
    regions with no residue and no gradient.
    """
    if epsilon <= 0:
        raise ConfigError("saturate needs epsilon > 0")
    if (t.values < 0).any():
        raise ContractError("saturate requires nonnegative input")
    below = t.values < epsilon
    out = _out(np.where(below, t.values / epsilon, t.values.dtype.type(1)), t.tape)
    if t.tape is not None:
        def backward():
            t._bump(np.where(below, out.grad / epsilon, 0))
        t.tape.record(backward)
    return out


def l1(t: Tensor) -> Tensor:
    """Sum of absolute values; subgradient sign(x), 0 at exactly 0."""
    out = _out(np.asarray(np.abs(t.values).sum(), dtype=t.values.dtype), t.tape)
    if t.tape is not None:
        def backward():
            t._bump(np.sign(t.values) * out.grad)
        t.tape.record(backward)
    return out


def abs_value(t: Tensor) -> Tensor:
    """Elementwise absolute value; subgradient sign(x), 0 at exactly 0."""
    out = _out(np.abs(t.values), t.tape)
    if t.tape is not None:
        def backward():
            t._bump(np.sign(t.values) * out.grad)
        t.tape.record(backward)
    return out


def softmax_channels(t: Tensor) -> Tensor:
    """Per-pixel softmax over the leading (class) axis of a rank-3 tensor."""
    if t.values.ndim != 3:
        raise DimensionError(f"softmax_channels requires rank 3, got rank {t.values.ndim}")
    shifted = t.values - t.values.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=0, keepdims=True)
    out = _out(p, t.tape)
    if t.tape is not None:
        def backward():
            dot = (out.grad * p).sum(axis=0, keepdims=True)
            t._bump(p * (out.grad - dot))
        t.tape.record(backward)
    return out


def class_probability_map(probs: Tensor, class_index, support) -> Tensor:
    """Gather, per pixel, the probability of the class named by class_index,
    zeroed outside the support mask.

    class_index (H, W) int and support (H, W) bool are constants; the gradient
    scatters into the gathered class coordinates only.
    """
    if probs.values.ndim != 3:
        raise DimensionError("class_probability_map requires rank-3 probabilities")
    idx = np.asarray(class_index)
    sup = np.asarray(support).astype(bool)
    if idx.shape != probs.values.shape[1:] or sup.shape != idx.shape:
        raise DimensionError("class_probability_map index/support shape mismatch")
    gathered = np.take_along_axis(probs.values, idx[None], axis=0)[0]
    vals = np.where(sup, gathered, 0)
    out = _out(vals, probs.tape)
    if probs.tape is not None:
        rr, cc = np.nonzero(sup)
        kk = idx[rr, cc]

        def backward():
            g = np.zeros_like(probs.values)
            np.add.at(g, (kk, rr, cc), out.grad[rr, cc])
            probs._bump(g)
        probs.tape.record(backward)
    return out


@dataclass
class VjpProbe:
    index: tuple
    analytic: float
    numeric: float
    rel_err: float
    skipped: bool = False


@dataclass
class VjpReport:
    max_rel_err: float
    checked: int
    skipped: int
    passed: bool
    tol: float
    probes: list = field(default_factory=list)


def vjp_check(f, x, probes: int, tol: float, seed: int = 0,
              fd_eval=None, h: float = 1e-6) -> VjpReport:
    """Compare a recorded computation's gradient against central finite
    differences at randomly probed coordinates.

    f(values, with_grad) must return (scalar, grad-or-None). fd_eval, if
    given, is a double-precision re-evaluation used for the differences
    (needed when f itself runs in single precision); it defaults to f.
    Probes sitting on a kink (one-sided slopes disagree) are excluded from
    the verdict but reported.
    """
    if probes < 1:
        raise ConfigError("vjp_check needs probes >= 1")
    x = np.asarray(x, dtype=np.float64)
    value, grad = f(x, True)
    if np.ndim(value) != 0:
        raise ContractError("vjp_check requires a scalar-valued computation")
    if grad is None:
        raise ContractError("vjp_check requires f to return its gradient")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != x.shape:
        raise ContractError("gradient shape does not match the input")

    fd = fd_eval if fd_eval is not None else (lambda v: f(v, False)[0])
    rng = np.random.default_rng(seed)
    flat_n = x.size
    picks = rng.choice(flat_n, size=min(probes, flat_n), replace=False)
    gscale = float(np.abs(grad).max()) if grad.size else 0.0

    report = VjpReport(0.0, 0, 0, True, tol)
    f0 = None
    for flat_idx in picks:
        idx = np.unravel_index(int(flat_idx), x.shape)
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fp = float(fd(xp))
        fm = float(fd(xm))
        numeric = (fp - fm) / (2 * h)
        analytic = float(grad[idx])
        denom = max(abs(analytic), abs(numeric), gscale, 1e-12)
        rel = abs(analytic - numeric) / denom
        probe = VjpProbe(idx, analytic, numeric, rel)
        if rel > tol:
            # one-sided slopes disagreeing means the probe straddles a kink
            # (max-pool tie or rectifier boundary); exclude it
            if f0 is None:
                f0 = float(fd(x))
            d_plus = (fp - f0) / h
            d_minus = (f0 - fm) / h
            gap = abs(d_plus - d_minus)
            if gap > 0.1 * max(abs(d_plus), abs(d_minus), 1e-12):
                probe.skipped = True
                report.skipped += 1
                report.probes.append(probe)
                continue
        report.checked += 1
        report.max_rel_err = max(report.max_rel_err, rel)
        report.probes.append(probe)
    report.passed = report.max_rel_err <= tol
    return report

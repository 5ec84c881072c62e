"""Bit-exact file ingestion and serialization, plus synthetic fixtures.

Tensor files use the SFT1 container: magic "SFT1", a little-endian u32 rank
(2 or 3), rank u32 extents, then the payload as little-endian IEEE-754
32-bit floats in row-major order. Label maps are 8-bit single-channel images
(binary P5 graymap or grayscale PNG); pixel value 255 means ignore. Reports
are JSON with every real rendered at 9 significant digits and a fixed key
order, so identical inputs serialize identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .analyzer import AnomalyReport, ConstraintCatalog, LabelMap, StatsTable
from .errors import FormatError, ValidationError
from .loss import PenaltyReport

_MAGIC = b"SFT1"

FIXTURE_KINDS = ("enclosure", "border_block", "broken_bar", "clean", "ring",
                 "random_binary")


# ---------------------------------------------------------------- tensors

def write_tensor(path, t) -> None:
    """Write an array to SFT1. Payload is always float32, whatever the
    compute precision; rank must be 2 or 3."""
    arr = np.ascontiguousarray(getattr(t, "values", t))
    if arr.ndim not in (2, 3):
        raise ValidationError(f"SFT1 stores rank 2 or 3, got rank {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read an SFT1 file back as float32; write -> read is bit-exact."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read tensor {path}: {exc}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header, {len(blob)} bytes (need >= 8)")
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r} at offset 0 (want {_MAGIC!r})")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank not in (2, 3):
        raise FormatError(f"{path}: rank {rank} at offset 4 not in {{2, 3}}")
    head = 8 + 4 * rank
    if len(blob) < head:
        raise FormatError(f"{path}: truncated dims at offset 8")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    need = head + 4 * int(np.prod(dims))
    if len(blob) != need:
        raise FormatError(
            f"{path}: payload is {len(blob) - head} bytes at offset {head}, "
            f"dims {dims} need {need - head}")
    data = np.frombuffer(blob, dtype="<f4", offset=head).reshape(dims)
    return data.copy()


# ------------------------------------------------------------- label maps

def read_label_map(path, num_classes: int | None = None,
                   ignore_value: int = 255) -> LabelMap:
    """Read an 8-bit single-channel image as a LabelMap.

    Multi-channel and 16-bit inputs are rejected; when num_classes is given,
    any out-of-range non-ignore pixel fails validation with its position.
    """
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise FormatError(f"cannot read label image {path}: {exc}")
    if img.mode != "L":
        raise FormatError(
            f"{path}: unsupported image mode {img.mode!r}; need 8-bit single-channel")
    labels = np.asarray(img, dtype=np.int64)
    if num_classes is None:
        live = labels[labels != ignore_value]
        num_classes = int(live.max()) + 1 if live.size else 1
    return LabelMap(labels=labels, num_classes=num_classes, ignore_value=ignore_value)


def write_label_map(path, m: LabelMap) -> None:
    """Write a LabelMap as a binary P5 graymap."""
    labels = m.labels
    if labels.min() < 0 or labels.max() > 255:
        raise ValidationError("label values must fit in 8 bits")
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(labels.astype(np.uint8).tobytes(order="C"))


# ---------------------------------------------------------------- fixtures

@dataclass
class FixtureSpec:
    kind: str
    height: int = 7
    width: int = 7
    classes: tuple = (0, 1, 2)
    gap: int = 1
    seed: int = 0
    density: float = 0.5
    with_scores: bool = False
    confidence: dict | None = None


def _confidences(spec: FixtureSpec, roles: dict) -> dict:
    """Per-class confidence of the synthesized scores.

    Every role gets a distinct confidence. With equal confidences the
    support of a cross-class pair channel is constant-valued and its mean
    can land one ulp below that constant, leaving dust-level channel mass;
    distinct values keep the mean strictly between the two levels so the
    losing class rectifies to exactly zero.
    """
    conf = dict(roles)
    if spec.confidence:
        conf.update(spec.confidence)
    return conf


def synth_scores(m: LabelMap, confidence: dict) -> np.ndarray:
    """Log-probability scores whose softmax hits the requested per-class
    confidence at each pixel, remainder spread over the other classes."""
    c = m.num_classes
    if c < 2:
        raise ValidationError("score synthesis needs >= 2 classes")
    h, w = m.dims
    probs = np.empty((c, h, w), dtype=np.float64)
    for cls in range(c):
        p = confidence.get(cls, 0.9)
        rest = (1.0 - p) / (c - 1)
        at = m.labels == cls
        probs[:, at] = rest
        probs[cls, at] = p
    # ignore pixels get a uniform distribution
    ig = m.labels == m.ignore_value
    if ig.any():
        probs[:, ig] = 1.0 / c
    return np.log(probs)


def gen_fixture(spec: FixtureSpec):
    """Deterministically synthesize a label map with a known property.

    Returns (LabelMap, scores-or-None). Kinds: enclosure (block of class
    classes[1] fully ringed by classes[2] off-border), border_block (the same
    block and ring shifted so the block touches the top border), broken_bar
    (two collinear bars of classes[1] with the requested gap; gap 0 gives the
    solid reference), clean (two border-touching halves, uniform scores, so
    the penalty and its gradient are exactly zero), ring (annulus of
    classes[2] around a hole of classes[0]), random_binary (Bernoulli
    foreground at the requested density).
    """
    if spec.kind not in FIXTURE_KINDS:
        raise ValidationError(f"unknown fixture kind {spec.kind!r}; valid: {FIXTURE_KINDS}")
    h, w = spec.height, spec.width
    bg, inner = spec.classes[0], spec.classes[1] if len(spec.classes) > 1 else 1
    outer = spec.classes[2] if len(spec.classes) > 2 else 2
    labels = np.full((h, w), bg, dtype=np.int64)
    roles = {bg: 0.88, inner: 0.9, outer: 0.84}
    used = (bg, inner, outer)

    if spec.kind == "enclosure":
        if h < 5 or w < 5:
            raise ValidationError("enclosure fixture needs dims >= 5x5")
        labels[1:h - 1, 1:w - 1] = outer
        labels[2:h - 2, 2:w - 2] = inner
    elif spec.kind == "border_block":
        if h < 5 or w < 5:
            raise ValidationError("border_block fixture needs dims >= 5x5")
        labels[0:h - 3, 1:w - 1] = outer
        labels[0:h - 4, 2:w - 2] = inner
    elif spec.kind == "broken_bar":
        if w < spec.gap + 4 or h < 3:
            raise ValidationError(f"broken_bar needs width >= gap+4, got {h}x{w} gap {spec.gap}")
        row = h // 2
        half = (w - 2 - spec.gap) // 2
        labels[row, 1:1 + half] = inner
        labels[row, 1 + half + spec.gap:1 + 2 * half + spec.gap] = inner
        roles = {bg: 0.8, inner: 0.9}
        used = (bg, inner)
    elif spec.kind == "clean":
        labels[:, w // 2:] = inner
        used = (bg, inner)
    elif spec.kind == "ring":
        if h < 5 or w < 5:
            raise ValidationError("ring fixture needs dims >= 5x5")
        labels[1:h - 1, 1:w - 1] = outer
        labels[2:h - 2, 2:w - 2] = bg
        used = (bg, outer)
    elif spec.kind == "random_binary":
        rng = np.random.default_rng(spec.seed)
        labels = (rng.random((h, w)) < spec.density).astype(np.int64) * inner
        roles = {bg: 0.8, inner: 0.9}
        used = (bg, inner)

    num_classes = max(int(labels.max()) + 1, max(used) + 1, 2)
    m = LabelMap(labels=labels, num_classes=num_classes)
    if not spec.with_scores:
        return m, None
    if spec.kind == "clean":
        # uniform scores; with two classes the class probabilities are the
        # dyadic 0.5 so every channel mean is exact and all mass cancels
        scores = np.zeros((num_classes, h, w), dtype=np.float64)
    else:
        scores = synth_scores(m, _confidences(spec, roles))
    return m, scores


# ------------------------------------------------------------ JSON output

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ValidationError("cannot serialize non-finite real")
        return f"{float(value):.8e}"  # 9 significant digits
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, dict):
        inner = ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ValidationError(f"cannot serialize {type(value).__name__}")


def render_json(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, 9-digit reals."""
    return _fmt(obj)


def penalty_report_dict(report: PenaltyReport) -> dict:
    def masses(side):
        return [[i, j, mass] for (i, j), mass in report.per_pair_mass.get(side, ())
                if mass != 0.0]
    out = {
        "l_opening": report.l_opening,
        "l_dilation": report.l_dilation,
        "alpha": report.alpha,
        "penalty": report.penalty,
        "precision": report.precision,
        "per_pair_mass": {"opening": masses("opening"), "dilation": masses("dilation")},
        "timing": {k: float(v) for k, v in report.timing.items()},
    }
    if report.total is not None:
        out["total"] = report.total
    return out


def anomaly_report_dict(report: AnomalyReport) -> dict:
    return {
        "enclosures": [
            {"inner": e.inner, "outer": e.outer, "size": e.component.size,
             "bbox": list(e.component.bbox)}
            for e in report.enclosures],
        "discontinuities": [
            {"cls": cls, "gt_components": g, "pred_components": p}
            for cls, g, p in report.discontinuities],
        "summary": report.summary,
    }


def stats_dict(stats: StatsTable) -> dict:
    return {
        "co_occurring_pairs": stats.co_occurring_pairs,
        "constraint_pairs": stats.constraint_pairs,
        "infeasible_pairs": stats.infeasible_pairs,
        "constraint_pct": stats.constraint_pct,
        "non_constraint_pct": stats.non_constraint_pct,
        "feasible_pct": stats.feasible_pct,
        "infeasible_pct": stats.infeasible_pct,
    }


def catalog_dict(catalog: ConstraintCatalog) -> dict:
    return {
        "num_classes": catalog.num_classes,
        "threshold": catalog.threshold,
        "corpus_id": catalog.corpus_id,
        "pairs": [
            {"inner": i, "outer": j,
             "occurrences": catalog.occurrence_count.get((i, j), 0),
             "image_count": catalog.image_count.get((i, j), 0),
             "co_occurs": catalog.co_occurs((i, j)),
             "verdict": catalog.verdict((i, j))}
            for (i, j) in catalog.pairs()],
    }


def read_catalog(path) -> ConstraintCatalog:
    import json
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read catalog {path}: {exc}")
    except Exception as exc:
        raise FormatError(f"catalog {path} is not valid JSON: {exc}")
    try:
        catalog = ConstraintCatalog(
            num_classes=int(raw["num_classes"]), threshold=int(raw["threshold"]),
            corpus_id=str(raw.get("corpus_id", "")))
        for row in raw["pairs"]:
            key = (int(row["inner"]), int(row["outer"]))
            if row["occurrences"]:
                catalog.occurrence_count[key] = int(row["occurrences"])
            if row["image_count"]:
                catalog.image_count[key] = int(row["image_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"catalog {path} is malformed: {exc}")
    return catalog


def write_report(report, path, format: str = "json") -> None:
    """Serialize a report. format="json" accepts any report dataclass or a
    plain dict; format="overlay_image" needs (LabelMap, anomaly-mask) and
    renders anomaly pixels opaque red over the grayscale labels."""
    if format == "json":
        if isinstance(report, PenaltyReport):
            payload = penalty_report_dict(report)
        elif isinstance(report, AnomalyReport):
            payload = anomaly_report_dict(report)
        elif isinstance(report, StatsTable):
            payload = stats_dict(report)
        elif isinstance(report, ConstraintCatalog):
            payload = catalog_dict(report)
        elif isinstance(report, dict):
            payload = report
        else:
            raise ValidationError(f"cannot serialize report type {type(report).__name__}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(render_json(payload))
            fh.write("\n")
    elif format == "overlay_image":
        m, anomaly = report
        base = _grayscale_labels(m)
        rgb = np.stack([base, base, base], axis=-1)
        mask = np.asarray(anomaly).astype(bool)
        rgb[mask] = (255, 0, 0)
        Image.fromarray(rgb, mode="RGB").save(path)
    else:
        raise ValidationError(f"unknown report format {format!r}")


def _grayscale_labels(m: LabelMap) -> np.ndarray:
    """Spread class ids over the 8-bit range for a readable rendering."""
    span = max(m.num_classes - 1, 1)
    gray = (m.labels.astype(np.float64) / span * 220.0).clip(0, 255)
    gray[m.labels == m.ignore_value] = 255
    return gray.astype(np.uint8)

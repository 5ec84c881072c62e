"""Exact feasibility analysis of integer label maps.

Non-differentiable counterpart of the morphology passes: connected
components, enclosure detection, discontinued-segment counting, constraint
catalogs mined from a corpus, and corpus-level statistics. Also provides the
flood-fill border-reachability oracle the differentiable opening is tested
against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CatalogError, DimensionError, ValidationError

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass
class LabelMap:
    labels: np.ndarray
    num_classes: int
    ignore_value: int = 255

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise DimensionError(f"label map must be rank 2, got rank {self.labels.ndim}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValidationError("label map must hold integers")
        live = self.labels[self.labels != self.ignore_value]
        if live.size and (live.min() < 0 or live.max() >= self.num_classes):
            bad = int(live[(live < 0) | (live >= self.num_classes)][0])
            pos = np.argwhere((self.labels != self.ignore_value) &
                              ((self.labels < 0) | (self.labels >= self.num_classes)))[0]
            raise ValidationError(
                f"label {bad} at pixel ({pos[0]}, {pos[1]}) outside [0, {self.num_classes})")

    @property
    def dims(self):
        return self.labels.shape

    def present_classes(self):
        vals = np.unique(self.labels)
        return [int(v) for v in vals if v != self.ignore_value]


@dataclass
class Component:
    cls: int
    size: int
    mask: np.ndarray
    border_touching: bool
    bbox: tuple  # (r0, c0, r1, c1) inclusive


@dataclass
class Enclosure:
    inner: int
    outer: int
    component: Component

    @property
    def pair(self):
        return (self.inner, self.outer)


@dataclass
class ConstraintCatalog:
    num_classes: int
    threshold: int
    corpus_id: str
    occurrence_count: dict = field(default_factory=dict)  # (i, j) -> enclosures
    image_count: dict = field(default_factory=dict)       # (i, j) -> co-occurrence images

    def pairs(self):
        c = self.num_classes
        return [(i, j) for i in range(c) for j in range(c) if j != i]

    def verdict(self, pair) -> str:
        occ = self.occurrence_count.get(pair, 0)
        if occ == 0:
            return "non_constraint"
        if occ <= self.threshold:
            return "infeasible"
        return "feasible"

    def verdicts(self) -> dict:
        return {pair: self.verdict(pair) for pair in self.pairs()}

    def co_occurs(self, pair) -> bool:
        return self.image_count.get(pair, 0) >= 1


@dataclass
class StatsTable:
    co_occurring_pairs: int
    constraint_pairs: int
    infeasible_pairs: int
    constraint_pct: float
    non_constraint_pct: float
    feasible_pct: float
    infeasible_pct: float


def connected_components(m: LabelMap, cls: int, connectivity: int) -> list:
    """Maximal connected sets of cls-labeled pixels."""
    if cls >= m.num_classes or cls < 0:
        raise ValidationError(f"class {cls} outside [0, {m.num_classes})")
    structure = _STRUCTURES[connectivity]
    binary = m.labels == cls
    labeled, count = ndimage.label(binary, structure=structure)
    out = []
    if count == 0:
        return out
    slices = ndimage.find_objects(labeled)
    border_ids = np.unique(np.concatenate([
        labeled[0, :], labeled[-1, :], labeled[:, 0], labeled[:, -1]]))
    border_ids = set(int(v) for v in border_ids if v > 0)
    for comp_id, sl in enumerate(slices, start=1):
        mask = labeled == comp_id
        r0, c0 = sl[0].start, sl[1].start
        r1, c1 = sl[0].stop - 1, sl[1].stop - 1
        out.append(Component(cls=cls, size=int(mask.sum()), mask=mask,
                             border_touching=comp_id in border_ids,
                             bbox=(r0, c0, r1, c1)))
    return out


def find_enclosures(m: LabelMap, connectivity: int = 8) -> list:
    """Components fully surrounded by a single other class.

    A component of class i is enclosed by j when it touches no border pixel
    and every non-ignore pixel edge-adjacent to it (outside itself) carries
    label j. Ignore pixels are transparent: they neither break nor form an
    enclosure, and a component whose entire neighborhood is ignore encloses
    nothing.
    """
    out = []
    cross = _STRUCTURES[4]
    for cls in m.present_classes():
        for comp in connected_components(m, cls, connectivity):
            if comp.border_touching:
                continue
            shell = ndimage.binary_dilation(comp.mask, structure=cross) & ~comp.mask
            neighbors = m.labels[shell]
            neighbors = neighbors[neighbors != m.ignore_value]
            if neighbors.size == 0:
                continue
            uniq = np.unique(neighbors)
            if uniq.size == 1 and int(uniq[0]) != cls:
                out.append(Enclosure(inner=cls, outer=int(uniq[0]), component=comp))
    return out


def count_discontinuities(gt: LabelMap, pred: LabelMap, connectivity: int = 8) -> list:
    """Per-class component counts for both maps; anomalous when the
    prediction split a class into more pieces than the ground truth has.

    Returns [(cls, gt_count, pred_count, anomalous), ...] for every class
    present in either map.
    """
    if gt.dims != pred.dims:
        raise DimensionError(f"label map dims differ: {gt.dims} vs {pred.dims}")
    structure = _STRUCTURES[connectivity]
    classes = sorted(set(gt.present_classes()) | set(pred.present_classes()))
    rows = []
    for cls in classes:
        _, gt_n = ndimage.label(gt.labels == cls, structure=structure)
        _, pred_n = ndimage.label(pred.labels == cls, structure=structure)
        rows.append((cls, int(gt_n), int(pred_n), pred_n > gt_n))
    return rows


def build_catalog(corpus: list, infeasibility_threshold: int = 3,
                  connectivity: int = 8, corpus_id: str = "") -> ConstraintCatalog:
    """Mine enclosure occurrences over a corpus of label maps.

    Verdict per ordered pair: non_constraint when never enclosed; infeasible
    when enclosed but at most `infeasibility_threshold` times (rare enough to
    be labeling noise, hence physically impossible); feasible beyond that.
    """
    if not corpus:
        raise ValidationError("catalog needs a non-empty corpus")
    num_classes = corpus[0].num_classes
    for m in corpus:
        if m.num_classes != num_classes:
            raise ValidationError("corpus maps disagree on num_classes")
    catalog = ConstraintCatalog(
        num_classes=num_classes, threshold=infeasibility_threshold,
        corpus_id=corpus_id or f"memory:{len(corpus)} maps")
    for m in corpus:
        present = m.present_classes()
        for i in present:
            for j in present:
                if i != j:
                    catalog.image_count[(i, j)] = catalog.image_count.get((i, j), 0) + 1
        for enc in find_enclosures(m, connectivity):
            key = (enc.inner, enc.outer)
            catalog.occurrence_count[key] = catalog.occurrence_count.get(key, 0) + 1
    return catalog


def empirical_stats(subject, catalog: ConstraintCatalog) -> StatsTable:
    """Constraint statistics over co-occurring ordered pairs.

    subject may be the catalog itself (scoring the mined corpus: verdicts are
    read off directly) or a second corpus of label maps (scoring predictions:
    a pair counts as constraint when the subject exhibits an enclosure for
    it, and as infeasible unless the reference catalog calls it feasible).
    """
    if isinstance(subject, ConstraintCatalog):
        co = [p for p in catalog.pairs() if catalog.co_occurs(p)]
        constraint = [p for p in co if catalog.verdict(p) != "non_constraint"]
        infeasible = [p for p in constraint if catalog.verdict(p) == "infeasible"]
    else:
        seen_pairs = {}
        enclosed = set()
        for m in subject:
            present = m.present_classes()
            for i in present:
                for j in present:
                    if i != j:
                        seen_pairs[(i, j)] = True
            for enc in find_enclosures(m):
                enclosed.add((enc.inner, enc.outer))
        co = sorted(seen_pairs)
        constraint = [p for p in co if p in enclosed]
        infeasible = [p for p in constraint if catalog.verdict(p) != "feasible"]

    n_co = len(co)
    n_con = len(constraint)
    n_inf = len(infeasible)
    constraint_pct = 100.0 * n_con / n_co if n_co else 0.0
    feasible_pct = 100.0 * (n_con - n_inf) / n_con if n_con else 0.0
    infeasible_pct = 100.0 * n_inf / n_con if n_con else 0.0
    return StatsTable(
        co_occurring_pairs=n_co, constraint_pairs=n_con, infeasible_pairs=n_inf,
        constraint_pct=constraint_pct, non_constraint_pct=100.0 - constraint_pct,
        feasible_pct=feasible_pct, infeasible_pct=infeasible_pct)


@dataclass
class AnomalyReport:
    """Per-image findings; discontinuities list only classes whose prediction
    has strictly more components than the ground truth."""
    enclosures: list
    discontinuities: list  # (cls, gt_count, pred_count)

    @property
    def summary(self) -> dict:
        return {"enclosures": len(self.enclosures),
                "discontinuities": len(self.discontinuities)}

    @property
    def clean(self) -> bool:
        return not self.enclosures and not self.discontinuities


def compare_maps(gt: LabelMap, pred: LabelMap, connectivity: int = 8) -> AnomalyReport:
    """Enclosures of the prediction plus its discontinuities against gt."""
    enclosures = find_enclosures(pred, connectivity)
    rows = count_discontinuities(gt, pred, connectivity)
    split = [(cls, gt_n, pred_n) for cls, gt_n, pred_n, bad in rows if bad]
    return AnomalyReport(enclosures=enclosures, discontinuities=split)


def border_reachability_oracle(binary, connectivity: int = 8) -> np.ndarray:
    """Foreground pixels NOT flood-reachable from any border foreground pixel.

    Independent reference for the differentiable opening: on binary input
    with a sufficient iteration budget, the opening anomaly support must
    equal this set exactly.
    """
    b = np.asarray(binary)
    if not np.isin(b, (0, 1)).all():
        raise ValidationError("oracle input must be binary {0, 1}")
    fg = b.astype(bool)
    labeled, count = ndimage.label(fg, structure=_STRUCTURES[connectivity])
    if count == 0:
        return np.zeros_like(fg)
    border_ids = np.unique(np.concatenate([
        labeled[0, :], labeled[-1, :], labeled[:, 0], labeled[:, -1]]))
    border_ids = border_ids[border_ids > 0]
    reachable = np.isin(labeled, border_ids)
    return fg & ~reachable

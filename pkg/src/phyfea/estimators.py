"""Estimator-style wrappers around the engine.

ConstraintMiner mines a constraint catalog from a corpus of label maps;
FeasibilityPenalty scores batches of class-score tensors. Both follow the
fit/transform protocol so they compose with pipelines and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .analyzer import ConstraintCatalog, LabelMap, build_catalog, empirical_stats
from .config import EngineConfig
from .errors import ValidationError
from .loss import compute_penalty


class ConstraintMiner(BaseEstimator):
    """Mine ordered-pair containment constraints from ground-truth label maps.

    After fit, ``catalog_`` holds the mined ConstraintCatalog and
    ``stats_`` the corpus-level summary over co-occurring pairs.
    """

    def __init__(self, num_classes=None, infeasibility_threshold=3,
                 connectivity=8, ignore_value=255):
        self.num_classes = num_classes
        self.infeasibility_threshold = infeasibility_threshold
        self.connectivity = connectivity
        self.ignore_value = ignore_value

    def _as_label_maps(self, X):
        maps = []
        for item in X:
            if isinstance(item, LabelMap):
                maps.append(item)
                continue
            arr = np.asarray(item)
            nc = self.num_classes
            if nc is None:
                valid = arr[arr != self.ignore_value]
                nc = int(valid.max()) + 1 if valid.size else 1
            maps.append(LabelMap(arr, nc, self.ignore_value))
        if self.num_classes is None and maps:
            nc = max(m.num_classes for m in maps)
            maps = [LabelMap(m.labels, nc, m.ignore_value) for m in maps]
        return maps

    def fit(self, X, y=None):
        maps = self._as_label_maps(X)
        self.catalog_ = build_catalog(maps, self.infeasibility_threshold,
                                      self.connectivity)
        self.stats_ = empirical_stats(self.catalog_, self.catalog_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "catalog_"):
            raise NotFittedError(
                "ConstraintMiner must be fitted before use; call fit first")

    def transform(self, X) -> ConstraintCatalog:
        """Return the mined catalog; X is ignored after fit."""
        self._check_fitted()
        return self.catalog_

    def predict(self, X):
        """Per-map anomaly flags: True when a map violates the catalog.

        A map violates when it contains an enclosure whose ordered pair the
        catalog marks infeasible.
        """
        self._check_fitted()
        from .analyzer import find_enclosures
        flags = []
        for m in self._as_label_maps(X):
            bad = False
            for enc in find_enclosures(m, self.connectivity):
                if self.catalog_.verdict(enc.pair) == "infeasible":
                    bad = True
                    break
            flags.append(bad)
        return np.asarray(flags, dtype=bool)


class FeasibilityPenalty(BaseEstimator):
    """Batch scorer: transform maps (n, C, H, W) scores to (n, 3) losses.

    Columns are [opening loss, dilation loss, combined penalty]. Stateless
    apart from hyperparameters; fit only validates them.
    """

    def __init__(self, alpha=1e-5, epsilon=1e-8, iterations_override=None,
                 losses=("opening", "dilation"), precision="double",
                 bg_tol=1e-6, workers=None):
        self.alpha = alpha
        self.epsilon = epsilon
        self.iterations_override = iterations_override
        self.losses = losses
        self.precision = precision
        self.bg_tol = bg_tol
        self.workers = workers

    def _config(self) -> EngineConfig:
        return EngineConfig(alpha=self.alpha, epsilon=self.epsilon,
                            iterations_override=self.iterations_override,
                            losses=tuple(self.losses), precision=self.precision,
                            bg_tol=self.bg_tol, workers=self.workers).validate()

    def fit(self, X=None, y=None):
        self._config()
        self.fitted_ = True
        return self

    def transform(self, X):
        batch = np.asarray(X)
        if batch.ndim != 4:
            raise ValidationError(
                f"expected scores shaped (n, C, H, W), got rank {batch.ndim}")
        cfg = self._config()
        out = np.empty((batch.shape[0], 3), dtype=np.float64)
        for row, scores in enumerate(batch):
            report = compute_penalty(scores, cfg)
            out[row] = (report.l_opening, report.l_dilation, report.penalty)
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)

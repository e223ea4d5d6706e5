"""Grid search of detector hyper-parameters on a validation set."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from sempca import detect_cluster, detect_pca
from sempca.errors import SemPCAError
from sempca.eval.metrics import metrics

logger = logging.getLogger(__name__)

DEFAULT_VARIANCE_FRACTIONS = (0.80, 0.90, 0.95, 0.98, 0.99)
DEFAULT_DELTAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


class PcaFamily:
    """SPE detector; hyper-parameters are the subspace size and the threshold.

    ``train_on`` selects the rows used for fitting: ``all`` (unsupervised,
    the default) or ``normal``.
    """

    name = "pca"

    def __init__(self, mode: str = "semantic", train_on: str = "all", q_alpha: float = 0.001):
        if train_on not in ("all", "normal"):
            raise ValueError(f"train_on must be 'all' or 'normal', got {train_on!r}")
        self.mode = mode
        self.train_on = train_on
        self.q_alpha = q_alpha

    def default_grid(self) -> dict[str, Any]:
        return {"variance_fraction": list(DEFAULT_VARIANCE_FRACTIONS)}

    def _rows(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return X[~y] if self.train_on == "normal" else X

    def fit(self, X: np.ndarray, y: np.ndarray, params: dict[str, Any]) -> detect_pca.PcaModel:
        rows = self._rows(X, y)
        if params.get("k") is not None:
            model = detect_pca.fit(rows, k=int(params["k"]), mode=self.mode)
        else:
            model = detect_pca.fit(rows, variance_fraction=params.get("variance_fraction", 0.95), mode=self.mode)
        theta = params.get("threshold", "q_statistic")
        if theta == "q_statistic":
            theta = detect_pca.q_statistic_threshold(model, self.q_alpha)
        return model.with_threshold(float(theta))

    def candidates(self, X: np.ndarray, y: np.ndarray, grid: dict[str, Any]) -> Iterator[tuple[dict, Any]]:
        rows = self._rows(X, y)
        if "k" in grid:
            sizes = [("k", int(k)) for k in grid["k"]]
        else:
            sizes = [("variance_fraction", float(f)) for f in grid.get("variance_fraction", DEFAULT_VARIANCE_FRACTIONS)]
        for key, value in sizes:
            params = {key: value}
            try:
                if key == "k":
                    model = detect_pca.fit(rows, k=value, mode=self.mode)
                else:
                    model = detect_pca.fit(rows, variance_fraction=value, mode=self.mode)
            except (SemPCAError, ValueError, np.linalg.LinAlgError) as exc:
                yield params, exc
                continue
            if "threshold" in grid:
                thetas = [
                    detect_pca.q_statistic_threshold(model, self.q_alpha) if t == "q_statistic" else float(t)
                    for t in grid["threshold"]
                ]
            else:
                thetas = detect_pca.threshold_candidates(model, rows, self.q_alpha)
            for theta in thetas:
                yield {**params, "k": model.k, "threshold": theta}, model.with_threshold(theta)

    @staticmethod
    def tie_key(params: dict[str, Any]) -> tuple:
        # larger is preferred: smaller k, then larger threshold
        return (-params.get("k", math.inf), params.get("threshold", -math.inf))

    @staticmethod
    def predict(model, X: np.ndarray) -> np.ndarray:
        return np.atleast_1d(model.predict(X)[0])


class ClusterFamily:
    """Nearest-centroid detector over clusters of normal training vectors."""

    name = "cluster"

    def __init__(self, mode: str = "weighted_count", max_train: int = 10_000, seed: int = 0):
        self.mode = mode
        self.max_train = max_train
        self.seed = seed

    def default_grid(self) -> dict[str, Any]:
        return {"delta": list(DEFAULT_DELTAS)}

    def _normal_rows(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        rows = X[~y]
        if len(rows) > self.max_train:
            rng = np.random.default_rng(self.seed)
            rows = rows[np.sort(rng.choice(len(rows), size=self.max_train, replace=False))]
        return rows

    def fit(self, X: np.ndarray, y: np.ndarray, params: dict[str, Any]) -> detect_cluster.ClusterModel:
        rows = self._normal_rows(X, y)
        return detect_cluster.fit_clusters(rows, float(params["delta"]), mode=self.mode, max_train=self.max_train)

    def candidates(self, X: np.ndarray, y: np.ndarray, grid: dict[str, Any]) -> Iterator[tuple[dict, Any]]:
        rows = self._normal_rows(X, y)
        try:
            tree = detect_cluster.dendrogram_for(rows) if len(rows) else None
        except (ValueError, MemoryError) as exc:
            for delta in grid.get("delta", DEFAULT_DELTAS):
                yield {"delta": float(delta)}, exc
            return
        for delta in grid.get("delta", DEFAULT_DELTAS):
            params = {"delta": float(delta)}
            try:
                yield params, detect_cluster.fit_clusters(rows, float(delta), mode=self.mode, tree=tree, max_train=len(rows) or 1)
            except (SemPCAError, ValueError) as exc:
                yield params, exc

    @staticmethod
    def tie_key(params: dict[str, Any]) -> tuple:
        return (-params.get("delta", math.inf),)

    @staticmethod
    def predict(model, X: np.ndarray) -> np.ndarray:
        return model.predict(X)[0]


@dataclass
class SearchResult:
    best_params: dict[str, Any]
    model: Any
    best_f1: float
    log: list[dict[str, Any]] = field(default_factory=list)


def grid_search(
    family,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    grid: Optional[dict[str, Any]] = None,
) -> SearchResult:
    """Return the grid point with the highest validation F1.

    Ties go to the family's preference (smaller k, then larger threshold for
    PCA; smaller delta for clustering), then to the earlier grid point. A
    point whose fit fails scores -inf.
    """
    grid = family.default_grid() if grid is None else grid
    y_train = np.asarray(y_train, dtype=bool)
    y_val = np.asarray(y_val, dtype=bool)
    best, best_key = None, None
    log = []
    for params, model in family.candidates(X_train, y_train, grid):
        if isinstance(model, Exception):
            score = -math.inf
            logger.warning("grid point %s failed: %s", params, model)
        else:
            score = metrics(family.predict(model, X_val), y_val).f1
        log.append({"params": params, "f1": score})
        logger.debug("grid point %s: val F1 %.4f", params, score)
        key = (score, family.tie_key(params))
        if best_key is None or key > best_key:
            best, best_key = (params, model), key
    if best is None:
        raise ValueError("grid is empty")
    if isinstance(best[1], Exception):
        raise best[1]
    return SearchResult(best[0], best[1], best_key[0], log)


def score_point(family, model, X: np.ndarray, y: Sequence[bool]) -> float:
    return metrics(family.predict(model, X), np.asarray(y, dtype=bool)).f1

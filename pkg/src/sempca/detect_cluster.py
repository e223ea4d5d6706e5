"""LogCluster-style detection: cluster normal training vectors, flag outliers.

Normal training vectors are grouped by average-linkage agglomerative
clustering under cosine distance, with the dendrogram cut at ``delta``. An
incoming vector whose cosine distance to every centroid exceeds ``delta`` does
not belong to any normal group and is reported as anomalous.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from sempca.errors import DimensionMismatch, EmptyTraining, NonFiniteInput
from sempca.io import npz_bytes, write_bytes

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
MAX_DISTANCE = 2.0
# rounding leaves parallel vectors a few ulps apart; treat that as identical
SNAP = 1e-12


def cosine_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances in [0, 2].

    Zero vectors have no direction: two zero vectors are at distance 0, a
    zero vector and a non-zero one at the maximum distance 2.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    za, zb = na == 0, nb == 0
    sim = (A / np.where(za, 1, na)[:, None]) @ (B / np.where(zb, 1, nb)[:, None]).T
    dist = np.clip(1.0 - sim, 0.0, MAX_DISTANCE)
    dist[dist < SNAP] = 0.0
    dist[za[:, None] ^ zb[None, :]] = MAX_DISTANCE
    dist[za[:, None] & zb[None, :]] = 0.0
    return dist


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centroids: np.ndarray  # (c, d)
    delta: float
    radii: np.ndarray  # (c,) max member-to-centroid distance at fit time
    mode: str = "weighted_count"

    def with_delta(self, delta: float) -> "ClusterModel":
        return replace(self, delta=float(delta))

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.centroids.shape[1]:
            raise DimensionMismatch(f"expected vectors of length {self.centroids.shape[1]}, got {X.shape[1]}")
        return cosine_distances(X, self.centroids).min(axis=1)

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (anomalous, score) for each row; score is the nearest-centroid distance."""
        scores = self.score(X)
        return scores > self.delta, scores

    def to_bytes(self, extra: Optional[dict] = None) -> bytes:
        meta = {**(extra or {}), "version": MODEL_VERSION, "kind": "cluster", "mode": self.mode, "delta": self.delta}
        return npz_bytes(meta=np.array(json.dumps(meta, sort_keys=True)), centroids=self.centroids, radii=self.radii)

    def save(self, path: str | Path, extra: Optional[dict] = None) -> None:
        write_bytes(path, self.to_bytes(extra))

    @classmethod
    def load(cls, path: str | Path) -> "ClusterModel":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("kind") != "cluster" or meta.get("version") != MODEL_VERSION:
                raise ValueError(f"{path}: not a version {MODEL_VERSION} cluster model")
            return cls(data["centroids"].copy(), meta["delta"], data["radii"].copy(), meta["mode"])


def cluster_labels(X: np.ndarray, delta: float, tree: Optional[np.ndarray] = None) -> np.ndarray:
    """Flat cluster index per row (0-based, numbered by first appearance)."""
    if len(X) == 1:
        return np.zeros(1, dtype=np.int64)
    if tree is None:
        tree = dendrogram_for(X)
    raw = fcluster(tree, t=delta, criterion="distance")
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse]


def fit_clusters(
    normal_vectors: np.ndarray,
    delta: float,
    mode: str = "weighted_count",
    max_train: int = 10_000,
    seed: int = 0,
    tree: Optional[np.ndarray] = None,
) -> ClusterModel:
    """Cluster normal-only training vectors and keep the cluster centroids.

    Above ``max_train`` rows a uniform subsample (seeded) is clustered, since
    the distance matrix is quadratic in the number of rows. A precomputed
    ``tree`` (from :func:`dendrogram_for` on the same rows) skips the linkage
    step, which makes sweeping ``delta`` cheap.
    """
    X = np.atleast_2d(np.asarray(normal_vectors, dtype=np.float64))
    if X.size == 0 or len(X) == 0:
        raise EmptyTraining("no normal training vectors")
    if not 0 <= delta <= MAX_DISTANCE:
        raise ValueError(f"delta must be in [0, 2], got {delta}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("training vectors contain NaN or Inf")
    if len(X) > max_train:
        if tree is not None:
            raise ValueError("a precomputed tree cannot be combined with subsampling")
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(len(X), size=max_train, replace=False))]
        logger.info("subsampled %d training vectors for clustering", max_train)

    labels = cluster_labels(X, delta, tree)
    n_clusters = int(labels.max()) + 1
    centroids = np.stack([X[labels == c].mean(axis=0) for c in range(n_clusters)])
    radii = np.array([cosine_distances(X[labels == c], centroids[c : c + 1]).max() for c in range(n_clusters)])
    return ClusterModel(centroids, float(delta), radii, mode)


def predict_cluster(model: ClusterModel, v: np.ndarray) -> tuple[bool, float]:
    flagged, scores = model.predict(v)
    return bool(flagged[0]), float(scores[0])


def zero_vector_mask(X: np.ndarray) -> np.ndarray:
    return ~np.any(np.atleast_2d(X), axis=1)


def dendrogram_for(X: np.ndarray) -> Optional[np.ndarray]:
    """Average-linkage merge tree of ``X`` (None for a single row); handy for sweeping delta."""
    if len(X) < 2:
        return None
    dist = cosine_distances(X, X)
    return linkage(dist[np.triu_indices(len(X), k=1)], method="average")

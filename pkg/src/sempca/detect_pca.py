"""PCA subspace anomaly detection with the squared prediction error (SPE).

The top-k principal components of the (mean-centered) training vectors span
the normal space; everything orthogonal to it is the abnormal space. The
anomaly score of a vector is the squared norm of its projection onto the
abnormal space, and a vector is anomalous when that score exceeds a threshold.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import NormalDist
from typing import Optional

import numpy as np

from sempca.errors import DegenerateDataWarning, DegenerateResidual, DimensionMismatch, NonFiniteInput, ThresholdUnset
from sempca.io import npz_bytes, write_bytes

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
PERCENTILES = (90.0, 95.0, 97.5, 99.0, 99.5, 99.9)


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (d, k), orthonormal columns
    eigenvalues: np.ndarray  # (d,), full spectrum, non-increasing
    threshold: Optional[float] = None
    mode: str = "semantic"

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    def with_threshold(self, threshold: float) -> "PcaModel":
        if threshold < 0 or not np.isfinite(threshold):
            raise ValueError(f"threshold must be finite and >= 0, got {threshold}")
        return replace(self, threshold=float(threshold))

    def residual(self, X: np.ndarray) -> np.ndarray:
        """Projection of (X - mean) onto the abnormal space, i.e. (I - PP^T)(x - mu)."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise DimensionMismatch(f"expected vectors of length {self.d}, got {X.shape[-1]}")
        Xc = X - self.mean
        return Xc - (Xc @ self.components) @ self.components.T

    def spe(self, X: np.ndarray) -> np.ndarray | float:
        r = self.residual(X)
        out = np.einsum("...i,...i->...", r, r)
        return float(out) if np.ndim(out) == 0 else out

    def predict(self, X: np.ndarray) -> tuple[np.ndarray | bool, np.ndarray | float]:
        """Return (anomalous, score); anomalous iff score is strictly above the threshold."""
        if self.threshold is None:
            raise ThresholdUnset("set a threshold before predicting")
        score = self.spe(X)
        flagged = score > self.threshold
        return (bool(flagged) if np.ndim(flagged) == 0 else flagged), score

    def to_bytes(self, extra: Optional[dict] = None) -> bytes:
        """Serialized model; ``extra`` entries are stored alongside the metadata."""
        meta = {
            **(extra or {}),
            "version": MODEL_VERSION,
            "kind": "pca",
            "mode": self.mode,
            "d": self.d,
            "k": self.k,
            "threshold": self.threshold,
        }
        return npz_bytes(
            meta=np.array(json.dumps(meta, sort_keys=True)),
            mean=self.mean,
            eigenvalues=self.eigenvalues,
            components=np.asfortranarray(self.components),
        )

    def save(self, path: str | Path, extra: Optional[dict] = None) -> None:
        write_bytes(path, self.to_bytes(extra))

    @classmethod
    def load(cls, path: str | Path) -> "PcaModel":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("kind") != "pca" or meta.get("version") != MODEL_VERSION:
                raise ValueError(f"{path}: not a version {MODEL_VERSION} PCA model")
            return cls(
                mean=data["mean"].copy(),
                components=np.array(data["components"], order="F"),
                eigenvalues=data["eigenvalues"].copy(),
                threshold=meta["threshold"],
                mode=meta["mode"],
            )


def _choose_k(eigenvalues: np.ndarray, variance_fraction: float) -> int:
    total = eigenvalues.sum()
    if total <= 0:
        return 1
    ratio = np.cumsum(eigenvalues) / total
    # guard against ratio ending at 1 - eps
    return int(min(np.searchsorted(ratio, variance_fraction - 1e-12) + 1, len(eigenvalues)))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1
    return vectors * signs


def fit(
    X: np.ndarray,
    k: Optional[int] = None,
    variance_fraction: float = 0.95,
    mode: str = "semantic",
) -> PcaModel:
    """Fit the principal subspace of the rows of ``X``.

    ``k`` fixes the number of components; otherwise the smallest k whose
    eigenvalues explain ``variance_fraction`` of the total variance is used.
    When there are more dimensions than samples the n-by-n Gram matrix is
    decomposed instead of the covariance; k is then capped at the number of
    non-zero eigenvalues.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError(f"need at least 2 samples and 1 dimension, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("training vectors contain NaN or Inf")
    if k is not None and not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if k is None and not 0 < variance_fraction <= 1:
        raise ValueError(f"variance_fraction must be in (0, 1], got {variance_fraction}")

    mean = X.mean(axis=0)
    Xc = X - mean

    if d <= n:
        cov = Xc.T @ Xc / (n - 1)
        lam, vecs = np.linalg.eigh(cov)
        lam, vecs = lam[::-1], vecs[:, ::-1]
    else:
        gram = Xc @ Xc.T / (n - 1)
        lam_g, u = np.linalg.eigh(gram)
        lam_g, u = lam_g[::-1], u[:, ::-1]
        lam = np.zeros(d)
        lam[:n] = lam_g
        vecs = None

    tol = max(n, d) * np.finfo(np.float64).eps * max(lam[0], 0.0)
    lam = np.where(lam > tol, lam, 0.0)
    rank = int(np.count_nonzero(lam))

    if rank == 0:
        warnings.warn("all training vectors are identical", DegenerateDataWarning, stacklevel=2)
        components = np.zeros((d, 1))
        components[0, 0] = 1.0
        return PcaModel(mean, components, lam, None, mode)

    if k is None:
        k = _choose_k(lam, variance_fraction)
    if vecs is None:
        if k > rank:
            logger.info("k=%d exceeds the Gram rank %d; capping", k, rank)
            k = rank
        components = Xc.T @ u[:, :k] / np.sqrt((n - 1) * lam[:k])
        # re-orthonormalize; the mapped vectors are only orthonormal up to rounding
        components, _ = np.linalg.qr(components)
    else:
        components = vecs[:, :k]
    components = _fix_signs(components)
    return PcaModel(mean, np.ascontiguousarray(components), lam, None, mode)


def spe(model: PcaModel, v: np.ndarray) -> float | np.ndarray:
    return model.spe(v)


def predict(model: PcaModel, v: np.ndarray):
    return model.predict(v)


def q_statistic_threshold(model: PcaModel, alpha: float = 0.001) -> float:
    """Analytic SPE control limit at confidence 1 - alpha (Jackson & Mudholkar)."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    residual = model.eigenvalues[model.k:]
    phi1, phi2, phi3 = (float(np.sum(residual**i)) for i in (1, 2, 3))
    if phi2 <= 0:
        raise DegenerateResidual("residual eigenvalues are all zero; use a percentile threshold instead")
    h0 = 1.0 - 2.0 * phi1 * phi3 / (3.0 * phi2**2)
    c_alpha = NormalDist().inv_cdf(1.0 - alpha)
    base = c_alpha * np.sqrt(2.0 * phi2 * h0**2) / phi1 + 1.0 + phi2 * h0 * (h0 - 1.0) / phi1**2
    if h0 == 0 or base <= 0:
        raise DegenerateResidual(f"Q-statistic undefined for this spectrum (h0={h0:.3g}); use a percentile threshold")
    theta = phi1 * base ** (1.0 / h0)
    if not np.isfinite(theta):
        raise DegenerateResidual("Q-statistic overflowed; use a percentile threshold")
    return float(theta)


def threshold_candidates(model: PcaModel, train_vectors: np.ndarray, alpha: float = 0.001) -> list[float]:
    """Percentiles of the training SPE plus the Q-statistic limit, ascending and deduplicated."""
    scores = np.atleast_1d(model.spe(train_vectors))
    values = [float(x) for x in np.percentile(scores, PERCENTILES)]
    try:
        values.append(q_statistic_threshold(model, alpha))
    except DegenerateResidual:
        pass
    return sorted(set(values))

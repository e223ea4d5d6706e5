"""Named detectors: a representation mode paired with a detector family."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from sempca.detect_cluster import zero_vector_mask
from sempca.eval.metrics import EvaluationReport, metrics
from sempca.eval.search import ClusterFamily, PcaFamily, SearchResult, grid_search
from sempca.grouper import Label, LogSequence
from sempca.parser import LogTemplate
from sempca.representation import SequenceFeaturizer, WordVectorStore

logger = logging.getLogger(__name__)

DETECTORS = {
    "sempca": ("pca", "semantic"),
    "pca": ("pca", "count"),
    "logcluster": ("cluster", "weighted_count"),
    "semlogcluster": ("cluster", "semantic"),
}


@dataclass
class Context:
    """Everything a detector needs besides the sequences themselves."""

    templates: Optional[Sequence[LogTemplate]] = None
    store: Optional[WordVectorStore] = None
    smooth_idf: bool = True
    count_normalization: str = "none"
    pca_train_on: str = "all"
    q_alpha: float = 0.001
    max_cluster_train: int = 10_000
    seed: int = 0


def labels_of(sequences: Sequence[LogSequence]) -> np.ndarray:
    unlabeled = sum(1 for s in sequences if s.label is Label.UNLABELED)
    if unlabeled:
        raise ValueError(f"{unlabeled} sequences are unlabeled")
    return np.array([s.is_anomalous for s in sequences], dtype=bool)


@dataclass
class Detector:
    name: str
    context: Context = field(default_factory=Context)

    def __post_init__(self):
        if self.name not in DETECTORS:
            raise ValueError(f"unknown detector {self.name!r}; choose from {sorted(DETECTORS)}")
        kind, self.mode = DETECTORS[self.name]
        ctx = self.context
        if kind == "pca":
            self.family = PcaFamily(self.mode, ctx.pca_train_on, ctx.q_alpha)
        else:
            self.family = ClusterFamily(self.mode, ctx.max_cluster_train, ctx.seed)

    def featurizer(self) -> SequenceFeaturizer:
        ctx = self.context
        return SequenceFeaturizer(
            self.mode,
            templates=ctx.templates if self.mode == "semantic" else None,
            store=ctx.store if self.mode == "semantic" else None,
            smooth_idf=ctx.smooth_idf,
            count_normalization=ctx.count_normalization,
        )


@dataclass
class DetectorRun:
    report: EvaluationReport
    search: SearchResult
    featurizer: SequenceFeaturizer
    predictions: np.ndarray
    scores: np.ndarray


def run_detector(
    detector: Detector,
    train: Sequence[LogSequence],
    val: Sequence[LogSequence],
    test: Sequence[LogSequence],
    grid: Optional[dict[str, Any]] = None,
    dataset: str = "",
) -> DetectorRun:
    """Vectorize, tune on validation F1, and score the tuned model on the test set."""
    featurizer = detector.featurizer()
    X_train = featurizer.fit_transform(train)
    X_val = featurizer.transform(val)
    X_test = featurizer.transform(test)
    search = grid_search(detector.family, X_train, labels_of(train), X_val, labels_of(val), grid)
    predictions, scores = search.model.predict(X_test)
    predictions = np.atleast_1d(predictions)
    report = metrics(predictions, labels_of(test))
    report.hyper_params = dict(search.best_params)
    report.detector = detector.name
    report.dataset = dataset
    report.seed = detector.context.seed
    if detector.family.name == "cluster":
        zeros = int(zero_vector_mask(X_test).sum())
        if zeros:
            report.flags.append(f"zero_vectors:{zeros}")
    return DetectorRun(report, search, featurizer, predictions, np.atleast_1d(scores))

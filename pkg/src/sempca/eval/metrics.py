"""Confusion counts and precision / recall / F1."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from sempca.errors import LengthMismatch
from sempca.grouper import Label

REPORT_SCHEMA_VERSION = 1


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EvaluationReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    train_time_s: Optional[float] = None
    predict_time_ms_per_seq: Optional[float] = None
    hyper_params: dict[str, Any] = field(default_factory=dict)
    dataset: str = ""
    detector: str = ""
    seed: Optional[int] = None
    flags: list[str] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        record = {"schema_version": REPORT_SCHEMA_VERSION, **asdict(self)}
        return record


def _as_bool(values: Sequence) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, (Label, str)):
            label = Label(v)
            if label is Label.UNLABELED:
                raise ValueError("metrics need labeled sequences")
            out.append(label is Label.ANOMALOUS)
        else:
            out.append(bool(v))
    return np.asarray(out, dtype=bool)


def metrics(predictions: Sequence, labels: Sequence) -> EvaluationReport:
    """Score predictions against ground truth; anomalous is the positive class.

    Both arguments accept booleans (True = anomalous) or labels. A ratio with
    a zero denominator is reported as 0 and flagged.
    """
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(labels)} labels")
    pred = _as_bool(predictions)
    true = _as_bool(labels)
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = tp / (tp + fn)
    return EvaluationReport(tp, fp, fn, tn, precision, recall, f1_score(precision, recall), flags=flags)

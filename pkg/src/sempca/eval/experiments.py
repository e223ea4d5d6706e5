"""Stability under sampled training sets, and the unseen-event experiment."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from sempca.errors import SampleTooSmall, TargetsUnreachable
from sempca.grouper import LogSequence
from sempca.pipeline import Detector, run_detector

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.01, 0.02, 0.05, 0.10, 0.20)


@dataclass
class StabilityRow:
    ratio: float
    mean_f1: float
    std_f1: float
    f1s: list[float] = field(default_factory=list)


def sample_sequences(train: Sequence[LogSequence], ratio: float, seed: int) -> list[LogSequence]:
    """Uniform sample without replacement; production order is kept."""
    size = int(round(len(train) * ratio))
    if size < 2:
        raise SampleTooSmall(f"{ratio:.2%} of {len(train)} sequences is {size}; need at least 2")
    if size >= len(train):
        return list(train)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(train), size=size, replace=False))
    return [train[i] for i in idx]


def stability_experiment(
    detector: Detector,
    train: Sequence[LogSequence],
    val: Sequence[LogSequence],
    test: Sequence[LogSequence],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
    base_seed: int = 0,
    grid: Optional[dict[str, Any]] = None,
) -> list[StabilityRow]:
    """F1 mean and standard deviation over repeated training samples per ratio.

    Repeat ``r`` samples with seed ``base_seed + r``; validation and test sets
    stay fixed.
    """
    rows = []
    for ratio in ratios:
        f1s = []
        for r in range(repeats):
            sample = sample_sequences(train, ratio, base_seed + r)
            run = run_detector(detector, sample, val, test, grid)
            f1s.append(run.report.f1)
        rows.append(StabilityRow(float(ratio), float(np.mean(f1s)), float(np.std(f1s)), f1s))
        logger.info("%s ratio %.2f: mean F1 %.3f, sd %.3f", detector.name, ratio, rows[-1].mean_f1, rows[-1].std_f1)
    return rows


def unseen_count(train: Sequence[LogSequence], test: Sequence[LogSequence]) -> int:
    """Number of distinct test templates that never occur in ``train``."""
    seen = {t for s in train for t in s.template_ids}
    return len({t for s in test for t in s.template_ids} - seen)


@dataclass
class UnseenRow:
    target: int
    unseen: int
    train_size: int
    f1: float


def subset_with_unseen(
    train: Sequence[LogSequence], test: Sequence[LogSequence], target: int, base: Optional[Sequence[LogSequence]] = None
) -> list[LogSequence]:
    """Drop training sequences until ``target`` test templates are unseen.

    Starting from ``base`` (default: all of ``train``), templates shared with
    the test set are removed rarest first, together with every training
    sequence containing them. Removing a sequence can also remove other
    templates, so the achieved count may overshoot; the caller reads it back.
    """
    subset = list(train if base is None else base)
    current = unseen_count(subset, test)
    if target < current:
        raise TargetsUnreachable(f"target {target} is below the minimum of {current} unseen templates")
    test_templates = {t for s in test for t in s.template_ids}
    while current < target:
        freq: dict[int, int] = {}
        for s in subset:
            for t in set(s.template_ids):
                if t in test_templates:
                    freq[t] = freq.get(t, 0) + 1
        if not freq:
            raise TargetsUnreachable(f"cannot reach {target} unseen templates")
        victim = min(freq, key=lambda t: (freq[t], t))
        subset = [s for s in subset if victim not in s.template_ids]
        current = unseen_count(subset, test)
    return subset


def unseen_event_experiment(
    detector: Detector,
    train: Sequence[LogSequence],
    val: Sequence[LogSequence],
    test: Sequence[LogSequence],
    targets: Sequence[int],
    sample_ratio: float = 1.0,
    seed: int = 0,
    grid: Optional[dict[str, Any]] = None,
) -> list[UnseenRow]:
    """F1 of ``detector`` trained on subsets with increasing numbers of unseen test templates."""
    base = sample_sequences(train, sample_ratio, seed) if sample_ratio < 1.0 else list(train)
    rows = []
    for target in sorted(targets):
        subset = subset_with_unseen(train, test, target, base)
        if len(subset) < 2:
            raise TargetsUnreachable(f"only {len(subset)} training sequences left for target {target}")
        run = run_detector(detector, subset, val, test, grid)
        rows.append(UnseenRow(int(target), unseen_count(subset, test), len(subset), run.report.f1))
    return rows

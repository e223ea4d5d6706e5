"""Wall-clock timing of a tuned detector: fit once, predict the test set."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class Timing:
    train_time_s: float
    predict_time_ms_per_seq: Optional[float]  # None when the test set is empty


def bench(family, params: dict[str, Any], X_train: np.ndarray, y_train: np.ndarray, X_test: np.ndarray) -> Timing:
    """Time ``family.fit`` with already-tuned ``params`` and prediction over ``X_test``.

    Hyper-parameter search is deliberately outside the timed region.
    """
    t0 = time.perf_counter()
    model = family.fit(X_train, np.asarray(y_train, dtype=bool), params)
    train_time = time.perf_counter() - t0
    X_test = np.atleast_2d(X_test)
    if len(X_test) == 0 or X_test.size == 0:
        return Timing(train_time, None)
    t0 = time.perf_counter()
    family.predict(model, X_test)
    predict_ms = (time.perf_counter() - t0) * 1000.0 / len(X_test)
    logger.info("fit %.3f s, predict %.4f ms/sequence", train_time, predict_ms)
    return Timing(train_time, predict_ms)

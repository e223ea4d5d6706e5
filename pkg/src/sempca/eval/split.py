from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

from sempca.errors import TooFewSequences

T = TypeVar("T")


@dataclass(frozen=True)
class SplitSpec:
    train: int = 6
    val: int = 1
    test: int = 3

    def __post_init__(self):
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split ratios must be positive")


def split_chronological(sequences: Sequence[T], spec: SplitSpec = SplitSpec()) -> tuple[list[T], list[T], list[T]]:
    """Contiguous train/val/test split in production order, no shuffling."""
    n = len(sequences)
    if n < 10:
        raise TooFewSequences(f"need at least 10 sequences to split, got {n}")
    total = spec.train + spec.val + spec.test
    n_train = n * spec.train // total
    n_val = n * spec.val // total
    sequences = list(sequences)
    return sequences[:n_train], sequences[n_train : n_train + n_val], sequences[n_train + n_val :]

"""Group parsed log messages into labeled log sequences."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from sempca.errors import DataError, MissingKey, MissingTimestamp
from sempca.parser import RawLogRecord


class Label(str, Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"
    UNLABELED = "unlabeled"


@dataclass
class LogSequence:
    seq_id: int
    template_ids: list[int]
    label: Label = Label.UNLABELED
    group_key: str = ""
    start_time: Optional[int] = None

    def __len__(self) -> int:
        return len(self.template_ids)

    @property
    def is_anomalous(self) -> bool:
        return self.label is Label.ANOMALOUS


@dataclass(frozen=True)
class GroupingStrategy:
    """How to cut records into sequences.

    ``kind`` is one of ``session``, ``fixed_count`` or ``fixed_time``; ``window``
    is a message count (fixed_count) or minutes (fixed_time). Setting
    ``session_key`` on a windowed strategy applies the window within each key,
    e.g. BGL's fixed windows per node.
    """

    kind: str
    window: Optional[int] = None
    session_key: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("session", "fixed_count", "fixed_time"):
            raise ValueError(f"unknown grouping kind {self.kind!r}")
        if self.kind == "session":
            if self.window is not None:
                raise ValueError("session grouping takes no window")
            if self.session_key is None:
                object.__setattr__(self, "session_key", "group_key")
        elif self.window is None or self.window < 1:
            raise ValueError(f"{self.kind} grouping needs window >= 1")
        if self.session_key not in (None, "group_key"):
            raise ValueError(f"unsupported session key source {self.session_key!r}")

    @classmethod
    def session(cls) -> "GroupingStrategy":
        return cls("session")

    @classmethod
    def fixed_count(cls, window: int, per_session: bool = False) -> "GroupingStrategy":
        return cls("fixed_count", window, "group_key" if per_session else None)

    @classmethod
    def fixed_time(cls, minutes: int, per_session: bool = False) -> "GroupingStrategy":
        return cls("fixed_time", minutes, "group_key" if per_session else None)


def label_sequence(member_labels: Iterable[Label | str]) -> Label:
    """Anomalous beats unlabeled beats normal."""
    labels = [Label(x) for x in member_labels]
    if not labels:
        raise ValueError("label_sequence needs at least one member")
    if Label.ANOMALOUS in labels:
        return Label.ANOMALOUS
    if Label.UNLABELED in labels:
        return Label.UNLABELED
    return Label.NORMAL


LabelSource = Union[Sequence[Union[Label, str, None]], Mapping[str, Union[Label, str]], None]


def _record_labels(records: Sequence[RawLogRecord], labels: LabelSource) -> list[Label]:
    if labels is None:
        return [Label.UNLABELED] * len(records)
    if isinstance(labels, Mapping):
        return [Label(labels.get(r.group_key, Label.UNLABELED)) for r in records]
    if len(labels) != len(records):
        raise DataError(f"{len(labels)} labels for {len(records)} records")
    return [Label.UNLABELED if x is None else Label(x) for x in labels]


def group(
    records: Sequence[RawLogRecord],
    assignments: Sequence[int],
    labels: LabelSource,
    strategy: GroupingStrategy,
) -> list[LogSequence]:
    """Assemble records into sequences.

    ``labels`` is either one label per record (message-level datasets) or a
    mapping from group key to label (session-level datasets such as HDFS).
    Records whose assignment is negative were skipped by the parser and are
    left out.
    """
    if len(records) != len(assignments):
        raise DataError(f"{len(assignments)} assignments for {len(records)} records")
    record_labels = _record_labels(records, labels)

    # bucket key -> member indices, in order of first appearance
    buckets: "OrderedDict[tuple, list[int]]" = OrderedDict()
    t0 = None
    counters: dict[Optional[str], int] = {}
    for i, (rec, tid) in enumerate(zip(records, assignments)):
        if tid < 0:
            continue
        key = None
        if strategy.session_key is not None:
            if rec.group_key is None:
                raise MissingKey(f"line {rec.line_no}: record has no group key")
            key = rec.group_key
        if strategy.kind == "session":
            bucket = (key,)
        elif strategy.kind == "fixed_count":
            n = counters.get(key, 0)
            counters[key] = n + 1
            bucket = (key, n // strategy.window)
        else:
            if rec.timestamp is None:
                raise MissingTimestamp(f"line {rec.line_no}: record has no timestamp")
            if t0 is None:
                t0 = rec.timestamp
            bucket = (key, (rec.timestamp - t0) // (strategy.window * 60_000))
        buckets.setdefault(bucket, []).append(i)

    items = list(buckets.items())
    if strategy.kind == "fixed_time":
        # chronological window order; ties keep first-appearance order
        items.sort(key=lambda kv: kv[0][1])

    sequences = []
    for seq_id, (bucket, members) in enumerate(items):
        if strategy.kind == "fixed_time":
            start = t0 + bucket[1] * strategy.window * 60_000
        else:
            start = records[members[0]].timestamp
        sequences.append(
            LogSequence(
                seq_id=seq_id,
                template_ids=[assignments[i] for i in members],
                label=label_sequence(record_labels[i] for i in members),
                group_key="" if bucket[0] is None else str(bucket[0]),
                start_time=start,
            )
        )
    return sequences


def write_sequences(path: str | Path, sequences: Iterable[LogSequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sequences:
            fh.write(f"{s.seq_id}\t{s.label.value}\t{' '.join(map(str, s.template_ids))}\n")


def read_sequences(path: str | Path) -> list[LogSequence]:
    sequences = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                seq_id, label, ids = line.split("\t")
                sequences.append(LogSequence(int(seq_id), [int(x) for x in ids.split()], Label(label)))
            except ValueError as exc:
                raise DataError(f"{path}:{n}: malformed sequence line") from exc
    return sequences

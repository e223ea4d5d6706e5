"""Log template mining with a fixed-depth parse tree (Drain).

Messages are first stripped of their dataset-specific header, then masked
with configurable regexes, tokenized on whitespace and routed through a
prefix tree: the first level splits by token count, the following levels by
leading tokens. Each leaf holds a small list of templates; a message joins
the most similar template when the similarity reaches the threshold,
otherwise it starts a new one.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from sempca.errors import DataError, NoMatch

logger = logging.getLogger(__name__)

WILDCARD = "<*>"


@dataclass(frozen=True)
class RawLogRecord:
    line_no: int
    content: str
    timestamp: Optional[int] = None  # epoch milliseconds
    group_key: Optional[str] = None
    label: Optional[str] = None  # raw label column, if the header carries one


@dataclass
class LogTemplate:
    template_id: int
    tokens: list[str]

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return " ".join(self.tokens)


@dataclass
class ParserConfig:
    tree_depth: int = 4
    similarity_threshold: float = 0.4
    max_children: int = 100
    variable_masks: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.tree_depth < 3:
            raise ValueError(f"tree_depth must be >= 3, got {self.tree_depth}")
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError(f"similarity_threshold must be in (0, 1], got {self.similarity_threshold}")
        if self.max_children < 2:
            raise ValueError(f"max_children must be >= 2, got {self.max_children}")
        self._compiled = [(re.compile(p), r) for p, r in self.variable_masks]

    def mask(self, content: str) -> str:
        for pattern, replacement in self._compiled:
            content = pattern.sub(replacement, content)
        return content


# Commonly used masks; datasets pick from these in their config.
HDFS_MASKS = [
    (r"blk_-?\d+", WILDCARD),
    (r"(\d+\.){3}\d+(:\d+)?", WILDCARD),
    (r"(?<![A-Za-z])-?\d+(?![A-Za-z])", WILDCARD),
]

HDFS_TIMESTAMP_FORMAT = "%y%m%d %H%M%S"
HDFS_HEADER = (
    r"^(?P<timestamp>\d{6} \d{6}) (?P<pid>\d+) (?P<level>\w+) (?P<component>[^:]+): "
    r"(?P<content>.*?(?P<group_key>blk_-?\d+).*)$"
)


@dataclass
class SkipReport:
    skipped: int = 0
    lines: list[int] = field(default_factory=list)

    def add(self, line_no: int) -> None:
        self.skipped += 1
        if len(self.lines) < 1000:
            self.lines.append(line_no)


def _parse_timestamp(value: str, fmt: Optional[str]) -> int:
    if fmt is None or fmt == "epoch_ms":
        return int(float(value))
    if fmt == "epoch_s":
        return int(round(float(value) * 1000))
    dt = datetime.strptime(value, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def strip_header(
    raw_line: str,
    header_pattern: re.Pattern | str,
    line_no: int = 0,
    timestamp_format: Optional[str] = None,
    group_key_pattern: re.Pattern | str | None = None,
) -> RawLogRecord:
    """Split one raw line into header fields and message content.

    The pattern must define a ``content`` group; ``timestamp``, ``group_key``
    and ``label`` groups are picked up when present. When the header carries
    no ``group_key``, ``group_key_pattern`` is searched inside the content.

    Raises:
        NoMatch: the line does not match, or its content is blank.
    """
    if isinstance(header_pattern, str):
        header_pattern = re.compile(header_pattern)
    m = header_pattern.match(raw_line.rstrip("\r\n"))
    if m is None:
        raise NoMatch(f"line {line_no}: header pattern did not match")
    groups = m.groupdict()
    content = (groups.get("content") or "").strip()
    if not content:
        raise NoMatch(f"line {line_no}: empty content")

    timestamp = None
    if groups.get("timestamp"):
        try:
            timestamp = _parse_timestamp(groups["timestamp"], timestamp_format)
        except ValueError as exc:
            raise NoMatch(f"line {line_no}: bad timestamp {groups['timestamp']!r}") from exc

    group_key = groups.get("group_key")
    if group_key is None and group_key_pattern is not None:
        if isinstance(group_key_pattern, str):
            group_key_pattern = re.compile(group_key_pattern)
        km = group_key_pattern.search(content)
        if km is not None:
            group_key = km.group(0)

    return RawLogRecord(
        line_no=line_no,
        content=content,
        timestamp=timestamp,
        group_key=group_key,
        label=groups.get("label"),
    )


def read_records(
    lines: Iterable[str],
    header_pattern: re.Pattern | str,
    timestamp_format: Optional[str] = None,
    group_key_pattern: re.Pattern | str | None = None,
    skips: Optional[SkipReport] = None,
) -> Iterator[RawLogRecord]:
    """Yield records for every matching line; non-matching lines go to ``skips``."""
    pattern = re.compile(header_pattern) if isinstance(header_pattern, str) else header_pattern
    key_pattern = re.compile(group_key_pattern) if isinstance(group_key_pattern, str) else group_key_pattern
    for line_no, line in enumerate(lines, start=1):
        try:
            yield strip_header(line, pattern, line_no, timestamp_format, key_pattern)
        except NoMatch:
            if skips is not None:
                skips.add(line_no)


class _Node:
    __slots__ = ("children", "template_ids")

    def __init__(self):
        self.children: dict[str, _Node] = {}
        self.template_ids: list[int] = []


def similarity(template: Sequence[str], tokens: Sequence[str]) -> float:
    """Fraction of positions holding equal tokens; both sequences must have equal length."""
    if len(template) != len(tokens):
        raise ValueError("similarity is defined for equal token counts only")
    if not tokens:
        return 1.0
    same = sum(1 for a, b in zip(template, tokens) if a == b)
    return same / len(tokens)


def _has_digit(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


class Drain:
    """Mutable parse state. Not thread-safe; use one instance per stream."""

    def __init__(self, config: Optional[ParserConfig] = None):
        self.config = config or ParserConfig()
        self.root = _Node()
        self.templates: list[LogTemplate] = []

    def tokenize(self, content: str) -> list[str]:
        return self.config.mask(content).split()

    def _route_token(self, token: str) -> str:
        return WILDCARD if _has_digit(token) else token

    def _leaf(self, tokens: list[str], create: bool) -> Optional[_Node]:
        node = self.root.children.get(str(len(tokens)))
        if node is None:
            if not create:
                return None
            node = self.root.children[str(len(tokens))] = _Node()
        for token in tokens[: self.config.tree_depth - 2]:
            key = self._route_token(token)
            child = node.children.get(key)
            if child is None:
                if create and len(node.children) < self.config.max_children - (WILDCARD not in node.children):
                    child = node.children[key] = _Node()
                else:
                    child = node.children.get(WILDCARD)
                    if child is None:
                        if not create:
                            return None
                        child = node.children[WILDCARD] = _Node()
            node = child
        return node

    def _best_match(self, leaf: _Node, tokens: list[str]) -> Optional[LogTemplate]:
        best, best_key = None, None
        for tid in leaf.template_ids:
            template = self.templates[tid]
            sim = similarity(template.tokens, tokens)
            key = (sim, template.tokens.count(WILDCARD), -tid)
            if best_key is None or key > best_key:
                best, best_key = template, key
        if best is not None and best_key[0] >= self.config.similarity_threshold:
            return best
        return None

    def add(self, content: str) -> int:
        """Parse one message and return its template id (-1 if nothing constant survives masking)."""
        tokens = self.tokenize(content)
        if not tokens or all(t == WILDCARD for t in tokens):
            return -1
        leaf = self._leaf(tokens, create=False)
        match = self._best_match(leaf, tokens) if leaf is not None else None
        if match is not None:
            merged = [a if a == b else WILDCARD for a, b in zip(match.tokens, tokens)]
            if any(t != WILDCARD for t in merged):
                match.tokens = merged
                return match.template_id
        template = LogTemplate(len(self.templates), list(tokens))
        self.templates.append(template)
        self._leaf(tokens, create=True).template_ids.append(template.template_id)
        return template.template_id


def parse_line(record: RawLogRecord, config: ParserConfig, state: Drain) -> int:
    if state.config is not config:
        raise ValueError("state was created with a different config")
    return state.add(record.content)


def parse_corpus(
    records: Iterable[RawLogRecord], config: Optional[ParserConfig] = None
) -> tuple[list[LogTemplate], list[int]]:
    """Parse a finite record stream into (vocabulary, assignments)."""
    state = Drain(config)
    assignments = [state.add(r.content) for r in records]
    vocabulary = [LogTemplate(t.template_id, list(t.tokens)) for t in state.templates]
    return vocabulary, assignments


def write_vocabulary(path: str | Path, vocabulary: Sequence[LogTemplate]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in vocabulary:
            fh.write(f"{t.template_id}\t{' '.join(t.tokens)}\n")


def read_vocabulary(path: str | Path) -> list[LogTemplate]:
    vocabulary = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            tid, _, text = line.partition("\t")
            if int(tid) != len(vocabulary):
                raise DataError(f"{path}:{n}: template ids must be dense and ordered")
            vocabulary.append(LogTemplate(int(tid), text.split(" ")))
    return vocabulary


def write_assignments(path: str | Path, assignments: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{a}\n" for a in assignments)


def read_assignments(path: str | Path) -> list[int]:
    with open(path, encoding="utf-8") as fh:
        return [int(line) for line in fh if line.strip()]

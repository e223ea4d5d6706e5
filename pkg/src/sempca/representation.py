"""Vector representations of log events and log sequences.

Two families live here:

* semantic vectors: every template is embedded as the TF-IDF weighted sum of
  the word vectors of its tokens, and a sequence is the sum of its events'
  vectors. Templates never seen in training are embedded the same way, which
  is what keeps unseen events visible to the detector.
* count vectors: one column per training template, optionally weighted by an
  IDF computed over training sequences. Unseen templates are dropped.
"""
from __future__ import annotations

import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from sempca.errors import DataError
from sempca.grouper import LogSequence
from sempca.io import npz_bytes, write_bytes
from sempca.parser import WILDCARD, LogTemplate

logger = logging.getLogger(__name__)

OOV_TOKEN = "<oov>"

_SPLIT = re.compile(r"[^A-Za-z0-9]+")
_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize_template(template: LogTemplate | Sequence[str] | str) -> list[str]:
    """Lowercase alphabetic words of a template.

    Wildcards and numbers are dropped; camelCase, snake_case and dotted
    identifiers are split into their words.
    """
    if isinstance(template, LogTemplate):
        raw = template.tokens
    elif isinstance(template, str):
        raw = template.split()
    else:
        raw = template
    words = []
    for token in raw:
        if token == WILDCARD:
            continue
        for piece in _SPLIT.split(token):
            for word in _CAMEL.findall(piece):
                if word.isalpha():
                    words.append(word.lower())
    return words


def tf(word: str, event_tokens: Sequence[str]) -> float:
    if not event_tokens:
        raise ValueError("tf needs a non-empty token list")
    return event_tokens.count(word) / len(event_tokens)


@dataclass
class IdfTable:
    """Document frequencies of words over the training templates."""

    total_events: int
    doc_counts: dict[str, int] = field(default_factory=dict)
    smooth: bool = True

    def __post_init__(self):
        if self.total_events < 1:
            raise ValueError("IdfTable needs at least one event")

    @classmethod
    def from_templates(cls, templates: Iterable[LogTemplate | Sequence[str]], smooth: bool = True) -> "IdfTable":
        counts: Counter[str] = Counter()
        total = 0
        for t in templates:
            total += 1
            counts.update(set(tokenize_template(t)))
        return cls(total, dict(counts), smooth)

    def idf(self, word: str) -> float:
        n_w = self.doc_counts.get(word, 0)
        if self.smooth:
            return math.log((self.total_events + 1) / (n_w + 1))
        if n_w == 0:
            raise DataError(f"word {word!r} occurs in no training event (strict IDF)")
        return math.log(self.total_events / n_w)


def idf(word: str, table: IdfTable) -> float:
    return table.idf(word)


class WordVectorStore:
    """In-memory word vectors; unknown tokens map to ``oov_vector``."""

    def __init__(self, table: Mapping[str, np.ndarray], dimension: int, oov_vector: Optional[np.ndarray] = None):
        self.dimension = dimension
        self.table = {}
        for word, vec in table.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dimension,):
                raise DataError(f"vector for {word!r} has shape {vec.shape}, expected ({dimension},)")
            self.table[word] = vec
        if oov_vector is None:
            oov_vector = np.zeros(dimension)
        self.oov_vector = np.asarray(oov_vector, dtype=np.float64)
        if self.oov_vector.shape != (dimension,):
            raise DataError("oov vector has the wrong dimension")

    def __contains__(self, word: str) -> bool:
        return word in self.table

    def __len__(self) -> int:
        return len(self.table)

    def __getitem__(self, word: str) -> np.ndarray:
        return self.table.get(word, self.oov_vector)

    @classmethod
    def load(cls, path: str | Path, use_oov_row: bool = False, vocabulary: Optional[set[str]] = None) -> "WordVectorStore":
        """Read the plain-text ``token v1 ... vD`` format.

        An optional ``N D`` header line is skipped. When ``vocabulary`` is
        given only those words are kept, which keeps large pretrained files
        cheap in memory. With ``use_oov_row`` a stored ``<oov>`` row becomes
        the out-of-vocabulary vector instead of zeros.
        """
        table: dict[str, np.ndarray] = {}
        dimension = None
        oov = None
        with open(path, encoding="utf-8", errors="replace") as fh:
            for n, line in enumerate(fh, start=1):
                parts = line.rstrip().split(" ")
                if n == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue
                if len(parts) < 2:
                    continue
                if dimension is None:
                    dimension = len(parts) - 1
                elif len(parts) - 1 != dimension:
                    raise DataError(f"{path}:{n}: expected {dimension} values, got {len(parts) - 1}")
                word = parts[0]
                if word == OOV_TOKEN:
                    oov = np.array(parts[1:], dtype=np.float64)
                    continue
                if vocabulary is not None and word not in vocabulary:
                    continue
                table[word] = np.array(parts[1:], dtype=np.float64)
        if dimension is None:
            raise DataError(f"{path}: no word vectors found")
        return cls(table, dimension, oov if use_oov_row else None)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(self.table)} {self.dimension}\n")
            for word in sorted(self.table):
                fh.write(word + " " + " ".join(repr(float(x)) for x in self.table[word]) + "\n")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for word in sorted(self.table):
            h.update(word.encode())
            h.update(self.table[word].tobytes())
        h.update(self.oov_vector.tobytes())
        return h.hexdigest()


def embed_event(template: LogTemplate | Sequence[str], store: WordVectorStore, table: IdfTable) -> np.ndarray:
    """TF-IDF weighted sum of word vectors over the template's token positions."""
    words = tokenize_template(template)
    out = np.zeros(store.dimension)
    if not words:
        return out
    counts = Counter(words)
    length = len(words)
    for word in words:
        out += store[word] * (counts[word] / length * table.idf(word))
    return out


def embed_sequence(seq: LogSequence | Sequence[int], event_vectors: "EventVectorCache") -> np.ndarray:
    ids = seq.template_ids if isinstance(seq, LogSequence) else seq
    out = np.zeros(event_vectors.dimension)
    for tid in ids:
        out += event_vectors[tid]
    return out


class EventVectorCache:
    """Lazily computed event vectors for a fixed vocabulary, store and IDF table."""

    def __init__(self, templates: Sequence[LogTemplate], store: WordVectorStore, table: IdfTable):
        self.templates = {t.template_id: t for t in templates}
        self.store = store
        self.table = table
        self._vectors: dict[int, np.ndarray] = {}

    @property
    def dimension(self) -> int:
        return self.store.dimension

    def __getitem__(self, template_id: int) -> np.ndarray:
        vec = self._vectors.get(template_id)
        if vec is None:
            vec = embed_event(self.templates[template_id], self.store, self.table)
            self._vectors[template_id] = vec
        return vec

    def matrix(self, size: Optional[int] = None) -> np.ndarray:
        """Row i holds the vector of template i."""
        size = max(self.templates) + 1 if size is None else size
        out = np.zeros((size, self.dimension))
        for tid in range(size):
            if tid in self.templates:
                out[tid] = self[tid]
        return out

    def cache_key(self) -> str:
        h = hashlib.sha256()
        for tid in sorted(self.templates):
            h.update(f"{tid}\t{' '.join(self.templates[tid].tokens)}\n".encode())
        h.update(self.store.fingerprint().encode())
        h.update(repr((self.table.total_events, sorted(self.table.doc_counts.items()), self.table.smooth)).encode())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        ids = np.array(sorted(self.templates), dtype=np.int64)
        vectors = np.stack([self[i] for i in ids]) if len(ids) else np.zeros((0, self.dimension))
        write_bytes(path, npz_bytes(key=np.array(self.cache_key()), ids=ids, vectors=vectors))

    def load(self, path: str | Path) -> bool:
        """Fill from a cache file; returns False (and loads nothing) if the key differs."""
        try:
            with np.load(path) as data:
                if str(data["key"]) != self.cache_key():
                    return False
                for tid, vec in zip(data["ids"], data["vectors"]):
                    self._vectors[int(tid)] = vec.copy()
        except (OSError, ValueError, KeyError):
            return False
        return True


def count_vector(seq: LogSequence | Sequence[int], train_vocab_size: int) -> np.ndarray:
    """Occurrences of training templates 0..size-1; larger ids are unseen and ignored."""
    ids = seq.template_ids if isinstance(seq, LogSequence) else seq
    out = np.zeros(train_vocab_size)
    for tid in ids:
        if 0 <= tid < train_vocab_size:
            out[tid] += 1
    return out


def event_weights(sequences: Sequence[LogSequence | Sequence[int]], vocab_size: int) -> np.ndarray:
    """IDF weight of each event over training sequences, scaled into [0, 1].

    weight(e) = log(N / n_e) / log(N), with n_e the number of sequences that
    contain e. Events absent from training get weight 0. With a single
    training sequence there is nothing to contrast and all weights are 1.
    """
    n = len(sequences)
    if n == 0:
        raise ValueError("event_weights needs training sequences")
    if n == 1:
        return np.ones(vocab_size)
    df = np.zeros(vocab_size)
    for seq in sequences:
        ids = seq.template_ids if isinstance(seq, LogSequence) else seq
        for tid in set(ids):
            if 0 <= tid < vocab_size:
                df[tid] += 1
    weights = np.zeros(vocab_size)
    seen = df > 0
    weights[seen] = np.log(n / df[seen]) / math.log(n)
    return weights


def weighted_count_vector(seq: LogSequence | Sequence[int], weights: np.ndarray) -> np.ndarray:
    return count_vector(seq, len(weights)) * weights


def count_matrix(sequences: Sequence[LogSequence | Sequence[int]], columns: Mapping[int, int]) -> np.ndarray:
    """Count matrix with one column per template id in ``columns`` (id -> column)."""
    out = np.zeros((len(sequences), len(columns)))
    for row, seq in enumerate(sequences):
        ids = seq.template_ids if isinstance(seq, LogSequence) else seq
        for tid in ids:
            col = columns.get(tid)
            if col is not None:
                out[row, col] += 1
    return out


MODES = ("semantic", "count", "weighted_count")


class SequenceFeaturizer:
    """Fit on training sequences, then turn any sequence into a fixed-length vector.

    The training set decides the frozen parts: which templates count as seen
    (count modes), the event weights (weighted_count) and the IDF table
    (semantic).
    """

    def __init__(
        self,
        mode: str,
        templates: Optional[Sequence[LogTemplate]] = None,
        store: Optional[WordVectorStore] = None,
        smooth_idf: bool = True,
        count_normalization: str = "none",
    ):
        if mode not in MODES:
            raise ValueError(f"unknown representation mode {mode!r}")
        if mode == "semantic" and (templates is None or store is None):
            raise ValueError("semantic mode needs templates and a word vector store")
        if count_normalization not in ("none", "idf"):
            raise ValueError(f"unknown count normalization {count_normalization!r}")
        self.mode = mode
        self.templates = list(templates) if templates is not None else None
        self.store = store
        self.smooth_idf = smooth_idf
        self.count_normalization = count_normalization
        self.columns: dict[int, int] = {}
        self.weights: Optional[np.ndarray] = None
        self.events: Optional[EventVectorCache] = None
        self._event_matrix: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        if self.mode == "semantic":
            return self.store.dimension
        return len(self.columns)

    def fit(self, sequences: Sequence[LogSequence]) -> "SequenceFeaturizer":
        seen = sorted({tid for s in sequences for tid in s.template_ids if tid >= 0})
        self.columns = {tid: col for col, tid in enumerate(seen)}
        if self.mode == "semantic":
            by_id = {t.template_id: t for t in self.templates}
            table = IdfTable.from_templates([by_id[tid] for tid in seen], smooth=self.smooth_idf)
            self.events = EventVectorCache(self.templates, self.store, table)
            self._event_matrix = self.events.matrix(len(self.templates))
        elif self.mode == "weighted_count" or self.count_normalization == "idf":
            remapped = [[self.columns[t] for t in s.template_ids if t in self.columns] for s in sequences]
            self.weights = event_weights(remapped, len(self.columns))
        return self

    def transform(self, sequences: Sequence[LogSequence]) -> np.ndarray:
        if self.mode == "semantic":
            if self.events is None:
                raise RuntimeError("featurizer is not fitted")
            size = len(self._event_matrix)
            counts = np.zeros((len(sequences), size))
            for row, seq in enumerate(sequences):
                ids = np.asarray(seq.template_ids, dtype=np.int64)
                ids = ids[(ids >= 0) & (ids < size)]
                counts[row] = np.bincount(ids, minlength=size)
            return counts @ self._event_matrix
        counts = count_matrix(sequences, self.columns)
        if self.weights is not None:
            counts *= self.weights
        return counts

    def fit_transform(self, sequences: Sequence[LogSequence]) -> np.ndarray:
        return self.fit(sequences).transform(sequences)

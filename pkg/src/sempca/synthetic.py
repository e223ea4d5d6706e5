"""Deterministic synthetic log corpus for desk-scale experiments.

Normal behaviour comes from five workflows of six templates each (thirty
normal templates); anomalous sequences are normal ones with one of five
failure templates injected. To mimic software evolution, a rolling upgrade
starts at the beginning of the test period: upgraded sequences emit reworded
versions of four templates (two normal, two failure), which never occur in
training. Reworded words get word vectors close to the words they replace,
the way synonyms sit close together in pretrained embeddings.

The generator also renders raw HDFS-style log lines so the full pipeline
(header stripping, parsing, grouping) can be exercised end to end.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from sempca.grouper import Label, LogSequence
from sempca.parser import LogTemplate
from sempca.representation import WordVectorStore, tokenize_template

# (template, kind) where kind is "core" (count scales with replication),
# "once" (exactly one occurrence) or "opt" (optional, single occurrence).
WORKFLOWS: list[list[tuple[str, str]]] = [
    [
        ("BLOCK* NameSystem.allocateBlock: <*> <*>", "once"),
        ("Receiving block <*> src: <*> dest: <*>", "core"),
        ("Received block <*> of size <*> from <*>", "core"),
        ("PacketResponder <*> for block <*> terminating", "core"),
        ("BLOCK* NameSystem.addStoredBlock: blockMap updated: <*> is added to <*> size <*>", "core"),
        ("Verification succeeded for <*>", "opt"),
    ],
    [
        ("BLOCK* ask <*> to replicate <*> to datanode(s) <*>", "once"),
        ("Starting thread to transfer block <*> to <*>", "once"),
        ("Transmitted block <*> to <*>", "once"),
        ("Received replica block <*> src: <*> dest: <*> of size <*>", "core"),
        ("Replication monitor scheduled <*> pending transfers", "opt"),
        ("Block report processed for replica <*>", "opt"),
    ],
    [
        ("BLOCK* ask <*> to delete <*>", "once"),
        ("BLOCK* NameSystem.delete: <*> is added to invalidSet of <*>", "core"),
        ("Deleting block <*> file <*>", "core"),
        ("Trash policy moved file <*> to checkpoint", "opt"),
        ("Lease released on path <*> by client <*>", "once"),
        ("Edit log sync completed for transaction <*>", "opt"),
    ],
    [
        ("Opening secure channel to client <*>", "once"),
        ("Authenticated user <*> with token <*>", "once"),
        ("Serving read request for file <*> offset <*>", "core"),
        ("Sent packet <*> bytes to reader <*>", "core"),
        ("Closing secure channel to client <*>", "once"),
        ("Checksum verified for chunk <*>", "opt"),
    ],
    [
        ("Heartbeat received from datanode <*> capacity <*>", "core"),
        ("Updated storage report for volume <*>", "core"),
        ("Scheduled balancer move of block <*> to <*>", "once"),
        ("Balancer iteration finished moving <*> bytes", "once"),
        ("Cache directive refreshed for pool <*>", "opt"),
        ("Metrics snapshot written to sink <*>", "opt"),
    ],
]

FAILURES: list[str] = [
    "Exception in receiveBlock for block <*> java.io.IOException: Connection reset by peer",
    "writeBlock <*> received exception java.net.SocketTimeoutException: timeout while waiting for channel",
    "Got exception while serving <*> to <*> java.io.IOException: Broken pipe",
    "PacketResponder <*> for block <*> Interrupted unexpected failure",
    "Unexpected error trying to delete block <*> BlockInfo not found in volumeMap",
]
FAILURE_WEIGHTS = (0.3, 0.25, 0.15, 0.15, 0.15)

# (index into the flat template list, reworded text, {new word: word it replaces})
REWORDINGS: list[tuple[int, str, dict[str, str]]] = [
    (0, "BLOCK* NameSystem.assignBlock: <*> <*>", {"assign": "allocate"}),
    (12, "BLOCK* ask <*> to remove <*>", {"remove": "delete"}),
    (30, "Error in receiveBlock for block <*> java.io.IOException: Connection dropped by peer",
     {"error": "exception", "dropped": "reset"}),
    (31, "writeBlock <*> caught error java.net.SocketTimeoutException: deadline while awaiting channel",
     {"caught": "received", "error": "exception", "deadline": "timeout", "awaiting": "waiting"}),
]


def template_texts() -> list[str]:
    """Original templates (30 normal, then 5 failures) followed by the reworded ones."""
    normal = [text for wf in WORKFLOWS for text, _ in wf]
    return normal + FAILURES + [text for _, text, _ in REWORDINGS]


N_NORMAL = sum(len(wf) for wf in WORKFLOWS)
N_ORIGINAL = N_NORMAL + len(FAILURES)


@dataclass
class SyntheticCorpus:
    templates: list[LogTemplate]
    sequences: list[LogSequence]
    store: WordVectorStore
    upgraded: list[bool] = field(default_factory=list)

    @property
    def anomalous_templates(self) -> set[int]:
        rewordings = {N_ORIGINAL + i for i, (src, _, _) in enumerate(REWORDINGS) if src >= N_NORMAL}
        return set(range(N_NORMAL, N_ORIGINAL)) | rewordings


def make_word_vectors(dimension: int, rng: np.random.Generator, synonym_noise: float = 0.2) -> WordVectorStore:
    words = sorted({w for t in template_texts()[:N_ORIGINAL] for w in tokenize_template(t)})
    table: dict[str, np.ndarray] = {}
    for w in words:
        v = rng.standard_normal(dimension)
        table[w] = v / np.linalg.norm(v)
    for _, _, mapping in REWORDINGS:
        for new, old in mapping.items():
            if new in table:
                continue
            v = table[old] + synonym_noise * rng.standard_normal(dimension) / np.sqrt(dimension)
            table[new] = v / np.linalg.norm(v)
    # a few generic words the corpus never uses, so the file looks like a real store
    for w in ("the", "and", "server", "network", "memory"):
        if w not in table:
            v = rng.standard_normal(dimension)
            table[w] = v / np.linalg.norm(v)
    return WordVectorStore(table, dimension)


def _workflow_sequence(rng: np.random.Generator, wf_index: int) -> list[int]:
    base = wf_index * 6
    replication = int(rng.integers(2, 5))
    ids: list[int] = []
    for j, (_, kind) in enumerate(WORKFLOWS[wf_index]):
        tid = base + j
        if kind == "once":
            ids.append(tid)
        elif kind == "core":
            ids.extend([tid] * replication)
        elif rng.random() < 0.4:
            ids.append(tid)
    return ids


def generate(
    n_sequences: int = 10_000,
    anomaly_rate: float = 0.05,
    upgrade_fraction: float = 0.6,
    dimension: int = 50,
    seed: int = 7,
    test_start: float = 0.7,
) -> SyntheticCorpus:
    """Build the corpus.

    Sequences from position ``test_start * n_sequences`` onwards belong to the
    test period; each of them is upgraded with probability
    ``upgrade_fraction``. ``upgrade_fraction=0`` yields a corpus whose test
    set contains no unseen templates.
    """
    rng = np.random.default_rng(seed)
    store = make_word_vectors(dimension, rng)
    texts = template_texts()
    templates = [LogTemplate(i, t.split()) for i, t in enumerate(texts)]
    reword = {src: N_ORIGINAL + i for i, (src, _, _) in enumerate(REWORDINGS)}
    wf_probs = np.array([0.35, 0.15, 0.15, 0.2, 0.15])

    sequences, upgraded = [], []
    first_test = int(round(test_start * n_sequences))
    for i in range(n_sequences):
        wf = int(rng.choice(len(WORKFLOWS), p=wf_probs))
        ids = _workflow_sequence(rng, wf)
        label = Label.NORMAL
        if rng.random() < anomaly_rate:
            label = Label.ANOMALOUS
            failure = N_NORMAL + int(rng.choice(len(FAILURES), p=FAILURE_WEIGHTS))
            for _ in range(int(rng.integers(2, 5))):
                ids.insert(int(rng.integers(1, len(ids) + 1)), failure)
        is_up = i >= first_test and rng.random() < upgrade_fraction
        if is_up:
            ids = [reword.get(t, t) for t in ids]
        sequences.append(LogSequence(i, ids, label, group_key=f"blk_{1000 + i}"))
        upgraded.append(is_up)
    return SyntheticCorpus(templates, sequences, store, upgraded)


def render_logs(corpus: SyntheticCorpus, path: str | Path, seed: int = 0, start_epoch: int = 1_225_000_000) -> int:
    """Write HDFS-style raw lines for the corpus and return the line count.

    Sessions interleave in small batches, parameters are filled with random
    numbers, IPs and block ids. A matching label CSV is ``<path>.labels.csv``.
    """
    rng = np.random.default_rng(seed)
    path = Path(path)
    t = start_epoch
    lines = []
    batch = 4
    for start in range(0, len(corpus.sequences), batch):
        group = corpus.sequences[start : start + batch]
        queues = [list(s.template_ids) for s in group]
        while any(queues):
            live = [j for j, q in enumerate(queues) if q]
            j = live[int(rng.integers(len(live)))]
            seq = group[j]
            tid = queues[j].pop(0)
            text = " ".join(corpus.templates[tid].tokens)
            parts = text.split("<*>")
            out = parts[0]
            for k, part in enumerate(parts[1:]):
                if k == 0 and "block" in parts[0].lower():
                    value = seq.group_key
                else:
                    value = _random_param(rng)
                out += value + part
            if seq.group_key not in out:
                out += f" [{seq.group_key}]"
            t += int(rng.integers(0, 3))
            stamp = _hdfs_stamp(t)
            lines.append(f"{stamp} {int(rng.integers(10, 999))} INFO dfs.DataNode: {out}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    with open(str(path) + ".labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("BlockId,Label\n")
        for s in corpus.sequences:
            fh.write(f"{s.group_key},{'Anomaly' if s.is_anomalous else 'Normal'}\n")
    return len(lines)


def _random_param(rng: np.random.Generator) -> str:
    kind = int(rng.integers(3))
    if kind == 0:
        return str(int(rng.integers(0, 100_000)))
    if kind == 1:
        return ".".join(str(int(x)) for x in rng.integers(1, 255, size=4)) + f":{int(rng.integers(1000, 60000))}"
    return f"/user/root/part-{int(rng.integers(0, 1000)):05d}"


def _hdfs_stamp(epoch_s: int) -> str:
    import time

    tm = time.gmtime(epoch_s)
    return time.strftime("%y%m%d %H%M%S", tm)


def write_corpus(corpus: SyntheticCorpus, directory: str | Path) -> None:
    """Persist templates, sequences and word vectors in the pipeline's file formats."""
    from sempca.grouper import write_sequences
    from sempca.parser import write_vocabulary

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_vocabulary(directory / "vocabulary.tsv", corpus.templates)
    write_sequences(directory / "sequences.tsv", corpus.sequences)
    corpus.store.save(directory / "word_vectors.txt")


def load_corpus(directory: str | Path) -> SyntheticCorpus:
    from sempca.grouper import read_sequences
    from sempca.parser import read_vocabulary

    directory = Path(directory)
    return SyntheticCorpus(
        read_vocabulary(directory / "vocabulary.tsv"),
        read_sequences(directory / "sequences.tsv"),
        WordVectorStore.load(directory / "word_vectors.txt"),
    )


def unseen_fraction(corpus: SyntheticCorpus, train_fraction: float = 0.6, val_fraction: float = 0.1) -> tuple[int, int]:
    """(unseen test templates, distinct test templates) under the chronological split."""
    n = len(corpus.sequences)
    n_train = int(n * train_fraction)
    n_test_start = n_train + int(n * val_fraction)
    seen = {t for s in corpus.sequences[:n_train] for t in s.template_ids}
    test = {t for s in corpus.sequences[n_test_start:] for t in s.template_ids}
    return len(test - seen), len(test)


def default_corpus(upgrade: bool = True, seed: Optional[int] = None) -> SyntheticCorpus:
    kwargs = {} if seed is None else {"seed": seed}
    return generate(upgrade_fraction=0.6 if upgrade else 0.0, **kwargs)

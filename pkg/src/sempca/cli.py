"""Command-line entry point: ``sempca <subcommand> --config run.yaml``.

Every stage reads its inputs from and writes its outputs to
``<output_dir>/<run_id>/``. The run id defaults to a prefix of the config
hash, so editing the config starts a fresh directory while re-running an
unchanged config reuses (and verifies) the existing artifacts.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from sempca import __version__
from sempca.config import ConfigError, config_hash, hashed_part, load_config, run_id
from sempca.detect_cluster import ClusterModel, zero_vector_mask
from sempca.detect_pca import PcaModel
from sempca.errors import DataError, MissingArtifact, SemPCAError, TargetsUnreachable
from sempca.eval.bench import bench
from sempca.eval.experiments import stability_experiment, unseen_count, unseen_event_experiment
from sempca.eval.metrics import REPORT_SCHEMA_VERSION, metrics
from sempca.eval.search import grid_search
from sempca.eval.split import SplitSpec, split_chronological
from sempca.grouper import GroupingStrategy, Label, LogSequence, group, read_sequences
from sempca.io import npz_bytes, write_once
from sempca.parser import (
    HDFS_HEADER,
    HDFS_MASKS,
    HDFS_TIMESTAMP_FORMAT,
    ParserConfig,
    SkipReport,
    parse_corpus,
    read_assignments,
    read_records,
    read_vocabulary,
)
from sempca.pipeline import Context, Detector, labels_of
from sempca.representation import WordVectorStore, tokenize_template

logger = logging.getLogger("sempca")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
LOG_LEVEL_ENV = "SEMPCA_LOG_LEVEL"


class Run:
    """One run directory plus the resolved config that owns it."""

    def __init__(self, config: dict):
        self.config = config
        self.hash = config_hash(config)
        self.id = run_id(config)
        self.dir = Path(config["output_dir"]) / self.id
        self._store: Optional[WordVectorStore] = None
        self._vocabulary = None

    def path(self, name: str) -> Path:
        return self.dir / name

    def require(self, name: str, stage: str) -> Path:
        path = self.path(name)
        if not path.exists():
            raise MissingArtifact(path, stage)
        return path

    def write(self, name: str, data: bytes | str) -> Path:
        path = self.path(name)
        if write_once(path, data):
            logger.info("wrote %s", path)
        else:
            logger.info("%s unchanged", path)
        return path

    def write_json(self, name: str, obj: Any) -> Path:
        return self.write(name, json.dumps(obj, sort_keys=True, indent=2) + "\n")

    def write_jsonl(self, name: str, records: Sequence[dict]) -> Path:
        return self.write(name, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))

    def record(self, **fields) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION, "config_hash": self.hash, "run_id": self.id, **fields}

    def snapshot(self) -> None:
        # one snapshot per hashed config, so an explicit --run-id can host several
        self.write_json(f"config_{self.hash[:12]}.json", {"config_hash": self.hash, "config": hashed_part(self.config)})

    # shared inputs -------------------------------------------------------

    def dataset(self) -> dict:
        return self.config["dataset"]

    def vocabulary(self):
        if self._vocabulary is None:
            self._vocabulary = read_vocabulary(self.require("vocabulary.tsv", "parse"))
        return self._vocabulary

    def store(self) -> WordVectorStore:
        if self._store is None:
            path = self.dataset()["word_vectors"]
            if path is None and self.dataset()["corpus_dir"]:
                candidate = Path(self.dataset()["corpus_dir"]) / "word_vectors.txt"
                path = candidate if candidate.exists() else None
            if path is None:
                raise ConfigError("semantic detectors need dataset.word_vectors")
            words = {w for t in self.vocabulary() for w in tokenize_template(t)}
            self._store = WordVectorStore.load(_existing(path), vocabulary=words)
        return self._store

    def sequences(self) -> list[LogSequence]:
        return read_sequences(self.require("sequences.tsv", "group"))

    def splits(self) -> tuple[list[LogSequence], list[LogSequence], list[LogSequence]]:
        return split_chronological(self.sequences(), SplitSpec(*self.config["split"]))

    def context(self, semantic: bool) -> Context:
        cfg = self.config
        return Context(
            templates=self.vocabulary() if semantic else None,
            store=self.store() if semantic else None,
            smooth_idf=cfg["representation"]["smooth_idf"],
            count_normalization=cfg["representation"]["count_normalization"],
            pca_train_on=cfg["pca"]["train_on"],
            q_alpha=cfg["pca"]["q_alpha"],
            max_cluster_train=cfg["cluster"]["max_train"],
            seed=cfg["seed"],
        )

    def detector(self, name: str) -> Detector:
        probe = Detector(name)
        return Detector(name, self.context(probe.mode == "semantic"))

    def grid(self, name: str) -> Optional[dict]:
        return self.config["grid"].get(name)


def _existing(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    return path


def _header(dataset: dict) -> str:
    return HDFS_HEADER if dataset["header"] == "hdfs" else dataset["header"]


def _parser_config(config: dict) -> ParserConfig:
    p = config["parser"]
    masks = p["masks"]
    if masks == "hdfs":
        masks = HDFS_MASKS
    elif masks in (None, "none"):
        masks = []
    else:
        masks = [tuple(m) for m in masks]
    return ParserConfig(p["tree_depth"], p["similarity_threshold"], p["max_children"], masks)


def _records(run: Run):
    ds = run.dataset()
    fmt = ds["timestamp_format"]
    if fmt is None and ds["header"] == "hdfs":
        fmt = HDFS_TIMESTAMP_FORMAT
    with open(_existing(ds["log_file"]), encoding="utf-8", errors="replace") as fh:
        skips = SkipReport()
        records = list(read_records(fh, _header(ds), fmt, ds["group_key_pattern"], skips))
    return records, skips


def _labels(run: Run, records):
    ds = run.dataset()
    source = ds["labels"]
    if source is None:
        return None
    if source == "header":
        normal = ds["normal_header_label"]
        return [None if r.label is None else (Label.NORMAL if r.label == normal else Label.ANOMALOUS) for r in records]
    anomaly_values = {str(v).lower() for v in ds["anomaly_values"]}
    mapping = {}
    with open(_existing(source), encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {ds["label_key_column"], ds["label_column"]} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{source}: missing columns {sorted(missing)}")
        for row in reader:
            value = row[ds["label_column"]].strip().lower()
            mapping[row[ds["label_key_column"]].strip()] = Label.ANOMALOUS if value in anomaly_values else Label.NORMAL
    return mapping


def _strategy(config: dict) -> GroupingStrategy:
    g = config["grouping"]
    if g["kind"] == "session":
        return GroupingStrategy.session()
    if g["kind"] == "fixed_count":
        return GroupingStrategy.fixed_count(g["window"], g["per_session"])
    return GroupingStrategy.fixed_time(g["window"], g["per_session"])


# stages ------------------------------------------------------------------


def cmd_parse(run: Run) -> None:
    ds = run.dataset()
    if ds["corpus_dir"]:
        vocabulary = read_vocabulary(_existing(Path(ds["corpus_dir"]) / "vocabulary.tsv"))
        run.write("vocabulary.tsv", _vocabulary_text(vocabulary))
        run.write_json("parse.json", run.record(source=str(ds["corpus_dir"]), templates=len(vocabulary)))
        print(f"{len(vocabulary)} templates -> {run.dir}")
        return
    if not ds["log_file"]:
        raise ConfigError("set dataset.log_file or dataset.corpus_dir")
    records, skips = _records(run)
    vocabulary, assignments = parse_corpus(records, _parser_config(run.config))
    run.write("vocabulary.tsv", _vocabulary_text(vocabulary))
    run.write("assignments.txt", "".join(f"{a}\n" for a in assignments))
    unparsed = sum(1 for a in assignments if a < 0)
    run.write_json(
        "parse.json",
        run.record(records=len(records), skipped_lines=skips.skipped, unparsed=unparsed, templates=len(vocabulary)),
    )
    print(f"{len(records)} records, {len(vocabulary)} templates, {skips.skipped} skipped lines -> {run.dir}")


def _vocabulary_text(vocabulary) -> str:
    return "".join(f"{t.template_id}\t{' '.join(t.tokens)}\n" for t in vocabulary)


def _sequences_text(sequences: Sequence[LogSequence]) -> str:
    return "".join(f"{s.seq_id}\t{s.label.value}\t{' '.join(map(str, s.template_ids))}\n" for s in sequences)


def cmd_group(run: Run) -> None:
    ds = run.dataset()
    run.require("vocabulary.tsv", "parse")
    if ds["corpus_dir"]:
        sequences = read_sequences(_existing(Path(ds["corpus_dir"]) / "sequences.tsv"))
    else:
        assignments = read_assignments(run.require("assignments.txt", "parse"))
        records, _ = _records(run)
        if len(records) != len(assignments):
            raise DataError("log file changed since parsing; start a new run")
        sequences = group(records, assignments, _labels(run, records), _strategy(run.config))
    run.write("sequences.tsv", _sequences_text(sequences))
    counts = {label.value: sum(1 for s in sequences if s.label is label) for label in Label}
    run.write_json("group.json", run.record(sequences=len(sequences), labels=counts))
    print(f"{len(sequences)} sequences ({counts['anomalous']} anomalous) -> {run.dir}")


def cmd_vectorize(run: Run, detectors: Sequence[str]) -> None:
    train, val, test = run.splits()
    for name in detectors:
        det = run.detector(name)
        featurizer = det.featurizer()
        arrays = {
            "X_train": featurizer.fit_transform(train),
            "X_val": featurizer.transform(val),
            "X_test": featurizer.transform(test),
            "y_train": labels_of(train),
            "y_val": labels_of(val),
            "y_test": labels_of(test),
        }
        meta = {"config_hash": run.hash, "detector": name, "mode": det.mode, "dimension": featurizer.dimension}
        run.write(f"vectors_{name}.npz", npz_bytes(meta=np.array(json.dumps(meta, sort_keys=True)), **arrays))
        print(f"{name}: {len(train)}/{len(val)}/{len(test)} vectors of dimension {featurizer.dimension}")


def _vectors(run: Run, name: str) -> dict[str, np.ndarray]:
    with np.load(run.require(f"vectors_{name}.npz", "vectorize")) as data:
        return {key: data[key] for key in data.files}


def _finite(x: float) -> Optional[float]:
    return x if math.isfinite(x) else None


def cmd_grid_search(run: Run, detectors: Sequence[str]) -> None:
    for name in detectors:
        v = _vectors(run, name)
        family = run.detector(name).family
        result = grid_search(family, v["X_train"], v["y_train"], v["X_val"], v["y_val"], run.grid(name))
        run.write_jsonl(
            f"search_{name}.jsonl",
            [run.record(detector=name, index=i, params=p["params"], val_f1=_finite(p["f1"])) for i, p in enumerate(result.log)],
        )
        run.write_json(f"params_{name}.json", run.record(detector=name, params=result.best_params, val_f1=result.best_f1))
        print(f"{name}: best {result.best_params} (validation F1 {result.best_f1:.3f})")


def _params(run: Run, name: str) -> dict:
    with open(run.require(f"params_{name}.json", "grid-search"), encoding="utf-8") as fh:
        return json.load(fh)["params"]


def cmd_fit(run: Run, detectors: Sequence[str]) -> None:
    for name in detectors:
        v = _vectors(run, name)
        params = _params(run, name)
        model = run.detector(name).family.fit(v["X_train"], v["y_train"], params)
        run.write(f"model_{name}.npz", model.to_bytes({"config_hash": run.hash, "detector": name}))
        print(f"{name}: model fitted with {params}")


def _load_model(path: Path):
    with np.load(path) as data:
        kind = json.loads(str(data["meta"])).get("kind")
    return PcaModel.load(path) if kind == "pca" else ClusterModel.load(path)


def cmd_predict(run: Run, detectors: Sequence[str]) -> None:
    for name in detectors:
        model = _load_model(run.require(f"model_{name}.npz", "fit"))
        X = _vectors(run, name)["X_test"]
        flags, scores = model.predict(X)
        flags, scores = np.atleast_1d(flags), np.atleast_1d(scores)
        lines = "".join(f"{i}\t{int(f)}\t{float(s)!r}\n" for i, (f, s) in enumerate(zip(flags, scores)))
        run.write(f"predictions_{name}.tsv", lines)
        print(f"{name}: {int(flags.sum())} of {len(flags)} test sequences flagged")


def _predictions(run: Run, name: str) -> np.ndarray:
    path = run.require(f"predictions_{name}.tsv", "predict")
    with open(path, encoding="utf-8") as fh:
        return np.array([line.split("\t")[1] == "1" for line in fh if line.strip()], dtype=bool)


def cmd_evaluate(run: Run, detectors: Sequence[str], out=None) -> list[dict]:
    out = out or sys.stdout
    records = []
    for name in detectors:
        v = _vectors(run, name)
        report = metrics(_predictions(run, name), v["y_test"])
        report.detector = name
        report.dataset = run.dataset()["name"]
        report.seed = run.config["seed"]
        report.hyper_params = _params(run, name)
        if run.detector(name).family.name == "cluster":
            zeros = int(zero_vector_mask(v["X_test"]).sum())
            if zeros:
                report.flags.append(f"zero_vectors:{zeros}")
        records.append({**run.record(), **report.to_record()})
    run.write_jsonl("report.jsonl", records)
    print_table(records, out)
    return records


def print_table(records: Sequence[dict], out=None) -> None:
    out = out or sys.stdout
    dataset = records[0].get("dataset") if records else ""
    out.write(f"{'Detector':<14}{'Prec.':>8}{'Recall':>8}{'F1':>8}" + (f"   ({dataset})" if dataset else "") + "\n")
    for r in records:
        out.write(f"{r['detector']:<14}{r['precision']:>8.3f}{r['recall']:>8.3f}{r['f1']:>8.3f}\n")


def cmd_stability(run: Run, detectors: Sequence[str], out=None) -> None:
    out = out or sys.stdout
    train, val, test = run.splits()
    cfg = run.config["stability"]
    records = []
    for name in detectors:
        rows = stability_experiment(
            run.detector(name), train, val, test, cfg["ratios"], cfg["repeats"], run.config["seed"], run.grid(name)
        )
        for row in rows:
            records.append(
                run.record(detector=name, ratio=row.ratio, mean_f1=row.mean_f1, std_f1=row.std_f1, f1s=row.f1s, repeats=cfg["repeats"])
            )
    run.write_jsonl("stability.jsonl", records)
    out.write(f"{'Detector':<14}{'Ratio':>8}{'Avg F1':>9}{'Sigma':>8}\n")
    for r in records:
        out.write(f"{r['detector']:<14}{r['ratio']:>8.0%}{r['mean_f1']:>9.3f}{r['std_f1']:>8.3f}\n")


def cmd_unseen(run: Run, detectors: Sequence[str], out=None) -> None:
    out = out or sys.stdout
    train, val, test = run.splits()
    cfg = run.config["unseen"]
    targets = cfg["targets"]
    if not targets:
        low = unseen_count(train, test)
        targets = [low, low + 1, low + 2, low + 3]
    records = []
    for name in detectors:
        rows = unseen_event_experiment(
            run.detector(name), train, val, test, targets, cfg["sample_ratio"], run.config["seed"], run.grid(name)
        )
        for row in rows:
            records.append(
                run.record(
                    detector=name, target=row.target, unseen=row.unseen, train_size=row.train_size, f1=row.f1,
                    sample_ratio=cfg["sample_ratio"],
                )
            )
    run.write_jsonl("unseen.jsonl", records)
    out.write(f"{'Detector':<14}{'Unseen':>8}{'Train':>8}{'F1':>8}\n")
    for r in records:
        out.write(f"{r['detector']:<14}{r['unseen']:>8}{r['train_size']:>8}{r['f1']:>8.3f}\n")


def cmd_bench(run: Run, detectors: Sequence[str], out=None) -> Path:
    out = out or sys.stdout
    records = []
    for name in detectors:
        v = _vectors(run, name)
        params = _params(run, name)
        timing = bench(run.detector(name).family, params, v["X_train"], v["y_train"], v["X_test"])
        record = run.record(detector=name, params=params, n_train=len(v["X_train"]), n_test=len(v["X_test"]))
        record["train_time_s"] = timing.train_time_s
        if timing.predict_time_ms_per_seq is not None:
            record["predict_time_ms_per_seq"] = timing.predict_time_ms_per_seq
        records.append(record)
    # timings differ between runs, so every bench gets its own file
    n = 0
    while run.path(f"bench_{n}.jsonl").exists():
        n += 1
    path = run.write_jsonl(f"bench_{n}.jsonl", records)
    out.write(f"{'Detector':<14}{'Train (s)':>11}{'Predict (ms)':>14}\n")
    for r in records:
        predict = r.get("predict_time_ms_per_seq")
        out.write(f"{r['detector']:<14}{r['train_time_s']:>11.3f}{'-' if predict is None else f'{predict:.4f}':>14}\n")
    return path


def cmd_synth(args: argparse.Namespace) -> None:
    from sempca import synthetic

    corpus = synthetic.generate(n_sequences=args.sequences, upgrade_fraction=args.upgrade, seed=args.seed)
    synthetic.write_corpus(corpus, args.out)
    if args.raw:
        n = synthetic.render_logs(corpus, Path(args.out) / "raw.log", seed=args.seed)
        print(f"{n} raw log lines -> {Path(args.out) / 'raw.log'}")
    print(f"{len(corpus.sequences)} sequences, {len(corpus.templates)} templates -> {args.out}")


STAGES = ("parse", "group", "vectorize", "grid-search", "fit", "predict", "evaluate")
PER_DETECTOR = {
    "vectorize": cmd_vectorize,
    "grid-search": cmd_grid_search,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "stability": cmd_stability,
    "unseen": cmd_unseen,
    "bench": cmd_bench,
}


def run_stage(run: Run, stage: str, detectors: Sequence[str]) -> None:
    if stage == "parse":
        cmd_parse(run)
    elif stage == "group":
        cmd_group(run)
    else:
        PER_DETECTOR[stage](run, detectors)


# argument handling -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _override(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML config file")
    common.add_argument("--set", dest="overrides", action="append", type=_override, default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set pca.q_alpha=0.01 (repeatable)")
    common.add_argument("--run-id", help="run directory name (default: config hash prefix)")
    common.add_argument("--output-dir", help="parent directory for run directories")
    common.add_argument("--seed", type=int)
    common.add_argument("-d", "--detector", dest="detectors", action="append", help="detector name (repeatable)")
    common.add_argument("--log-file", help="raw log file")
    common.add_argument("--corpus-dir", help="directory with vocabulary.tsv and sequences.tsv")
    common.add_argument("--labels", help="label CSV, or 'header'")
    common.add_argument("--word-vectors", help="word vector text file")

    parser = _Parser(prog="sempca", description="Log anomaly detection with semantic PCA and baselines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "parse": "mine templates from the raw log",
        "group": "group parsed lines into labeled sequences",
        "vectorize": "build train/validation/test vectors per detector",
        "grid-search": "tune hyper-parameters on validation F1",
        "fit": "fit each detector with its tuned hyper-parameters",
        "predict": "score the test set",
        "evaluate": "report precision, recall and F1",
        "stability": "F1 under sampled training sets",
        "unseen": "F1 against the number of unseen test templates",
        "bench": "time fitting and prediction",
        "run": "parse through evaluate in one go",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    synth = sub.add_parser("synth", help="write the synthetic corpus", description="write the synthetic corpus")
    synth.add_argument("--out", required=True)
    synth.add_argument("--sequences", type=int, default=10_000)
    synth.add_argument("--upgrade", type=float, default=0.6, help="fraction of test-period sequences that are reworded")
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--raw", action="store_true", help="also render raw HDFS-style lines and a label CSV")
    return parser


def config_from_args(args: argparse.Namespace) -> dict:
    overrides = dict(args.overrides)
    flags = {
        "run_id": args.run_id,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "detectors": args.detectors,
        "dataset.log_file": args.log_file,
        "dataset.corpus_dir": args.corpus_dir,
        "dataset.labels": args.labels,
        "dataset.word_vectors": args.word_vectors,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_config(args.config, overrides)


def _configure_logging() -> None:
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args)
            return EXIT_OK
        config = config_from_args(args)
        run = Run(config)
        run.snapshot()
        detectors = config["detectors"]
        stages = STAGES if args.command == "run" else (args.command,)
        for stage in stages:
            run_stage(run, stage, detectors)
        return EXIT_OK
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"sempca: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SemPCAError, TargetsUnreachable, OSError, ValueError) as exc:
        print(f"sempca: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort handler maps to the internal-error exit code
        logger.debug("internal error", exc_info=True)
        print(f"sempca: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Pipeline configuration: YAML file, command-line overrides, content hash."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import yaml

from sempca.pipeline import DETECTORS

DEFAULTS: dict[str, Any] = {
    "run_id": None,
    "output_dir": "out",
    "seed": 0,
    "dataset": {
        "name": "",
        # either a raw log file (parse + group) or a directory holding
        # vocabulary.tsv and sequences.tsv from an earlier pipeline
        "log_file": None,
        "corpus_dir": None,
        "header": "hdfs",
        "timestamp_format": None,
        "group_key_pattern": None,
        # labels: CSV path keyed by group key, "header" (per-line label group) or null
        "labels": None,
        "label_key_column": "BlockId",
        "label_column": "Label",
        "anomaly_values": ["anomaly", "anomalous", "abnormal", "1", "true"],
        "normal_header_label": "-",
        "word_vectors": None,
    },
    "parser": {"tree_depth": 4, "similarity_threshold": 0.4, "max_children": 100, "masks": "hdfs"},
    "grouping": {"kind": "session", "window": None, "per_session": False},
    "split": [6, 1, 3],
    "detectors": ["sempca", "pca", "logcluster", "semlogcluster"],
    "representation": {"smooth_idf": True, "count_normalization": "none"},
    "pca": {"train_on": "all", "q_alpha": 0.001},
    "cluster": {"max_train": 10000},
    # per-detector grid overrides, e.g. {"sempca": {"variance_fraction": [0.9]}}
    "grid": {},
    "stability": {"ratios": [0.01, 0.02, 0.05, 0.10, 0.20], "repeats": 10},
    "unseen": {"targets": [], "sample_ratio": 1.0},
}

# Keys left out of the hash: where results go, and which detectors and
# experiments a given invocation runs. Per-detector and experiment outputs
# record their own settings, so stages invoked with different selections
# share one run directory.
_UNHASHED = ("run_id", "output_dir", "detectors", "stability", "unseen")


class ConfigError(ValueError):
    """Invalid configuration; reported as a usage error."""


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base and path != "grid.":
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base.get(key), dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_path(config: dict, dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted key path such as ``pca.q_alpha``."""
    *parents, leaf = dotted.split(".")
    node = config
    for part in parents:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
    if leaf not in node and parents[:1] != ["grid"]:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = value


def load_config(path: Optional[str | Path] = None, overrides: Optional[dict[str, Any]] = None) -> dict:
    """Defaults, then the YAML file, then dotted-key overrides (command line wins)."""
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        config = _merge(config, loaded)
    for dotted, value in (overrides or {}).items():
        set_path(config, dotted, value)
    validate(config)
    return config


def validate(config: dict) -> None:
    detectors = config["detectors"]
    if isinstance(detectors, str):
        config["detectors"] = detectors = [detectors]
    unknown = [d for d in detectors if d not in DETECTORS]
    if unknown or not detectors:
        raise ConfigError(f"unknown detectors {unknown}; choose from {sorted(DETECTORS)}")
    split = config["split"]
    if len(split) != 3 or min(split) <= 0:
        raise ConfigError("split must be three positive ratios")
    grouping = config["grouping"]
    if grouping["kind"] not in ("session", "fixed_count", "fixed_time"):
        raise ConfigError(f"unknown grouping kind {grouping['kind']!r}")
    if grouping["kind"] == "fixed_time" and config["dataset"]["log_file"] and not config["dataset"]["timestamp_format"]:
        # epoch-millisecond headers need no format, but the header must capture a timestamp
        header = config["dataset"]["header"]
        if header != "hdfs" and "(?P<timestamp>" not in header:
            raise ConfigError("fixed_time grouping needs a header with a timestamp group")
    if config["pca"]["train_on"] not in ("all", "normal"):
        raise ConfigError("pca.train_on must be 'all' or 'normal'")
    if not 0 < config["pca"]["q_alpha"] < 1:
        raise ConfigError("pca.q_alpha must be in (0, 1)")
    if config["representation"]["count_normalization"] not in ("none", "idf"):
        raise ConfigError("representation.count_normalization must be 'none' or 'idf'")
    for name in config["grid"]:
        if name not in DETECTORS:
            raise ConfigError(f"grid override for unknown detector {name!r}")


def hashed_part(config: dict) -> dict:
    return {k: v for k, v in config.items() if k not in _UNHASHED}


def config_hash(config: dict) -> str:
    payload = hashed_part(config)
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def run_id(config: dict) -> str:
    return config["run_id"] or config_hash(config)[:12]

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sempca.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def raw_args(data_dir, tmp_path):
    raw = data_dir / "raw"
    return [
        "--log-file", str(raw / "raw.log"),
        "--labels", str(raw / "raw.log.labels.csv"),
        "--word-vectors", str(raw / "word_vectors.txt"),
        "--output-dir", str(tmp_path / "out"),
        "--run-id", "r1",
    ]


def run_dir(tmp_path, run_id="r1"):
    return tmp_path / "out" / run_id


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestParse:
    def test_golden_vocabulary(self, data_dir, tmp_path):
        args = ["parse", "--log-file", str(data_dir / "parser" / "fixture.log"), "--output-dir", str(tmp_path), "--run-id", "p"]
        assert main(args) == EXIT_OK
        out = tmp_path / "p"
        assert (out / "vocabulary.tsv").read_bytes() == (data_dir / "parser" / "golden_vocabulary.tsv").read_bytes()
        assert (out / "assignments.txt").read_bytes() == (data_dir / "parser" / "golden_assignments.txt").read_bytes()

    def test_missing_input_names_the_path(self, tmp_path, capsys):
        missing = tmp_path / "nowhere.log"
        assert main(["parse", "--log-file", str(missing), "--output-dir", str(tmp_path)]) != EXIT_OK
        assert str(missing) in capsys.readouterr().err

    def test_rerun_is_idempotent(self, data_dir, tmp_path):
        args = ["parse", "--log-file", str(data_dir / "parser" / "fixture.log"), "--output-dir", str(tmp_path), "--run-id", "p"]
        assert main(args) == EXIT_OK
        before = {p.name: p.read_bytes() for p in (tmp_path / "p").iterdir()}
        assert main(args) == EXIT_OK
        assert {p.name: p.read_bytes() for p in (tmp_path / "p").iterdir()} == before


class TestPipeline:
    def test_full_run(self, raw_args, tmp_path, capsys):
        assert main(["run", "-d", "sempca", "-d", "pca", *raw_args]) == EXIT_OK
        table = capsys.readouterr().out
        assert "Prec." in table and "Recall" in table
        records = {r["detector"]: r for r in read_jsonl(run_dir(tmp_path) / "report.jsonl")}
        assert records["sempca"]["f1"] >= 0.95
        for r in records.values():
            assert r["schema_version"] == 1 and len(r["config_hash"]) == 64
            assert r["tp"] + r["fp"] + r["fn"] + r["tn"] == 600

    def test_predict_before_fit(self, raw_args, tmp_path, capsys):
        for stage in ("parse", "group", "vectorize"):
            assert main([stage, "-d", "pca", *raw_args]) == EXIT_OK
        capsys.readouterr()
        assert main(["predict", "-d", "pca", *raw_args]) == EXIT_DATA
        err = capsys.readouterr().err
        assert "model_pca.npz" in err and "fit" in err

    def test_stages_resume(self, raw_args, tmp_path):
        assert main(["parse", *raw_args]) == EXIT_OK
        assert main(["group", *raw_args]) == EXIT_OK
        assert main(["vectorize", "-d", "logcluster", *raw_args]) == EXIT_OK
        assert main(["grid-search", "-d", "logcluster", *raw_args]) == EXIT_OK
        assert main(["fit", "-d", "logcluster", *raw_args]) == EXIT_OK
        assert main(["predict", "-d", "logcluster", *raw_args]) == EXIT_OK
        assert main(["evaluate", "-d", "logcluster", *raw_args]) == EXIT_OK
        model = run_dir(tmp_path) / "model_logcluster.npz"
        assert model.exists() and (run_dir(tmp_path) / "search_logcluster.jsonl").exists()

    def test_bench_fields(self, raw_args, tmp_path):
        assert main(["run", "-d", "sempca", *raw_args]) == EXIT_OK
        assert main(["bench", "-d", "sempca", *raw_args]) == EXIT_OK
        assert main(["bench", "-d", "sempca", *raw_args]) == EXIT_OK
        first = read_jsonl(run_dir(tmp_path) / "bench_0.jsonl")[0]
        assert first["train_time_s"] > 0 and first["predict_time_ms_per_seq"] > 0
        assert (run_dir(tmp_path) / "bench_1.jsonl").exists()

    def test_changed_artifact_is_not_overwritten(self, raw_args, tmp_path, capsys):
        assert main(["parse", *raw_args]) == EXIT_OK
        vocab = run_dir(tmp_path) / "vocabulary.tsv"
        vocab.write_text("tampered\n")
        assert main(["parse", *raw_args]) == EXIT_DATA
        assert vocab.read_text() == "tampered\n"

    def test_experiments(self, raw_args, tmp_path):
        assert main(["run", "-d", "pca", *raw_args]) == EXIT_OK
        assert main(["unseen", "-d", "pca", *raw_args]) == EXIT_OK
        rows = read_jsonl(run_dir(tmp_path) / "unseen.jsonl")
        assert [r["target"] for r in rows] == sorted(r["target"] for r in rows)
        assert main(["stability", "-d", "pca", "--set", "stability.ratios=[0.5]", "--set", "stability.repeats=2", *raw_args]) == EXIT_OK
        assert len(read_jsonl(run_dir(tmp_path) / "stability.jsonl")) == 1

    def test_later_stages_find_the_default_run_directory(self, data_dir, tmp_path):
        base = ["--corpus-dir", str(data_dir / "synthetic"), "--output-dir", str(tmp_path)]
        assert main(["run", "-d", "pca", "-d", "sempca", *base]) == EXIT_OK
        assert main(["bench", "-d", "pca", *base]) == EXIT_OK
        assert main(["stability", "-d", "pca", "--set", "stability.ratios=[0.5]", "--set", "stability.repeats=1", *base]) == EXIT_OK
        assert len(list(tmp_path.iterdir())) == 1

    def test_config_file_and_flag_precedence(self, data_dir, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text(f"output_dir: {tmp_path / 'ignored'}\ndataset:\n  corpus_dir: {data_dir / 'synthetic'}\n")
        assert main(["parse", "-c", str(cfg), "--output-dir", str(tmp_path / "used"), "--run-id", "x"]) == EXIT_OK
        assert (tmp_path / "used" / "x" / "vocabulary.tsv").exists()
        assert not (tmp_path / "ignored").exists()


class TestUsage:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path):
        assert main(["parse", "--set", "no.such=1", "--output-dir", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_detector(self, raw_args):
        assert main(["vectorize", "-d", "lstm", *raw_args]) == EXIT_USAGE

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "sempca.cli", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "grid-search" in proc.stdout

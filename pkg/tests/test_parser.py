from __future__ import annotations

import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sempca.errors import NoMatch
from sempca.parser import (
    HDFS_HEADER,
    HDFS_MASKS,
    HDFS_TIMESTAMP_FORMAT,
    WILDCARD,
    Drain,
    LogTemplate,
    ParserConfig,
    RawLogRecord,
    SkipReport,
    parse_corpus,
    parse_line,
    read_assignments,
    read_records,
    read_vocabulary,
    similarity,
    strip_header,
    write_assignments,
    write_vocabulary,
)

HDFS_LINE = "081109 203615 148 INFO dfs.DataNode$PacketResponder: PacketResponder 0 for block blk_4003 terminating"


def hdfs_config() -> ParserConfig:
    return ParserConfig(variable_masks=HDFS_MASKS)


def records(*contents: str) -> list[RawLogRecord]:
    return [RawLogRecord(i + 1, c) for i, c in enumerate(contents)]


class TestStripHeader:
    def test_hdfs_line(self):
        rec = strip_header(HDFS_LINE, HDFS_HEADER, timestamp_format=HDFS_TIMESTAMP_FORMAT)
        assert rec.content == "PacketResponder 0 for block blk_4003 terminating"
        assert rec.group_key == "blk_4003"
        # 2008-11-09 20:36:15 UTC
        assert rec.timestamp == 1226262975000

    def test_identity_pattern_keeps_whole_line(self):
        line = "anything at all: 1 2 3"
        assert strip_header(line, r"(?P<content>.*)").content == line

    def test_malformed_line_raises(self):
        with pytest.raises(NoMatch):
            strip_header("not a log line", HDFS_HEADER)

    def test_malformed_line_counted_in_skip_report(self):
        skips = SkipReport()
        lines = [HDFS_LINE, "garbage", HDFS_LINE]
        out = list(read_records(lines, HDFS_HEADER, HDFS_TIMESTAMP_FORMAT, skips=skips))
        assert [r.line_no for r in out] == [1, 3]
        assert skips.skipped == 1 and skips.lines == [2]

    def test_blank_content_is_no_match(self):
        with pytest.raises(NoMatch):
            strip_header("   ", r"(?P<content>.*)")

    def test_group_key_from_content_pattern(self):
        rec = strip_header("node-7 RAS KERNEL INFO ok", r"(?P<content>.*)", group_key_pattern=r"node-\d+")
        assert rec.group_key == "node-7"

    def test_epoch_seconds(self):
        rec = strip_header("1131566461 hello", r"(?P<timestamp>\d+) (?P<content>.*)", timestamp_format="epoch_s")
        assert rec.timestamp == 1131566461000


class TestDrain:
    def test_packet_responder_message(self):
        rec = strip_header(HDFS_LINE, HDFS_HEADER, timestamp_format=HDFS_TIMESTAMP_FORMAT)
        vocab, ids = parse_corpus([rec], hdfs_config())
        assert ids == [0]
        assert str(vocab[0]) == "PacketResponder <*> for block <*> terminating"

    def test_first_message_becomes_template(self):
        vocab, ids = parse_corpus(records("alpha beta gamma"))
        assert ids == [0] and vocab[0].tokens == ["alpha", "beta", "gamma"]

    def test_send_packets_merge(self):
        # similarity 2/3 >= 0.4, so the second message joins and generalizes the template
        vocab, ids = parse_corpus(records("send 5 packets", "send 9 packets"))
        assert ids == [0, 0]
        assert str(vocab[0]) == "send <*> packets"

    def test_below_threshold_creates_new_template(self):
        cfg = ParserConfig(similarity_threshold=0.9)
        vocab, ids = parse_corpus(records("open file alpha now", "open file beta later"), cfg)
        assert ids == [0, 1] and len(vocab) == 2

    def test_empty_stream(self):
        assert parse_corpus([]) == ([], [])

    def test_copies_of_one_message(self):
        vocab, ids = parse_corpus(records(*["same message here"] * 7))
        assert len(vocab) == 1 and ids == [0] * 7

    def test_different_lengths_never_merge(self):
        vocab, ids = parse_corpus(records("a b c", "a b c d"))
        assert ids == [0, 1]

    def test_max_children_overflow_routes_to_wildcard(self):
        cfg = ParserConfig(max_children=2, similarity_threshold=1.0)
        vocab, ids = parse_corpus(records("x1 alpha", "beta alpha", "gamma alpha", "delta alpha"), cfg)
        # distinct first tokens beyond the cap share one catch-all branch but stay distinct templates
        assert len(set(ids)) == 4

    def test_all_wildcard_message_is_skipped(self):
        vocab, ids = parse_corpus(records("123 456"), hdfs_config())
        assert ids == [-1] and vocab == []

    def test_parse_line_requires_matching_state(self):
        cfg = ParserConfig()
        with pytest.raises(ValueError):
            parse_line(RawLogRecord(1, "a b"), cfg, Drain(ParserConfig()))
        state = Drain(cfg)
        assert parse_line(RawLogRecord(1, "a b"), cfg, state) == 0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ParserConfig(tree_depth=2)
        with pytest.raises(ValueError):
            ParserConfig(similarity_threshold=0.0)
        with pytest.raises(ValueError):
            ParserConfig(similarity_threshold=1.5)


class TestFixtureCorpus:
    def test_golden_vocabulary(self, data_dir, tmp_path):
        with open(data_dir / "parser" / "fixture.log") as fh:
            recs = list(read_records(fh, HDFS_HEADER, HDFS_TIMESTAMP_FORMAT))
        vocab, ids = parse_corpus(recs, hdfs_config())
        write_vocabulary(tmp_path / "vocabulary.tsv", vocab)
        write_assignments(tmp_path / "assignments.txt", ids)
        assert (tmp_path / "vocabulary.tsv").read_bytes() == (data_dir / "parser" / "golden_vocabulary.tsv").read_bytes()
        assert (tmp_path / "assignments.txt").read_bytes() == (data_dir / "parser" / "golden_assignments.txt").read_bytes()

    def test_vocabulary_round_trip(self, data_dir):
        vocab = read_vocabulary(data_dir / "parser" / "golden_vocabulary.tsv")
        assert [t.template_id for t in vocab] == list(range(7))
        assert str(vocab[5]) == "Deleting block <*> file <*>"
        assert read_assignments(data_dir / "parser" / "golden_assignments.txt") == [0, 1, 2, 2, 3, 4, 0, 5, 5, 6]


def test_similarity_examples():
    assert similarity(["a", "b", "c"], ["a", "x", "c"]) == pytest.approx(2 / 3)
    assert similarity(["a"], ["a"]) == 1.0


def test_template_token_count():
    t = LogTemplate(0, ["a", WILDCARD])
    assert t.token_count == 2 and str(t) == "a <*>"


words = st.sampled_from(["open", "close", "read", "write", "file", "block", "user", "ok", "fail", "7", "42", "x9"])
messages = st.lists(st.lists(words, min_size=1, max_size=6).map(" ".join), min_size=0, max_size=40)


@given(messages)
def test_parse_invariants(msgs):
    recs = records(*msgs)
    vocab, ids = parse_corpus(recs)
    # dense first-seen ids
    assert [t.template_id for t in vocab] == list(range(len(vocab)))
    seen = []
    for i in ids:
        if i >= 0 and i not in seen:
            seen.append(i)
    assert seen == list(range(len(vocab)))
    assert len(ids) == len(msgs)
    # merge soundness against the final templates
    for msg, tid in zip(msgs, ids):
        if tid < 0:
            continue
        tokens = msg.split()
        template = vocab[tid].tokens
        assert len(tokens) == len(template)
        assert all(t == WILDCARD or t == m for t, m in zip(template, tokens))
        assert any(t != WILDCARD for t in template)
    # determinism
    assert parse_corpus(recs) == (vocab, ids)


@given(st.lists(st.sampled_from(["a", "b", "c", WILDCARD]), min_size=1, max_size=8))
def test_similarity_bounds(tokens):
    assert similarity(tokens, tokens) == 1.0
    other = list(reversed(tokens))
    assert 0.0 <= similarity(tokens, other) <= 1.0


def test_hdfs_masks_cover_ip_and_block():
    content = "Receiving block blk_-1608 src: /10.251.30.6:33145 dest: /10.251.30.6:50010"
    masked = hdfs_config().mask(content)
    assert masked == "Receiving block <*> src: /<*> dest: /<*>"
    assert not re.search(r"\d", masked)

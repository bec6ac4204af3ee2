import json
import unicodedata

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lmboot.corpus import (
    EntitySpan,
    Utterance,
    build_frequency_table,
    load_catalogs,
    load_utterances,
    load_word_vectors,
    normalize_tokens,
    write_utterances,
)
from lmboot.errors import DataError


class TestNormalizeTokens:
    def test_whitespace_and_lowercase(self):
        assert normalize_tokens("Play  Moonlight Sonata") == [
            "play", "moonlight", "sonata"
        ]

    def test_empty(self):
        assert normalize_tokens("") == []

    def test_nfc_unifies_encodings(self):
        decomposed = "café"          # e + combining acute
        precomposed = "café"          # precomposed e-acute
        assert unicodedata.normalize("NFC", decomposed) == precomposed
        assert normalize_tokens(decomposed) == normalize_tokens(precomposed)

    def test_non_latin_untouched(self):
        text = "गाना Bajao ГОРА"
        tokens = normalize_tokens(text)
        assert tokens[0] == "गाना"  # Devanagari unchanged
        assert tokens[1] == "bajao"
        assert tokens[2] == "ГОРА"  # Cyrillic not lowered

    @given(st.text(max_size=60))
    def test_idempotent(self, text):
        once = normalize_tokens(text)
        assert normalize_tokens(" ".join(once)) == once


class TestUtteranceIO:
    def test_single_record(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text(json.dumps({
            "tokens": ["play", "despacito"],
            "entities": [{"start": 1, "end": 2, "type": "SongTitle"}],
        }) + "\n")
        utts = load_utterances(path)
        assert len(utts) == 1
        assert utts[0].tokens == ("play", "despacito")
        assert utts[0].entities == (EntitySpan(1, 2, "SongTitle"),)
        assert utts[0].id == "line-1"

    def test_empty_span_rejected(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text(json.dumps({
            "tokens": ["a", "b"],
            "entities": [{"start": 1, "end": 1, "type": "X"}],
        }) + "\n")
        with pytest.raises(DataError):
            load_utterances(path)

    def test_overlapping_spans_rejected(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text(json.dumps({
            "tokens": ["a", "b", "c"],
            "entities": [{"start": 0, "end": 2, "type": "X"},
                         {"start": 1, "end": 3, "type": "Y"}],
        }) + "\n")
        with pytest.raises(DataError, match="overlap"):
            load_utterances(path)

    def test_file_order_preserved(self, tmp_path):
        path = tmp_path / "u.jsonl"
        lines = [json.dumps({"id": f"u{i}", "tokens": ["tok", str(i)]})
                 for i in range(3)]
        path.write_text("\n".join(lines) + "\n")
        assert [u.id for u in load_utterances(path)] == ["u0", "u1", "u2"]

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text('{"tokens": ["a"]}\n{oops\n')
        with pytest.raises(DataError, match=":2"):
            load_utterances(path)

    def test_tokens_text_exclusive(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text(json.dumps({"tokens": ["a"], "text": "a"}) + "\n")
        with pytest.raises(DataError, match="exactly one"):
            load_utterances(path)

    def test_text_is_normalized_tokens_are_verbatim(self, tmp_path):
        path = tmp_path / "u.jsonl"
        path.write_text(
            json.dumps({"id": "a", "text": "Play  Loud"}) + "\n"
            + json.dumps({"id": "b", "tokens": ["Play", "Loud"]}) + "\n"
        )
        by_id = {u.id: u for u in load_utterances(path)}
        assert by_id["a"].tokens == ("play", "loud")
        assert by_id["b"].tokens == ("Play", "Loud")

    def test_round_trip(self, tmp_path):
        original = [
            Utterance("x1", ("khela", "hobe"), (EntitySpan(0, 1, "T"),), "games"),
            Utterance("x2", ("mausam", "kaisa", "hai")),
        ]
        path = tmp_path / "rt.jsonl"
        write_utterances(original, path)
        assert load_utterances(path) == original


class TestWordVectors:
    def test_basic_load(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("2 3\nfoo 1 2 3\nbar 0.5 0 -1\n")
        table = load_word_vectors(path)
        assert table.dim == 3
        assert set(table.vectors) == {"foo", "bar"}
        assert list(table.vectors["bar"]) == [0.5, 0.0, -1.0]

    def test_row_width_mismatch(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("2 3\nfoo 1 2 3\nbar 1 2\n")
        with pytest.raises(DataError, match=":3"):
            load_word_vectors(path)

    def test_duplicate_keeps_last(self, tmp_path, caplog):
        path = tmp_path / "v.txt"
        path.write_text("2 2\nfoo 1 1\nfoo 9 9\n")
        table = load_word_vectors(path)
        assert list(table.vectors["foo"]) == [9.0, 9.0]
        assert any("duplicate" in r.message for r in caplog.records)

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("3 2\nfoo 1 1\n")
        with pytest.raises(DataError, match="declares 3"):
            load_word_vectors(path)


class TestFrequencyTable:
    def test_unsmoothed(self):
        table = build_frequency_table([["a", "a", "b"]], alpha=0.0)
        assert table.relfreq("a") == pytest.approx(2 / 3)
        assert table.relfreq("b") == pytest.approx(1 / 3)
        assert table.relfreq("c") == 0.0

    def test_add_one(self):
        table = build_frequency_table([["a", "a", "b"]], alpha=1.0)
        assert table.relfreq("a") == pytest.approx(0.6)

    def test_unsmoothed_mass_sums_to_one(self):
        corpus = [["a", "b", "a"], ["c", "b", "b", "d"]]
        table = build_frequency_table(corpus, alpha=0.0)
        assert sum(table.relfreq(t) for t in table.counts) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_pseudo_vocab_extends_denominator(self):
        table = build_frequency_table([["a", "a", "b"]], alpha=1.0, pseudo_vocab=3)
        assert table.vocab_size == 5
        assert table.relfreq("a") == pytest.approx(3 / 8)

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            build_frequency_table([], alpha=1.0)


class TestCatalogs:
    def test_load_and_group(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            json.dumps({"type": "Song", "surface": ["tum", "hi", "ho"]}) + "\n"
            + json.dumps({"type": "Song", "surface": ["jiya"], "weight": 3.0}) + "\n"
            + json.dumps({"type": "City", "surface": ["dilli"]}) + "\n"
        )
        catalogs = load_catalogs(path)
        assert set(catalogs) == {"Song", "City"}
        assert len(catalogs["Song"].entries) == 2
        assert catalogs["Song"].entries[0].weight == 1.0
        assert catalogs["Song"].entries[1].weight == 3.0

    def test_non_positive_weight_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(
            {"type": "Song", "surface": ["x"], "weight": 0.0}) + "\n")
        with pytest.raises(DataError, match="weight"):
            load_catalogs(path)

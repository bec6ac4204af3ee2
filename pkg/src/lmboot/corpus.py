"""Data model and file ingestion for utterances, entity catalogs, word vectors
and token frequency tables.

All structures are plain dataclasses, immutable by convention after
construction, so they can be read concurrently by any number of workers.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass
class EntitySpan:
    """Half-open token span [start, end) tagged with an entity type."""

    start: int
    end: int
    entity_type: str

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise DataError(
                f"invalid entity span [{self.start}, {self.end}) for type "
                f"{self.entity_type!r}: need 0 <= start < end"
            )

    def length(self) -> int:
        return self.end - self.start


@dataclass
class Utterance:
    """A tokenized sentence with optional entity annotations and scenario tag."""

    id: str
    tokens: tuple[str, ...]
    entities: tuple[EntitySpan, ...] = ()
    scenario: str | None = None

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.entities = tuple(self.entities)
        if not self.tokens:
            raise DataError(f"utterance {self.id!r}: tokens must be non-empty")
        if any(not tok for tok in self.tokens):
            raise DataError(f"utterance {self.id!r}: empty token")
        validate_spans(self.entities, len(self.tokens), self.id)


def validate_spans(spans: Sequence[EntitySpan], n_tokens: int, owner: str) -> None:
    """Check spans lie within [0, n_tokens) and are pairwise non-overlapping."""
    for span in spans:
        if span.end > n_tokens:
            raise DataError(
                f"utterance {owner!r}: span [{span.start}, {span.end}) exceeds "
                f"sentence length {n_tokens}"
            )
    ordered = sorted(spans, key=lambda s: s.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise DataError(
                f"utterance {owner!r}: overlapping entity spans "
                f"[{prev.start}, {prev.end}) and [{cur.start}, {cur.end})"
            )


@dataclass
class CatalogEntry:
    surface: tuple[str, ...]
    weight: float = 1.0


@dataclass
class Catalog:
    """Replacement surface forms for one entity type, sampled by weight."""

    entity_type: str
    entries: list[CatalogEntry]

    def __post_init__(self):
        if not self.entries:
            raise DataError(f"catalog {self.entity_type!r}: no entries")
        for entry in self.entries:
            if entry.weight <= 0:
                raise DataError(
                    f"catalog {self.entity_type!r}: non-positive weight "
                    f"{entry.weight} for surface {' '.join(entry.surface)!r}"
                )
            if not entry.surface:
                raise DataError(f"catalog {self.entity_type!r}: empty surface form")


@dataclass
class WordVectorTable:
    """Fixed-dimension word vectors keyed by token."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.vectors:
            raise DataError("word vector table has no entries")

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token)


@dataclass
class FrequencyTable:
    """Additively smoothed relative token frequencies.

    relfreq(w) = (count(w) + alpha) / (total + alpha * vocab_size); an unseen
    token gets alpha / (total + alpha * vocab_size).
    """

    counts: dict[str, int]
    total: int
    vocab_size: int
    alpha: float = 1.0

    def relfreq(self, token: str) -> float:
        denom = self.total + self.alpha * self.vocab_size
        return (self.counts.get(token, 0) + self.alpha) / denom

    def seen(self, token: str) -> bool:
        return self.counts.get(token, 0) > 0


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _is_latin_letter(ch: str) -> bool:
    return unicodedata.name(ch, "").startswith("LATIN")


def normalize_tokens(raw_text: str) -> list[str]:
    """NFC-normalize, split on whitespace, and lowercase Latin-script tokens.

    Tokens whose alphabetic characters are not all Latin are left untouched,
    so e.g. Devanagari text passes through unchanged. Idempotent.
    """
    tokens = []
    for tok in unicodedata.normalize("NFC", raw_text).split():
        if all(_is_latin_letter(ch) for ch in tok if ch.isalpha()):
            tok = tok.lower()
        tokens.append(tok)
    return tokens


# --------------------------------------------------------------------------
# file ingestion
# --------------------------------------------------------------------------

def _parse_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def load_utterances(path) -> list[Utterance]:
    """Read utterances from JSON-lines.

    Each record carries exactly one of "tokens" (trusted verbatim) or "text"
    (normalized here), plus optional "id", "entities" and "scenario". A record
    without an id keeps its line number as the id.
    """
    utterances = []
    for lineno, record in _parse_jsonl(path):
        has_tokens = "tokens" in record
        has_text = "text" in record
        if has_tokens == has_text:
            raise DataError(
                f"{path}:{lineno}: exactly one of 'tokens' or 'text' is required"
            )
        if has_tokens:
            tokens = record["tokens"]
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise DataError(f"{path}:{lineno}: 'tokens' must be a list of strings")
        else:
            tokens = normalize_tokens(record["text"])
        spans = tuple(
            EntitySpan(ent["start"], ent["end"], ent["type"])
            for ent in record.get("entities", ())
        )
        uid = record.get("id", f"line-{lineno}")
        try:
            utterances.append(
                Utterance(str(uid), tuple(tokens), spans, record.get("scenario"))
            )
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return utterances


def write_utterances(utterances: Iterable[Utterance], path) -> None:
    """Write utterances as JSON-lines; load_utterances round-trips the output."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            fh.write(json.dumps(_utterance_record(utt), ensure_ascii=False) + "\n")


def _utterance_record(utt: Utterance) -> dict:
    record: dict = {"id": utt.id, "tokens": list(utt.tokens)}
    if utt.entities:
        record["entities"] = [
            {"start": s.start, "end": s.end, "type": s.entity_type}
            for s in utt.entities
        ]
    if utt.scenario is not None:
        record["scenario"] = utt.scenario
    return record


def load_catalogs(path) -> dict[str, Catalog]:
    """Read entity catalogs from JSON-lines: {"type", "surface", "weight"?}."""
    grouped: dict[str, list[CatalogEntry]] = {}
    for lineno, record in _parse_jsonl(path):
        try:
            etype = record["type"]
            surface = tuple(record["surface"])
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        weight = float(record.get("weight", 1.0))
        grouped.setdefault(etype, []).append(CatalogEntry(surface, weight))
    return {etype: Catalog(etype, entries) for etype, entries in grouped.items()}


def load_word_vectors(path) -> WordVectorTable:
    """Read a plain-text vector table: header "count dim", then token rows.

    Duplicate tokens keep the last row (with a warning); a row whose value
    count disagrees with the header dimension is an error.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: header must be 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}:1: header must be two integers") from None
        if count < 1 or dim < 1:
            raise DataError(f"{path}:1: count and dim must be positive")
        vectors: dict[str, np.ndarray] = {}
        rows = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(
                    f"{path}:{lineno}: expected {dim} values for {token!r}, "
                    f"got {len(values)}"
                )
            if token in vectors:
                logger.warning("%s:%d: duplicate vector for %r, keeping last",
                               path, lineno, token)
            vectors[token] = np.array([float(v) for v in values])
            rows += 1
    if rows != count:
        raise DataError(f"{path}: header declares {count} rows, found {rows}")
    return WordVectorTable(dim, vectors)


def build_frequency_table(
    corpus: Iterable[Utterance | Sequence[str]],
    alpha: float = 1.0,
    pseudo_vocab: int = 0,
) -> FrequencyTable:
    """Count tokens over a corpus of utterances (or raw token lists).

    pseudo_vocab extends the vocabulary size used in the smoothing
    denominator, reserving mass for unseen types when alpha > 0.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    counts: dict[str, int] = {}
    total = 0
    for item in corpus:
        tokens = getattr(item, "tokens", item)
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    if total == 0:
        raise DataError("cannot build a frequency table from an empty corpus")
    vocab_size = len(counts) + (pseudo_vocab if alpha > 0 else 0)
    return FrequencyTable(counts, total, vocab_size, alpha)

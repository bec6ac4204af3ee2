"""Attention-based alignment extraction and post-editing of translations.

Three transforms clean up raw machine-translation output before it feeds
language-model training:

  * entity copy-over: source tokens inside annotated entity spans replace
    the target tokens aligned to them, verbatim and in source order;
  * entity resampling: entity surface forms are redrawn from weighted
    catalogs, so locally relevant names replace the source ones;
  * code-mix simulation: outside entity spans, target tokens are
    stochastically replaced by their aligned source token, with probability
    proportional to the source token's smoothed relative frequency in the
    transcribed collections.

Every stochastic step draws from a stream keyed on (seed, utterance id),
so outputs are reproducible regardless of parallel execution order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Catalog, EntitySpan, FrequencyTable, validate_spans
from .errors import DataError
from .util import derive_rng

logger = logging.getLogger(__name__)

# an alignment maps each target position to a source position
Alignment = list[int]


# --------------------------------------------------------------------------
# hypothesis data model
# --------------------------------------------------------------------------

class AttentionMatrix:
    """Row-stochastic attention weights, one row per target token."""

    def __init__(self, weights):
        arr = np.asarray(weights, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"attention must be a 2-D matrix, got shape {arr.shape}")
        if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
            raise DataError("attention weights must lie in [0, 1]")
        self.weights = arr

    @property
    def target_len(self) -> int:
        return self.weights.shape[0]

    @property
    def source_len(self) -> int:
        return self.weights.shape[1]


@dataclass
class TranslationHypothesis:
    """One decoded translation with per-token log-probabilities and attention."""

    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    token_logprobs: tuple[float, ...]  # natural log
    attention: AttentionMatrix

    def __post_init__(self):
        self.source_tokens = tuple(self.source_tokens)
        self.target_tokens = tuple(self.target_tokens)
        self.token_logprobs = tuple(self.token_logprobs)
        if len(self.token_logprobs) != len(self.target_tokens):
            raise DataError(
                f"{len(self.token_logprobs)} log-probs for "
                f"{len(self.target_tokens)} target tokens"
            )
        if any(lp > 0 for lp in self.token_logprobs):
            raise DataError("token log-probabilities must be <= 0")
        if self.attention.target_len != len(self.target_tokens) or (
            self.attention.source_len != len(self.source_tokens)
        ):
            raise DataError(
                f"attention shape ({self.attention.target_len}, "
                f"{self.attention.source_len}) does not match target/source "
                f"lengths ({len(self.target_tokens)}, {len(self.source_tokens)})"
            )

    @property
    def mt_score(self) -> float:
        return sum(self.token_logprobs)


@dataclass
class NBestList:
    """Ranked alternative translations of one source sentence."""

    id: str
    hypotheses: list[TranslationHypothesis]

    def __post_init__(self):
        if not self.hypotheses:
            raise DataError(f"n-best list {self.id!r} is empty")
        source = self.hypotheses[0].source_tokens
        if any(h.source_tokens != source for h in self.hypotheses):
            raise DataError(f"n-best list {self.id!r} mixes source sentences")

    @property
    def source_tokens(self) -> tuple[str, ...]:
        return self.hypotheses[0].source_tokens


def load_translations(path) -> list[NBestList]:
    """Read translation n-best lists from JSON-lines."""
    lists = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            try:
                source = tuple(record["source_tokens"])
                hyps = [
                    TranslationHypothesis(
                        source,
                        tuple(h["target_tokens"]),
                        tuple(h["token_logprobs"]),
                        AttentionMatrix(h["attention"]),
                    )
                    for h in record["hypotheses"]
                ]
                lists.append(NBestList(str(record.get("id", f"line-{lineno}")), hyps))
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from None
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return lists


# --------------------------------------------------------------------------
# alignment
# --------------------------------------------------------------------------

def extract_alignment(attention: AttentionMatrix) -> Alignment:
    """Align each target position to the argmax source position of its row.

    Ties go to the lowest source index. Rows whose mass is not within
    [0.9, 1.1] fail validation.
    """
    sums = attention.weights.sum(axis=1)
    bad = np.where((sums < 0.9) | (sums > 1.1))[0]
    if bad.size:
        raise DataError(
            f"attention row {int(bad[0])} sums to {sums[bad[0]]:.4f}, "
            "outside [0.9, 1.1]"
        )
    return [int(i) for i in np.argmax(attention.weights, axis=1)]


# --------------------------------------------------------------------------
# entity copy-over
# --------------------------------------------------------------------------

@dataclass
class EditResult:
    """Edited target tokens plus bookkeeping kept consistent with them."""

    tokens: list[str]
    spans: list[EntitySpan]
    alignment: Alignment | None = None
    unaligned: list[EntitySpan] = field(default_factory=list)
    missing_catalogs: list[str] = field(default_factory=list)


def ne_copy_over(
    hyp: TranslationHypothesis,
    entities: Sequence[EntitySpan],
    alignment: Alignment,
) -> EditResult:
    """Replace aligned target runs with the source entity tokens verbatim.

    For each source entity span, the minimal contiguous run of target
    positions aligned into the span is replaced by the span's source tokens.
    Entities that attract no alignment are reported and left alone. Two
    entities claiming overlapping target runs is an error.
    """
    validate_spans(entities, len(hyp.source_tokens), "<source>")
    if len(alignment) != len(hyp.target_tokens):
        raise DataError("alignment length does not match target length")

    runs: list[tuple[int, int, EntitySpan]] = []
    unaligned: list[EntitySpan] = []
    for span in sorted(entities, key=lambda s: s.start):
        positions = [
            i for i, src in enumerate(alignment) if span.start <= src < span.end
        ]
        if not positions:
            unaligned.append(span)
            continue
        runs.append((min(positions), max(positions) + 1, span))

    runs.sort(key=lambda r: r[0])
    for (s1, e1, sp1), (s2, e2, sp2) in zip(runs, runs[1:]):
        if s2 < e1:
            raise DataError(
                f"entity spans [{sp1.start}, {sp1.end}) ({sp1.entity_type}) and "
                f"[{sp2.start}, {sp2.end}) ({sp2.entity_type}) claim overlapping "
                f"target runs [{s1}, {e1}) and [{s2}, {e2})"
            )

    tokens: list[str] = []
    new_alignment: Alignment = []
    out_spans: list[EntitySpan] = []
    cursor = 0
    for run_start, run_end, span in runs:
        tokens.extend(hyp.target_tokens[cursor:run_start])
        new_alignment.extend(alignment[cursor:run_start])
        out_start = len(tokens)
        tokens.extend(hyp.source_tokens[span.start:span.end])
        new_alignment.extend(range(span.start, span.end))
        out_spans.append(EntitySpan(out_start, len(tokens), span.entity_type))
        cursor = run_end
    tokens.extend(hyp.target_tokens[cursor:])
    new_alignment.extend(alignment[cursor:])
    return EditResult(tokens, out_spans, new_alignment, unaligned)


# --------------------------------------------------------------------------
# entity resampling
# --------------------------------------------------------------------------

def ne_resample(
    tokens: Sequence[str],
    spans: Sequence[EntitySpan],
    catalogs: Mapping[str, Catalog],
    seed: int,
    utterance_id: str,
    alignment: Alignment | None = None,
) -> EditResult:
    """Redraw each entity surface from its type's weighted catalog.

    Spans whose type has no catalog are kept unchanged (reported, not an
    error). Sampling uses the (seed, utterance id) stream; one draw per
    resampled span, in ascending span order.
    """
    validate_spans(spans, len(tokens), utterance_id)
    rng = derive_rng(seed, utterance_id)
    out_tokens: list[str] = []
    out_spans: list[EntitySpan] = []
    out_alignment = [] if alignment is not None else None
    missing: list[str] = []
    cursor = 0
    for span in sorted(spans, key=lambda s: s.start):
        out_tokens.extend(tokens[cursor:span.start])
        if out_alignment is not None:
            out_alignment.extend(alignment[cursor:span.start])
        catalog = catalogs.get(span.entity_type)
        if catalog is None:
            if span.entity_type not in missing:
                missing.append(span.entity_type)
            logger.warning("utterance %s: no catalog for entity type %r",
                           utterance_id, span.entity_type)
            surface = tuple(tokens[span.start:span.end])
        else:
            entry = rng.choices(
                catalog.entries, weights=[e.weight for e in catalog.entries], k=1
            )[0]
            surface = entry.surface
        out_start = len(out_tokens)
        out_tokens.extend(surface)
        if out_alignment is not None:
            anchor = alignment[span.start]
            out_alignment.extend([anchor] * len(surface))
        out_spans.append(EntitySpan(out_start, len(out_tokens), span.entity_type))
        cursor = span.end
    out_tokens.extend(tokens[cursor:])
    if out_alignment is not None:
        out_alignment.extend(alignment[cursor:])
    return EditResult(out_tokens, out_spans, out_alignment,
                      missing_catalogs=missing)


# --------------------------------------------------------------------------
# code-mix simulation
# --------------------------------------------------------------------------

def max_source_relfreq(source_vocab: Iterable[str], freq: FrequencyTable) -> float:
    """Largest smoothed relative frequency among seen source tokens."""
    best = 0.0
    for token in source_vocab:
        if freq.seen(token):
            best = max(best, freq.relfreq(token))
    return best


def simulate_code_mix(
    tokens: Sequence[str],
    alignment: Alignment,
    source_tokens: Sequence[str],
    spans: Sequence[EntitySpan],
    freq: FrequencyTable,
    p_max: float,
    seed: int,
    utterance_id: str,
    relfreq_max: float | None = None,
) -> list[str]:
    """Stochastically copy aligned source tokens over the translation.

    Each target position outside every entity span is replaced by its
    aligned source token s with probability
    p_max * relfreq(s) / relfreq_max, where relfreq_max defaults to the
    largest seen relative frequency among this sentence's source tokens
    (batch callers pass a corpus-wide maximum instead). Entity spans are
    never touched. One random draw per eligible position, left to right.
    """
    if not 0.0 <= p_max <= 1.0:
        raise ValueError(f"p_max must be in [0, 1], got {p_max}")
    if len(alignment) != len(tokens):
        raise DataError("alignment length does not match token count")
    if alignment and max(alignment) >= len(source_tokens):
        raise DataError("alignment points outside the source sentence")
    if relfreq_max is None:
        relfreq_max = max_source_relfreq(source_tokens, freq)
    rng = derive_rng(seed, utterance_id)
    inside = [False] * len(tokens)
    for span in spans:
        for i in range(span.start, span.end):
            inside[i] = True
    out = list(tokens)
    for i in range(len(out)):
        if inside[i]:
            continue
        # draw unconditionally so the stream shape is stable per sentence
        draw = rng.random()
        if relfreq_max <= 0.0:
            continue
        source = source_tokens[alignment[i]]
        p = p_max * min(1.0, freq.relfreq(source) / relfreq_max)
        if draw < p:
            out[i] = source
    return out


# --------------------------------------------------------------------------
# edit composition
# --------------------------------------------------------------------------

def apply_edits(
    item: tuple[str, TranslationHypothesis, Sequence[EntitySpan]],
    catalogs: Mapping[str, Catalog],
    freq: FrequencyTable,
    relfreq_max: float,
    p_max: float,
    seed: int,
    edits: Sequence[str],
) -> tuple[str, list[str], list[EntitySpan], int]:
    """Run the configured edit chain over one (id, hypothesis, entities) item.

    Copy-over runs first (it creates the target-side entity spans), then
    resampling over those spans, then code-mix over everything else. The
    alignment is remapped between steps so later edits stay consistent.
    Returns (id, tokens, spans, unaligned-entity count). Module-level and
    argument-picklable so worker pools can run it.
    """
    uid, hyp, entities = item
    try:
        alignment = extract_alignment(hyp.attention)
        tokens = list(hyp.target_tokens)
        spans: list[EntitySpan] = []
        unaligned = 0
        if "ne_copy" in edits and entities:
            result = ne_copy_over(hyp, entities, alignment)
            tokens, spans, alignment = result.tokens, result.spans, result.alignment
            unaligned = len(result.unaligned)
        if "ne_resample" in edits and spans and catalogs:
            result = ne_resample(tokens, spans, catalogs, seed, uid, alignment)
            tokens, spans, alignment = result.tokens, result.spans, result.alignment
        if "code_mix" in edits:
            tokens = simulate_code_mix(
                tokens, alignment, hyp.source_tokens, spans, freq, p_max,
                seed, uid, relfreq_max,
            )
        return uid, tokens, spans, unaligned
    except Exception as exc:
        raise type(exc)(f"item {uid!r}: {exc}") from None


# --------------------------------------------------------------------------
# edited-output serialization
# --------------------------------------------------------------------------

def write_edited_jsonl(records: Iterable[dict], path) -> None:
    """Write edited utterances; each record mirrors the utterance schema plus
    a provenance object naming the edits applied."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def edited_record(
    uid: str,
    tokens: Sequence[str],
    spans: Sequence[EntitySpan],
    edits: Sequence[str],
    scenario: str | None = None,
) -> dict:
    record: dict = {"id": uid, "tokens": list(tokens)}
    if spans:
        record["entities"] = [
            {"start": s.start, "end": s.end, "type": s.entity_type} for s in spans
        ]
    if scenario is not None:
        record["scenario"] = scenario
    record["provenance"] = {"edits": list(edits)}
    return record

"""Unsupervised sentence embeddings.

Three methods share one output type: plain averaging of word vectors,
frequency-weighted averaging with removal of the projection on the first
principal direction, and import of precomputed vectors from file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import FrequencyTable, WordVectorTable
from .errors import DataError

logger = logging.getLogger(__name__)

AVERAGE = "average"
SIF = "sif"
EXTERNAL = "external"


@dataclass
class SentenceEmbedding:
    sentence_id: str
    vector: np.ndarray
    method: str
    degenerate: bool = False  # empty sentence or no in-table token


@dataclass
class SifParams:
    weight_a: float = 1e-3
    max_power_iterations: int = 100
    tol: float = 1e-9

    def __post_init__(self):
        if self.weight_a <= 0:
            raise ValueError(f"weight parameter must be > 0, got {self.weight_a}")


def embed_average(
    tokens: Sequence[str], table: WordVectorTable, sentence_id: str = ""
) -> SentenceEmbedding:
    """Mean of the vectors of in-table tokens; out-of-table tokens are skipped.

    A sentence with no usable token yields a zero vector flagged degenerate.
    """
    vectors = [table.vectors[t] for t in tokens if t in table.vectors]
    if not vectors:
        logger.warning("sentence %r has no in-table token; zero embedding",
                       sentence_id or " ".join(tokens))
        return SentenceEmbedding(sentence_id, np.zeros(table.dim), AVERAGE, True)
    return SentenceEmbedding(sentence_id, np.mean(vectors, axis=0), AVERAGE)


def _weighted_vector(
    tokens: Sequence[str], table: WordVectorTable, freq: FrequencyTable, a: float
) -> tuple[np.ndarray, bool]:
    acc = np.zeros(table.dim)
    hit = False
    for tok in tokens:
        vec = table.vectors.get(tok)
        if vec is None:
            continue
        acc += (a / (a + freq.relfreq(tok))) * vec
        hit = True
    if not hit or not tokens:
        return np.zeros(table.dim), True
    return acc / len(tokens), False


def first_principal_direction(
    vectors: Sequence[np.ndarray] | np.ndarray, params: SifParams | None = None
) -> np.ndarray:
    """Dominant eigenvector of the uncentered second-moment matrix.

    Power iteration with a deterministic start (the normalized input sum,
    falling back to the absolute-value sum and then the first nonzero row
    when that is degenerate). The sign is canonicalized so the first
    coordinate exceeding 1e-12 in magnitude is positive.
    """
    params = params or SifParams()
    stacked = np.asarray(vectors, dtype=float)
    if stacked.ndim != 2 or stacked.shape[0] < 1:
        raise ValueError("need a non-empty list of equal-length vectors")
    if not np.any(stacked):
        raise ValueError("all input vectors are zero")
    moment = stacked.T @ stacked

    direction = None
    for candidate in (stacked.sum(axis=0), np.abs(stacked).sum(axis=0)):
        norm = np.linalg.norm(candidate)
        if norm > 0 and np.linalg.norm(moment @ candidate) > 0:
            direction = candidate / norm
            break
    if direction is None:
        row = stacked[np.argmax(np.linalg.norm(stacked, axis=1))]
        direction = row / np.linalg.norm(row)

    for _ in range(params.max_power_iterations):
        nxt = moment @ direction
        norm = np.linalg.norm(nxt)
        if norm == 0:
            break
        nxt /= norm
        if np.linalg.norm(nxt - direction) < params.tol:
            direction = nxt
            break
        direction = nxt

    for value in direction:
        if abs(value) > 1e-12:
            if value < 0:
                direction = -direction
            break
    return direction


def embed_sif(
    sentences: Sequence[Sequence[str]],
    table: WordVectorTable,
    freq: FrequencyTable,
    params: SifParams | None = None,
    sentence_ids: Sequence[str] | None = None,
) -> list[SentenceEmbedding]:
    """Frequency-weighted sentence vectors minus their common direction.

    Per sentence: (1/len) * sum over in-table tokens of
    a / (a + relfreq(token)) * vector(token); then the projection on the
    first principal direction of the whole batch is removed from every
    sentence vector.
    """
    params = params or SifParams()
    if len(sentences) < 2:
        raise DataError("weighted embedding needs at least two sentences")
    if sentence_ids is None:
        sentence_ids = [str(i) for i in range(len(sentences))]
    raw = []
    flags = []
    for tokens in sentences:
        vec, degenerate = _weighted_vector(tokens, table, freq, params.weight_a)
        raw.append(vec)
        flags.append(degenerate)
    if all(flags):
        raise DataError("every sentence is degenerate (no in-table tokens)")
    direction = first_principal_direction(raw, params)
    out = []
    for sid, vec, degenerate in zip(sentence_ids, raw, flags):
        projected = vec - (direction @ vec) * direction
        out.append(SentenceEmbedding(sid, projected, SIF, degenerate))
    return out


# --------------------------------------------------------------------------
# precomputed embeddings on file
# --------------------------------------------------------------------------

def import_external_embeddings(path) -> list[SentenceEmbedding]:
    """Read "count dim" header then "sentence_id v1 .. v_dim" rows."""
    embeddings = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: header must be 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}:1: header must be two integers") from None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}:{lineno}: expected id plus {dim} values, "
                    f"got {len(parts) - 1} values"
                )
            vector = np.array([float(v) for v in parts[1:]])
            embeddings.append(SentenceEmbedding(parts[0], vector, EXTERNAL))
    if len(embeddings) != count:
        raise DataError(
            f"{path}: header declares {count} rows, found {len(embeddings)}"
        )
    return embeddings


def write_embeddings(embeddings: Sequence[SentenceEmbedding], path) -> None:
    """Write embeddings in the same format import_external_embeddings reads."""
    if not embeddings:
        raise DataError("no embeddings to write")
    dim = len(embeddings[0].vector)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(embeddings)} {dim}\n")
        for emb in embeddings:
            values = " ".join(f"{v:.8g}" for v in emb.vector)
            fh.write(f"{emb.sentence_id} {values}\n")

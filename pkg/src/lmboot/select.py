"""In-domain data selection by relative distance to two centroids.

Each candidate sentence vector is scored by the difference between its
euclidean distances to the in-domain and out-of-domain centroids; lower
scores mean closer to the in-domain side, and the lowest-scoring fraction
is retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embed import SentenceEmbedding


@dataclass
class CentroidPair:
    c_in: np.ndarray
    c_out: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.c_in)


@dataclass
class SelectionScore:
    sentence_id: str
    delta: float


def compute_centroids(
    in_vecs: Sequence[np.ndarray], out_vecs: Sequence[np.ndarray]
) -> CentroidPair:
    """Arithmetic means of the two embedding sets."""
    if len(in_vecs) == 0 or len(out_vecs) == 0:
        raise ValueError("both centroid sets must be non-empty")
    c_in = np.mean(np.asarray(in_vecs, dtype=float), axis=0)
    c_out = np.mean(np.asarray(out_vecs, dtype=float), axis=0)
    if c_in.shape != c_out.shape:
        raise ValueError(
            f"dimension mismatch between centroid sets: {c_in.shape} vs {c_out.shape}"
        )
    return CentroidPair(c_in, c_out)


def delta_score(vector: np.ndarray, centroids: CentroidPair) -> float:
    """||v - c_in|| - ||v - c_out||; negative means more in-domain."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != centroids.c_in.shape:
        raise ValueError(
            f"vector dimension {vector.shape} does not match centroids "
            f"{centroids.c_in.shape}"
        )
    return float(
        np.linalg.norm(vector - centroids.c_in)
        - np.linalg.norm(vector - centroids.c_out)
    )


def score_embeddings(
    embeddings: Sequence[SentenceEmbedding], centroids: CentroidPair
) -> list[SelectionScore]:
    return [
        SelectionScore(e.sentence_id, delta_score(e.vector, centroids))
        for e in embeddings
    ]


def select_top_fraction(
    scores: Sequence[SelectionScore], fraction: float
) -> list[str]:
    """Ids of the ceil(fraction * n) lowest-delta sentences.

    Ties are broken by sentence id so the selection is deterministic.
    """
    if not scores:
        raise ValueError("no scores to select from")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ranked = sorted(scores, key=lambda s: (s.delta, s.sentence_id))
    keep = math.ceil(fraction * len(ranked))
    return [s.sentence_id for s in ranked[:keep]]


def write_scores_tsv(scores: Sequence[SelectionScore], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sentence_id\tdelta\n")
        for score in scores:
            fh.write(f"{score.sentence_id}\t{score.delta:.6f}\n")


def write_id_list(ids: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in ids:
            fh.write(sid + "\n")

"""Rescoring n-best translations with an in-domain LM, percentile filtering,
and synthetic parallel-pair export for an external finetuning job.

Decoder log-probabilities arrive in natural log; language-model scores are
base 10 internally and converted to natural log before any combination, so
combined scores live on one scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import Utterance
from .errors import DataError
from .ngram_lm import InterpolatedModel, KatzModel, log_prob
from .postedit import NBestList, TranslationHypothesis

LN10 = math.log(10.0)

MT_SCORE = "mt_score"
SLM_SCORE = "slm_score"


@dataclass
class RescoreConfig:
    lm_weight: float = 0.3
    length_normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lm_weight <= 1.0:
            raise ValueError(f"lm_weight must be in [0, 1], got {self.lm_weight}")


@dataclass
class FilterConfig:
    metric: str = SLM_SCORE
    keep_fraction: float = 0.75
    length_normalize: bool = True

    def __post_init__(self):
        if self.metric not in (MT_SCORE, SLM_SCORE):
            raise ValueError(f"unknown filter metric {self.metric!r}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(
                f"keep_fraction must be in (0, 1], got {self.keep_fraction}"
            )


@dataclass
class RescoreResult:
    chosen: TranslationHypothesis
    chosen_index: int
    combined_scores: list[float]


def _lm_natural(model, tokens: Sequence[str], normalize: bool) -> float:
    score = log_prob(model, tokens) * LN10
    if normalize:
        score /= len(tokens) + 1  # predicted positions include end of sentence
    return score


def _mt_natural(hyp: TranslationHypothesis, normalize: bool) -> float:
    score = hyp.mt_score
    if normalize:
        score /= len(hyp.target_tokens)
    return score


def rescore(
    nbest: NBestList,
    lm: KatzModel | InterpolatedModel,
    cfg: RescoreConfig | None = None,
) -> RescoreResult:
    """Pick the hypothesis maximizing (1 - w) * mt + w * lm.

    With length normalization both terms are per-token averages (decoder
    score over target tokens, LM score over predicted positions). Ties keep
    the lowest original rank.
    """
    cfg = cfg or RescoreConfig()
    if not nbest.hypotheses:
        raise DataError(f"n-best list {nbest.id!r} is empty")
    w = cfg.lm_weight
    combined = [
        (1.0 - w) * _mt_natural(h, cfg.length_normalize)
        + w * _lm_natural(lm, h.target_tokens, cfg.length_normalize)
        for h in nbest.hypotheses
    ]
    best = max(range(len(combined)), key=lambda i: (combined[i], -i))
    return RescoreResult(nbest.hypotheses[best], best, combined)


@dataclass
class FilterResult:
    retained_ids: list[str]
    scores: dict[str, float]


def filter_translations(
    items: Sequence[tuple[str, TranslationHypothesis]],
    cfg: FilterConfig,
    lm: KatzModel | InterpolatedModel | None = None,
) -> FilterResult:
    """Keep the ceil(fraction * n) best items under the chosen quality metric.

    mt_score ranks by the decoder score of each hypothesis; slm_score ranks by
    an in-domain LM's score of the target tokens (lm required). Ties are
    broken by item id.
    """
    if not items:
        raise DataError("nothing to filter")
    if cfg.metric == SLM_SCORE and lm is None:
        raise ValueError("slm_score filtering requires a language model")
    scores: dict[str, float] = {}
    for item_id, hyp in items:
        if cfg.metric == MT_SCORE:
            scores[item_id] = _mt_natural(hyp, cfg.length_normalize)
        else:
            scores[item_id] = _lm_natural(lm, hyp.target_tokens, cfg.length_normalize)
    ranked = sorted(scores, key=lambda item_id: (-scores[item_id], item_id))
    keep = math.ceil(cfg.keep_fraction * len(ranked))
    return FilterResult(ranked[:keep], scores)


def write_score_dump(scores: dict[str, float], metric: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\tmetric\tscore\n")
        for item_id in sorted(scores):
            fh.write(f"{item_id}\t{metric}\t{scores[item_id]:.6f}\n")


# --------------------------------------------------------------------------
# synthetic parallel pairs
# --------------------------------------------------------------------------

def build_synthetic_parallel(
    sources: Sequence[Utterance],
    edited: Sequence[tuple[str, Sequence[str]]],
    path,
) -> int:
    """Write "source<TAB>target" pairs aligned by id, in source order.

    Ids present on only one side abort with an error naming the orphans.
    Returns the pair count.
    """
    edited_by_id = {}
    for item_id, tokens in edited:
        edited_by_id[item_id] = tokens
    source_ids = {utt.id for utt in sources}
    orphans_src = sorted(source_ids - set(edited_by_id))
    orphans_edit = sorted(set(edited_by_id) - source_ids)
    if orphans_src or orphans_edit:
        raise DataError(
            "unpaired ids: "
            f"sources without translation {orphans_src}, "
            f"translations without source {orphans_edit}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        for utt in sources:
            src = " ".join(utt.tokens)
            tgt = " ".join(edited_by_id[utt.id])
            fh.write(f"{src}\t{tgt}\n")
    return len(sources)


def read_parallel_tsv(path) -> list[tuple[list[str], list[str]]]:
    """Parse pairs written by build_synthetic_parallel back into token lists."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two tab-separated fields")
            pairs.append((parts[0].split(), parts[1].split()))
    return pairs

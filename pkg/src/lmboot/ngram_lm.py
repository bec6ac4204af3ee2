"""Back-off n-gram language model with Good-Turing discounting, plus
linear interpolation of component models with EM-tuned weights.

Conventions (shared with the ARPA text format):
  * all stored probabilities and back-off weights are log base 10;
  * sentences are padded with (order - 1) start symbols and one end symbol;
  * the start symbol is context-only: it is never predicted, so conditional
    distributions normalize over the vocabulary minus the start symbol;
  * out-of-vocabulary tokens are mapped to the unknown symbol, whose unigram
    mass is the discounting leftover floored at UNK_FLOOR.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

UNK_FLOOR = 1e-7
# placeholder log-prob for context-only entries (start-symbol prefixes)
CONTEXT_ONLY_LOGPROB = -99.0

TokenSeq = Sequence[str]


# --------------------------------------------------------------------------
# counting
# --------------------------------------------------------------------------

@dataclass
class NGramCounts:
    """Raw n-gram counts of every order 1..order over padded sentences."""

    order: int
    counts: list[Counter]  # counts[n] maps n-gram tuple -> int; counts[0] unused
    vocab: set[str]
    sentences: int
    tokens: int


def count_ngrams(corpus: Iterable[TokenSeq], order: int) -> NGramCounts:
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    counts: list[Counter] = [Counter() for _ in range(order + 1)]
    sentences = 0
    tokens = 0
    for sent in corpus:
        padded = [BOS] * (order - 1) + list(sent) + [EOS]
        sentences += 1
        tokens += len(sent)
        for n in range(1, order + 1):
            grams = counts[n]
            for i in range(len(padded) - n + 1):
                grams[tuple(padded[i:i + n])] += 1
    if sentences == 0 or tokens == 0:
        raise DataError("training corpus contains no tokens")
    vocab = {g[0] for g in counts[1]} | {BOS, EOS, UNK}
    return NGramCounts(order, counts, vocab, sentences, tokens)


# --------------------------------------------------------------------------
# Good-Turing discounting
# --------------------------------------------------------------------------

def good_turing_discounts(count_of_counts: Counter, k: int) -> dict[int, float]:
    """Discount ratio d_r for counts r = 1..k.

    d_r = (r*/r - A) / (1 - A) with r* = (r+1) N_{r+1} / N_r and
    A = (k+1) N_{k+1} / N_1. Whenever the statistics make d_r undefined or
    push it outside (0, 1), that count value keeps its raw estimate (d_r = 1).
    """
    if k < 1:
        raise ConfigError(f"discount cutoff k must be >= 1, got {k}")
    n1 = count_of_counts.get(1, 0)
    big_a = (k + 1) * count_of_counts.get(k + 1, 0) / n1 if n1 else 0.0
    discounts = {}
    for r in range(1, k + 1):
        n_r = count_of_counts.get(r, 0)
        n_r1 = count_of_counts.get(r + 1, 0)
        if n_r == 0 or n1 == 0 or big_a >= 1.0:
            discounts[r] = 1.0
            continue
        r_star = (r + 1) * n_r1 / n_r
        d = (r_star / r - big_a) / (1.0 - big_a)
        discounts[r] = d if 0.0 < d < 1.0 else 1.0
    return discounts


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

class KatzModel:
    """Back-off n-gram model: stored log10 conditionals plus back-off weights.

    The same representation serves freshly trained models and models read
    back from an ARPA file; scoring only consults the two tables.
    """

    def __init__(
        self,
        order: int,
        logprob: dict[tuple[str, ...], float],
        backoff: dict[tuple[str, ...], float],
        vocab: set[str],
        k: int = 5,
    ):
        if order < 1:
            raise ConfigError(f"order must be >= 1, got {order}")
        self.order = order
        self.logprob = logprob
        self.backoff = backoff
        self.vocab = frozenset(vocab)
        self.k = k

    @property
    def prediction_vocab(self) -> frozenset:
        """Tokens the model can predict: everything except the start symbol."""
        return self.vocab - {BOS}

    def map_oov(self, tokens: TokenSeq) -> list[str]:
        return [t if t in self.vocab else UNK for t in tokens]

    def conditional_log10(self, context: tuple[str, ...], word: str) -> float:
        """log10 P(word | context) via the back-off chain.

        context and word must already be OOV-mapped; context length is
        truncated to order - 1 here.
        """
        if len(context) >= self.order:
            context = context[len(context) - self.order + 1:]
        return _conditional_from_tables(self.logprob, self.backoff, context + (word,))

    def position_log10_probs(self, tokens: TokenSeq) -> list[float]:
        """log10 conditional for every predicted position (tokens then EOS)."""
        padded = [BOS] * (self.order - 1) + self.map_oov(tokens) + [EOS]
        out = []
        for i in range(self.order - 1, len(padded)):
            context = tuple(padded[max(0, i - self.order + 1):i])
            out.append(self.conditional_log10(context, padded[i]))
        return out

    def contexts(self) -> list[tuple[str, ...]]:
        """Every stored back-off context, plus the empty (unigram) context."""
        return [()] + sorted(self.backoff)


def train_katz(corpus: Iterable[TokenSeq], order: int = 4, k: int = 5) -> KatzModel:
    """Estimate a Katz back-off model of the given order.

    Counts 1..k are Good-Turing discounted per order (with per-count
    fallback to the raw estimate when the count-of-count statistics are
    unusable); the freed mass is redistributed through back-off weights,
    so every conditional distribution sums to one exactly.
    """
    ngrams = count_ngrams(corpus, order)
    counts = ngrams.counts

    def prediction_grams(n: int) -> dict[tuple[str, ...], int]:
        # start-symbol-final n-grams carry counts for denominators only
        return {g: c for g, c in counts[n].items() if g[-1] != BOS}

    logprob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}

    # unigrams: discounting leftover becomes the unknown-token mass
    preds = prediction_grams(1)
    discounts = good_turing_discounts(Counter(preds.values()), k)
    total = sum(preds.values())
    probs = {g: discounts.get(c, 1.0) * c / total for g, c in preds.items()}
    leftover = 1.0 - sum(probs.values())
    if leftover < UNK_FLOOR:
        scale = (1.0 - UNK_FLOOR) / sum(probs.values())
        probs = {g: p * scale for g, p in probs.items()}
        leftover = UNK_FLOOR
    probs[(UNK,)] = leftover
    for gram, p in probs.items():
        logprob[gram] = math.log10(p)

    def chain_prob(gram: tuple[str, ...]) -> float:
        return 10.0 ** _conditional_from_tables(logprob, backoff, gram)

    prediction_vocab = sorted(ngrams.vocab - {BOS})

    for n in range(2, order + 1):
        preds = prediction_grams(n)
        discounts = good_turing_discounts(Counter(preds.values()), k)
        by_context: dict[tuple[str, ...], list[tuple[str, ...]]] = {}
        for gram, c in preds.items():
            denom = counts[n - 1][gram[:-1]]
            logprob[gram] = math.log10(discounts.get(c, 1.0) * c / denom)
            by_context.setdefault(gram[:-1], []).append(gram)
        # one back-off weight per observed context, so that the discounted
        # conditionals plus the redistributed lower-order mass sum to one
        for context, grams in by_context.items():
            kept = math.fsum(10.0 ** logprob[g] for g in grams)
            numer = 1.0 - kept
            denom = math.fsum([1.0] + [-chain_prob(g[1:]) for g in grams])
            if denom < 1e-3:
                # 1 - sum cancels catastrophically when the observed
                # continuations soak up almost all lower-order mass; sum the
                # unseen remainder directly instead
                observed = {g[-1] for g in grams}
                tail = context[1:]
                denom = math.fsum(
                    chain_prob(tail + (w,))
                    for w in prediction_vocab if w not in observed
                )
            if numer <= 0.0:
                # no mass was freed for this context (all counts escaped
                # discounting): back-off is unreachable
                backoff[context] = CONTEXT_ONLY_LOGPROB
            elif denom <= 0.0:
                # nowhere to send the freed mass; give it back proportionally
                # (standard toolkit behavior)
                scale = math.log10(kept)
                for gram in grams:
                    logprob[gram] -= scale
                backoff[context] = CONTEXT_ONLY_LOGPROB
            else:
                backoff[context] = math.log10(numer) - math.log10(denom)

    # context-only entries for start-symbol prefixes keep ARPA files closed
    # under prefixes; they are never consulted as probabilities
    for context in backoff:
        if context not in logprob:
            logprob[context] = CONTEXT_ONLY_LOGPROB

    return KatzModel(order, logprob, backoff, ngrams.vocab, k)


def _conditional_from_tables(logprob, backoff, gram):
    # context-only entries (placeholder log-prob) never terminate the chain
    context, word = gram[:-1], gram[-1]
    acc = 0.0
    while True:
        entry = logprob.get(context + (word,))
        if entry is not None and (entry != CONTEXT_ONLY_LOGPROB or not context):
            return acc + entry
        if not context:
            return acc + logprob[(UNK,)]
        acc += backoff.get(context, 0.0)
        context = context[1:]


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------

def log_prob(model: "KatzModel | InterpolatedModel", tokens: TokenSeq) -> float:
    """Total log10 probability of a sentence (including the end-of-sentence
    event); out-of-vocabulary tokens score as the unknown token."""
    return sum(model.position_log10_probs(tokens))


def predicted_positions(corpus: Iterable[TokenSeq]) -> int:
    return sum(len(sent) + 1 for sent in corpus)


def perplexity(model: "KatzModel | InterpolatedModel", corpus: Sequence[TokenSeq]) -> float:
    """10 ** (-avg log10 prob per predicted position) over the corpus."""
    if not corpus:
        raise DataError("perplexity needs a non-empty corpus")
    total = 0.0
    positions = 0
    for sent in corpus:
        total += sum(model.position_log10_probs(sent))
        positions += len(sent) + 1
    return 10.0 ** (-total / positions)


# --------------------------------------------------------------------------
# interpolation
# --------------------------------------------------------------------------

TRANSCRIBED = "transcribed"
TRANSLATED = "translated"


@dataclass
class InterpolatedModel:
    """Static linear mixture of component models, mixed per predicted position."""

    components: list[KatzModel]
    weights: list[float]
    roles: tuple[str, ...]
    floor: float = 0.0
    em_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.components) != len(self.weights) or len(self.components) != len(self.roles):
            raise ConfigError("components, weights and roles must align")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError(f"weights must sum to 1, got {sum(self.weights)!r}")
        if any(w < 0 for w in self.weights):
            raise ConfigError("weights must be non-negative")

    def position_log10_probs(self, tokens: TokenSeq) -> list[float]:
        per_component = [m.position_log10_probs(tokens) for m in self.components]
        out = []
        for probs in zip(*per_component):
            mix = sum(w * 10.0 ** lp for w, lp in zip(self.weights, probs))
            out.append(math.log10(mix) if mix > 0 else -math.inf)
        return out


def _position_prob_matrix(components: Sequence[KatzModel], corpus: Sequence[TokenSeq]) -> np.ndarray:
    columns = []
    for model in components:
        col = []
        for sent in corpus:
            col.extend(model.position_log10_probs(sent))
        columns.append(col)
    # linear domain; tiny floor keeps responsibilities finite on degenerate rows
    return np.maximum(10.0 ** np.array(columns).T, 1e-300)


def tune_interpolation(
    components: Sequence[KatzModel],
    tuning_corpus: Sequence[TokenSeq],
    floor: float = 0.25,
    roles: Sequence[str] | None = None,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> InterpolatedModel:
    """EM-tune mixture weights to maximize tuning-set likelihood, then clamp.

    Starts from uniform weights (so identical components stay uniform) and
    stops when the log10-likelihood gain per predicted position drops below
    tol. Afterwards every component tagged "translated" whose weight fell
    below the floor is raised to it, with the other weights renormalized
    proportionally.
    """
    if len(components) < 2:
        raise ConfigError("interpolation needs at least two components")
    if not tuning_corpus:
        raise DataError("tuning corpus is empty")
    if not 0.0 <= floor < 1.0:
        raise ConfigError(f"floor must be in [0, 1), got {floor}")
    if roles is None:
        roles = (TRANSCRIBED,) + (TRANSLATED,) * (len(components) - 1)
    roles = tuple(roles)

    probs = _position_prob_matrix(components, tuning_corpus)
    n_pos, n_comp = probs.shape
    weights = np.full(n_comp, 1.0 / n_comp)

    trace: list[float] = []
    prev_ll = -math.inf
    for _ in range(max_iterations):
        mix = probs @ weights
        ll = float(np.sum(np.log10(mix)))
        trace.append(ll)
        if ll - prev_ll < tol * n_pos and prev_ll != -math.inf:
            break
        prev_ll = ll
        resp = probs * weights / mix[:, None]
        weights = resp.mean(axis=0)

    # feasible-point guard: when the optimum sits on a vertex of the simplex,
    # the stopping rule can leave EM a hair short of it; a tuned mixture must
    # never score worse than its best single component
    mix_ll = float(np.sum(np.log10(probs @ weights)))
    for i in range(n_comp):
        vertex_ll = float(np.sum(np.log10(probs[:, i])))
        if vertex_ll > mix_ll + 1e-12:
            weights = np.zeros(n_comp)
            weights[i] = 1.0
            mix_ll = vertex_ll

    weights = _apply_floor(weights, roles, floor)
    return InterpolatedModel(list(components), [float(w) for w in weights],
                             roles, floor, trace)


def _apply_floor(weights: np.ndarray, roles: tuple[str, ...], floor: float) -> np.ndarray:
    clamped = [i for i, role in enumerate(roles)
               if role == TRANSLATED and weights[i] < floor]
    if not clamped:
        return weights
    reserved = floor * len(clamped)
    if reserved >= 1.0:
        raise ConfigError(
            f"floor {floor} over {len(clamped)} translated components exceeds 1"
        )
    rest = [i for i in range(len(weights)) if i not in clamped]
    rest_mass = sum(weights[i] for i in rest)
    out = weights.copy()
    for i in clamped:
        out[i] = floor
    scale = (1.0 - reserved) / rest_mass
    for i in rest:
        out[i] = weights[i] * scale
    return out


# --------------------------------------------------------------------------
# ARPA serialization
# --------------------------------------------------------------------------

def write_arpa(model: KatzModel, path) -> None:
    """Write the model in the ARPA back-off text format (log10, 6 decimals)."""
    if not any(len(g) == 1 for g in model.logprob):
        raise DataError("model has no unigrams; refusing to write")
    sections: list[list[tuple[str, ...]]] = []
    for n in range(1, model.order + 1):
        grams = {g for g in model.logprob if len(g) == n}
        grams.update(g for g in model.backoff if len(g) == n)
        sections.append(sorted(grams))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for n, grams in enumerate(sections, start=1):
            fh.write(f"ngram {n}={len(grams)}\n")
        for n, grams in enumerate(sections, start=1):
            fh.write(f"\n\\{n}-grams:\n")
            for gram in grams:
                prob = model.logprob.get(gram, CONTEXT_ONLY_LOGPROB)
                line = f"{prob:.6f}\t{' '.join(gram)}"
                if n < model.order and gram in model.backoff:
                    line += f"\t{model.backoff[gram]:.6f}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


_NGRAM_HEADER = re.compile(r"ngram (\d+)=(\d+)")
_SECTION = re.compile(r"\\(\d+)-grams:")


def read_arpa(path) -> KatzModel:
    """Read an ARPA file back into a scoring-equivalent model."""
    declared: dict[int, int] = {}
    logprob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}
    section = 0
    seen: dict[int, int] = {}
    state = "preamble"
    ended = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                state = "data"
                continue
            if line == "\\end\\":
                ended = True
                break
            m = _SECTION.fullmatch(line)
            if m:
                section = int(m.group(1))
                if section not in declared:
                    raise DataError(f"{path}:{lineno}: undeclared section {section}")
                state = "ngrams"
                continue
            if state == "data":
                m = _NGRAM_HEADER.fullmatch(line)
                if not m:
                    raise DataError(f"{path}:{lineno}: bad count line {line!r}")
                declared[int(m.group(1))] = int(m.group(2))
                continue
            if state != "ngrams":
                raise DataError(f"{path}:{lineno}: unexpected line {line!r}")
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) == 2:
                prob_s, gram_s = parts
                bow_s = None
            elif len(parts) == 3:
                prob_s, gram_s, bow_s = parts
            else:
                raise DataError(f"{path}:{lineno}: bad n-gram line {line!r}")
            gram = tuple(gram_s.split())
            if len(gram) != section:
                raise DataError(
                    f"{path}:{lineno}: {len(gram)}-gram in section {section}"
                )
            try:
                logprob[gram] = float(prob_s)
                if bow_s is not None:
                    backoff[gram] = float(bow_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad float in {line!r}") from None
            seen[section] = seen.get(section, 0) + 1
    if not ended:
        raise DataError(f"{path}: truncated file (missing \\end\\)")
    if not declared:
        raise DataError(f"{path}: missing \\data\\ section")
    for n, count in declared.items():
        if seen.get(n, 0) != count:
            raise DataError(
                f"{path}: section {n} declares {count} n-grams, found {seen.get(n, 0)}"
            )
    order = max(declared)
    vocab = {g[0] for g in logprob if len(g) == 1}
    if (UNK,) not in logprob:
        raise DataError(f"{path}: model lacks a {UNK} unigram")
    return KatzModel(order, logprob, backoff, vocab | {BOS, EOS, UNK})

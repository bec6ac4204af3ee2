"""Evaluation metrics and scenario analysis.

Corpus BLEU (clipped n-gram precisions with brevity penalty), word error
rate with a deterministic substitution/deletion/insertion split, relative
WER reduction, Pearson correlation with an exact two-tailed t-test p-value,
and the per-scenario breakdown report combining them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence


# --------------------------------------------------------------------------
# BLEU
# --------------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus-level BLEU in [0, 100] with a single reference per hypothesis.

    Geometric mean of clipped n-gram precisions (orders 1..max_n) times the
    brevity penalty. Orders with no candidate n-grams anywhere in the corpus
    are skipped (effective order), so a perfect short-sentence corpus still
    scores 100. Without smoothing any zero precision zeroes the score; with
    smooth=True each precision gains +1 on both sides.
    """
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_counts = Counter(_ngrams(hyp, n))
            if not hyp_counts:
                continue
            ref_counts = Counter(_ngrams(ref, n))
            totals[n] += sum(hyp_counts.values())
            matches[n] += sum(
                min(c, ref_counts[g]) for g, c in hyp_counts.items()
            )
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n], totals[n]
        if smooth:
            m, t = m + 1, t + 1
        if t == 0 or m == 0:
            return 0.0
        log_sum += math.log(m / t) / max_n
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum)


# --------------------------------------------------------------------------
# WER
# --------------------------------------------------------------------------

class WerResult(NamedTuple):
    rate: float
    substitutions: int
    deletions: int
    insertions: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerResult:
    """Word error rate via unit-cost edit distance.

    Among minimal-cost alignments the one with the most substitutions is
    reported (a substitution is preferred over a deletion+insertion pair),
    which makes the S/D/I split deterministic and symmetric: swapping the
    arguments swaps D and I and leaves S unchanged.
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    m, n = len(reference), len(hypothesis)
    # per cell: minimal cost, then maximal substitutions at that cost;
    # both additive along a path, so the lexicographic DP is exact
    prev_cost = list(range(n + 1))
    prev_subs = [0] * (n + 1)
    for i in range(1, m + 1):
        cur_cost = [i] + [0] * n
        cur_subs = [0] * (n + 1)
        ref_tok = reference[i - 1]
        for j in range(1, n + 1):
            if ref_tok == hypothesis[j - 1]:
                diag_cost, diag_subs = prev_cost[j - 1], prev_subs[j - 1]
            else:
                diag_cost, diag_subs = prev_cost[j - 1] + 1, prev_subs[j - 1] + 1
            best_cost = diag_cost
            best_subs = diag_subs
            del_cost = prev_cost[j] + 1
            if del_cost < best_cost:
                best_cost, best_subs = del_cost, prev_subs[j]
            elif del_cost == best_cost and prev_subs[j] > best_subs:
                best_subs = prev_subs[j]
            ins_cost = cur_cost[j - 1] + 1
            if ins_cost < best_cost:
                best_cost, best_subs = ins_cost, cur_subs[j - 1]
            elif ins_cost == best_cost and cur_subs[j - 1] > best_subs:
                best_subs = cur_subs[j - 1]
            cur_cost[j] = best_cost
            cur_subs[j] = best_subs
        prev_cost, prev_subs = cur_cost, cur_subs
    cost, subs = prev_cost[n], prev_subs[n]
    # cost = S + D + I and m - n = D - I pin down the split given S
    deletions = (cost - subs + (m - n)) // 2
    insertions = (cost - subs - (m - n)) // 2
    return WerResult(cost / m, subs, deletions, insertions)


def werr(baseline_wer: float, new_wer: float) -> float:
    """Relative WER reduction in percent; negative when new is worse."""
    if baseline_wer <= 0:
        raise ValueError(f"baseline WER must be > 0, got {baseline_wer}")
    if new_wer < 0:
        raise ValueError(f"WER must be >= 0, got {new_wer}")
    return 100.0 * (baseline_wer - new_wer) / baseline_wer


# --------------------------------------------------------------------------
# Pearson correlation with exact small-sample p-value
# --------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 3e-14
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to well below 1e-8 over (0, 1)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _two_tailed_t_pvalue(t: float, df: int) -> float:
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample correlation and two-tailed p-value from the exact t-test.

    p = I_{df/(df+t^2)}(df/2, 1/2) with t = r * sqrt((n-2)/(1-r^2)) and
    df = n - 2; exact rather than a normal approximation, so it is valid
    for the small n this toolkit deals in.
    """
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    var_x = sum(v * v for v in dx)
    var_y = sum(v * v for v in dy)
    if var_x == 0.0 or var_y == 0.0:
        raise ValueError("zero variance in one of the variables")
    r = sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)
    r = max(-1.0, min(1.0, r))
    if 1.0 - r * r <= 0.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, _two_tailed_t_pvalue(t, n - 2)


# --------------------------------------------------------------------------
# scenario breakdown
# --------------------------------------------------------------------------

def adaptation_contribution(postedit_werr: float, combined_werr: float) -> float:
    """Share of the combined WERR attributable to adaptation, in percent."""
    if combined_werr <= 0:
        raise ValueError(
            f"combined WERR must be > 0, got {combined_werr}"
        )
    return 100.0 * (combined_werr - postedit_werr) / combined_werr


@dataclass
class ScenarioStats:
    """Per-scenario inputs: a baseline WER, the two system WERs, NE counts."""

    scenario: str
    baseline_wer: float
    postedit_wer: float
    combined_wer: float
    ne_tokens: int
    total_tokens: int
    coverage: str | None = None


@dataclass
class ScenarioRow:
    scenario: str
    postedit_werr: float
    combined_werr: float
    adaptation_contribution: float
    ne_percent: float
    coverage: str | None = None


@dataclass
class ScenarioReport:
    rows: list[ScenarioRow]
    pearson_combined: tuple[float, float] | None
    pearson_postedit: tuple[float, float] | None
    note: str | None = None

    def to_tsv(self) -> str:
        lines = [
            "scenario\tpostedit_werr\tcombined_werr\tadaptation_contribution"
            "\tne_percent\tcoverage"
        ]
        for row in self.rows:
            lines.append(
                f"{row.scenario}\t{row.postedit_werr:.2f}\t{row.combined_werr:.2f}"
                f"\t{row.adaptation_contribution:.2f}\t{row.ne_percent:.2f}"
                f"\t{row.coverage or '-'}"
            )
        if self.pearson_combined is not None:
            r, p = self.pearson_combined
            lines.append(f"pearson_r={r:.6f} p={p:.6f}")
        else:
            lines.append(f"pearson undefined ({self.note})")
        return "\n".join(lines) + "\n"


def scenario_report(stats: Sequence[ScenarioStats]) -> ScenarioReport:
    """Fold per-scenario WERs and entity counts into the breakdown table.

    The headline correlation relates combined WERR to entity percentage;
    the post-editing variant is computed alongside it. A degenerate
    correlation (zero variance) is reported as a note, not an error.
    """
    if len(stats) < 2:
        raise ValueError("need at least two scenarios")
    rows = []
    for s in stats:
        pe = werr(s.baseline_wer, s.postedit_wer)
        co = werr(s.baseline_wer, s.combined_wer)
        ne_pct = 100.0 * s.ne_tokens / s.total_tokens if s.total_tokens else 0.0
        rows.append(ScenarioRow(
            s.scenario, pe, co, adaptation_contribution(pe, co), ne_pct, s.coverage
        ))
    note = None
    try:
        combined = pearson([r.combined_werr for r in rows],
                           [r.ne_percent for r in rows])
        postedit = pearson([r.postedit_werr for r in rows],
                           [r.ne_percent for r in rows])
    except ValueError as exc:
        combined = postedit = None
        note = str(exc)
    return ScenarioReport(rows, combined, postedit, note)

import math
import random

import pytest

from lmboot.adapt import (
    LN10,
    FilterConfig,
    RescoreConfig,
    build_synthetic_parallel,
    filter_translations,
    read_parallel_tsv,
    rescore,
)
from lmboot.corpus import Utterance
from lmboot.errors import DataError
from lmboot.ngram_lm import log_prob, train_katz
from lmboot.postedit import NBestList
from test_postedit import make_hyp


def nbest_of(source, targets, per_token_logprobs, list_id="n1"):
    hyps = []
    for target, lp in zip(targets, per_token_logprobs):
        alignment = [min(i, len(source) - 1) for i in range(len(target))]
        hyps.append(make_hyp(source, target, alignment, logprob=lp))
    return NBestList(list_id, hyps)


@pytest.fixture(scope="module")
def lm():
    corpus = [["gaana", "bajao"], ["mausam", "kaisa", "hai"],
              ["gaana", "chalao"], ["bajao", "gaana"]] * 3
    return train_katz(corpus, order=2)


class TestRescore:
    def test_weighted_sum_formula(self, lm):
        nbest = nbest_of(["play"], [["gaana", "bajao"]], [-1.0])
        result = rescore(nbest, lm, RescoreConfig(lm_weight=0.3))
        mt_norm = -1.0  # every token carries logprob -1.0
        lm_norm = log_prob(lm, ["gaana", "bajao"]) * LN10 / 3
        assert result.combined_scores[0] == pytest.approx(
            0.7 * mt_norm + 0.3 * lm_norm
        )
        # the stated arithmetic shape: 0.7*(-1.0) + 0.3*(-2.0) = -1.3
        assert 0.7 * -1.0 + 0.3 * -2.0 == pytest.approx(-1.3)

    def test_zero_weight_keeps_original_top1(self, lm):
        rng = random.Random(1)
        for trial in range(30):
            targets = [["t", str(i)] for i in range(4)]
            lps = sorted([rng.uniform(-2.0, -0.1) for _ in range(4)],
                         reverse=True)  # rank order == mt order
            nbest = nbest_of(["s"], targets, lps, list_id=f"n{trial}")
            result = rescore(nbest, lm, RescoreConfig(lm_weight=0.0))
            assert result.chosen_index == 0

    def test_full_weight_picks_lm_argmax(self, lm):
        targets = [["zzz", "qqq"], ["gaana", "bajao"]]
        nbest = nbest_of(["s"], targets, [-0.1, -2.0])
        result = rescore(nbest, lm, RescoreConfig(lm_weight=1.0))
        assert result.chosen_index == 1

    def test_lm_flip_matches_brute_force(self, lm):
        # hypothesis 3 is in-domain text with a mediocre decoder score
        targets = [["waala", "zara"], ["phir", "abhi"], ["zara", "phir"],
                   ["gaana", "bajao"], ["abhi", "waala"]]
        lps = [-0.2, -0.3, -0.4, -0.6, -0.9]
        nbest = nbest_of(["s"], targets, lps)
        cfg = RescoreConfig(lm_weight=0.3)
        baseline = rescore(nbest, lm, RescoreConfig(lm_weight=0.0))
        result = rescore(nbest, lm, cfg)
        assert baseline.chosen_index == 0
        assert result.chosen_index == 3
        # brute force: recompute every combined score independently
        for i, hyp in enumerate(nbest.hypotheses):
            mt = hyp.mt_score / len(hyp.target_tokens)
            lm_score = log_prob(lm, hyp.target_tokens) * LN10 / (
                len(hyp.target_tokens) + 1
            )
            assert result.combined_scores[i] == pytest.approx(
                0.7 * mt + 0.3 * lm_score
            )
        assert result.chosen_index == max(
            range(5), key=lambda i: (result.combined_scores[i], -i)
        )

    def test_tie_takes_lowest_rank(self, lm):
        targets = [["gaana", "bajao"], ["gaana", "bajao"]]
        nbest = nbest_of(["s"], targets, [-0.5, -0.5])
        result = rescore(nbest, lm, RescoreConfig(lm_weight=0.3))
        assert result.chosen_index == 0

    def test_dominance(self, lm):
        rng = random.Random(9)
        vocab = ["gaana", "bajao", "waala", "zara", "phir"]
        for trial in range(100):
            n = rng.randint(2, 5)
            targets = [rng.choices(vocab, k=rng.randint(1, 4)) for _ in range(n)]
            lps = [rng.uniform(-2.0, -0.05) for _ in range(n)]
            nbest = nbest_of(["s"], targets, lps, list_id=f"d{trial}")
            w = rng.uniform(0.05, 0.95)
            result = rescore(nbest, lm, RescoreConfig(lm_weight=w))
            mts = [h.mt_score / len(h.target_tokens) for h in nbest.hypotheses]
            lms = [log_prob(lm, h.target_tokens) * LN10 /
                   (len(h.target_tokens) + 1) for h in nbest.hypotheses]
            for i in range(n):
                for j in range(n):
                    if (mts[i] >= mts[j] and lms[i] >= lms[j]
                            and (mts[i] > mts[j] or lms[i] > lms[j])):
                        assert result.combined_scores[i] > result.combined_scores[j]

    def test_raw_sum_mode(self, lm):
        nbest = nbest_of(["s"], [["gaana", "bajao", "zara"]], [-0.5])
        result = rescore(nbest, lm, RescoreConfig(lm_weight=0.4,
                                                  length_normalize=False))
        expected = 0.6 * (-1.5) + 0.4 * log_prob(lm, ["gaana", "bajao", "zara"]) * LN10
        assert result.combined_scores[0] == pytest.approx(expected)


class TestFilter:
    def make_items(self, scores):
        items = []
        for i, score in enumerate(scores):
            hyp = make_hyp(["s"], ["w"], [0], logprob=score)
            items.append((f"i{i}", hyp))
        return items

    def test_keep_all(self):
        items = self.make_items([-1.0, -2.0])
        result = filter_translations(items, FilterConfig("mt_score", 1.0))
        assert set(result.retained_ids) == {"i0", "i1"}

    def test_nearest_rank(self):
        items = self.make_items([-1.0, -2.0, -3.0, -4.0])
        result = filter_translations(items, FilterConfig("mt_score", 0.75))
        assert result.retained_ids == ["i0", "i1", "i2"]

    def test_matches_sort_oracle(self):
        rng = random.Random(3)
        scores = [rng.uniform(-3.0, -0.01) for _ in range(500)]
        items = self.make_items(scores)
        result = filter_translations(items, FilterConfig("mt_score", 0.65))
        oracle = sorted(
            ((-score, f"i{i}") for i, score in enumerate(scores))
        )
        keep = math.ceil(0.65 * 500)
        assert result.retained_ids == [sid for _, sid in oracle[:keep]]

    def test_subset_monotone_across_fractions(self):
        rng = random.Random(4)
        items = self.make_items([rng.uniform(-3, -0.1) for _ in range(97)])
        kept = {}
        for fraction in (0.65, 0.75, 0.85):
            result = filter_translations(items,
                                         FilterConfig("mt_score", fraction))
            kept[fraction] = set(result.retained_ids)
            assert len(result.retained_ids) == math.ceil(fraction * 97)
        assert kept[0.65] <= kept[0.75] <= kept[0.85]

    def test_slm_metric_requires_model(self, lm):
        items = self.make_items([-1.0])
        with pytest.raises(ValueError):
            filter_translations(items, FilterConfig("slm_score", 0.5), lm=None)
        result = filter_translations(items, FilterConfig("slm_score", 1.0), lm)
        assert result.retained_ids == ["i0"]

    def test_slm_prefers_in_domain_text(self, lm):
        good = make_hyp(["s"], ["gaana", "bajao"], [0, 0], logprob=-0.5)
        bad = make_hyp(["s"], ["zzz", "qqq"], [0, 0], logprob=-0.5)
        result = filter_translations([("good", good), ("bad", bad)],
                                     FilterConfig("slm_score", 0.5), lm)
        assert result.retained_ids == ["good"]

    def test_tie_breaks_by_id(self):
        items = self.make_items([-1.0, -1.0, -1.0])
        result = filter_translations(items, FilterConfig("mt_score", 0.5))
        assert result.retained_ids == ["i0", "i1"]


class TestSyntheticParallel:
    def test_two_pairs_in_source_order(self, tmp_path):
        sources = [Utterance("a", ("play", "it")), Utterance("b", ("stop",))]
        edited = [("b", ["band", "karo"]), ("a", ["bajao"])]
        path = tmp_path / "pairs.tsv"
        count = build_synthetic_parallel(sources, edited, path)
        assert count == 2
        assert path.read_text() == "play it\tbajao\nstop\tband karo\n"

    def test_orphans_named(self, tmp_path):
        sources = [Utterance("a", ("x",))]
        edited = [("b", ["y"])]
        with pytest.raises(DataError, match="'a'.*'b'|\\['a'\\].*\\['b'\\]"):
            build_synthetic_parallel(sources, edited, tmp_path / "p.tsv")

    def test_round_trip(self, tmp_path):
        sources = [Utterance(f"u{i}", ("tok", f"s{i}")) for i in range(5)]
        edited = [(f"u{i}", ["tok", f"t{i}"]) for i in range(5)]
        path = tmp_path / "p.tsv"
        build_synthetic_parallel(sources, edited, path)
        pairs = read_parallel_tsv(path)
        assert pairs == [(["tok", f"s{i}"], ["tok", f"t{i}"]) for i in range(5)]

import math
import random

import numpy as np
import pytest

from lmboot.errors import ConfigError, DataError
from lmboot.ngram_lm import (
    BOS,
    EOS,
    UNK,
    InterpolatedModel,
    KatzModel,
    log_prob,
    perplexity,
    read_arpa,
    train_katz,
    tune_interpolation,
    write_arpa,
)
from oracles import mixture_grid_search


def conditional_sum(model: KatzModel, context: tuple) -> float:
    """Total probability over the prediction vocabulary given a context."""
    return sum(
        10.0 ** model.conditional_log10(context, w)
        for w in model.prediction_vocab
    )


def make_unigram_model(probs: dict[str, float]) -> KatzModel:
    """Analytic order-1 model; probs must cover EOS and UNK and sum to 1."""
    assert abs(sum(probs.values()) - 1.0) < 1e-9
    logprob = {(tok,): math.log10(p) for tok, p in probs.items()}
    return KatzModel(1, logprob, {}, set(probs) | {BOS, EOS, UNK})


def random_corpus(rng, vocab, n_sentences, max_len=8):
    """Zipf-ish random sentences: plenty of singleton n-grams."""
    weights = [1.0 / (i + 1) for i in range(len(vocab))]
    return [
        rng.choices(vocab, weights=weights, k=rng.randint(1, max_len))
        for _ in range(n_sentences)
    ]


class TestTrainKatz:
    def test_repeated_sentence_normalizes(self):
        model = train_katz([["a", "a", "a"]] * 10, order=2)
        total = sum(
            10.0 ** model.conditional_log10(("a",), w) for w in ("a", EOS, UNK)
        )
        assert total == pytest.approx(1.0, abs=1e-6)
        assert model.conditional_log10(("a",), "a") > model.conditional_log10(
            ("a",), EOS
        )

    def test_hand_computed_discounts(self):
        # corpus {a b, a c, a b}, order 2. Bigram count-of-counts:
        #   N1=2 {(a,c),(c,</s>)}, N2=2 {(a,b),(b,</s>)}, N3=1 {(<s>,a)}
        # cutoff correction A = 6*N6/N1 = 0, so for count 2:
        #   d2 = ((3*N3/N2)/2) = (3*1/2)/2 = 0.75        -> P(b|a) = 0.75*2/3 = 0.5
        # for count 1: d1 = (2*N2/N1)/1 = 2, outside (0,1), kept raw
        #   -> P(c|a) = 1/3
        model = train_katz([["a", "b"], ["a", "c"], ["a", "b"]], order=2)
        p_b = 10.0 ** model.conditional_log10(("a",), "b")
        p_c = 10.0 ** model.conditional_log10(("a",), "c")
        assert p_b == pytest.approx(0.5, abs=1e-6)
        assert p_c == pytest.approx(1 / 3, abs=1e-6)
        assert conditional_sum(model, ("a",)) == pytest.approx(1.0, abs=1e-6)

    def test_unseen_history_backs_off_to_finite(self):
        rng = random.Random(0)
        model = train_katz(random_corpus(rng, list("abcdef"), 60), order=4)
        # a history that never occurred: probability flows down the chain
        lp = model.conditional_log10(("f", "f", "f"), "a")
        assert math.isfinite(lp)
        assert lp < 0

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            train_katz([], order=2)
        with pytest.raises(DataError):
            train_katz([[]], order=2)

    def test_bad_parameters(self):
        with pytest.raises(ConfigError):
            train_katz([["a"]], order=0)
        with pytest.raises(ConfigError):
            train_katz([["a"]], order=2, k=0)

    def test_normalization_every_context(self):
        rng = random.Random(7)
        corpus = random_corpus(rng, list("abcdefgh"), 150)
        model = train_katz(corpus, order=3)
        for context in model.contexts():
            assert conditional_sum(model, context) == pytest.approx(
                1.0, abs=1e-6
            ), f"context {context}"


class TestLogProb:
    def test_single_token_model(self):
        model = train_katz([["a"]], order=2)
        score = log_prob(model, ["a"])
        assert math.isfinite(score)
        expected = model.conditional_log10((BOS,), "a") + model.conditional_log10(
            ("a",), EOS
        )
        assert score == pytest.approx(expected)

    def test_sentences_score_independently(self):
        rng = random.Random(1)
        corpus = random_corpus(rng, list("abcd"), 40)
        model = train_katz(corpus, order=3)
        s1, s2 = ["a", "b", "c"], ["d", "a"]
        both = sum(sum(model.position_log10_probs(s)) for s in (s1, s2))
        assert both == pytest.approx(log_prob(model, s1) + log_prob(model, s2))

    def test_oov_scores_as_unk(self):
        model = train_katz([["a", "b"], ["b", "a"]], order=2)
        assert log_prob(model, ["a", "zzz"]) == pytest.approx(
            log_prob(model, ["a", UNK])
        )

    def test_empty_sentence_scores_eos_only(self):
        model = train_katz([["a"]], order=2)
        assert log_prob(model, []) == pytest.approx(
            model.conditional_log10((BOS,), EOS)
        )


class TestPerplexity:
    def test_near_deterministic_corpus(self):
        corpus = [["a", "a", "a"]] * 20
        model = train_katz(corpus, order=2)
        assert perplexity(model, corpus) < 2.0

    def test_uniform_model_on_random_text(self):
        vocab = [f"w{i}" for i in range(50)]
        eps = 1e-7
        share = (1.0 - eps) / 51
        probs = {tok: share for tok in vocab}
        probs[EOS] = share
        probs[UNK] = eps
        model = make_unigram_model(probs)
        rng = random.Random(3)
        corpus = [rng.choices(vocab, k=rng.randint(2, 9)) for _ in range(100)]
        ppl = perplexity(model, corpus)
        assert abs(ppl - 50) / 50 < 0.05

    def test_degenerate_mixture_matches_component(self):
        rng = random.Random(5)
        corpus_a = random_corpus(rng, list("abc"), 50)
        corpus_b = random_corpus(rng, list("bcd"), 50)
        model_a = train_katz(corpus_a, order=2)
        model_b = train_katz(corpus_b, order=2)
        mixture = InterpolatedModel(
            [model_a, model_b], [1.0, 0.0], ("transcribed", "translated")
        )
        held_out = random_corpus(rng, list("abcd"), 20)
        assert perplexity(mixture, held_out) == pytest.approx(
            perplexity(model_a, held_out), abs=1e-9
        )


class TestTuneInterpolation:
    def test_prefers_better_component(self):
        flat = make_unigram_model(
            {"a": 0.445, "b": 0.445, EOS: 0.1, UNK: 0.01}
        )
        peaked = make_unigram_model(
            {"a": 0.8, "b": 0.09, EOS: 0.1, UNK: 0.01}
        )
        tuning = [["a"]] * 60
        mixture = tune_interpolation([flat, peaked], tuning, floor=0.0)
        assert mixture.weights[1] > 0.99

    def test_identical_components_stay_uniform(self):
        model = train_katz([["a", "b"], ["b", "a"]], order=2)
        mixture = tune_interpolation([model, model], [["a", "b"]], floor=0.0)
        assert mixture.weights == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_em_monotone_and_matches_grid(self):
        rng = random.Random(11)
        model_a = train_katz(random_corpus(rng, list("abcde"), 80), order=2)
        model_b = train_katz(random_corpus(rng, list("cdefg"), 80), order=2)
        tuning = random_corpus(rng, list("abcdefg"), 40)
        mixture = tune_interpolation([model_a, model_b], tuning, floor=0.0)
        trace = mixture.em_trace
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
        p1 = 10.0 ** np.array(
            [lp for s in tuning for lp in model_a.position_log10_probs(s)]
        )
        p2 = 10.0 ** np.array(
            [lp for s in tuning for lp in model_b.position_log10_probs(s)]
        )
        best_w, _ = mixture_grid_search(p1, p2)
        assert mixture.weights[0] == pytest.approx(best_w, abs=0.01)

    def test_floor_clamps_exactly(self):
        flat = make_unigram_model({"a": 0.445, "b": 0.445, EOS: 0.1, UNK: 0.01})
        peaked = make_unigram_model({"a": 0.8, "b": 0.09, EOS: 0.1, UNK: 0.01})
        # tuning favors the first (transcribed) component; translated gets
        # clamped up to the floor
        tuning = [["b"]] * 60
        mixture = tune_interpolation([flat, peaked], tuning, floor=0.25)
        assert mixture.weights[1] == 0.25
        assert sum(mixture.weights) == pytest.approx(1.0, abs=1e-12)

    def test_inactive_floor_leaves_weights_alone(self):
        flat = make_unigram_model({"a": 0.445, "b": 0.445, EOS: 0.1, UNK: 0.01})
        peaked = make_unigram_model({"a": 0.8, "b": 0.09, EOS: 0.1, UNK: 0.01})
        tuning = [["a"]] * 60
        unclamped = tune_interpolation([flat, peaked], tuning, floor=0.0)
        floored = tune_interpolation([flat, peaked], tuning, floor=0.1)
        assert floored.weights == pytest.approx(unclamped.weights, abs=1e-12)

    def test_bad_floor(self):
        model = train_katz([["a"]], order=2)
        with pytest.raises(ConfigError):
            tune_interpolation([model, model], [["a"]], floor=1.0)

    def test_mixture_never_below_component_plus_logweight(self):
        rng = random.Random(13)
        model_a = train_katz(random_corpus(rng, list("abc"), 50), order=2)
        model_b = train_katz(random_corpus(rng, list("bcd"), 50), order=2)
        mixture = tune_interpolation(
            [model_a, model_b], random_corpus(rng, list("abcd"), 30), floor=0.0
        )
        sentence = ["a", "d", "b"]
        mixed = log_prob(mixture, sentence)
        for weight, component in zip(mixture.weights, mixture.components):
            if weight == 0.0:
                continue
            assert mixed >= math.log10(weight) + log_prob(component, sentence) - 1e-9

    def test_tuned_mixture_not_worse_than_components(self):
        rng = random.Random(17)
        model_a = train_katz(random_corpus(rng, list("abcde"), 60), order=2)
        model_b = train_katz(random_corpus(rng, list("defgh"), 60), order=2)
        tuning = random_corpus(rng, list("abcdefgh"), 40)
        mixture = tune_interpolation([model_a, model_b], tuning, floor=0.0)
        tuned = perplexity(mixture, tuning)
        best_single = min(perplexity(m, tuning) for m in (model_a, model_b))
        assert tuned <= best_single + 1e-9


class TestArpa:
    def test_round_trip_scores(self, tmp_path):
        rng = random.Random(23)
        corpus = random_corpus(rng, list("abcdef"), 120)
        model = train_katz(corpus, order=4)
        path = tmp_path / "m.arpa"
        write_arpa(model, path)
        loaded = read_arpa(path)
        assert loaded.order == 4
        for _ in range(20):
            probe = rng.choices(list("abcdefzz"), k=rng.randint(1, 7))
            assert log_prob(loaded, probe) == pytest.approx(
                log_prob(model, probe), abs=1e-4
            )

    def test_declared_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text(
            "\\data\\\nngram 1=3\n\n\\1-grams:\n"
            f"-0.5\t{UNK}\n-0.5\ta\n\n\\end\\\n"
        )
        with pytest.raises(DataError, match="declares 3"):
            read_arpa(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "trunc.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n")
        with pytest.raises(DataError, match="truncated"):
            read_arpa(path)

    def test_untrainable_model_never_reaches_write(self, tmp_path):
        with pytest.raises(DataError):
            write_arpa(
                train_katz([], order=2),  # raises before write
                tmp_path / "never.arpa",
            )

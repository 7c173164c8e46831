import math

import numpy as np
import pytest

from semcap.data import AttributeVocab
from semcap.errors import ConfigError, SemcapError
from semcap.rewards import (
    AttributeMatchReport,
    RewardConfig,
    attribute_match_report,
    attribute_reward,
    brevity_penalty,
    category_reward,
    combined_reward,
    match_count,
)
from oracles import slow_attribute_reward

ATTRS = AttributeVocab([("pink",), ("lace",), ("floral",)])


class TestMatchCount:
    def test_worked_example(self):
        gen = "pink lace dress".split()
        ref = "pink lace dress with floral trim".split()
        assert match_count(gen, ref, ATTRS, 1) == 2
        assert match_count(gen, ref, ATTRS, 2) == 2

    def test_no_attribute_words(self):
        gen = "a cozy knit".split()
        ref = "pink lace dress".split()
        assert match_count(gen, ref, ATTRS, 1) == 0
        assert match_count(gen, ref, ATTRS, 2) == 0

    def test_repetition_clipped(self):
        gen = "pink pink pink".split()
        ref = "one pink thing".split()
        assert match_count(gen, ref, ATTRS, 1) == 1

    def test_two_token_phrase_qualifies(self):
        attrs = AttributeVocab([("notched", "lapel")])
        gen = "coat with notched lapel".split()
        ref = "a notched lapel coat".split()
        # neither token is a single-token attribute, but the bigram is
        assert match_count(gen, ref, attrs, 1) == 0
        assert match_count(gen, ref, attrs, 2) == 1

    def test_invalid_order_rejected(self):
        with pytest.raises(ConfigError):
            match_count(["a"], ["a"], ATTRS, 3)


class TestBrevityPenalty:
    def test_equal_lengths(self):
        assert brevity_penalty(6, 6) == 1.0

    def test_longer_than_reference(self):
        assert brevity_penalty(9, 6) == 1.0

    def test_short_caption_penalized(self):
        assert brevity_penalty(3, 6) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_zero_length_rejected(self):
        with pytest.raises(SemcapError):
            brevity_penalty(0, 4)

    def test_monotone_in_generated_length(self):
        ref_len = 10
        values = [brevity_penalty(l, ref_len) for l in range(1, 16)]
        assert all(b <= a for a, b in zip(values[1:], values))  # nondecreasing
        assert all(v == 1.0 for v in values[ref_len - 1:])


class TestAttributeReward:
    def test_worked_example(self):
        gen = "pink lace dress".split()
        ref = "pink lace dress with floral trim".split()
        report = attribute_match_report(gen, ref, ATTRS)
        assert report.precisions[1] == pytest.approx(2 / 3)
        assert report.precisions[2] == pytest.approx(1.0)
        assert report.brevity == pytest.approx(math.exp(-1.0))
        # exp(-1) * sqrt(2/3) = 0.3003723059...; frozen from the oracle below
        assert report.reward == pytest.approx(0.3003723059100852, abs=1e-12)
        assert report.reward == pytest.approx(0.300379, abs=1e-5)
        assert report.reward == pytest.approx(
            slow_attribute_reward(gen, ref, ATTRS.unigrams, ATTRS.bigrams), abs=1e-12)

    def test_perfect_match_still_diluted(self):
        sent = "pink lace dress with floral trim".split()
        report = attribute_match_report(sent, sent, ATTRS)
        assert report.brevity == 1.0
        assert report.precisions[1] == pytest.approx(3 / 6)
        assert report.precisions[2] == pytest.approx(4 / 5)
        assert report.reward == pytest.approx(math.sqrt(0.4), abs=1e-12)
        assert report.reward == pytest.approx(0.632456, abs=1e-6)

    def test_no_attributes_zero(self):
        assert attribute_reward("plain grey thing".split(), "pink lace dress".split(), ATTRS) == 0.0

    def test_single_token_caption_zero(self):
        # no bigrams exist, so the order-2 precision is defined as zero
        assert attribute_reward(["pink"], "pink lace dress".split(), ATTRS) == 0.0

    def test_empty_caption_rejected(self):
        with pytest.raises(SemcapError):
            attribute_reward([], ["pink"], ATTRS)

    def test_duplicating_attribute_never_helps(self):
        ref = "pink lace dress with floral trim".split()
        base = "pink lace dress of lace".split()
        spam = "pink lace dress lace lace".split()
        r_base = attribute_match_report(base, ref, ATTRS)
        r_spam = attribute_match_report(spam, ref, ATTRS)
        assert r_spam.matches[1] <= r_base.matches[1]

    def test_bounds(self):
        rng = np.random.default_rng(0)
        words = ["pink", "lace", "floral", "dress", "with", "soft", "trim", "hem"]
        for _ in range(200):
            gen = [words[int(i)] for i in rng.integers(0, len(words), size=rng.integers(1, 10))]
            ref = [words[int(i)] for i in rng.integers(0, len(words), size=rng.integers(1, 10))]
            report = attribute_match_report(gen, ref, ATTRS)
            for n in (1, 2):
                assert 0 <= report.matches[n] <= report.totals[n]
                assert 0.0 <= report.precisions[n] <= 1.0
            assert 0.0 <= report.reward <= 1.0
            assert 0.0 < report.brevity <= 1.0

    def test_oracle_equivalence_random_triples(self):
        # fast implementation vs the independent nested-loop enumerator
        rng = np.random.default_rng(123)
        base_words = [f"w{i}" for i in range(14)]
        for _ in range(300):
            n_uni = int(rng.integers(1, 5))
            n_bi = int(rng.integers(0, 3))
            uni = rng.choice(base_words, size=n_uni, replace=False)
            attrs = [(w,) for w in uni]
            for _ in range(n_bi):
                pair = tuple(rng.choice(base_words, size=2, replace=False))
                if pair not in attrs:
                    attrs.append(pair)
            vocab = AttributeVocab(attrs)
            gen = [base_words[int(i)] for i in rng.integers(0, 14, size=rng.integers(1, 12))]
            ref = [base_words[int(i)] for i in rng.integers(0, 14, size=rng.integers(1, 12))]
            fast = attribute_reward(gen, ref, vocab)
            slow = slow_attribute_reward(gen, ref, vocab.unigrams, vocab.bigrams)
            assert abs(fast - slow) < 1e-12

    def test_report_serializes(self):
        report = attribute_match_report(["pink", "lace"], ["pink", "lace"], ATTRS)
        d = report.as_dict()
        assert isinstance(d, dict)
        assert d["attribute_reward"] == report.reward


class _StubClassifier:
    def __init__(self, probs):
        self._probs = np.asarray(probs, dtype=np.float64)

    def classify(self, token_ids):
        return self._probs


class TestCategoryReward:
    def test_one_hot(self):
        clf = _StubClassifier([0.0, 1.0, 0.0])
        assert category_reward([5, 6], 1, clf) == 1.0

    def test_uniform(self):
        clf = _StubClassifier(np.full(8, 1.0 / 8))
        assert category_reward([5], 3, clf) == pytest.approx(1.0 / 8)

    def test_probabilities_sum_to_one_across_targets(self):
        rng = np.random.default_rng(1)
        raw = rng.uniform(size=6)
        clf = _StubClassifier(raw / raw.sum())
        total = sum(category_reward([0], c, clf) for c in range(6))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_unknown_category_rejected(self):
        clf = _StubClassifier([0.5, 0.5])
        with pytest.raises(SemcapError):
            category_reward([0], 2, clf)


class TestCombinedReward:
    def test_worked_sum(self):
        cfg = RewardConfig(attr_weight=1.0, category_weight=1.0)
        r_attr = attribute_reward("pink lace dress".split(),
                                  "pink lace dress with floral trim".split(), ATTRS)
        assert combined_reward(r_attr, 0.5, cfg) == pytest.approx(r_attr + 0.5, abs=1e-15)
        assert combined_reward(r_attr, 0.5, cfg) == pytest.approx(0.800379, abs=1e-5)

    def test_attr_weight_zero(self):
        cfg = RewardConfig(attr_weight=0.0, category_weight=2.0)
        assert combined_reward(0.7, 0.25, cfg) == pytest.approx(0.5)

    def test_both_zero(self):
        assert combined_reward(0.0, 0.0, RewardConfig()) == 0.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            RewardConfig(attr_weight=-1.0)

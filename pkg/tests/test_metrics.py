import numpy as np
import pytest

from semcap.data import AttributeVocab
from semcap.errors import DataError
from semcap.metrics import (
    attribute_map,
    bleu4,
    category_acc,
    cider,
    contains_phrase,
    rouge_l,
)
from oracles import slow_attribute_map, slow_bleu4, slow_cider, slow_rouge_l

WORDS = ["the", "soft", "wool", "coat", "warm", "silk", "dress", "with", "lace", "trim",
         "a", "hood", "belt", "hem"]


def random_corpus(rng, n_items, min_len=1, max_len=12):
    hyps, refs = [], []
    for _ in range(n_items):
        hyps.append([WORDS[int(i)] for i in rng.integers(0, len(WORDS), size=rng.integers(min_len, max_len))])
        # references share vocabulary so overlaps actually occur
        if rng.random() < 0.3:
            refs.append(list(hyps[-1]))
        else:
            refs.append([WORDS[int(i)] for i in rng.integers(0, len(WORDS), size=rng.integers(min_len, max_len))])
    return hyps, refs


class TestBleu4:
    def test_identical_corpus_scores_one(self):
        caps = [["a", "soft", "wool", "coat", "hem"], ["the", "silk", "dress", "with", "lace"]]
        assert bleu4(caps, caps) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_corpus_scores_zero(self):
        hyps = [["a", "b", "c", "d"]]
        refs = [["e", "f", "g", "h"]]
        assert bleu4(hyps, refs) == 0.0

    def test_three_sentence_case_matches_oracle(self):
        hyps = [
            "the soft wool coat with lace trim".split(),
            "a silk dress".split(),
            "warm wool coat with a hood".split(),
        ]
        refs = [
            "the soft wool coat with lace hem".split(),
            "a warm silk dress with lace".split(),
            "warm wool coat with a hood".split(),
        ]
        assert bleu4(hyps, refs) == pytest.approx(slow_bleu4(hyps, refs), abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            bleu4([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            bleu4([["a"]], [["a"], ["b"]])

    def test_score_one_iff_exact_match(self):
        hyps = [["a", "soft", "wool", "coat"], ["the", "silk", "dress", "hem"]]
        refs = [list(hyps[0]), list(hyps[1])]
        refs[1][-1] = "trim"
        assert bleu4(hyps, refs) < 1.0


class TestRougeL:
    def test_identical_pair(self):
        caps = [["silk", "dress"]]
        assert rouge_l(caps, caps) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_pair(self):
        assert rouge_l([["a", "b"]], [["c", "d"]]) == 0.0

    def test_hand_lcs_case(self):
        hyp = "a b c d".split()
        ref = "a c d e".split()
        # LCS = a c d (3); P = R = 3/4
        p = r = 3 / 4
        expected = (1 + 1.2) * p * r / (r + 1.2 * p)
        assert rouge_l([hyp], [ref]) == pytest.approx(expected, abs=1e-12)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        hyps, refs = random_corpus(rng, 6)
        assert rouge_l(hyps, refs) == pytest.approx(slow_rouge_l(hyps, refs), abs=1e-12)


class TestCider:
    def test_identical_distinct_references_maximal(self):
        caps = [
            "a soft wool coat with hood".split(),
            "the warm silk dress with lace".split(),
            "belt trim hem coat soft warm".split(),
        ]
        score = cider(caps, caps)
        assert score == pytest.approx(1.0, abs=1e-12)
        # perturbing any hypothesis can only lower the score
        worse = [list(c) for c in caps]
        worse[0][0] = "belt"
        assert cider(worse, caps) < score + 1e-12

    def test_disjoint_scores_zero(self):
        hyps = [["a", "b", "c", "d"], ["e", "f", "g", "h"]]
        refs = [["x", "y", "z", "w"], ["q", "r", "s", "t"]]
        assert cider(hyps, refs) == 0.0

    def test_single_item_rejected(self):
        with pytest.raises(DataError):
            cider([["a", "b"]], [["a", "b"]])

    def test_three_item_hand_corpus_matches_oracle(self):
        hyps = [
            "soft wool coat".split(),
            "the silk dress with lace trim".split(),
            "a warm hood".split(),
        ]
        refs = [
            "soft wool coat with belt".split(),
            "the silk dress with lace hem".split(),
            "a warm wool hood".split(),
        ]
        assert cider(hyps, refs) == pytest.approx(slow_cider(hyps, refs), abs=1e-12)


ATTRS = AttributeVocab([("wool",), ("lace",), ("silk",), ("lace", "trim")])


class TestAttributeMap:
    def test_exact_attribute_mentions(self):
        generated = [["a", "wool", "coat"], ["silk", "dress"]]
        truths = [{("wool",)}, {("silk",)}]
        assert attribute_map(generated, truths, ATTRS) == pytest.approx(1.0)

    def test_no_mentions(self):
        generated = [["a", "plain", "coat"], ["grey", "dress"]]
        truths = [{("wool",)}, {("silk",)}]
        assert attribute_map(generated, truths, ATTRS) == 0.0

    def test_four_item_hand_case(self):
        # detections for "wool" in item order: items 0 (TP), 1 (FP), 3 (TP)
        generated = [
            ["wool", "coat"],
            ["wool", "hat"],
            ["plain", "coat"],
            ["soft", "wool", "dress"],
        ]
        truths = [{("wool",)}, set(), {("wool",)}, {("wool",)}]
        # AP = (1/1 + 2/3) / 3; item 2 is an undetected positive
        expected = (1.0 + 2.0 / 3.0) / 3.0
        vocab = AttributeVocab([("wool",)])
        assert attribute_map(generated, truths, vocab) == pytest.approx(expected, abs=1e-12)
        assert attribute_map(generated, truths, vocab) == pytest.approx(
            slow_attribute_map(generated, truths, vocab.phrases), abs=1e-12)

    def test_two_token_phrase_must_be_contiguous(self):
        assert contains_phrase(["lace", "trim", "hem"], ("lace", "trim"))
        assert not contains_phrase(["lace", "hem", "trim"], ("lace", "trim"))

    def test_order_sensitivity_is_deterministic(self):
        generated = [["wool", "hat"], ["wool", "coat"]]
        truths = [set(), {("wool",)}]
        vocab = AttributeVocab([("wool",)])
        a = attribute_map(generated, truths, vocab)
        b = attribute_map(generated, truths, vocab)
        assert a == b
        # swapping items changes the ranking and therefore the score
        swapped = attribute_map(list(reversed(generated)), list(reversed(truths)), vocab)
        assert swapped != a


class _ArgmaxStub:
    """Classifies by the first token id, mimicking a frozen classifier."""

    def __init__(self, n):
        self.n = n

    def classify(self, ids):
        out = np.zeros(self.n)
        out[ids[0] % self.n] = 1.0
        return out


class TestCategoryAcc:
    def test_perfect(self):
        clf = _ArgmaxStub(4)
        ids = [[0], [1], [2]]
        assert category_acc(ids, [0, 1, 2], clf) == 1.0

    def test_rescoring_agreement(self):
        clf = _ArgmaxStub(4)
        rng = np.random.default_rng(2)
        ids = [[int(rng.integers(0, 4)), 1] for _ in range(40)]
        targets = [int(rng.integers(0, 4)) for _ in range(40)]
        acc = category_acc(ids, targets, clf)
        manual = np.mean([int(np.argmax(clf.classify(i))) == t for i, t in zip(ids, targets)])
        assert acc == pytest.approx(float(manual), abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            category_acc([], [], _ArgmaxStub(2))


class TestOracleEquivalenceAndInvariance:
    def test_random_corpora_match_oracles(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            hyps, refs = random_corpus(rng, int(rng.integers(2, 8)))
            assert bleu4(hyps, refs) == pytest.approx(slow_bleu4(hyps, refs), abs=1e-12)
            assert rouge_l(hyps, refs) == pytest.approx(slow_rouge_l(hyps, refs), abs=1e-12)
            assert cider(hyps, refs) == pytest.approx(slow_cider(hyps, refs), abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        hyps, refs = random_corpus(rng, 7)
        perm = rng.permutation(7)
        hp = [hyps[i] for i in perm]
        rp = [refs[i] for i in perm]
        assert bleu4(hp, rp) == pytest.approx(bleu4(hyps, refs), abs=1e-12)
        assert rouge_l(hp, rp) == pytest.approx(rouge_l(hyps, refs), abs=1e-12)
        assert cider(hp, rp) == pytest.approx(cider(hyps, refs), abs=1e-12)

"""Corpus-level caption evaluation: BLEU-4, ROUGE-L, CIDEr, attribute mAP,
and classifier category accuracy.

All functions take tokenized captions (lists of token lists) and pair
hypothesis i with reference i; there is exactly one reference per item.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError

Tokens = Sequence[str]


@dataclass(frozen=True)
class EvalReport:
    bleu4: float
    rouge_l: float
    cider: float
    attribute_map: float
    category_acc: float

    def as_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "cider": self.cider,
            "attribute_map": self.attribute_map,
            "category_acc": self.category_acc,
        }


def _check_corpus(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> None:
    if len(hypotheses) == 0:
        raise DataError("empty evaluation corpus")
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses vs {len(references)} references")


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Corpus BLEU with orders 1..4, clipped counts, no smoothing.

    Any order with zero clipped matches (or zero candidate n-grams) zeroes
    the whole score, as in the unsmoothed definition.
    """
    _check_corpus(hypotheses, references)
    log_precision_sum = 0.0
    for n in range(1, 5):
        matched = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            matched += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            total += max(0, len(hyp) - n + 1)
        if matched == 0 or total == 0:
            return 0.0
        log_precision_sum += 0.25 * math.log(matched / total)
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_precision_sum)


def _lcs_length(a: Tokens, b: Tokens) -> int:
    # Classic O(len(a) * len(b)) dynamic program, single rolling row.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


ROUGE_BETA_SQ = 1.2


def rouge_l(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Mean longest-common-subsequence F-measure over the corpus."""
    _check_corpus(hypotheses, references)
    scores = []
    for hyp, ref in zip(hypotheses, references):
        lcs = _lcs_length(hyp, ref)
        if lcs == 0:
            scores.append(0.0)
            continue
        p = lcs / len(hyp)
        r = lcs / len(ref)
        scores.append((1.0 + ROUGE_BETA_SQ) * p * r / (r + ROUGE_BETA_SQ * p))
    return float(np.mean(scores))


CIDER_MAX_ORDER = 4


def cider(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """TF-IDF weighted n-gram cosine similarity, averaged over orders 1..4
    and over items.  Document frequencies come from the reference corpus, so
    at least two items are required.
    """
    _check_corpus(hypotheses, references)
    if len(references) < 2:
        raise DataError("cider needs at least 2 items to estimate document frequencies")
    n_docs = len(references)
    doc_freq: Counter = Counter()
    for ref in references:
        seen = set()
        for n in range(1, CIDER_MAX_ORDER + 1):
            seen.update(_ngram_counts(ref, n))
        doc_freq.update(seen)

    def tfidf_vector(tokens: Tokens, n: int) -> dict:
        return {
            g: c * (math.log(n_docs) - math.log(max(1.0, doc_freq[g])))
            for g, c in _ngram_counts(tokens, n).items()
        }

    scores = []
    for hyp, ref in zip(hypotheses, references):
        per_order = []
        for n in range(1, CIDER_MAX_ORDER + 1):
            v_hyp = tfidf_vector(hyp, n)
            v_ref = tfidf_vector(ref, n)
            norm_h = math.sqrt(sum(v * v for v in v_hyp.values()))
            norm_r = math.sqrt(sum(v * v for v in v_ref.values()))
            if norm_h == 0.0 or norm_r == 0.0:
                per_order.append(0.0)
                continue
            dot = sum(v * v_ref[g] for g, v in v_hyp.items() if g in v_ref)
            per_order.append(dot / (norm_h * norm_r))
        scores.append(sum(per_order) / CIDER_MAX_ORDER)
    return float(np.mean(scores))


def contains_phrase(tokens: Tokens, phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    return any(tuple(tokens[i:i + n]) == phrase for i in range(len(tokens) - n + 1))


def attribute_map(generated: Sequence[Tokens], truth_attributes: Sequence[set], attributes) -> float:
    """Mean average precision of attribute mentions.

    A generated caption containing an attribute phrase counts as a unit-score
    detection of that attribute; detections are ranked by item order.  The
    mean runs over attributes with at least one ground-truth positive.
    """
    if len(generated) != len(truth_attributes):
        raise DataError(f"{len(generated)} captions vs {len(truth_attributes)} attribute sets")
    average_precisions = []
    for phrase in attributes.phrases:
        positives = [phrase in truth for truth in truth_attributes]
        n_pos = sum(positives)
        if n_pos == 0:
            continue
        hits = 0
        ap = 0.0
        rank = 0
        for i, caption in enumerate(generated):
            if contains_phrase(caption, phrase):
                rank += 1
                if positives[i]:
                    hits += 1
                    ap += hits / rank
        average_precisions.append(ap / n_pos)
    if not average_precisions:
        return 0.0
    return float(np.mean(average_precisions))


def category_acc(generated_ids: Sequence[Sequence[int]], target_categories: Sequence[int], classifier) -> float:
    """Fraction of generated captions the frozen classifier assigns to the
    item's true category (argmax, earliest index on ties)."""
    if len(generated_ids) != len(target_categories):
        raise DataError(f"{len(generated_ids)} captions vs {len(target_categories)} categories")
    if len(generated_ids) == 0:
        raise DataError("empty evaluation corpus")
    correct = 0
    for ids, target in zip(generated_ids, target_categories):
        probs = classifier.classify(ids)
        if int(np.argmax(probs)) == target:
            correct += 1
    return correct / len(generated_ids)

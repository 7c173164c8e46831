"""Semantic rewards for generated captions.

Two complementary signals:

* the attribute-level reward, a brevity-penalized geometric mean of clipped
  attribute n-gram precisions between a generated caption and its reference,
  rewarding captions that mention the right product attributes;
* the category-level reward, the probability a frozen text classifier assigns
  to the item's true category given the generated caption, rewarding captions
  that read like the right kind of product.

Both are bounded, non-differentiable functions of the sampled text, which is
why training consumes them through a policy-gradient estimator rather than
backpropagation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigError, SemcapError

NGRAM_ORDERS = (1, 2)


@dataclass(frozen=True)
class RewardConfig:
    """Weights for combining the two reward terms."""

    attr_weight: float = 1.0
    category_weight: float = 1.0

    def __post_init__(self):
        if self.attr_weight < 0 or self.category_weight < 0:
            raise ConfigError("reward weights must be nonnegative")


@dataclass(frozen=True)
class AttributeMatchReport:
    """Per-order accounting behind one attribute-level reward value."""

    length_generated: int
    length_reference: int
    brevity: float
    totals: dict[int, int] = field(default_factory=dict)      # n-grams in the generated caption
    matches: dict[int, int] = field(default_factory=dict)     # clipped attribute matches
    precisions: dict[int, float] = field(default_factory=dict)
    reward: float = 0.0

    def as_dict(self) -> dict:
        return {
            "length_generated": self.length_generated,
            "length_reference": self.length_reference,
            "brevity": self.brevity,
            "totals": {str(n): v for n, v in self.totals.items()},
            "matches": {str(n): v for n, v in self.matches.items()},
            "precisions": {str(n): v for n, v in self.precisions.items()},
            "attribute_reward": self.reward,
        }


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _qualifies(tup: tuple[str, ...], attributes) -> bool:
    # A unigram qualifies only if it is itself an attribute; a bigram
    # qualifies if it is a two-token attribute phrase or contains a
    # single-token attribute.
    if len(tup) == 1:
        return tup[0] in attributes.unigrams
    return tup in attributes.bigrams or tup[0] in attributes.unigrams or tup[1] in attributes.unigrams


def match_count(generated: Sequence[str], reference: Sequence[str], attributes, n: int) -> int:
    """Clipped count of attribute-bearing n-grams shared with the reference.

    Each distinct n-gram of the generated caption that carries an attribute
    contributes min(generated count, reference count), so repeating an
    attribute more often than the reference earns nothing extra.
    """
    if n not in NGRAM_ORDERS:
        raise ConfigError(f"attribute matching is defined for n in {NGRAM_ORDERS}, got {n}")
    ref_counts = Counter(ngrams(reference, n))
    total = 0
    for tup, c_gen in Counter(ngrams(generated, n)).items():
        if _qualifies(tup, attributes):
            total += min(c_gen, ref_counts[tup])
    return total


def brevity_penalty(length_generated: int, length_reference: int) -> float:
    """exp(min(0, (l - L) / l)): 1 for captions at least as long as the
    reference, decaying toward 0 as the caption shrinks."""
    if length_generated < 1:
        raise SemcapError("brevity penalty undefined for an empty generated caption")
    if length_reference < 1:
        raise SemcapError("brevity penalty undefined for an empty reference caption")
    return math.exp(min(0.0, (length_generated - length_reference) / length_generated))


def attribute_match_report(generated: Sequence[str], reference: Sequence[str], attributes) -> AttributeMatchReport:
    """Full accounting of the attribute-level reward for one caption pair."""
    if not generated:
        raise SemcapError("attribute reward undefined for an empty generated caption")
    m = len(generated)
    beta = brevity_penalty(m, len(reference))
    totals: dict[int, int] = {}
    matches: dict[int, int] = {}
    precisions: dict[int, float] = {}
    for n in NGRAM_ORDERS:
        totals[n] = max(0, m + 1 - n)
        matches[n] = match_count(generated, reference, attributes, n) if totals[n] else 0
        precisions[n] = matches[n] / totals[n] if totals[n] else 0.0
    if any(precisions[n] == 0.0 for n in NGRAM_ORDERS):
        reward = 0.0
    else:
        reward = beta * math.sqrt(precisions[1] * precisions[2])
    return AttributeMatchReport(
        length_generated=m,
        length_reference=len(reference),
        brevity=beta,
        totals=totals,
        matches=matches,
        precisions=precisions,
        reward=reward,
    )


def attribute_reward(generated: Sequence[str], reference: Sequence[str], attributes) -> float:
    """Brevity-penalized geometric mean of the order-1 and order-2 clipped
    attribute precisions; 0 whenever either precision is 0."""
    return attribute_match_report(generated, reference, attributes).reward


def category_reward(token_ids: Sequence[int], target_category: int, classifier) -> float:
    """Probability mass the frozen classifier puts on the true category."""
    probs = classifier.classify(token_ids)
    if not 0 <= target_category < len(probs):
        raise SemcapError(f"unknown category id {target_category} for classifier with {len(probs)} categories")
    return float(probs[target_category])


def combined_reward(attr: float, category: float, config: RewardConfig) -> float:
    return config.attr_weight * attr + config.category_weight * category

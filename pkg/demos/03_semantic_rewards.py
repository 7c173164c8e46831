"""The two semantic reward signals on hand-picked caption pairs.

The attribute-level reward is a brevity-penalized geometric mean of clipped
attribute n-gram precisions; the category-level reward is the probability a
frozen text classifier assigns to the true category.
"""

from semcap.data import AttributeVocab
from semcap.models import TextCNNClassifier, ClassifierConfig
from semcap.rewards import (RewardConfig, attribute_match_report, category_reward,
                            combined_reward)

attrs = AttributeVocab([("pink",), ("lace",), ("floral",)])
reference = "pink lace dress with floral trim".split()

for generated in (
    "pink lace dress".split(),                   # short but attribute-dense
    reference,                                   # perfect match
    "a plain grey jumper".split(),               # no attributes at all
    "pink pink pink pink pink pink".split(),     # attribute spam gets clipped
):
    report = attribute_match_report(generated, reference, attrs)
    print(f"generated: {' '.join(generated)!r}")
    print(f"  matches {dict(report.matches)}  totals {dict(report.totals)}  "
          f"precisions {{1: {report.precisions[1]:.3f}, 2: {report.precisions[2]:.3f}}}")
    print(f"  brevity {report.brevity:.4f}  ->  attribute reward {report.reward:.4f}\n")

# An untrained classifier spreads its mass evenly, so the category reward
# starts at 1/C and grows as the classifier is pretrained.
classifier = TextCNNClassifier(vocab_size=30, n_categories=5,
                               config=ClassifierConfig(embed_dim=8, filters=8), seed=0)
classifier_params = classifier.params
for p in classifier_params.values():
    p.data[...] = 0.0
r_cat = category_reward([7, 8, 9], target_category=2, classifier=classifier)
print(f"category reward from an all-zero classifier: {r_cat:.4f} (uniform over 5)")

cfg = RewardConfig(attr_weight=1.0, category_weight=1.0)
r_attr = attribute_match_report("pink lace dress".split(), reference, attrs).reward
print(f"combined reward: {combined_reward(r_attr, r_cat, cfg):.4f}")

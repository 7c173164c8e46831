"""Behavior of the corpus evaluation metrics on controlled inputs."""

import numpy as np

from semcap.data import AttributeVocab
from semcap.metrics import attribute_map, bleu4, cider, rouge_l

refs = [
    "a soft wool coat with lace trim".split(),
    "the pleated silk dress in navy".split(),
    "warm quilted parka with a hood".split(),
]

cases = {
    "identical": [list(r) for r in refs],
    "one word wrong": [r[:-1] + ["hem"] for r in refs],
    "half-length": [r[: len(r) // 2] for r in refs],
    "disjoint": [["x1", "x2", "x3", "x4"] for _ in refs],
}

print(f"{'case':>15}  {'bleu4':>7}  {'rouge_l':>7}  {'cider':>7}")
for name, hyps in cases.items():
    print(f"{name:>15}  {bleu4(hyps, refs):7.4f}  {rouge_l(hyps, refs):7.4f}  "
          f"{cider(hyps, refs):7.4f}")

# Attribute mean average precision: detections are attribute mentions in the
# generated captions, ranked by item order.
attrs = AttributeVocab([("wool",), ("silk",), ("lace", "trim")])
generated = [
    "a wool coat with lace trim".split(),   # true wool + true lace-trim
    "a wool dress".split(),                 # false wool mention
    "the silk dress".split(),               # true silk
]
truth = [{("wool",), ("lace", "trim")}, {("silk",)}, {("silk",)}]
print(f"\nattribute mAP: {attribute_map(generated, truth, attrs):.4f}")

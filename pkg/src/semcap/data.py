"""Item records, the labeling pipeline, dataset splits, and synthetic corpora.

The labeling pipeline mirrors how catalog data is usually curated: the
category is the last word of the item title, and attributes are the
noun/adjective title tokens that also occur in both the caption and the meta
text.  Two-token attribute phrases are formed whenever two extracted tokens
sit next to each other in the caption.

The synthetic generator produces corpora with known ground truth so every
downstream metric has oracle labels: each item's category and attributes are
planted in its title/caption/meta, and its feature grid is a noisy sum of
per-attribute and per-category signal vectors.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .text import tokenize

POS_NOUN = "noun"
POS_ADJ = "adj"
POS_OTHER = "other"

Phrase = tuple[str, ...]


@dataclass
class Item:
    """One catalog record: an image's feature grid plus its text fields."""

    id: str
    title: list[str]
    caption: list[str]
    meta: list[str]
    color: list[str] = field(default_factory=list)
    category: str | None = None
    attributes: tuple[Phrase, ...] = ()
    features: np.ndarray | None = None


class AttributeVocab:
    """Fixed list of 1- or 2-token attribute phrases with integer ids."""

    def __init__(self, phrases: Sequence[Phrase]):
        self.phrases: list[Phrase] = []
        for p in phrases:
            p = tuple(p)
            if len(p) not in (1, 2):
                raise DataError(f"attribute phrase must have 1 or 2 tokens, got {p}")
            self.phrases.append(p)
        self.id_of = {p: i for i, p in enumerate(self.phrases)}
        if len(self.id_of) != len(self.phrases):
            raise DataError("duplicate attribute phrase")
        self.unigrams = {p[0] for p in self.phrases if len(p) == 1}
        self.bigrams = {p for p in self.phrases if len(p) == 2}

    def __len__(self) -> int:
        return len(self.phrases)

    def __contains__(self, phrase: Phrase) -> bool:
        return tuple(phrase) in self.id_of

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(" ".join(p) for p in self.phrases) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AttributeVocab":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
        return cls([tuple(ln.split()) for ln in lines])


class CategorySet:
    """Retained category names with ids and item counts."""

    def __init__(self, names: Sequence[str], item_counts: Mapping[str, int] | None = None):
        self.names = list(names)
        self.id_of = {name: i for i, name in enumerate(self.names)}
        if len(self.id_of) != len(self.names):
            raise DataError("duplicate category name")
        self.item_counts = dict(item_counts or {})

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.id_of

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.names) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CategorySet":
        names = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
        return cls(names)


# ---------------------------------------------------------------------------
# labeling pipeline


def derive_category(title: Sequence[str]) -> str:
    """The item category is the last word of the title."""
    if not title:
        raise DataError("cannot derive a category from an empty title")
    return title[-1]


def extract_attributes(item: Item, lexicon: Mapping[str, str]) -> set[Phrase]:
    """Attribute phrases of one item.

    Single-token attributes are the noun/adjective title tokens that occur in
    both the caption and the meta text.  Whenever two extracted tokens are
    adjacent in the caption they additionally form a two-token phrase.
    """
    caption_set = set(item.caption)
    meta_set = set(item.meta)
    singles = {
        tok for tok in item.title
        if lexicon.get(tok, POS_OTHER) in (POS_NOUN, POS_ADJ)
        and tok in caption_set and tok in meta_set
    }
    phrases: set[Phrase] = {(tok,) for tok in singles}
    for a, b in zip(item.caption, item.caption[1:]):
        if a in singles and b in singles:
            phrases.add((a, b))
    return phrases


def build_attribute_vocab(attribute_sets: Iterable[set[Phrase]], min_item_count: int = 10) -> AttributeVocab:
    """Retain phrases that occur in at least ``min_item_count`` distinct
    items; ids are assigned by descending item count, then lexicographically."""
    if min_item_count < 1:
        raise ConfigError(f"min_item_count must be >= 1, got {min_item_count}")
    item_counts: Counter = Counter()
    for phrases in attribute_sets:
        item_counts.update(set(phrases))
    retained = [p for p, c in item_counts.items() if c >= min_item_count]
    retained.sort(key=lambda p: (-item_counts[p], p))
    return AttributeVocab(retained)


@dataclass
class LabeledDataset:
    items: list[Item]
    attributes: AttributeVocab
    categories: CategorySet


def label_items(
    items: Sequence[Item],
    lexicon: Mapping[str, str],
    *,
    min_attr_items: int = 10,
    min_cat_items: int = 200,
    aliases: Mapping[str, str] | None = None,
) -> LabeledDataset:
    """Run the full labeling pipeline.

    Categories below the item-count threshold are dropped along with their
    items; attribute extraction runs on the survivors and each item keeps the
    extracted phrases that made it into the attribute vocabulary.
    """
    aliases = aliases or {}
    raw_categories = []
    for item in items:
        cat = derive_category(item.title)
        raw_categories.append(aliases.get(cat, cat))
    counts = Counter(raw_categories)
    kept_names = sorted((name for name, c in counts.items() if c >= min_cat_items),
                        key=lambda name: (-counts[name], name))
    kept_set = set(kept_names)

    survivors = [(item, cat) for item, cat in zip(items, raw_categories) if cat in kept_set]
    if not survivors:
        raise DataError("no items survive the category threshold")

    extracted = [extract_attributes(item, lexicon) for item, _ in survivors]
    vocab = build_attribute_vocab(extracted, min_attr_items)

    labeled = []
    for (item, cat), phrases in zip(survivors, extracted):
        kept_phrases = tuple(sorted(p for p in phrases if p in vocab))
        labeled.append(replace(item, category=cat, attributes=kept_phrases))
    categories = CategorySet(kept_names, {n: counts[n] for n in kept_names})
    return LabeledDataset(items=labeled, attributes=vocab, categories=categories)


# ---------------------------------------------------------------------------
# splits


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]

    def as_dict(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=0) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetSplit":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(train=raw["train"], val=raw["val"], test=raw["test"])


def split_dataset(items: Sequence[Item], fractions: Sequence[float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> DatasetSplit:
    """Deterministic train/val/test split that keeps every group of items
    sharing one caption inside a single split."""
    if not items:
        raise DataError("cannot split an empty dataset")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be three nonnegative values summing to 1, got {fractions}")

    groups: dict[tuple[str, ...], list[str]] = {}
    for item in items:
        groups.setdefault(tuple(item.caption), []).append(item.id)
    group_list = list(groups.values())
    order = np.random.default_rng(seed).permutation(len(group_list))

    total = len(items)
    targets = [f * total for f in fractions]
    assigned = [0, 0, 0]
    buckets: list[list[str]] = [[], [], []]
    for gi in order:
        group = group_list[gi]
        deficits = [targets[k] - assigned[k] for k in range(3)]
        k = max(range(3), key=lambda i: deficits[i])
        buckets[k].extend(group)
        assigned[k] += len(group)
    return DatasetSplit(train=buckets[0], val=buckets[1], test=buckets[2])


# ---------------------------------------------------------------------------
# synthetic corpora

_ADJ_BANK = [
    "airy", "belted", "bold", "boxy", "braided", "breezy", "classic", "collared",
    "crisp", "cropped", "fitted", "flared", "frayed", "glossy", "layered", "longline",
    "matte", "modern", "muted", "pastel", "pearly", "pleated", "plush", "polished",
    "quilted", "relaxed", "retro", "ribbed", "ruffled", "rustic", "sheer", "sleek",
    "slouchy", "soft", "structured", "sturdy", "subtle", "tailored", "vintage", "vivid",
    "warm", "woven",
]
_NOUN_BANK = [
    "applique", "bead", "buckle", "button", "canvas", "chevron", "chiffon", "collar",
    "corduroy", "cotton", "cuff", "denim", "dot", "drawstring", "embroidery", "flannel",
    "fleece", "fringe", "gingham", "hem", "herringbone", "hood", "houndstooth", "jersey",
    "lace", "lapel", "leather", "linen", "mesh", "paisley", "plaid", "pocket",
    "pompom", "satin", "sequin", "silk", "strap", "stripe", "suede", "tassel",
    "trim", "tweed", "velour", "wool", "zipper",
]
_CATEGORY_BANK = [
    "dress", "coat", "jacket", "sweater", "blouse", "skirt", "trouser", "jean",
    "shirt", "cardigan", "blazer", "parka", "vest", "gown", "tunic", "romper",
    "jumpsuit", "legging", "scarf", "hat", "glove", "boot", "sneaker", "sandal",
    "loafer", "tote", "clutch", "belt", "bag", "short",
]
_FILLER_BANK = [
    "wardrobe", "essential", "favorite", "look", "style", "touch", "finish",
    "detail", "silhouette", "statement", "staple", "everyday", "weekend", "timeless",
    "season", "instantly", "perfectly", "simply", "effortlessly", "wonderfully",
]
_META_BANK = ["imported", "machine", "wash", "true", "size", "fit", "model", "wearing"]
_COLOR_BANK = ["black", "white", "ivory", "navy", "blush", "olive", "rust", "teal", "mauve", "charcoal"]
_SEPARATORS = ["and", "with", "plus"]

_TEMPLATES = [
    ("a", "{attrs}", "{category}", "for", "your", "{filler}", "{filler}"),
    ("this", "{filler}", "{category}", "features", "{attrs}"),
    ("{attrs}", "define", "this", "{filler}", "{category}"),
    ("the", "{category}", "with", "{attrs}", "makes", "a", "{filler}", "{filler}"),
    ("meet", "your", "new", "{filler}", "{category}", "with", "{attrs}"),
]

_SYLLABLES = ["ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "zu"]


def _extend_bank(bank: list[str], needed: int, prefix_pair: tuple[int, int]) -> list[str]:
    """Deterministically extend a word bank with pronounceable pseudo-words."""
    out = list(bank)
    i = 0
    while len(out) < needed:
        a = _SYLLABLES[(i * prefix_pair[0]) % len(_SYLLABLES)]
        b = _SYLLABLES[(i * prefix_pair[1] + 3) % len(_SYLLABLES)]
        c = _SYLLABLES[i % len(_SYLLABLES)]
        word = a + b + c + (str(i // len(_SYLLABLES)) if i >= len(_SYLLABLES) else "")
        if word not in out:
            out.append(word)
        i += 1
    return out[:needed]


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic corpus."""

    n_items: int = 2000
    n_categories: int = 20
    n_attributes: int = 60
    attributes_per_item: int = 3
    pool_size: int = 8           # attribute phrases available to each category
    pool_stride: int = 3         # offset between consecutive pools; < pool_size shares attributes
    two_token_fraction: float = 0.2
    images_per_item: int = 1     # sibling images that share one caption
    grid_cells: int = 4          # feature grid rows (B)
    feature_dim: int = 16        # feature grid columns (D)
    noise: float = 0.05
    templates: tuple[tuple[str, ...], ...] = tuple(_TEMPLATES)


@dataclass
class SynthCorpus:
    """Generated items plus the label spaces and bookkeeping behind them."""

    items: list[Item]
    attributes: AttributeVocab
    categories: CategorySet
    lexicon: dict[str, str]

    @property
    def truth(self) -> dict[str, tuple[str, tuple[Phrase, ...]]]:
        return {item.id: (item.category, item.attributes) for item in self.items}


def generate_synthetic_corpus(config: SynthConfig, seed: int = 0) -> SynthCorpus:
    """Build a deterministic corpus with planted categories and attributes.

    Attribute phrases are drawn per item from a sliding per-category pool so
    that nearby categories share attribute statistics.  Captions are rendered
    from templates with separator words between phrases, which keeps the
    labeling pipeline's adjacency rule from inventing unplanned two-token
    phrases; the pipeline therefore recovers the planted labels exactly.
    """
    cfg = config
    if cfg.n_items < 1 or cfg.n_categories < 1 or cfg.n_attributes < 1:
        raise ConfigError("n_items, n_categories and n_attributes must be positive")
    if cfg.attributes_per_item > cfg.pool_size:
        raise ConfigError(
            f"attributes_per_item={cfg.attributes_per_item} exceeds pool_size={cfg.pool_size}")
    if cfg.pool_size > cfg.n_attributes:
        raise ConfigError(f"pool_size={cfg.pool_size} exceeds n_attributes={cfg.n_attributes}")
    if cfg.grid_cells < 1 or cfg.feature_dim < 1:
        raise ConfigError("grid_cells and feature_dim must be positive")
    if cfg.images_per_item < 1:
        raise ConfigError("images_per_item must be positive")

    rng = np.random.default_rng(seed)

    n_bigrams = int(round(cfg.two_token_fraction * cfg.n_attributes))
    n_unigrams = cfg.n_attributes - n_bigrams
    adjs = _extend_bank(_ADJ_BANK, max(len(_ADJ_BANK), (n_unigrams + 1) // 2), (2, 5))
    nouns = _extend_bank(_NOUN_BANK, max(len(_NOUN_BANK), n_unigrams // 2 + n_bigrams + 1), (3, 7))
    unigram_tokens = []
    for i in range(n_unigrams):
        unigram_tokens.append(adjs[i // 2] if i % 2 == 0 else nouns[i // 2])
    # Two-token phrases pair an adjective-side token with a noun-side token;
    # both components are themselves attributes so extraction stays closed.
    adj_side = [t for t in unigram_tokens if t in set(adjs)]
    noun_side = [t for t in unigram_tokens if t in set(nouns)]
    if n_bigrams and (not adj_side or not noun_side):
        raise ConfigError("not enough unigram attributes to form two-token phrases")
    bigram_phrases: list[Phrase] = []
    seen: set[Phrase] = set()
    step = 0
    while len(bigram_phrases) < n_bigrams:
        bi = len(bigram_phrases)
        pair = (adj_side[(bi + step) % len(adj_side)], noun_side[(2 * bi + step) % len(noun_side)])
        if pair not in seen:
            bigram_phrases.append(pair)
            seen.add(pair)
        else:
            step += 1
    # Interleave bigrams evenly so every sliding category pool sees a mix.
    phrases: list[Phrase] = []
    uni_iter = iter(unigram_tokens)
    bi_iter = iter(bigram_phrases)
    spacing = max(1, cfg.n_attributes // max(1, n_bigrams))
    pending_bi = n_bigrams
    for i in range(cfg.n_attributes):
        if pending_bi and i % spacing == spacing - 1:
            phrases.append(next(bi_iter))
            pending_bi -= 1
        else:
            phrases.append((next(uni_iter),))
    categories = _extend_bank(_CATEGORY_BANK, max(len(_CATEGORY_BANK), cfg.n_categories), (5, 11))[:cfg.n_categories]

    lexicon: dict[str, str] = {}
    for t in adjs:
        lexicon[t] = POS_ADJ
    for t in nouns:
        lexicon[t] = POS_NOUN
    for t in categories:
        lexicon[t] = POS_NOUN
    for word_list in (_FILLER_BANK, _META_BANK, _SEPARATORS):
        for t in word_list:
            lexicon.setdefault(t, POS_OTHER)
    for t in _COLOR_BANK:
        lexicon.setdefault(t, POS_ADJ)
    for tpl in cfg.templates:
        for t in tpl:
            if not t.startswith("{"):
                lexicon.setdefault(t, POS_OTHER)

    pools = []
    for c in range(cfg.n_categories):
        start = (c * cfg.pool_stride) % len(phrases)
        pools.append([phrases[(start + k) % len(phrases)] for k in range(cfg.pool_size)])

    # Hidden signal vectors behind the feature grids.
    phrase_vecs = rng.normal(0.0, 1.0, size=(len(phrases), cfg.feature_dim)) / np.sqrt(cfg.feature_dim)
    category_vecs = rng.normal(0.0, 1.5, size=(cfg.n_categories, cfg.feature_dim)) / np.sqrt(cfg.feature_dim)
    phrase_index = {p: i for i, p in enumerate(phrases)}

    items: list[Item] = []
    realized: list[set[Phrase]] = []
    for i in range(cfg.n_items):
        cat_id = int(rng.integers(cfg.n_categories))
        cat = categories[cat_id]
        pool = pools[cat_id]
        chosen_idx = rng.choice(len(pool), size=cfg.attributes_per_item, replace=False)
        chosen = [pool[int(k)] for k in chosen_idx]

        # Truth labels are closed under extraction: picking a two-token
        # phrase also plants both of its component unigrams.
        truth: set[Phrase] = set()
        for p in chosen:
            truth.add(p)
            if len(p) == 2:
                truth.add((p[0],))
                truth.add((p[1],))

        attr_text: list[str] = []
        for j, p in enumerate(chosen):
            if j:
                attr_text.append(_SEPARATORS[int(rng.integers(len(_SEPARATORS)))])
            attr_text.extend(p)
        template = cfg.templates[int(rng.integers(len(cfg.templates)))]
        caption: list[str] = []
        for slot in template:
            if slot == "{attrs}":
                caption.extend(attr_text)
            elif slot == "{category}":
                caption.append(cat)
            elif slot == "{filler}":
                caption.append(_FILLER_BANK[int(rng.integers(len(_FILLER_BANK)))])
            else:
                caption.append(slot)

        component_tokens: list[str] = []
        for p in chosen:
            for tok in p:
                if tok not in component_tokens:
                    component_tokens.append(tok)
        title = component_tokens + [cat]
        meta = component_tokens + [
            _META_BANK[int(rng.integers(len(_META_BANK)))],
            _META_BANK[int(rng.integers(len(_META_BANK)))],
        ]
        color = [_COLOR_BANK[int(rng.integers(len(_COLOR_BANK)))]]

        signal = np.zeros((cfg.grid_cells, cfg.feature_dim))
        signal[int(rng.integers(cfg.grid_cells))] += category_vecs[cat_id]
        for p in chosen:
            signal[int(rng.integers(cfg.grid_cells))] += phrase_vecs[phrase_index[p]]

        for img in range(cfg.images_per_item):
            features = signal + cfg.noise * rng.normal(0.0, 1.0, size=signal.shape)
            suffix = f"-{img}" if cfg.images_per_item > 1 else ""
            items.append(Item(
                id=f"item{i:05d}{suffix}",
                title=list(title),
                caption=list(caption),
                meta=list(meta),
                color=color,
                category=cat,
                attributes=tuple(sorted(truth)),
                features=features,
            ))
            realized.append(truth)

    attr_counts: Counter = Counter()
    for truth in realized:
        attr_counts.update(truth)
    kept = sorted(attr_counts, key=lambda p: (-attr_counts[p], p))
    vocab = AttributeVocab(kept)
    cat_counts = Counter(item.category for item in items)
    cat_set = CategorySet(categories, {c: cat_counts.get(c, 0) for c in categories})
    return SynthCorpus(items=items, attributes=vocab, categories=cat_set, lexicon=lexicon)


# ---------------------------------------------------------------------------
# file formats


def save_lexicon(lexicon: Mapping[str, str], path: str | Path) -> None:
    Path(path).write_text(json.dumps(dict(sorted(lexicon.items())), indent=0) + "\n", encoding="utf-8")


def load_lexicon(path: str | Path) -> dict[str, str]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _tokens_of(value, field_name: str, line_no: int) -> list[str]:
    if isinstance(value, str):
        return tokenize(value)
    if isinstance(value, list) and all(isinstance(t, str) for t in value):
        return list(value)
    raise DataError(f"line {line_no}: field {field_name!r} must be a string or list of tokens")


def read_raw_jsonl(path: str | Path) -> list[Item]:
    """Read external catalog records: one JSON object per line with fields
    id, title, description, meta, color, and optionally features (B x D)."""
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            for required in ("id", "title", "description", "meta"):
                if required not in row:
                    raise DataError(f"line {line_no}: missing field {required!r}")
            features = None
            if row.get("features") is not None:
                try:
                    features = np.asarray(row["features"], dtype=np.float64)
                except (TypeError, ValueError) as exc:
                    raise DataError(f"line {line_no}: features must be a B x D number grid") from exc
                if features.ndim != 2 or features.shape[0] < 1:
                    raise DataError(f"line {line_no}: features must be a B x D grid with B >= 1")
            items.append(Item(
                id=str(row["id"]),
                title=_tokens_of(row["title"], "title", line_no),
                caption=_tokens_of(row["description"], "description", line_no),
                meta=_tokens_of(row["meta"], "meta", line_no),
                color=_tokens_of(row.get("color", []), "color", line_no),
                features=features,
            ))
    if not items:
        raise DataError(f"{path}: no items found")
    return items


def write_raw_jsonl(path: str | Path, items: Sequence[Item]) -> None:
    """Write items in the external catalog schema (labels omitted)."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            row = {
                "id": item.id,
                "title": " ".join(item.title),
                "description": " ".join(item.caption),
                "meta": " ".join(item.meta),
                "color": " ".join(item.color),
                "features": None if item.features is None else item.features.tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def write_labeled_jsonl(path: str | Path, items: Sequence[Item]) -> None:
    """Write pipeline output: tokens plus derived category/attributes."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            row = {
                "id": item.id,
                "title": item.title,
                "caption": item.caption,
                "meta": item.meta,
                "color": item.color,
                "category": item.category,
                "attributes": [" ".join(p) for p in item.attributes],
                "features": None if item.features is None else item.features.tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def read_labeled_jsonl(path: str | Path) -> list[Item]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            features = None if row.get("features") is None else np.asarray(row["features"], dtype=np.float64)
            items.append(Item(
                id=row["id"],
                title=list(row["title"]),
                caption=list(row["caption"]),
                meta=list(row["meta"]),
                color=list(row.get("color", [])),
                category=row.get("category"),
                attributes=tuple(tuple(s.split()) for s in row.get("attributes", [])),
                features=features,
            ))
    if not items:
        raise DataError(f"{path}: no items found")
    return items

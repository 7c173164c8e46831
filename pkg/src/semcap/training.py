"""Losses and the two-phase training loop.

Phase 1 (warm-up) minimizes teacher-forced negative log-likelihood plus the
multi-label attribute loss until validation likelihood stops improving.
Phase 2 adds the policy-gradient term: for every item it samples several
captions, scores them with the combined semantic reward, subtracts the
per-item mean reward as a baseline, and backpropagates through a surrogate
scalar whose gradient equals the estimator (advantages enter as constants).

Everything is deterministic given the config seed: shuffling and sampling
draw from dedicated streams keyed on (seed, purpose, epoch, item).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tape, Tensor
from .data import AttributeVocab, CategorySet, Item
from .errors import ConfigError, DataError
from .models import CaptionModel, ClassifierConfig, DecoderState, TextCNNClassifier
from .rewards import RewardConfig, attribute_reward, category_reward, combined_reward
from .metrics import attribute_map, category_acc
from .text import Vocab

PROB_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    rl_weight: float = 1.0          # weight of the policy-gradient loss
    attr_loss_weight: float = 1.0   # weight of the attribute loss
    n_samples: int = 5              # sampled captions per item in phase 2
    lr: float = 1e-4
    anneal_factor: float = 0.9
    anneal_every: int = 2
    patience: int = 3
    phase1_max_epochs: int = 30
    phase2_epochs: int = 6
    max_len: int = 25
    seed: int = 0
    batch_size: int = 16
    val_subset: int | None = 200
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2 so the baseline is informative")
        if self.rl_weight < 0 or self.attr_loss_weight < 0:
            raise ConfigError("loss weights must be nonnegative")


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Initial rate annealed by ``anneal_factor`` every ``anneal_every`` epochs."""
    return config.lr * config.anneal_factor ** (epoch // config.anneal_every)


# ---------------------------------------------------------------------------
# losses


def _teacher_forced_nll(model: CaptionModel, projected: Tensor, state: DecoderState,
                        z: Tensor, encoded: Sequence[int]) -> Tensor:
    loss: Tensor | None = None
    for prev, target in zip(encoded[:-1], encoded[1:]):
        context, _ = model.encoder.attend(state, projected)
        state, logits = model.decoder.step_logits(prev, context, z, state)
        logp = ad.log_softmax(logits, axis=-1)
        term = ad.affine(ad.pick(logp, target), mul=-1.0)
        loss = term if loss is None else loss + term
    assert loss is not None
    return loss


def mle_loss(model: CaptionModel, vocab: Vocab, item: Item) -> Tensor:
    """Teacher-forced negative log-likelihood of the caption, EOS included."""
    if not item.caption:
        raise DataError(f"item {item.id}: cannot compute a caption loss without a caption")
    projected, state = model.encoder.encode(item.features)
    z, _ = model.predictor.forward(item.features)
    return _teacher_forced_nll(model, projected, state, z, vocab.encode(item.caption))


def attribute_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean per-attribute binary cross-entropy with probability clipping."""
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise DataError(f"attribute loss: probs shape {probs.shape} != labels shape {labels.shape}")
    p = ad.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    pos = ad.mul(ad.tensor(labels), ad.log(p))
    neg = ad.mul(ad.tensor(1.0 - labels), ad.log(ad.affine(p, mul=-1.0, add=1.0)))
    return ad.affine(ad.tmean(pos + neg), mul=-1.0)


def label_vector(item: Item, attributes: AttributeVocab) -> np.ndarray:
    vec = np.zeros(len(attributes))
    for phrase in item.attributes:
        idx = attributes.id_of.get(tuple(phrase))
        if idx is not None:
            vec[idx] = 1.0
    return vec


@dataclass
class RewardContext:
    """Everything needed to score a sampled caption."""

    vocab: Vocab
    attributes: AttributeVocab
    categories: CategorySet
    classifier: TextCNNClassifier
    config: RewardConfig = field(default_factory=RewardConfig)

    def category_id(self, item: Item) -> int:
        if item.category not in self.categories.id_of:
            raise DataError(f"item {item.id}: unknown category {item.category!r}")
        return self.categories.id_of[item.category]

    def score_ids(self, token_ids: Sequence[int], item: Item) -> tuple[float, float, float]:
        tokens = self.vocab.decode(token_ids)
        r_attr = attribute_reward(tokens, item.caption, self.attributes) if tokens else 0.0
        r_cat = category_reward(token_ids, self.category_id(item), self.classifier)
        return r_attr, r_cat, combined_reward(r_attr, r_cat, self.config)


@dataclass
class ReinforceResult:
    surrogate: Tensor | None  # None when every advantage is exactly zero
    rewards: list[float]
    attr_rewards: list[float]
    category_rewards: list[float]
    baseline: float


def reinforce_surrogate(samples, rewards: Sequence[float]) -> tuple[Tensor | None, float]:
    """Baselined policy-gradient surrogate over one item's samples.

    Returns -(1/H) sum_j (r_j - b) log p(sample_j) with b the mean reward of
    the H samples and the advantages held constant, so its gradient equals
    the estimator.  Equal rewards make every advantage zero and the
    contribution vanishes identically (returned as None).
    """
    n_samples = len(samples)
    baseline = float(np.mean(rewards))
    surrogate: Tensor | None = None
    for s, r in zip(samples, rewards):
        advantage = r - baseline
        if advantage == 0.0:
            continue
        term = ad.affine(s.total_logp(), mul=-advantage / n_samples)
        surrogate = term if surrogate is None else surrogate + term
    return surrogate, baseline


def reinforce_loss(model: CaptionModel, projected: Tensor, state: DecoderState, z: Tensor,
                   item: Item, ctx: RewardContext, n_samples: int, max_len: int,
                   rng: np.random.Generator | int) -> ReinforceResult:
    """Sampled policy-gradient surrogate for one item: draws ``n_samples``
    captions, scores each with the combined semantic reward, and feeds them
    to :func:`reinforce_surrogate`."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    samples = [model.sample_decode_from(projected, state, z, max_len, rng)
               for _ in range(n_samples)]
    attr_rs, cat_rs, rs = [], [], []
    for s in samples:
        r_attr, r_cat, r = ctx.score_ids(s.token_ids, item)
        attr_rs.append(r_attr)
        cat_rs.append(r_cat)
        rs.append(r)
    surrogate, baseline = reinforce_surrogate(samples, rs)
    return ReinforceResult(surrogate=surrogate, rewards=rs, attr_rewards=attr_rs,
                           category_rewards=cat_rs, baseline=baseline)


# ---------------------------------------------------------------------------
# evaluation used during training


def evaluate_model(model: CaptionModel, items: Sequence[Item], ctx: RewardContext,
                   max_len: int) -> dict:
    """Greedy-decode every item and report mean rewards, accuracy, and mAP,
    plus the mean teacher-forced loss."""
    mles, attr_rs, cat_rs, rs = [], [], [], []
    captions, truths, gen_ids, cat_targets = [], [], [], []
    for item in items:
        with ad.no_grad():
            mles.append(mle_loss(model, ctx.vocab, item).item())
        ids = model.greedy_decode(item.features, max_len=max_len)
        r_attr, r_cat, r = ctx.score_ids(ids, item)
        attr_rs.append(r_attr)
        cat_rs.append(r_cat)
        rs.append(r)
        captions.append(ctx.vocab.decode(ids))
        truths.append(set(item.attributes))
        gen_ids.append(ids)
        cat_targets.append(ctx.category_id(item))
    return {
        "mle": float(np.mean(mles)),
        "r_attr": float(np.mean(attr_rs)),
        "r_cat": float(np.mean(cat_rs)),
        "r": float(np.mean(rs)),
        "acc": category_acc(gen_ids, cat_targets, ctx.classifier),
        "map": attribute_map(captions, truths, ctx.attributes),
    }


# ---------------------------------------------------------------------------
# two-phase training


@dataclass
class TrainData:
    train_items: list[Item]
    val_items: list[Item]
    vocab: Vocab
    attributes: AttributeVocab
    categories: CategorySet


@dataclass
class EpochStats:
    mle: float
    attr: float
    rl: float | None
    r: float | None
    r_attr: float | None
    r_cat: float | None


def run_epoch(model: CaptionModel, items: Sequence[Item], ctx: RewardContext,
              optimizer: Adam, config: TrainConfig, phase: int, epoch: int,
              include_rl: bool) -> EpochStats:
    """One pass over the training items with per-batch optimizer steps."""
    order = np.random.default_rng([config.seed, phase, epoch, 101]).permutation(len(items))
    mle_total, attr_total = 0.0, 0.0
    reward_totals: list[float] = []
    attr_reward_totals: list[float] = []
    cat_reward_totals: list[float] = []
    sample_rl = include_rl and config.rl_weight > 0
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        optimizer.zero_grad()
        for idx in batch:
            item = items[int(idx)]
            with Tape() as tape:
                projected, state = model.encoder.encode(item.features)
                z, probs = model.predictor.forward(item.features)
                nll = _teacher_forced_nll(model, projected, state, z,
                                          ctx.vocab.encode(item.caption))
                la = attribute_loss(probs, label_vector(item, ctx.attributes))
                total = nll + config.attr_loss_weight * la
                if sample_rl:
                    rng = np.random.default_rng([config.seed, 202, epoch, int(idx)])
                    rr = reinforce_loss(model, projected, state, z, item, ctx,
                                        config.n_samples, config.max_len, rng)
                    reward_totals.append(float(np.mean(rr.rewards)))
                    attr_reward_totals.append(float(np.mean(rr.attr_rewards)))
                    cat_reward_totals.append(float(np.mean(rr.category_rewards)))
                    if rr.surrogate is not None:
                        total = total + config.rl_weight * rr.surrogate
                tape.backward(total)
            mle_total += nll.item()
            attr_total += la.item()
        optimizer.step()
    n = len(items)
    return EpochStats(
        mle=mle_total / n,
        attr=attr_total / n,
        rl=-float(np.mean(reward_totals)) if reward_totals else None,
        r=float(np.mean(reward_totals)) if reward_totals else None,
        r_attr=float(np.mean(attr_reward_totals)) if attr_reward_totals else None,
        r_cat=float(np.mean(cat_reward_totals)) if cat_reward_totals else None,
    )


@dataclass
class TrainResult:
    metrics: list[dict]
    phase1_params: dict[str, np.ndarray]
    phase1_eval: dict
    final_eval: dict
    checkpoints: list[str]


METRIC_COLUMNS = [
    "phase", "epoch", "lr", "train_mle", "train_attr", "train_rl",
    "train_r", "train_r_attr", "train_r_cat",
    "val_mle", "val_r", "val_r_attr", "val_r_cat", "val_acc", "val_map",
]


def _metrics_row(phase: int, epoch: int, lr: float, stats: EpochStats, val: dict) -> dict:
    def fmt(x):
        return "" if x is None else repr(float(x))
    return {
        "phase": str(phase),
        "epoch": str(epoch),
        "lr": repr(lr),
        "train_mle": fmt(stats.mle),
        "train_attr": fmt(stats.attr),
        "train_rl": fmt(stats.rl),
        "train_r": fmt(stats.r),
        "train_r_attr": fmt(stats.r_attr),
        "train_r_cat": fmt(stats.r_cat),
        "val_mle": fmt(val["mle"]),
        "val_r": fmt(val["r"]),
        "val_r_attr": fmt(val["r_attr"]),
        "val_r_cat": fmt(val["r_cat"]),
        "val_acc": fmt(val["acc"]),
        "val_map": fmt(val["map"]),
    }


def write_metrics_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def snapshot_params(model: CaptionModel) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.parameters().items()}


def restore_params(model: CaptionModel, snapshot: dict[str, np.ndarray]) -> None:
    for name, p in model.parameters().items():
        p.data = snapshot[name].copy()


def train(model: CaptionModel, data: TrainData, classifier: TextCNNClassifier,
          config: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
    """Warm-up then joint training; returns per-epoch metrics and the
    parameter snapshot at the end of the warm-up phase."""
    if not data.train_items:
        raise DataError("empty training split")
    ctx = RewardContext(vocab=data.vocab, attributes=data.attributes,
                        categories=data.categories, classifier=classifier,
                        config=config.reward)
    val_items = data.val_items[:config.val_subset] if config.val_subset else data.val_items
    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    checkpoints: list[str] = []

    def save_ckpt(tag: str) -> None:
        if ckpt_dir is None:
            return
        path = ckpt_dir / f"{tag}.ckpt"
        model.save(path)
        checkpoints.append(str(path))

    # Phase 1: likelihood + attribute warm-up with early stopping.
    optimizer = Adam(model.parameters(), lr=config.lr)
    best_val = np.inf
    stall = 0
    for epoch in range(config.phase1_max_epochs):
        optimizer.lr = learning_rate(config, epoch)
        stats = run_epoch(model, data.train_items, ctx, optimizer, config,
                          phase=1, epoch=epoch, include_rl=False)
        val = evaluate_model(model, val_items, ctx, config.max_len)
        rows.append(_metrics_row(1, epoch, optimizer.lr, stats, val))
        save_ckpt(f"phase1_epoch{epoch:03d}")
        if val["mle"] < best_val:
            best_val = val["mle"]
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break
    phase1_params = snapshot_params(model)
    phase1_eval = evaluate_model(model, val_items, ctx, config.max_len)
    save_ckpt("phase1_final")

    # Phase 2: joint objective with a fresh optimizer and schedule.
    optimizer = Adam(model.parameters(), lr=config.lr)
    for epoch in range(config.phase2_epochs):
        optimizer.lr = learning_rate(config, epoch)
        stats = run_epoch(model, data.train_items, ctx, optimizer, config,
                          phase=2, epoch=epoch, include_rl=True)
        val = evaluate_model(model, val_items, ctx, config.max_len)
        rows.append(_metrics_row(2, epoch, optimizer.lr, stats, val))
        save_ckpt(f"phase2_epoch{epoch:03d}")
    final_eval = evaluate_model(model, val_items, ctx, config.max_len)
    save_ckpt("phase2_final")

    if out_dir is not None:
        write_metrics_csv(Path(out_dir) / "metrics.csv", rows)
    return TrainResult(metrics=rows, phase1_params=phase1_params,
                       phase1_eval=phase1_eval, final_eval=final_eval,
                       checkpoints=checkpoints)


# ---------------------------------------------------------------------------
# classifier pretraining


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    model: ClassifierConfig = field(default_factory=ClassifierConfig)


def caption_ids(item: Item, vocab: Vocab) -> list[int]:
    return [vocab.id_of(t) for t in item.caption]


def classifier_accuracy(classifier: TextCNNClassifier, items: Sequence[Item],
                        vocab: Vocab, categories: CategorySet) -> float:
    if not items:
        raise DataError("empty evaluation split")
    correct = 0
    for item in items:
        probs = classifier.classify(caption_ids(item, vocab))
        if int(np.argmax(probs)) == categories.id_of[item.category]:
            correct += 1
    return correct / len(items)


def pretrain_classifier(train_items: Sequence[Item], val_items: Sequence[Item],
                        vocab: Vocab, categories: CategorySet,
                        config: ClassifierTrainConfig | None = None
                        ) -> tuple[TextCNNClassifier, list[dict]]:
    """Cross-entropy training of the category classifier on ground-truth
    captions; returns the model and a per-epoch metrics log."""
    config = config or ClassifierTrainConfig()
    present = {item.category for item in train_items}
    if len(present) < 2:
        raise DataError(f"classifier pretraining needs >= 2 categories, found {len(present)}")
    classifier = TextCNNClassifier(vocab_size=vocab.size, n_categories=len(categories),
                                   config=config.model, seed=config.seed)
    optimizer = Adam(classifier.params, lr=config.lr)
    rows = []
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 11, epoch]).permutation(len(train_items))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            optimizer.zero_grad()
            for idx in batch:
                item = train_items[int(idx)]
                target = categories.id_of[item.category]
                with Tape() as tape:
                    logp = classifier.log_probs(caption_ids(item, vocab))
                    loss = ad.affine(ad.pick(logp, target), mul=-1.0)
                    tape.backward(loss)
                total += loss.item()
            optimizer.step()
        val_acc = classifier_accuracy(classifier, val_items, vocab, categories) if val_items else float("nan")
        rows.append({
            "epoch": str(epoch),
            "train_loss": repr(total / len(train_items)),
            "val_acc": repr(val_acc),
        })
    return classifier, rows

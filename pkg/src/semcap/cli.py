"""Command-line entry point wiring the library end to end.

Subcommands: synth, ingest, pretrain-classifier, train, generate, score,
eval.  Every command is deterministic given its seed, writes its artifacts
into an output directory, and records them in a manifest.json there.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__, data as D, metrics as M, rewards as R, text, training as T
from .errors import ConfigError, DataError, SemcapError
from .models import CaptionModel, ClassifierConfig, ModelConfig, TextCNNClassifier

DATA_DIR_ENV = "SRFC_DATA_DIR"


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict,
                    artifacts: list[str], seed) -> None:
    manifest = {
        "command": command,
        "version": f"semcap-{__version__}+{_config_hash(config)[:12]}",
        "config": config,
        "config_hash": _config_hash(config),
        "seed": seed,
        "inputs": inputs,
        "artifacts": sorted(artifacts),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")


def _resolve_data_dir(value: str | None) -> Path:
    root = value or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise ConfigError(f"no data directory given and {DATA_DIR_ENV} is not set")
    path = Path(root)
    if not path.is_dir():
        raise DataError(f"data directory {path} does not exist")
    return path


def _load_file_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(cfg, dict):
        raise DataError(f"config file {path}: expected a JSON object")
    return cfg


def _merged(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """Explicit flag > config file entry > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


# ---------------------------------------------------------------------------
# dataset directory layout shared by synth and ingest

ITEMS_FILE = "items.jsonl"
RAW_FILE = "raw_corpus.jsonl"
VOCAB_FILE = "vocab.txt"
ATTR_FILE = "attributes.txt"
CAT_FILE = "categories.txt"
SPLITS_FILE = "splits.json"
LEXICON_FILE = "lexicon.json"


def _write_dataset(out: Path, items, attributes, categories, lexicon, splits, vocab) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    D.write_labeled_jsonl(out / ITEMS_FILE, items)
    attributes.save(out / ATTR_FILE)
    categories.save(out / CAT_FILE)
    D.save_lexicon(lexicon, out / LEXICON_FILE)
    splits.save(out / SPLITS_FILE)
    vocab.save(out / VOCAB_FILE)
    return [ITEMS_FILE, ATTR_FILE, CAT_FILE, LEXICON_FILE, SPLITS_FILE, VOCAB_FILE]


class Dataset:
    """Loaded dataset directory."""

    def __init__(self, root: Path):
        self.root = root
        self.items = D.read_labeled_jsonl(root / ITEMS_FILE)
        self.by_id = {item.id: item for item in self.items}
        self.attributes = D.AttributeVocab.load(root / ATTR_FILE)
        self.categories = D.CategorySet.load(root / CAT_FILE)
        self.splits = D.DatasetSplit.load(root / SPLITS_FILE)
        self.vocab = text.Vocab.load(root / VOCAB_FILE)

    def split_items(self, name: str) -> list:
        ids = getattr(self.splits, name)
        return [self.by_id[i] for i in ids]


def _build_splits_and_vocab(items, fractions, seed, min_count):
    splits = D.split_dataset(items, fractions, seed)
    by_id = {item.id: item for item in items}
    vocab = text.build_vocab([by_id[i].caption for i in splits.train], min_count=min_count)
    return splits, vocab


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    cfg = D.SynthConfig(
        n_items=_merged(args, file_cfg, "items", 2000),
        n_categories=_merged(args, file_cfg, "categories", 20),
        n_attributes=_merged(args, file_cfg, "attributes", 60),
        attributes_per_item=_merged(args, file_cfg, "attributes-per-item", 3),
        pool_size=_merged(args, file_cfg, "pool-size", 8),
        pool_stride=_merged(args, file_cfg, "pool-stride", 3),
        two_token_fraction=_merged(args, file_cfg, "two-token-fraction", 0.2),
        images_per_item=_merged(args, file_cfg, "images-per-item", 1),
        grid_cells=_merged(args, file_cfg, "grid-cells", 4),
        feature_dim=_merged(args, file_cfg, "feature-dim", 16),
        noise=_merged(args, file_cfg, "noise", 0.05),
    )
    seed = _merged(args, file_cfg, "seed", 0)
    min_count = _merged(args, file_cfg, "min-count", 1)
    corpus = D.generate_synthetic_corpus(cfg, seed=seed)
    splits, vocab = _build_splits_and_vocab(corpus.items, (0.8, 0.1, 0.1), seed, min_count)
    out = Path(args.out)
    artifacts = _write_dataset(out, corpus.items, corpus.attributes, corpus.categories,
                               corpus.lexicon, splits, vocab)
    D.write_raw_jsonl(out / RAW_FILE, corpus.items)
    artifacts.append(RAW_FILE)
    config_dict = {**asdict(cfg), "templates": None, "seed": seed, "min_count": min_count}
    _write_manifest(out, "synth", config_dict, {}, artifacts, seed)
    print(f"synth: wrote {len(corpus.items)} items, {len(corpus.attributes)} attributes, "
          f"{len(corpus.categories)} categories to {out}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    min_attr = _merged(args, file_cfg, "min-attr-items", 10)
    min_cat = _merged(args, file_cfg, "min-cat-items", 200)
    min_count = _merged(args, file_cfg, "min-count", 5)
    seed = _merged(args, file_cfg, "seed", 0)
    raw = D.read_raw_jsonl(args.input)
    lexicon = D.load_lexicon(args.lexicon)
    aliases = json.loads(Path(args.aliases).read_text(encoding="utf-8")) if args.aliases else None
    labeled = D.label_items(raw, lexicon, min_attr_items=min_attr, min_cat_items=min_cat,
                            aliases=aliases)
    splits, vocab = _build_splits_and_vocab(labeled.items, (0.8, 0.1, 0.1), seed, min_count)
    out = Path(args.out)
    artifacts = _write_dataset(out, labeled.items, labeled.attributes, labeled.categories,
                               lexicon, splits, vocab)
    config_dict = {"min_attr_items": min_attr, "min_cat_items": min_cat,
                   "min_count": min_count, "seed": seed}
    _write_manifest(out, "ingest", config_dict, {"input": str(args.input)}, artifacts, seed)
    print(f"ingest: kept {len(labeled.items)} items, {len(labeled.attributes)} attributes, "
          f"{len(labeled.categories)} categories")
    return 0


def cmd_pretrain_classifier(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    dataset = Dataset(_resolve_data_dir(args.data))
    cfg = T.ClassifierTrainConfig(
        epochs=_merged(args, file_cfg, "epochs", 10),
        lr=_merged(args, file_cfg, "lr", 1e-3),
        batch_size=_merged(args, file_cfg, "batch-size", 32),
        seed=_merged(args, file_cfg, "seed", 0),
        model=ClassifierConfig(
            embed_dim=_merged(args, file_cfg, "embed-dim", 64),
            filters=_merged(args, file_cfg, "filters", 64),
        ),
    )
    classifier, rows = T.pretrain_classifier(dataset.split_items("train"),
                                             dataset.split_items("val"),
                                             dataset.vocab, dataset.categories, cfg)
    test_acc = T.classifier_accuracy(classifier, dataset.split_items("test"),
                                     dataset.vocab, dataset.categories)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    classifier.save(out / "classifier.ckpt")
    with open(out / "classifier_metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_loss,val_acc\n")
        for row in rows:
            fh.write(f"{row['epoch']},{row['train_loss']},{row['val_acc']}\n")
    (out / "classifier_report.json").write_text(
        json.dumps({"test_acc": test_acc}, sort_keys=True) + "\n", encoding="utf-8")
    config_dict = {"epochs": cfg.epochs, "lr": cfg.lr, "batch_size": cfg.batch_size,
                   "seed": cfg.seed, "embed_dim": cfg.model.embed_dim, "filters": cfg.model.filters}
    _write_manifest(out, "pretrain-classifier", config_dict, {"data": str(dataset.root)},
                    ["classifier.ckpt", "classifier_metrics.csv", "classifier_report.json"], cfg.seed)
    print(f"pretrain-classifier: test accuracy {test_acc:.4f}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = _load_file_config(args.config)
    dataset = Dataset(_resolve_data_dir(args.data))
    classifier = TextCNNClassifier.load(args.classifier)
    model_cfg = ModelConfig(
        embed_dim=_merged(args, file_cfg, "embed-dim", 64),
        hidden_dim=_merged(args, file_cfg, "hidden-dim", 64),
        attr_hidden_dim=_merged(args, file_cfg, "attr-hidden-dim", 32),
    )
    train_cfg = T.TrainConfig(
        rl_weight=_merged(args, file_cfg, "rl-weight", 1.0),
        attr_loss_weight=_merged(args, file_cfg, "attr-loss-weight", 1.0),
        n_samples=_merged(args, file_cfg, "n-samples", 5),
        lr=_merged(args, file_cfg, "lr", 1e-4),
        anneal_factor=_merged(args, file_cfg, "anneal-factor", 0.9),
        anneal_every=_merged(args, file_cfg, "anneal-every", 2),
        patience=_merged(args, file_cfg, "patience", 3),
        phase1_max_epochs=_merged(args, file_cfg, "phase1-max-epochs", 30),
        phase2_epochs=_merged(args, file_cfg, "phase2-epochs", 6),
        max_len=_merged(args, file_cfg, "max-len", 25),
        seed=_merged(args, file_cfg, "seed", 0),
        batch_size=_merged(args, file_cfg, "batch-size", 16),
        val_subset=_merged(args, file_cfg, "val-subset", 200),
        reward=R.RewardConfig(
            attr_weight=_merged(args, file_cfg, "reward-attr-weight", 1.0),
            category_weight=_merged(args, file_cfg, "reward-category-weight", 1.0),
        ),
    )
    feature_dim = dataset.items[0].features.shape[1]
    model = CaptionModel(vocab_size=dataset.vocab.size, n_attributes=len(dataset.attributes),
                         feature_dim=feature_dim, config=model_cfg, seed=train_cfg.seed)
    train_data = T.TrainData(
        train_items=dataset.split_items("train"),
        val_items=dataset.split_items("val"),
        vocab=dataset.vocab,
        attributes=dataset.attributes,
        categories=dataset.categories,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = T.train(model, train_data, classifier, train_cfg, out_dir=out)
    if args.plot:
        _plot_metrics(result.metrics, out / "reward_curves.png")
    config_dict = {
        "model": {"embed_dim": model_cfg.embed_dim, "hidden_dim": model_cfg.hidden_dim,
                  "attr_hidden_dim": model_cfg.attr_hidden_dim},
        "train": {k: getattr(train_cfg, k) for k in (
            "rl_weight", "attr_loss_weight", "n_samples", "lr", "anneal_factor",
            "anneal_every", "patience", "phase1_max_epochs", "phase2_epochs",
            "max_len", "seed", "batch_size", "val_subset")},
        "reward": {"attr_weight": train_cfg.reward.attr_weight,
                   "category_weight": train_cfg.reward.category_weight},
    }
    artifacts = ["metrics.csv"] + [str(Path(p).relative_to(out)) for p in result.checkpoints]
    if args.plot:
        artifacts.append("reward_curves.png")
    _write_manifest(out, "train", config_dict,
                    {"data": str(dataset.root), "classifier": str(args.classifier)},
                    artifacts, train_cfg.seed)
    print(f"train: phase-1 val reward {result.phase1_eval['r']:.4f}, "
          f"final val reward {result.final_eval['r']:.4f}")
    return 0


def _plot_metrics(rows: list[dict], path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    val_r = [float(r["val_r"]) for r in rows if r["val_r"]]
    val_acc = [float(r["val_acc"]) for r in rows if r["val_acc"]]
    val_map = [float(r["val_map"]) for r in rows if r["val_map"]]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(val_r, label="val combined reward")
    ax.plot(val_acc, label="val category accuracy")
    ax.plot(val_map, label="val attribute mAP")
    ax.set_xlabel("epoch")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_generate(args: argparse.Namespace) -> int:
    dataset = Dataset(_resolve_data_dir(args.data))
    model = CaptionModel.load(args.checkpoint)
    items = dataset.split_items(args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hyp_path = out / "hypotheses.jsonl"
    with open(hyp_path, "w", encoding="utf-8") as fh:
        for item in items:
            ids = model.greedy_decode(item.features, max_len=args.max_len)
            caption = dataset.vocab.decode(ids)
            fh.write(json.dumps({"id": item.id, "caption": " ".join(caption)}) + "\n")
    _write_manifest(out, "generate", {"split": args.split, "max_len": args.max_len},
                    {"data": str(dataset.root), "checkpoint": str(args.checkpoint)},
                    ["hypotheses.jsonl"], None)
    print(f"generate: wrote {len(items)} captions to {hyp_path}")
    return 0


def _read_caption_file(path: str | Path) -> dict[str, list[str]]:
    """JSONL with an id plus a caption or description field."""
    out: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {line_no}: malformed JSON ({exc.msg})") from exc
            if "id" not in row:
                raise DataError(f"{path} line {line_no}: missing field 'id'")
            caption = row.get("caption", row.get("description"))
            if caption is None:
                raise DataError(f"{path} line {line_no}: missing field 'caption'")
            out[str(row["id"])] = caption if isinstance(caption, list) else text.tokenize(caption)
    if not out:
        raise DataError(f"{path}: no captions found")
    return out


def _read_reference_rows(path: str | Path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {line_no}: malformed JSON ({exc.msg})") from exc
            if "id" not in row:
                raise DataError(f"{path} line {line_no}: missing field 'id'")
            out[str(row["id"])] = row
    return out


def _pair_captions(generated_path, reference_path):
    generated = _read_caption_file(generated_path)
    refs = _read_reference_rows(reference_path)
    pairs = []
    for item_id, gen in generated.items():
        if item_id not in refs:
            raise DataError(f"id {item_id!r} from {generated_path} missing in {reference_path}")
        row = refs[item_id]
        caption = row.get("caption", row.get("description"))
        ref_tokens = caption if isinstance(caption, list) else text.tokenize(caption or "")
        pairs.append((item_id, gen, ref_tokens, row))
    return pairs


def cmd_score(args: argparse.Namespace) -> int:
    attributes = D.AttributeVocab.load(args.attributes)
    classifier = TextCNNClassifier.load(args.classifier) if args.classifier else None
    categories = D.CategorySet.load(args.categories) if args.categories else None
    vocab = text.Vocab.load(args.vocab) if args.vocab else None
    if classifier and (categories is None or vocab is None):
        raise ConfigError("--classifier needs --categories and --vocab to score categories")
    cfg = R.RewardConfig()
    pairs = _pair_captions(args.generated, args.reference)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    score_path = out / "scores.jsonl"
    with open(score_path, "w", encoding="utf-8") as fh:
        for item_id, gen, ref, row in pairs:
            report: dict = {"id": item_id}
            if gen:
                report.update(R.attribute_match_report(gen, ref, attributes).as_dict())
            else:
                report.update({"attribute_reward": 0.0, "length_generated": 0,
                               "length_reference": len(ref)})
            r_attr = report["attribute_reward"]
            r_cat = None
            if classifier is not None:
                if "category" not in row:
                    raise DataError(f"reference row {item_id!r} has no category for scoring")
                ids = [vocab.id_of(t) for t in gen]
                r_cat = R.category_reward(ids, categories.id_of[row["category"]], classifier)
                report["category_reward"] = r_cat
            report["reward"] = R.combined_reward(r_attr, r_cat or 0.0, cfg)
            fh.write(json.dumps(report, sort_keys=True) + "\n")
    _write_manifest(out, "score", {}, {"generated": str(args.generated),
                                       "reference": str(args.reference)},
                    ["scores.jsonl"], None)
    print(f"score: wrote {len(pairs)} reports to {score_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    attributes = D.AttributeVocab.load(args.attributes)
    classifier = TextCNNClassifier.load(args.classifier)
    categories = D.CategorySet.load(args.categories)
    vocab = text.Vocab.load(args.vocab)
    pairs = _pair_captions(args.hyp, args.ref)
    hyps = [gen for _, gen, _, _ in pairs]
    refs = [ref for _, _, ref, _ in pairs]
    truth_sets = []
    gen_ids = []
    cat_targets = []
    for item_id, gen, _, row in pairs:
        if "category" not in row or "attributes" not in row:
            raise DataError(f"reference row {item_id!r} needs category and attributes fields")
        truth_sets.append({tuple(s.split()) for s in row["attributes"]})
        gen_ids.append([vocab.id_of(t) for t in gen])
        cat_targets.append(categories.id_of[row["category"]])
    report = M.EvalReport(
        bleu4=M.bleu4(hyps, refs),
        rouge_l=M.rouge_l(hyps, refs),
        cider=M.cider(hyps, refs),
        attribute_map=M.attribute_map(hyps, truth_sets, attributes),
        category_acc=M.category_acc(gen_ids, cat_targets, classifier),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    artifacts = ["report.json"]
    if args.plot:
        _plot_report(report, out / "report.png")
        artifacts.append("report.png")
    _write_manifest(out, "eval", {}, {"hyp": str(args.hyp), "ref": str(args.ref)},
                    artifacts, None)
    for name, value in report.as_dict().items():
        print(f"eval: {name} = {value:.6f}")
    return 0


def _plot_report(report: M.EvalReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = list(report.as_dict())
    values = [report.as_dict()[n] for n in names]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, values)
    ax.set_ylabel("score")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--items", type=int)
    p.add_argument("--categories", type=int)
    p.add_argument("--attributes", type=int)
    p.add_argument("--attributes-per-item", type=int)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--pool-stride", type=int)
    p.add_argument("--two-token-fraction", type=float)
    p.add_argument("--images-per-item", type=int)
    p.add_argument("--grid-cells", type=int)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--min-count", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="label and split an external corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--aliases")
    p.add_argument("--config")
    p.add_argument("--min-attr-items", type=int)
    p.add_argument("--min-cat-items", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pretrain-classifier", help="train the category classifier")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pretrain_classifier)

    p = sub.add_parser("train", help="two-phase caption model training")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--config")
    p.add_argument("--plot", action="store_true")
    for flag, typ in [
        ("--embed-dim", int), ("--hidden-dim", int), ("--attr-hidden-dim", int),
        ("--rl-weight", float), ("--attr-loss-weight", float), ("--n-samples", int),
        ("--lr", float), ("--anneal-factor", float), ("--anneal-every", int),
        ("--patience", int), ("--phase1-max-epochs", int), ("--phase2-epochs", int),
        ("--max-len", int), ("--seed", int), ("--batch-size", int), ("--val-subset", int),
        ("--reward-attr-weight", float), ("--reward-category-weight", float),
    ]:
        p.add_argument(flag, type=typ)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="greedy-decode captions for a split")
    p.add_argument("--data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--max-len", type=int, default=25)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="per-pair semantic reward reports")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--attributes", required=True)
    p.add_argument("--classifier")
    p.add_argument("--categories")
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="corpus metrics for generated captions")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--attributes", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--categories", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SemcapError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error [{args.command}]: missing file: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

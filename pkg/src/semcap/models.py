"""The four networks: attention encoder, LSTM caption decoder with an
attribute-embedding input, multi-label attribute predictor, and the text-CNN
category classifier used for the category-level reward.

All parameters are float64 tensors from :mod:`semcap.autodiff`; forward
passes record onto whatever tape is active, so the same code serves training
and (tape-free) evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import SemcapError, ShapeError
from .text import BOS_ID, EOS_ID, PAD_ID


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions of the captioning model.

    The library defaults mirror a full-scale setup; desk-scale runs override
    them (64/64 works well for the synthetic corpora).
    """

    embed_dim: int = 512
    hidden_dim: int = 512
    attr_hidden_dim: int = 64
    attn_dim: int | None = None

    @property
    def attention_dim(self) -> int:
        return self.attn_dim if self.attn_dim is not None else self.hidden_dim


@dataclass(frozen=True)
class ClassifierConfig:
    embed_dim: int = 64
    windows: tuple[int, ...] = (3, 4, 5)
    filters: int = 64


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor


@dataclass
class SampledSequence:
    """One sampled caption: content token ids (EOS stripped) plus the
    log-probability of every emitted token, EOS included when it fired."""

    token_ids: list[int]
    logps: list[Tensor]
    ended: bool

    def total_logp(self) -> Tensor:
        total = self.logps[0]
        for term in self.logps[1:]:
            total = total + term
        return total

    def total_logp_value(self) -> float:
        return float(sum(t.item() for t in self.logps))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return _uniform(rng, (fan_in, fan_out), 1.0 / np.sqrt(fan_in))


class AttentionEncoder:
    """Projects a feature grid and scores its rows against the decoder state.

    The initial decoder state comes from the mean feature vector pushed
    through two small feed-forward nets (one for the cell, one for the
    hidden state); attention uses an additive score v . tanh(Wh h + Wx x_i).
    """

    def __init__(self, feature_dim: int, hidden_dim: int, attn_dim: int, rng: np.random.Generator):
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.params = {
            "proj_w": ad.param(_linear_init(rng, feature_dim, hidden_dim)),
            "proj_b": ad.param(np.zeros(hidden_dim)),
            "init_c_w": ad.param(_linear_init(rng, feature_dim, hidden_dim)),
            "init_c_b": ad.param(np.zeros(hidden_dim)),
            "init_h_w": ad.param(_linear_init(rng, feature_dim, hidden_dim)),
            "init_h_b": ad.param(np.zeros(hidden_dim)),
            "attn_h": ad.param(_linear_init(rng, hidden_dim, attn_dim)),
            "attn_x": ad.param(_linear_init(rng, hidden_dim, attn_dim)),
            "attn_v": ad.param(_uniform(rng, (attn_dim,), 1.0 / np.sqrt(attn_dim))),
        }

    def encode(self, features: np.ndarray) -> tuple[Tensor, DecoderState]:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ShapeError(f"encode: features must be a B x D grid, got shape {features.shape}")
        if features.shape[1] != self.feature_dim:
            raise ShapeError(
                f"encode: feature dim {features.shape[1]} != expected {self.feature_dim}")
        p = self.params
        grid = ad.tensor(features)
        projected = ad.add(ad.matmul(grid, p["proj_w"]), p["proj_b"])
        mean_feat = ad.tmean(grid, axis=0)
        c0 = ad.tanh(ad.add(ad.matmul(mean_feat, p["init_c_w"]), p["init_c_b"]))
        h0 = ad.tanh(ad.add(ad.matmul(mean_feat, p["init_h_w"]), p["init_h_b"]))
        return projected, DecoderState(h=h0, c=c0)

    def attend(self, state: DecoderState, projected: Tensor) -> tuple[Tensor, Tensor]:
        """Weighted context vector and the attention weights (sum to 1)."""
        p = self.params
        scores_pre = ad.tanh(ad.add(ad.matmul(projected, p["attn_x"]),
                                    ad.matmul(state.h, p["attn_h"])))
        scores = ad.matmul(scores_pre, p["attn_v"])
        gamma = ad.softmax(scores, axis=-1)
        context = ad.matmul(gamma, projected)
        return context, gamma


class CaptionDecoder:
    """Single-layer LSTM over [previous-word embedding; context; attribute
    embedding] with a linear + softmax output head."""

    def __init__(self, vocab_size: int, embed_dim: int, hidden_dim: int,
                 attr_dim: int, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        input_dim = embed_dim + hidden_dim + attr_dim
        self.params = {
            "embed": ad.param(_uniform(rng, (vocab_size, embed_dim), 0.1)),
            "lstm_wx": ad.param(_linear_init(rng, input_dim, 4 * hidden_dim).T.copy()),
            "lstm_wh": ad.param(_linear_init(rng, hidden_dim, 4 * hidden_dim).T.copy()),
            "lstm_b": ad.param(np.zeros(4 * hidden_dim)),
            "out_w": ad.param(_linear_init(rng, hidden_dim, vocab_size)),
            "out_b": ad.param(np.zeros(vocab_size)),
        }

    def step_logits(self, prev_id: int, context: Tensor, z: Tensor,
                    state: DecoderState) -> tuple[DecoderState, Tensor]:
        if not 0 <= prev_id < self.vocab_size:
            raise SemcapError(f"decode step: token id {prev_id} out of range (K={self.vocab_size})")
        p = self.params
        h_dim = self.hidden_dim
        emb = ad.reshape(ad.embedding(p["embed"], [prev_id]), (p["embed"].shape[1],))
        x = ad.concat([emb, context, z])
        gates = ad.add(ad.add(ad.matmul(p["lstm_wx"], x), ad.matmul(p["lstm_wh"], state.h)), p["lstm_b"])
        i_gate = ad.sigmoid(ad.narrow(gates, 0, h_dim))
        f_gate = ad.sigmoid(ad.narrow(gates, h_dim, h_dim))
        o_gate = ad.sigmoid(ad.narrow(gates, 2 * h_dim, h_dim))
        g_gate = ad.tanh(ad.narrow(gates, 3 * h_dim, h_dim))
        c = ad.add(ad.mul(f_gate, state.c), ad.mul(i_gate, g_gate))
        h = ad.mul(o_gate, ad.tanh(c))
        logits = ad.add(ad.matmul(h, p["out_w"]), p["out_b"])
        return DecoderState(h=h, c=c), logits


class AttributePredictor:
    """Mean-pooled features -> hidden activation (the attribute embedding)
    -> per-attribute probabilities through a sigmoid."""

    def __init__(self, feature_dim: int, hidden_dim: int, n_attributes: int, rng: np.random.Generator):
        self.feature_dim = feature_dim
        self.params = {
            "w1": ad.param(_linear_init(rng, feature_dim, hidden_dim)),
            "b1": ad.param(np.zeros(hidden_dim)),
            "w2": ad.param(_linear_init(rng, hidden_dim, n_attributes)),
            "b2": ad.param(np.zeros(n_attributes)),
        }

    def forward(self, features: np.ndarray) -> tuple[Tensor, Tensor]:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ShapeError(f"predict_attributes: features must be B x {self.feature_dim}, got {features.shape}")
        p = self.params
        pooled = ad.tmean(ad.tensor(features), axis=0)
        z = ad.relu(ad.add(ad.matmul(pooled, p["w1"]), p["b1"]))
        logits = ad.add(ad.matmul(z, p["w2"]), p["b2"])
        return z, ad.sigmoid(logits)


class TextCNNClassifier:
    """Three parallel 1-D convolutions with max-over-time pooling feeding a
    softmax over categories."""

    def __init__(self, vocab_size: int, n_categories: int,
                 config: ClassifierConfig | None = None, seed: int = 0):
        self.config = config or ClassifierConfig()
        self.vocab_size = vocab_size
        self.n_categories = n_categories
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.params: dict[str, Tensor] = {
            "embed": ad.param(_uniform(rng, (vocab_size, cfg.embed_dim), 0.1)),
        }
        for w in cfg.windows:
            self.params[f"conv{w}_w"] = ad.param(_linear_init(rng, w * cfg.embed_dim, cfg.filters))
            self.params[f"conv{w}_b"] = ad.param(np.zeros(cfg.filters))
        total_filters = cfg.filters * len(cfg.windows)
        self.params["out_w"] = ad.param(_linear_init(rng, total_filters, n_categories))
        self.params["out_b"] = ad.param(np.zeros(n_categories))

    def _pad(self, token_ids: Sequence[int]) -> list[int]:
        ids = list(token_ids)
        longest = max(self.config.windows)
        if len(ids) < longest:
            ids = ids + [PAD_ID] * (longest - len(ids))
        return ids

    def logits(self, token_ids: Sequence[int]) -> Tensor:
        ids = self._pad(token_ids)
        for t in ids:
            if not 0 <= t < self.vocab_size:
                raise SemcapError(f"classifier: token id {t} out of range (K={self.vocab_size})")
        cfg = self.config
        embedded = ad.embedding(self.params["embed"], ids)
        pooled = []
        for w in cfg.windows:
            conv = ad.conv1d(embedded, self.params[f"conv{w}_w"], self.params[f"conv{w}_b"], w)
            pooled.append(ad.max_over_time(ad.relu(conv)))
        merged = ad.concat(pooled)
        return ad.add(ad.matmul(merged, self.params["out_w"]), self.params["out_b"])

    def log_probs(self, token_ids: Sequence[int]) -> Tensor:
        return ad.log_softmax(self.logits(token_ids), axis=-1)

    def classify(self, token_ids: Sequence[int]) -> np.ndarray:
        """Probability distribution over categories, computed off-tape."""
        with ad.no_grad():
            return ad.softmax(self.logits(token_ids), axis=-1).data

    def save(self, path: str | Path) -> None:
        meta = {
            "kind": "classifier",
            "vocab_size": self.vocab_size,
            "n_categories": self.n_categories,
            "embed_dim": self.config.embed_dim,
            "windows": list(self.config.windows),
            "filters": self.config.filters,
        }
        ad.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "TextCNNClassifier":
        values, meta = ad.load_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise SemcapError(f"{path} is not a classifier checkpoint")
        model = cls(
            vocab_size=meta["vocab_size"],
            n_categories=meta["n_categories"],
            config=ClassifierConfig(
                embed_dim=meta["embed_dim"],
                windows=tuple(meta["windows"]),
                filters=meta["filters"],
            ),
        )
        ad.assign_params(model.params, values)
        return model


class CaptionModel:
    """Encoder, decoder, and attribute predictor bundled with their config."""

    def __init__(self, vocab_size: int, n_attributes: int, feature_dim: int,
                 config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.vocab_size = vocab_size
        self.n_attributes = n_attributes
        self.feature_dim = feature_dim
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.encoder = AttentionEncoder(feature_dim, cfg.hidden_dim, cfg.attention_dim, rng)
        self.decoder = CaptionDecoder(vocab_size, cfg.embed_dim, cfg.hidden_dim,
                                      cfg.attr_hidden_dim, rng)
        self.predictor = AttributePredictor(feature_dim, cfg.attr_hidden_dim, n_attributes, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, module in (("encoder", self.encoder), ("decoder", self.decoder),
                               ("predictor", self.predictor)):
            for name, p in module.params.items():
                out[f"{prefix}.{name}"] = p
        return out

    def predict_attributes(self, features: np.ndarray) -> tuple[Tensor, Tensor]:
        return self.predictor.forward(features)

    def decode_step(self, prev_id: int, context: Tensor, z: Tensor,
                    state: DecoderState) -> tuple[DecoderState, Tensor]:
        state, logits = self.decoder.step_logits(prev_id, context, z, state)
        return state, ad.softmax(logits, axis=-1)

    def greedy_decode(self, features: np.ndarray, max_len: int = 25) -> list[int]:
        """Argmax decoding until EOS or ``max_len`` content tokens."""
        if max_len < 1:
            raise SemcapError(f"max_len must be >= 1, got {max_len}")
        with ad.no_grad():
            projected, state = self.encoder.encode(features)
            z, _ = self.predictor.forward(features)
            ids: list[int] = []
            prev = BOS_ID
            for _ in range(max_len):
                context, _ = self.encoder.attend(state, projected)
                state, logits = self.decoder.step_logits(prev, context, z, state)
                nxt = int(np.argmax(logits.data))
                if nxt == EOS_ID:
                    break
                ids.append(nxt)
                prev = nxt
            return ids

    def sample_decode(self, features: np.ndarray, max_len: int,
                      rng: np.random.Generator | int) -> SampledSequence:
        """Multinomial sampling; per-step log-probabilities stay on the tape
        so policy gradients can flow through them."""
        if max_len < 1:
            raise SemcapError(f"max_len must be >= 1, got {max_len}")
        projected, state = self.encoder.encode(features)
        z, _ = self.predictor.forward(features)
        return self.sample_decode_from(projected, state, z, max_len, rng)

    def sample_decode_from(self, projected: Tensor, state: DecoderState, z: Tensor,
                           max_len: int, rng: np.random.Generator | int) -> SampledSequence:
        """Sampling continuation that reuses an existing encoder forward."""
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        ids: list[int] = []
        logps: list[Tensor] = []
        prev = BOS_ID
        ended = False
        for _ in range(max_len):
            context, _ = self.encoder.attend(state, projected)
            state, logits = self.decoder.step_logits(prev, context, z, state)
            logp = ad.log_softmax(logits, axis=-1)
            probs = np.exp(logp.data)
            probs = probs / probs.sum()
            draw = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            draw = min(draw, self.vocab_size - 1)
            logps.append(ad.pick(logp, draw))
            if draw == EOS_ID:
                ended = True
                break
            ids.append(draw)
            prev = draw
        return SampledSequence(token_ids=ids, logps=logps, ended=ended)

    def rescore(self, features: np.ndarray, token_ids: Sequence[int],
                include_eos: bool = True) -> float:
        """Teacher-forced log-probability of a given token sequence."""
        with ad.no_grad():
            projected, state = self.encoder.encode(features)
            z, _ = self.predictor.forward(features)
            total = 0.0
            prev = BOS_ID
            targets = list(token_ids) + ([EOS_ID] if include_eos else [])
            for target in targets:
                context, _ = self.encoder.attend(state, projected)
                state, logits = self.decoder.step_logits(prev, context, z, state)
                logp = ad.log_softmax(logits, axis=-1)
                total += float(logp.data[target])
                prev = target
            return total

    def save(self, path: str | Path) -> None:
        meta = {
            "kind": "caption-model",
            "vocab_size": self.vocab_size,
            "n_attributes": self.n_attributes,
            "feature_dim": self.feature_dim,
            "embed_dim": self.config.embed_dim,
            "hidden_dim": self.config.hidden_dim,
            "attr_hidden_dim": self.config.attr_hidden_dim,
            "attn_dim": self.config.attention_dim,
        }
        ad.save_checkpoint(path, self.parameters(), meta)

    @classmethod
    def load(cls, path: str | Path) -> "CaptionModel":
        values, meta = ad.load_checkpoint(path)
        if meta.get("kind") != "caption-model":
            raise SemcapError(f"{path} is not a caption model checkpoint")
        model = cls(
            vocab_size=meta["vocab_size"],
            n_attributes=meta["n_attributes"],
            feature_dim=meta["feature_dim"],
            config=ModelConfig(
                embed_dim=meta["embed_dim"],
                hidden_dim=meta["hidden_dim"],
                attr_hidden_dim=meta["attr_hidden_dim"],
                attn_dim=meta["attn_dim"],
            ),
        )
        ad.assign_params(model.parameters(), values)
        return model

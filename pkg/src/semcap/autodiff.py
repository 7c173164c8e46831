"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is a Wengert list: while a :class:`Tape` is active, every
operation appends a record holding its output and a closure that routes the
output gradient back to the inputs.  ``Tape.backward`` walks the records in
reverse execution order (which is a topological order by construction) and
accumulates gradients with ``+=`` so fan-out is handled naturally.

Everything is float64 and CPU-only.  Broadcasting is restricted to adding a
bias vector to the rows of a matrix; all other shape combinations raise
:class:`~semcap.errors.ShapeError`.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import SemcapError, ShapeError

Array = np.ndarray

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """A dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Small operator surface; everything else is a module-level function.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, affine(other, mul=-1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return affine(self, mul=float(other))

    def __rmul__(self, other):
        return affine(self, mul=float(other))

    def __neg__(self) -> "Tensor":
        return affine(self, mul=-1.0)


def tensor(data) -> Tensor:
    """Constant tensor (no gradient tracking)."""
    return Tensor(data, requires_grad=False)


def param(data) -> Tensor:
    """Trainable tensor: a leaf that collects gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Tape:
    """Ordered record of operations for one reverse pass.

    Use as a context manager::

        with Tape() as tape:
            loss = ...
        tape.backward(loss)

    Records are appended in execution order, so the reverse walk visits every
    operation exactly once after all of its consumers.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[Array], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, out: Tensor, backward: Callable[[Array], None]) -> None:
        self._records.append((out, backward))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of everything the scalar ``loss`` depends on."""
        if loss.data.ndim != 0:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        loss.accumulate_grad(np.ones(()))
        for out, back in reversed(self._records):
            if out.grad is not None:
                back(out.grad)


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def no_grad():
    """Suspend recording, e.g. for evaluation inside a training step."""
    saved = _TAPE_STACK[:]
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK.extend(saved)


def _make(out_data: Array, inputs: Sequence[Tensor], backward: Callable[[Array], None]) -> Tensor:
    tape = _active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape.record(out, backward)
    return out


# ---------------------------------------------------------------------------
# elementwise and affine ops


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports matrix + row-bias broadcasting."""
    if a.shape == b.shape:
        def back(g: Array) -> None:
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(g)
        return _make(a.data + b.data, (a, b), back)
    if len(a.shape) == 2 and b.shape == (a.shape[1],):
        def back(g: Array) -> None:
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(g.sum(axis=0))
        return _make(a.data + b.data, (a, b), back)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _make(a.data * b.data, (a, b), back)


def affine(a: Tensor, mul: float = 1.0, add: float = 0.0) -> Tensor:
    """Elementwise ``a * mul + add`` with python-float coefficients."""

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mul)

    return _make(a.data * mul + add, (a,), back)


def log(a: Tensor) -> Tensor:
    """Natural log; caller must keep inputs positive (see :func:`clip`)."""

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return _make(np.log(a.data), (a,), back)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is blocked where clamping bites."""
    inside = (a.data > lo) & (a.data < hi)

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * s * (1.0 - s))

    return _make(s, (a,), back)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - t * t))

    return _make(t, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _make(a.data * mask, (a,), back)


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product for (M,N)@(N,P), (M,N)@(N,), (N,)@(N,P), (N,)@(N,)."""
    an, bn = len(a.shape), len(b.shape)
    if an == 0 or bn == 0 or a.shape[-1 if an > 1 else 0] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    if an > 2 or bn > 2:
        raise ShapeError(f"matmul: only 1-D/2-D operands supported, got {a.shape} and {b.shape}")

    def back(g: Array) -> None:
        if a.requires_grad:
            if an == 2 and bn == 2:
                a.accumulate_grad(g @ b.data.T)
            elif an == 2 and bn == 1:
                a.accumulate_grad(np.outer(g, b.data))
            elif an == 1 and bn == 2:
                a.accumulate_grad(b.data @ g)
            else:
                a.accumulate_grad(g * b.data)
        if b.requires_grad:
            if an == 2 and bn == 2:
                b.accumulate_grad(a.data.T @ g)
            elif an == 2 and bn == 1:
                b.accumulate_grad(a.data.T @ g)
            elif an == 1 and bn == 2:
                b.accumulate_grad(np.outer(a.data, g))
            else:
                b.accumulate_grad(g * a.data)

    return _make(a.data @ b.data, (a, b), back)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    for p in parts:
        if len(p.shape) != 1:
            raise ShapeError(f"concat: expected 1-D parts, got shape {p.shape}")
    parts = list(parts)
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    return _make(np.concatenate([p.data for p in parts]), parts, back)


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Contiguous 1-D slice ``a[start:start+length]``."""
    if len(a.shape) != 1 or start < 0 or start + length > a.shape[0]:
        raise ShapeError(f"narrow: slice [{start}:{start + length}] invalid for shape {a.shape}")

    def back(g: Array) -> None:
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[start:start + length] = g
            a.accumulate_grad(ga)

    return _make(a.data[start:start + length].copy(), (a,), back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(a.shape, dtype=np.int64)) != int(np.prod(shape, dtype=np.int64)):
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _make(a.data.reshape(shape).copy(), (a,), back)


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis not in (None, 0):
        raise ShapeError(f"sum: unsupported axis {axis}")

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy() if axis == 0 else np.full_like(a.data, g))

    return _make(a.data.sum(axis=axis), (a,), back)


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis not in (None, 0):
        raise ShapeError(f"mean: unsupported axis {axis}")
    n = a.data.size if axis is None else a.shape[0]

    def back(g: Array) -> None:
        if a.requires_grad:
            if axis == 0:
                a.accumulate_grad(np.broadcast_to(g / n, a.shape).copy())
            else:
                a.accumulate_grad(np.full_like(a.data, g / n))

    return _make(a.data.mean(axis=axis), (a,), back)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of an embedding table; gradient scatters back with +=."""
    if len(table.shape) != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range for table with {table.shape[0]} rows")

    def back(g: Array) -> None:
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate_grad(gt)

    return _make(table.data[idx], (table,), back)


def pick(a: Tensor, index: int) -> Tensor:
    """Select one element of a 1-D tensor as a scalar."""
    if len(a.shape) != 1:
        raise ShapeError(f"pick: expected 1-D input, got shape {a.shape}")
    if not 0 <= index < a.shape[0]:
        raise ShapeError(f"pick: index {index} out of range for shape {a.shape}")

    def back(g: Array) -> None:
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[index] = g
            a.accumulate_grad(ga)

    return _make(a.data[index], (a,), back)


# ---------------------------------------------------------------------------
# reductions over distributions


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g: Array) -> None:
        if a.requires_grad:
            dot = (g * s).sum(axis=axis, keepdims=True)
            a.accumulate_grad(s * (g - dot))

    return _make(s, (a,), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Fused log(softmax(x)); safe for large magnitudes."""
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), back)


# ---------------------------------------------------------------------------
# sequence ops


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, window: int) -> Tensor:
    """Valid 1-D convolution over a (T, E) sequence.

    ``weight`` is the flattened bank of shape (window * E, F); the output has
    shape (T - window + 1, F).
    """
    if len(x.shape) != 2:
        raise ShapeError(f"conv1d: input must be (T, E), got {x.shape}")
    t_len, emb = x.shape
    if t_len < window:
        raise ShapeError(f"conv1d: sequence length {t_len} shorter than window {window}")
    if weight.shape != (window * emb, weight.shape[1]):
        raise ShapeError(f"conv1d: weight shape {weight.shape} does not match window {window} x dim {emb}")
    n_out = t_len - window + 1
    windows = np.stack([x.data[t:t + window].ravel() for t in range(n_out)])
    out = windows @ weight.data
    if bias is not None:
        out = out + bias.data

    def back(g: Array) -> None:
        if weight.requires_grad:
            weight.accumulate_grad(windows.T @ g)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))
        if x.requires_grad:
            gw = g @ weight.data.T
            gx = np.zeros_like(x.data)
            for t in range(n_out):
                gx[t:t + window] += gw[t].reshape(window, emb)
            x.accumulate_grad(gx)

    return _make(out, (x, weight) + (() if bias is None else (bias,)), back)


def max_over_time(a: Tensor) -> Tensor:
    """Column-wise max of a (T, F) tensor; ties route the gradient to the
    earliest maximal row."""
    if len(a.shape) != 2:
        raise ShapeError(f"max_over_time: input must be 2-D, got {a.shape}")
    idx = a.data.argmax(axis=0)
    cols = np.arange(a.shape[1])

    def back(g: Array) -> None:
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[idx, cols] = g
            a.accumulate_grad(ga)

    return _make(a.data[idx, cols].copy(), (a,), back)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity when ``train`` is false or p == 0."""
    if not 0.0 <= p < 1.0:
        raise SemcapError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def back(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _make(a.data * mask, (a,), back)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


# ---------------------------------------------------------------------------
# checkpoints

_CKPT_MAGIC = "semcap-checkpoint-v1"


def save_checkpoint(path: str | Path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    """Write parameters as a JSON header line plus little-endian float64 data.

    Header entries carry (name, shape, offset); offsets count float64
    elements from the start of the binary block.
    """
    entries = []
    offset = 0
    for name, p in params.items():
        entries.append({"name": name, "shape": list(p.data.shape), "offset": offset})
        offset += p.data.size
    header = {"format": _CKPT_MAGIC, "params": entries, "meta": meta or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as {name: array} plus its metadata dict."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != _CKPT_MAGIC:
        raise SemcapError(f"{path} is not a parameter checkpoint")
    flat = np.frombuffer(blob, dtype="<f8")
    out = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        out[entry["name"]] = flat[start:start + n].reshape(shape).astype(np.float64)
    return out, header.get("meta", {})


def assign_params(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into an existing parameter dict, checking shapes."""
    missing = set(params) - set(values)
    if missing:
        raise SemcapError(f"checkpoint missing parameters: {sorted(missing)}")
    for name, p in params.items():
        arr = values[name]
        if arr.shape != p.data.shape:
            raise ShapeError(f"checkpoint parameter {name}: shape {arr.shape} != expected {p.data.shape}")
        p.data = arr.copy()

"""Tokenization, vocabulary construction, and token-id encoding.

The tokenizer is deliberately dependency-free and deterministic: captions are
lowercased, split on whitespace, stripped of leading/trailing punctuation, and
fragments without any alphanumeric character are dropped.  Intra-word hyphens
and apostrophes survive ("a-line", "don't").
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
PAD = "<pad>"
RESERVED = (BOS, EOS, UNK, PAD)

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2
PAD_ID = 3


def tokenize(raw_text: str) -> list[str]:
    """Split raw text into clean lowercase tokens.

    Each whitespace-separated fragment is stripped of leading and trailing
    non-alphanumeric characters; fragments left without any alphanumeric
    character are dropped.  Empty input yields an empty list.
    """
    tokens = []
    for fragment in raw_text.lower().split():
        start = 0
        end = len(fragment)
        while start < end and not fragment[start].isalnum():
            start += 1
        while end > start and not fragment[end - 1].isalnum():
            end -= 1
        word = fragment[start:end]
        if word and any(ch.isalnum() for ch in word):
            tokens.append(word)
    return tokens


class Vocab:
    """Immutable token vocabulary with reserved ids for BOS/EOS/UNK/PAD.

    Non-reserved ids start at 4 and are assigned by descending corpus
    frequency with a lexicographic tiebreak, so identical corpora always
    produce identical id assignments.
    """

    def __init__(self, tokens: Sequence[str]):
        for tok in tokens:
            if tok in RESERVED:
                raise DataError(f"token {tok!r} collides with a reserved symbol")
        self._tokens = list(RESERVED) + list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise DataError("duplicate token in vocabulary")

    @property
    def size(self) -> int:
        return len(self._tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise DataError(f"token id {idx} out of range for vocabulary of size {len(self._tokens)}")
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, wrapping the sequence in BOS/EOS."""
        return [BOS_ID] + [self.id_of(t) for t in tokens] + [EOS_ID]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Map ids back to tokens, dropping BOS/EOS/PAD markers."""
        out = []
        for idx in ids:
            if idx in (BOS_ID, EOS_ID, PAD_ID):
                continue
            out.append(self.token_of(idx))
        return out

    def save(self, path: str | Path) -> None:
        """Write one token per line; reserved symbols come first."""
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[: len(RESERVED)] != list(RESERVED):
            raise DataError(f"vocabulary file {path} does not start with the reserved symbols")
        return cls(lines[len(RESERVED):])


def build_vocab(captions: Iterable[Sequence[str]], min_count: int = 5) -> Vocab:
    """Build a vocabulary from tokenized captions.

    Tokens occurring fewer than ``min_count`` times are dropped (they map to
    UNK at encode time).
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for caption in captions:
        counts.update(caption)
    retained = [t for t, c in counts.items() if c >= min_count]
    retained.sort(key=lambda t: (-counts[t], t))
    return Vocab(retained)

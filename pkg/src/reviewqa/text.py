"""Tokenization, vocabulary construction, and pretrained embedding loading."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ParseError

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Alphanumeric runs stay together; every other non-space character becomes
# its own token.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on unicode whitespace, split punctuation into single-char tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Token/index bijection with reserved PAD=0 and UNK=1 slots."""

    token_to_index: dict[str, int] = field(default_factory=dict)
    index_to_token: list[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])

    def __len__(self) -> int:
        return len(self.index_to_token)

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_INDEX)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index


def build_vocab(corpus: Iterable[list[str]], min_count: int = 1) -> Vocabulary:
    """Index tokens with frequency >= min_count, most frequent first, ties lexicographic."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    vocab = Vocabulary()
    for tok in kept:
        vocab.token_to_index[tok] = len(vocab.index_to_token)
        vocab.index_to_token.append(tok)
    return vocab


@dataclass
class EmbeddingTable:
    """Per-token embedding rows plus a flag marking which rows came from the file."""

    matrix: np.ndarray          # [vocab_size, dim] float64
    pretrained: list[bool]      # per row

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def load_embeddings(path, vocab: Vocabulary, seed: int, dim: int = 300) -> EmbeddingTable:
    """Read a plain-text embedding file (`token f1 ... f_dim` per line).

    Vocabulary tokens found in the file keep their file vector. Every other
    row, UNK included, is drawn uniform on [-0.1, 0.1] from the seeded
    generator; the PAD row is all zeros. Deterministic given (file, vocab,
    seed).
    """
    vectors: dict[str, np.ndarray] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                fields = line.rstrip("\n").split(" ")
                if len(fields) != dim + 1:
                    raise ParseError(
                        f"{path}: line {lineno}: expected token plus {dim} floats, got {len(fields)} fields"
                    )
                token = fields[0]
                if token in vocab:
                    try:
                        vectors[token] = np.asarray([float(f) for f in fields[1:]], dtype=np.float64)
                    except ValueError as exc:
                        raise ParseError(f"{path}: line {lineno}: non-numeric field ({exc})") from None
    except OSError as exc:
        raise OSError(f"cannot read embedding file {path}: {exc}") from exc

    rng = np.random.Generator(np.random.PCG64(seed))
    matrix = np.zeros((len(vocab), dim), dtype=np.float64)
    pretrained = [False] * len(vocab)
    for idx in range(1, len(vocab)):  # row 0 stays the zero PAD vector
        token = vocab.index_to_token[idx]
        if token in vectors:
            matrix[idx] = vectors[token]
            pretrained[idx] = True
        else:
            matrix[idx] = rng.uniform(-0.1, 0.1, size=dim)
    return EmbeddingTable(matrix=matrix, pretrained=pretrained)


def encode_sequence(tokens: list[str], vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, int]:
    """Map tokens to indices, truncate to max_len, right-pad with PAD.

    Returns the padded index array and the pre-padding length.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    indices = [vocab.index(tok) for tok in tokens[:max_len]]
    length = len(indices)
    padded = np.full(max_len, PAD_INDEX, dtype=np.int64)
    padded[:length] = indices
    return padded, length

"""The adversarial sentence-pair network.

Two bidirectional LSTM encoders produce a question vector and a candidate
vector; their concatenation feeds a relevance (QA) head directly and a
domain head through a gradient-reversal layer. The QA loss is masked to
labeled QA rows; the domain loss covers every row. One backward pass then
updates the heads normally while the encoders receive the negated,
lambda-scaled domain gradient.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import QA_KIND, QR_KIND, SentencePair
from .errors import DataError, ParameterError, ParseError, UsageError
from .text import Vocabulary, encode_sequence, tokenize

GATE_ORDER = ("input", "forget", "cell", "output")
INIT_RANGE = 0.08
FORGET_BIAS = 1.0


@dataclass
class ModelConfig:
    vocab_size: int
    embedding_dim: int = 300
    hidden_size: int = 300          # per direction
    head_hidden1: int = 512
    head_hidden2: int = 256
    max_len_question: int = 50
    max_len_candidate: int = 65

    @property
    def sentence_dim(self) -> int:
        return 2 * self.hidden_size

    @property
    def pair_dim(self) -> int:
        return 4 * self.hidden_size

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_size": self.hidden_size,
            "head_hidden1": self.head_hidden1,
            "head_hidden2": self.head_hidden2,
            "max_len_question": self.max_len_question,
            "max_len_candidate": self.max_len_candidate,
        }


@dataclass
class LstmDirection:
    w_x: Tensor   # [embedding_dim, 4h]
    w_h: Tensor   # [h, 4h]
    bias: Tensor  # [4h], gates ordered (input, forget, cell, output)


@dataclass
class BiLstmParams:
    fwd: LstmDirection
    bwd: LstmDirection


@dataclass
class HeadParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor


@dataclass
class ModelParams:
    config: ModelConfig
    embedding: np.ndarray           # [vocab_size, embedding_dim], frozen
    question_encoder: BiLstmParams
    candidate_encoder: BiLstmParams
    qa_head: HeadParams
    domain_head: HeadParams

    def trainable(self) -> list[Tensor]:
        out = []
        for enc in (self.question_encoder, self.candidate_encoder):
            for direction in (enc.fwd, enc.bwd):
                out.extend([direction.w_x, direction.w_h, direction.bias])
        for head in (self.qa_head, self.domain_head):
            out.extend([head.w1, head.b1, head.w2, head.b2, head.w3, head.b3])
        return out

    def zero_grad(self) -> None:
        for tensor in self.trainable():
            tensor.zero_grad()

    @classmethod
    def initialize(cls, config: ModelConfig, embedding: np.ndarray, seed: int) -> "ModelParams":
        if embedding.shape != (config.vocab_size, config.embedding_dim):
            raise ParameterError(
                f"embedding shape {list(embedding.shape)} does not match config "
                f"[{config.vocab_size}, {config.embedding_dim}]"
            )
        rng = np.random.Generator(np.random.PCG64(seed))
        h = config.hidden_size

        def uniform(*shape):
            return ad.parameter(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape))

        def direction():
            w_x = uniform(config.embedding_dim, 4 * h)
            w_h = uniform(h, 4 * h)
            bias = uniform(4 * h)
            bias.data[h : 2 * h] = FORGET_BIAS
            return LstmDirection(w_x=w_x, w_h=w_h, bias=bias)

        def head(in_dim):
            return HeadParams(
                w1=uniform(in_dim, config.head_hidden1),
                b1=uniform(config.head_hidden1),
                w2=uniform(config.head_hidden1, config.head_hidden2),
                b2=uniform(config.head_hidden2),
                w3=uniform(config.head_hidden2, 2),
                b3=uniform(2),
            )

        return cls(
            config=config,
            embedding=np.ascontiguousarray(embedding, dtype=np.float64),
            question_encoder=BiLstmParams(fwd=direction(), bwd=direction()),
            candidate_encoder=BiLstmParams(fwd=direction(), bwd=direction()),
            qa_head=head(4 * h),
            domain_head=head(4 * h),
        )


# ---------------------------------------------------------------------------
# encoder


def _run_direction(
    idx: np.ndarray,
    lengths: np.ndarray,
    embedding: np.ndarray,
    direction: LstmDirection,
    reverse: bool,
) -> Tensor:
    """Run the LSTM recurrence over one direction; returns the final hidden state.

    Padded positions are frozen by masking the state update, so the result
    equals running the recurrence over just the first `length` tokens of
    each row.
    """
    n, _ = idx.shape
    h_size = direction.w_h.shape[0]
    longest = int(lengths.max())
    steps = range(longest - 1, -1, -1) if reverse else range(longest)

    h = Tensor(np.zeros((n, h_size)))
    c = Tensor(np.zeros((n, h_size)))
    for t in steps:
        x_t = Tensor(embedding[idx[:, t]])
        z = ad.add_rowvec(ad.add(ad.matmul(x_t, direction.w_x), ad.matmul(h, direction.w_h)), direction.bias)
        gate_in = ad.sigmoid(ad.slice_cols(z, 0, h_size))
        gate_forget = ad.sigmoid(ad.slice_cols(z, h_size, 2 * h_size))
        gate_cell = ad.tanh(ad.slice_cols(z, 2 * h_size, 3 * h_size))
        gate_out = ad.sigmoid(ad.slice_cols(z, 3 * h_size, 4 * h_size))
        c_new = ad.add(ad.mul(gate_forget, c), ad.mul(gate_in, gate_cell))
        h_new = ad.mul(gate_out, ad.tanh(c_new))
        active = (lengths > t).astype(np.float64)
        if active.all():
            h, c = h_new, c_new
        else:
            keep = 1.0 - active
            h = ad.add(ad.scale_rows(h_new, active), ad.scale_rows(h, keep))
            c = ad.add(ad.scale_rows(c_new, active), ad.scale_rows(c, keep))
    return h


def encode_batch(
    idx: np.ndarray, lengths: np.ndarray, embedding: np.ndarray, params: BiLstmParams
) -> Tensor:
    """Encode each row into concat(final forward state, final backward state)."""
    idx = np.asarray(idx, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if idx.ndim != 2 or lengths.shape != (idx.shape[0],):
        raise UsageError(f"encode_batch: bad shapes {list(idx.shape)} / {list(lengths.shape)}")
    if (lengths < 1).any():
        raise UsageError("encode_batch: every sequence length must be >= 1")
    if (lengths > idx.shape[1]).any():
        raise UsageError("encode_batch: length exceeds the index array")
    fwd = _run_direction(idx, lengths, embedding, params.fwd, reverse=False)
    bwd = _run_direction(idx, lengths, embedding, params.bwd, reverse=True)
    return ad.concat(fwd, bwd)


def bilstm_encode(
    indices: np.ndarray, length: int, embedding: np.ndarray, params: BiLstmParams
) -> Tensor:
    """Single-sequence encoder: returns the [2h] sentence vector."""
    indices = np.asarray(indices, dtype=np.int64)
    encoded = encode_batch(indices.reshape(1, -1), np.asarray([length]), embedding, params)
    return ad.take_row(encoded, 0)


# ---------------------------------------------------------------------------
# heads and losses


def apply_head(x: Tensor, head: HeadParams) -> Tensor:
    """Two tanh layers then a linear map to 2 logits."""
    a = ad.tanh(ad.add_rowvec(ad.matmul(x, head.w1), head.b1))
    b = ad.tanh(ad.add_rowvec(ad.matmul(a, head.w2), head.b2))
    return ad.add_rowvec(ad.matmul(b, head.w3), head.b3)


@dataclass
class PairBatch:
    """Encoded batch rows: mixed QA (labeled) and QR (unlabeled) pairs."""

    q_idx: np.ndarray
    q_len: np.ndarray
    c_idx: np.ndarray
    c_len: np.ndarray
    kinds: list[str]
    qa_labels: np.ndarray       # -1 on QR rows
    domain_labels: np.ndarray   # 0 = answer, 1 = review; fixed by the kind

    @property
    def size(self) -> int:
        return len(self.kinds)

    @classmethod
    def build(
        cls,
        pairs: list[SentencePair],
        vocab: Vocabulary,
        max_len_question: int,
        max_len_candidate: int,
    ) -> "PairBatch":
        if not pairs:
            raise UsageError("PairBatch.build: empty batch")
        q_rows, q_lens, c_rows, c_lens, kinds, qa_labels, domain_labels = [], [], [], [], [], [], []
        for row, pair in enumerate(pairs):
            if pair.kind == QA_KIND:
                if pair.label not in (0, 1):
                    raise DataError(f"row {row}: QA pair without a 0/1 label")
                qa_labels.append(pair.label)
                domain_labels.append(0)
            elif pair.kind == QR_KIND:
                if pair.label is not None:
                    raise DataError(f"row {row}: QR pair must not carry a label in a training batch")
                qa_labels.append(-1)
                domain_labels.append(1)
            else:
                raise DataError(f"row {row}: unknown pair kind {pair.kind!r}")
            q_enc, q_len = encode_sequence(tokenize(pair.question), vocab, max_len_question)
            c_enc, c_len = encode_sequence(tokenize(pair.candidate), vocab, max_len_candidate)
            if q_len == 0 or c_len == 0:
                raise DataError(f"row {row}: question or candidate tokenizes to nothing")
            q_rows.append(q_enc)
            q_lens.append(q_len)
            c_rows.append(c_enc)
            c_lens.append(c_len)
            kinds.append(pair.kind)
        return cls(
            q_idx=np.stack(q_rows),
            q_len=np.asarray(q_lens, dtype=np.int64),
            c_idx=np.stack(c_rows),
            c_len=np.asarray(c_lens, dtype=np.int64),
            kinds=kinds,
            qa_labels=np.asarray(qa_labels, dtype=np.int64),
            domain_labels=np.asarray(domain_labels, dtype=np.int64),
        )


class PairRep(NamedTuple):
    question_vecs: Tensor   # [n, 2h]
    candidate_vecs: Tensor  # [n, 2h]
    pair: Tensor            # [n, 4h] = [question ; candidate]


def encode_pairs(batch: PairBatch, params: ModelParams) -> PairRep:
    question_vecs = encode_batch(batch.q_idx, batch.q_len, params.embedding, params.question_encoder)
    candidate_vecs = encode_batch(batch.c_idx, batch.c_len, params.embedding, params.candidate_encoder)
    return PairRep(question_vecs, candidate_vecs, ad.concat(question_vecs, candidate_vecs))


def forward_pair(batch: PairBatch, params: ModelParams, strength: float) -> tuple[Tensor, Tensor]:
    """QA logits for every row plus domain logits behind the reversal layer.

    The reversal strength only shapes gradients; forward values are identical
    for any strength.
    """
    rep = encode_pairs(batch, params)
    qa_logits = apply_head(rep.pair, params.qa_head)
    domain_logits = apply_head(ad.grad_reverse(rep.pair, strength), params.domain_head)
    return qa_logits, domain_logits


def masked_qa_loss(qa_logits: Tensor, batch: PairBatch) -> Tensor:
    """Mean cross-entropy over QA rows only; an exact, graph-free zero if none."""
    rows = [i for i, kind in enumerate(batch.kinds) if kind == QA_KIND]
    if not rows:
        return Tensor(0.0)
    total = None
    for i in rows:
        label = int(batch.qa_labels[i])
        if label < 0:
            raise DataError(f"row {i}: QA row lacks a label")
        ce = ad.softmax_cross_entropy(ad.take_row(qa_logits, i), label)
        total = ce if total is None else ad.add(total, ce)
    return ad.scale(total, 1.0 / len(rows))


def domain_loss(domain_logits: Tensor, batch: PairBatch) -> Tensor:
    """Mean cross-entropy of the domain head over every row."""
    total = None
    for i in range(batch.size):
        ce = ad.softmax_cross_entropy(ad.take_row(domain_logits, i), int(batch.domain_labels[i]))
        total = ce if total is None else ad.add(total, ce)
    return ad.scale(total, 1.0 / batch.size)


def total_loss(batch: PairBatch, params: ModelParams, strength: float) -> Tensor:
    """Masked QA loss plus domain loss on one shared graph."""
    qa_logits, domain_logits = forward_pair(batch, params, strength)
    return ad.add(masked_qa_loss(qa_logits, batch), domain_loss(domain_logits, batch))


def adaptation_schedule(progress: float) -> float:
    """Reversal strength ramp 2 / (1 + exp(-10 p)) - 1 over training progress p."""
    if not 0.0 <= progress <= 1.0:
        raise ParameterError(f"progress must be in [0, 1], got {progress}")
    return 2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0


# ---------------------------------------------------------------------------
# inference


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def predict_encoded(
    params: ModelParams,
    q_idx: np.ndarray,
    q_len: int,
    c_idx: np.ndarray,
    c_len: int,
) -> tuple[int, float]:
    """Label and confidence for one encoded pair; ties go to label 0."""
    q_vec = encode_batch(np.asarray(q_idx).reshape(1, -1), np.asarray([q_len]), params.embedding, params.question_encoder)
    c_vec = encode_batch(np.asarray(c_idx).reshape(1, -1), np.asarray([c_len]), params.embedding, params.candidate_encoder)
    logits = apply_head(ad.concat(q_vec, c_vec), params.qa_head).data[0]
    probs = _softmax(logits)
    label = 1 if probs[1] > probs[0] else 0
    return label, float(probs[label])


def predict_text(
    params: ModelParams, vocab: Vocabulary, question: str, candidate: str
) -> tuple[int, float]:
    """Tokenize, encode and classify one raw question/candidate pair."""
    q_tokens = tokenize(question)
    c_tokens = tokenize(candidate)
    if not q_tokens or not c_tokens:
        raise UsageError("question and candidate must both contain at least one token")
    q_idx, q_len = encode_sequence(q_tokens, vocab, params.config.max_len_question)
    c_idx, c_len = encode_sequence(c_tokens, vocab, params.config.max_len_candidate)
    return predict_encoded(params, q_idx, q_len, c_idx, c_len)


# ---------------------------------------------------------------------------
# checkpointing

_CKPT_MAGIC = b"REVIEWQA-CKPT-1\n"


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Vocabulary


def _named_tensors(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    entries = [("embedding", params.embedding)]
    for enc_name, enc in (("question_encoder", params.question_encoder), ("candidate_encoder", params.candidate_encoder)):
        for dir_name, direction in (("fwd", enc.fwd), ("bwd", enc.bwd)):
            entries.append((f"{enc_name}.{dir_name}.w_x", direction.w_x.data))
            entries.append((f"{enc_name}.{dir_name}.w_h", direction.w_h.data))
            entries.append((f"{enc_name}.{dir_name}.bias", direction.bias.data))
    for head_name, head in (("qa_head", params.qa_head), ("domain_head", params.domain_head)):
        for field_name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            entries.append((f"{head_name}.{field_name}", getattr(head, field_name).data))
    return entries


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Write a single self-describing binary file; values round-trip bit-exactly."""
    tensors = _named_tensors(checkpoint.params)
    header = {
        "config": checkpoint.params.config.to_dict(),
        "vocab": checkpoint.vocab.index_to_token,
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_CKPT_MAGIC)
        handle.write(struct.pack("<Q", len(blob)))
        handle.write(blob)
        for _, arr in tensors:
            handle.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as handle:
        magic = handle.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ParseError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", handle.read(8))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = handle.read(count * 8)
            if len(raw) != count * 8:
                raise ParseError(f"{path}: truncated tensor {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    config = ModelConfig(**header["config"])
    tokens = header["vocab"]
    vocab = Vocabulary(
        token_to_index={tok: i for i, tok in enumerate(tokens) if i >= 2},
        index_to_token=list(tokens),
    )

    def direction(prefix):
        return LstmDirection(
            w_x=ad.parameter(arrays[f"{prefix}.w_x"]),
            w_h=ad.parameter(arrays[f"{prefix}.w_h"]),
            bias=ad.parameter(arrays[f"{prefix}.bias"]),
        )

    def head(prefix):
        return HeadParams(**{f: ad.parameter(arrays[f"{prefix}.{f}"]) for f in ("w1", "b1", "w2", "b2", "w3", "b3")})

    params = ModelParams(
        config=config,
        embedding=arrays["embedding"],
        question_encoder=BiLstmParams(fwd=direction("question_encoder.fwd"), bwd=direction("question_encoder.bwd")),
        candidate_encoder=BiLstmParams(fwd=direction("candidate_encoder.fwd"), bwd=direction("candidate_encoder.bwd")),
        qa_head=head("qa_head"),
        domain_head=head("domain_head"),
    )
    return Checkpoint(params=params, vocab=vocab)


def copy_params(params: ModelParams) -> ModelParams:
    """Deep copy of all parameter values (used for checkpoint snapshots)."""

    def direction(d: LstmDirection) -> LstmDirection:
        return LstmDirection(
            w_x=ad.parameter(d.w_x.data.copy()),
            w_h=ad.parameter(d.w_h.data.copy()),
            bias=ad.parameter(d.bias.data.copy()),
        )

    def head(h: HeadParams) -> HeadParams:
        return HeadParams(**{f: ad.parameter(getattr(h, f).data.copy()) for f in ("w1", "b1", "w2", "b2", "w3", "b3")})

    return ModelParams(
        config=params.config,
        embedding=params.embedding.copy(),
        question_encoder=BiLstmParams(fwd=direction(params.question_encoder.fwd), bwd=direction(params.question_encoder.bwd)),
        candidate_encoder=BiLstmParams(fwd=direction(params.candidate_encoder.fwd), bwd=direction(params.candidate_encoder.bwd)),
        qa_head=head(params.qa_head),
        domain_head=head(params.domain_head),
    )

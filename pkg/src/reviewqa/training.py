"""Minimax training loop over mixed QA/QR batches, plus the evaluation harness.

With adaptation enabled, every step minimizes masked QA loss plus domain
loss, with the reversal strength ramped over training progress. With
adaptation disabled (the ablation) batches are QA-only and only the QA loss
is optimized; the domain head still runs forward for diagnostics but its
parameters receive no gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Graph, Tensor, adam_step
from .data import QA_KIND, SentencePair
from .errors import ConfigError, NumericError, UsageError
from .metrics import EvalReport
from .model import (
    Checkpoint,
    ModelConfig,
    ModelParams,
    PairBatch,
    adaptation_schedule,
    apply_head,
    copy_params,
    domain_loss,
    encode_batch,
    forward_pair,
    masked_qa_loss,
)
from .text import Vocabulary, encode_sequence, tokenize
from .utils import derive_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float = 1e-3
    seed: int = 0
    adaptation_enabled: bool = True
    mix_ratio: tuple[int, int] = (1, 1)   # QA : QR rows per batch
    neg_ratio: float = 1.0
    max_len_question: int = 50
    max_len_candidate: int = 65
    checkpoint_every: int = 0             # epochs between snapshots, 0 = off

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.adaptation_enabled and self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 with adaptation enabled (both kinds must fit)")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.neg_ratio <= 0:
            raise ConfigError(f"neg_ratio must be > 0, got {self.neg_ratio}")
        if min(self.mix_ratio) < 1:
            raise ConfigError(f"mix_ratio parts must be >= 1, got {self.mix_ratio}")
        if self.max_len_question < 1 or self.max_len_candidate < 1:
            raise ConfigError("max lengths must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    def rows_per_batch(self) -> tuple[int, int]:
        """(QA rows, QR rows) per batch under the configured mix."""
        if not self.adaptation_enabled:
            return self.batch_size, 0
        qa_parts, qr_parts = self.mix_ratio
        qa_rows = round(self.batch_size * qa_parts / (qa_parts + qr_parts))
        qa_rows = min(max(qa_rows, 1), self.batch_size - 1)
        return qa_rows, self.batch_size - qa_rows


@dataclass
class TrainData:
    qa_train: list[SentencePair]
    qr_train: list[SentencePair]
    vocab: Vocabulary
    embedding: np.ndarray
    qa_dev: list[SentencePair] = field(default_factory=list)


def make_batches(
    qa_pairs: list[SentencePair],
    qr_pairs: list[SentencePair],
    config: TrainConfig,
    epoch: int = 0,
) -> list[list[SentencePair]]:
    """One epoch of batches at the configured QA:QR mix, shuffled by seed+epoch.

    The QA stream defines the epoch; QR rows cycle if they run short. A
    trailing partial QA batch is dropped.
    """
    qa_rows, qr_rows = config.rows_per_batch()
    if not qa_pairs:
        raise ConfigError("make_batches: no QA pairs")
    if config.adaptation_enabled and not qr_pairs:
        raise ConfigError("make_batches: adaptation enabled but no QR pairs")
    if len(qa_pairs) < qa_rows:
        raise ConfigError(f"make_batches: need at least {qa_rows} QA pairs, got {len(qa_pairs)}")
    rng = np.random.Generator(np.random.PCG64(derive_seed(config.seed, f"batching.{epoch}")))
    qa_order = [qa_pairs[int(i)] for i in rng.permutation(len(qa_pairs))]
    if qr_rows:
        qr_order = [qr_pairs[int(i)] for i in rng.permutation(len(qr_pairs))]
    batches = []
    n_batches = len(qa_order) // qa_rows
    qr_cursor = 0
    for b in range(n_batches):
        batch = list(qa_order[b * qa_rows : (b + 1) * qa_rows])
        for _ in range(qr_rows):
            batch.append(qr_order[qr_cursor % len(qr_order)])
            qr_cursor += 1
        batches.append(batch)
    return batches


def _value_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Plain-number mean cross-entropy for logging (no graph)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, ad.LOG_FLOOR)).mean())


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    log: list[dict]
    best_dev_accuracy: float | None
    total_steps: int


def train(config: TrainConfig, data: TrainData, model_config: ModelConfig) -> TrainResult:
    """Run the full loop; returns the best-dev checkpoint and a structured log."""
    config.validate()
    if model_config.vocab_size != len(data.vocab):
        raise ConfigError(
            f"model vocab_size {model_config.vocab_size} != vocabulary size {len(data.vocab)}"
        )
    params = ModelParams.initialize(model_config, data.embedding, derive_seed(config.seed, "init.params"))
    state = AdamState(params.trainable(), learning_rate=config.learning_rate)

    qa_rows, _ = config.rows_per_batch()
    steps_per_epoch = len(data.qa_train) // qa_rows
    if steps_per_epoch == 0:
        raise ConfigError("not enough QA pairs for a single batch")
    total_steps = config.epochs * steps_per_epoch

    records: list[dict] = []
    best_params = None
    best_dev_accuracy = None
    step = 0
    for epoch in range(config.epochs):
        epoch_qa_losses, epoch_domain_losses, epoch_domain_accs = [], [], []
        for batch_index, batch_pairs in enumerate(make_batches(data.qa_train, data.qr_train, config, epoch)):
            strength = adaptation_schedule(step / total_steps) if config.adaptation_enabled else 0.0
            batch = PairBatch.build(batch_pairs, data.vocab, config.max_len_question, config.max_len_candidate)
            with Graph() as graph:
                qa_logits, dom_logits = forward_pair(batch, params, strength)
                qa_term = masked_qa_loss(qa_logits, batch)
                if config.adaptation_enabled:
                    dom_term = domain_loss(dom_logits, batch)
                    loss = ad.add(qa_term, dom_term)
                else:
                    loss = qa_term
            loss_value = loss.data.item()
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"non-finite loss at step {step} (epoch {epoch}, batch {batch_index}, strength {strength:.6f})"
                )
            graph.backward(loss)
            adam_step(params.trainable(), state)

            qa_loss_value = qa_term.data.item()
            domain_loss_value = _value_cross_entropy(dom_logits.data, batch.domain_labels)
            domain_preds = dom_logits.data.argmax(axis=1)
            domain_acc = float((domain_preds == batch.domain_labels).mean())
            epoch_qa_losses.append(qa_loss_value)
            epoch_domain_losses.append(domain_loss_value)
            epoch_domain_accs.append(domain_acc)
            records.append(
                {
                    "kind": "step",
                    "step": step,
                    "epoch": epoch,
                    "lambda": strength,
                    "qa_loss": qa_loss_value,
                    "domain_loss": domain_loss_value,
                    "domain_acc": domain_acc,
                }
            )
            step += 1

        entry = {
            "kind": "epoch",
            "step": step - 1,
            "epoch": epoch,
            "lambda": records[-1]["lambda"],
            "qa_loss": float(np.mean(epoch_qa_losses)),
            "domain_loss": float(np.mean(epoch_domain_losses)),
            "domain_acc": float(np.mean(epoch_domain_accs)),
        }
        if data.qa_dev:
            dev_report = evaluate(Checkpoint(params=params, vocab=data.vocab), data.qa_dev, "dev")
            entry["dev_accuracy"] = dev_report.accuracy
            if best_dev_accuracy is None or dev_report.accuracy > best_dev_accuracy:
                best_dev_accuracy = dev_report.accuracy
                best_params = copy_params(params)
        records.append(entry)
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            records.append({"kind": "snapshot", "epoch": epoch, "step": step - 1})

    final = Checkpoint(params=params, vocab=data.vocab)
    best = Checkpoint(params=best_params, vocab=data.vocab) if best_params is not None else final
    return TrainResult(
        best=best,
        final=final,
        log=records,
        best_dev_accuracy=best_dev_accuracy,
        total_steps=total_steps,
    )


# ---------------------------------------------------------------------------
# evaluation


EVAL_CHUNK = 64


def evaluate(checkpoint: Checkpoint, pairs: list[SentencePair], dataset_id: str = "eval") -> EvalReport:
    """Classify every labeled pair with the QA head and report the confusion."""
    if not pairs:
        raise UsageError("evaluate: empty pair set")
    if any(p.label not in (0, 1) for p in pairs):
        raise UsageError("evaluate: every pair must carry a 0/1 label")
    params = checkpoint.params
    vocab = checkpoint.vocab
    cfg = params.config
    tp = fp = tn = fn = 0
    for begin in range(0, len(pairs), EVAL_CHUNK):
        chunk = pairs[begin : begin + EVAL_CHUNK]
        q_rows, q_lens, c_rows, c_lens = [], [], [], []
        for pair in chunk:
            q_enc, q_len = encode_sequence(tokenize(pair.question), vocab, cfg.max_len_question)
            c_enc, c_len = encode_sequence(tokenize(pair.candidate), vocab, cfg.max_len_candidate)
            if q_len == 0 or c_len == 0:
                raise UsageError("evaluate: pair tokenizes to nothing")
            q_rows.append(q_enc)
            q_lens.append(q_len)
            c_rows.append(c_enc)
            c_lens.append(c_len)
        q_vecs = encode_batch(np.stack(q_rows), np.asarray(q_lens), params.embedding, params.question_encoder)
        c_vecs = encode_batch(np.stack(c_rows), np.asarray(c_lens), params.embedding, params.candidate_encoder)
        logits = apply_head(ad.concat(q_vecs, c_vecs), params.qa_head).data
        preds = (logits[:, 1] > logits[:, 0]).astype(int)
        for pair, pred in zip(chunk, preds):
            if pred == 1 and pair.label == 1:
                tp += 1
            elif pred == 1 and pair.label == 0:
                fp += 1
            elif pred == 0 and pair.label == 0:
                tn += 1
            else:
                fn += 1
    return EvalReport.from_counts(dataset_id, tp=tp, fp=fp, tn=tn, fn=fn)


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationResult:
    no_adapt_source: EvalReport
    no_adapt_target: EvalReport
    adapt_source: EvalReport
    adapt_target: EvalReport

    def format_table(self) -> str:
        rows = [
            ("No domain-adapt", "Source", self.no_adapt_source.accuracy),
            ("No domain-adapt", "Target", self.no_adapt_target.accuracy),
            ("Domain-adapt", "Source", self.adapt_source.accuracy),
            ("Domain-adapt", "Target", self.adapt_target.accuracy),
        ]
        lines = [f"{'Arm':<18} {'Eval data':<10} {'Accuracy':>9}"]
        for arm, eval_data, acc in rows:
            lines.append(f"{arm:<18} {eval_data:<10} {100 * acc:>8.2f}%")
        return "\n".join(lines)

    @property
    def target_gap(self) -> float:
        return self.adapt_target.accuracy - self.no_adapt_target.accuracy


def ablation_compare(
    config: TrainConfig,
    data: TrainData,
    model_config: ModelConfig,
    source_eval: list[SentencePair],
    target_eval: list[SentencePair],
) -> AblationResult:
    """Train the adaptation and no-adaptation arms on identical data and seed."""
    results = {}
    for adapt in (False, True):
        arm_config = replace(config, adaptation_enabled=adapt)
        outcome = train(arm_config, data, model_config)
        ckpt = outcome.best
        label = "adapt" if adapt else "no_adapt"
        results[f"{label}_source"] = evaluate(ckpt, source_eval, f"{label}/source")
        results[f"{label}_target"] = evaluate(ckpt, target_eval, f"{label}/target")
    return AblationResult(
        no_adapt_source=results["no_adapt_source"],
        no_adapt_target=results["no_adapt_target"],
        adapt_source=results["adapt_source"],
        adapt_target=results["adapt_target"],
    )

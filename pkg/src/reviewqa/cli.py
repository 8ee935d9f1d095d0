"""Command-line entry point: ingest, train, eval, infer.

Exit codes: 0 success, 1 internal error, 2 input/parse/config error,
3 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_run_config
from .data import load_gold_qr, read_pairs, run_ingest
from .errors import (
    ConfigError,
    DataError,
    NumericError,
    ParameterError,
    ParseError,
    ReviewQAError,
    UsageError,
)
from .metrics import EvalReport
from .model import Checkpoint, ModelConfig, load_checkpoint, predict_text, save_checkpoint
from .text import build_vocab, load_embeddings, tokenize
from .training import TrainData, evaluate, train
from .utils import canonical_json, derive_seed

log = logging.getLogger(__name__)

INPUT_ERRORS = (ParseError, DataError, ConfigError, UsageError, ParameterError, OSError)


def cmd_ingest(args) -> int:
    config = load_run_config(args.config)
    inputs = [p for paths in config.categories.values() for p in paths]
    config.require_inputs(inputs)
    stats = run_ingest(
        {name: (str(qa), str(reviews)) for name, (qa, reviews) in config.categories.items()},
        config.pairs_dir(),
        seed=config.seed,
        neg_ratio=config.neg_ratio,
        qr_per_question=config.qr_per_question,
        split_ratios=config.split_ratios,
    )
    print(json.dumps(json.loads(stats.to_json()), indent=2, sort_keys=True))
    print(f"pair files written to {config.pairs_dir()}")
    return 0


def _load_train_data(config: RunConfig) -> TrainData:
    pairs_dir = config.pairs_dir()
    needed = [pairs_dir / "qa_train.tsv", pairs_dir / "qa_dev.tsv", pairs_dir / "qr_train.tsv"]
    config.require_inputs([config.embeddings_path] + needed)
    qa_train = read_pairs(pairs_dir / "qa_train.tsv")
    qa_dev = read_pairs(pairs_dir / "qa_dev.tsv")
    qr_train = read_pairs(pairs_dir / "qr_train.tsv")
    corpus = (tokenize(p.question) for p in qa_train + qr_train)
    candidates = (tokenize(p.candidate) for p in qa_train + qr_train)

    def streams():
        yield from corpus
        yield from candidates

    vocab = build_vocab(streams(), min_count=config.min_count)
    table = load_embeddings(
        config.embeddings_path, vocab, derive_seed(config.seed, "init.embeddings"), dim=config.embedding_dim
    )
    return TrainData(qa_train=qa_train, qr_train=qr_train, vocab=vocab, embedding=table.matrix, qa_dev=qa_dev)


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    if args.no_adaptation:
        config.train.adaptation_enabled = False
    data = _load_train_data(config)
    model_config = ModelConfig(
        vocab_size=len(data.vocab),
        embedding_dim=config.embedding_dim,
        hidden_size=config.hidden_size,
        head_hidden1=config.head_hidden1,
        head_hidden2=config.head_hidden2,
        max_len_question=config.train.max_len_question,
        max_len_candidate=config.train.max_len_candidate,
    )
    result = train(config.train, data, model_config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = config.output_dir / "checkpoint.bin"
    save_checkpoint(result.best, checkpoint_path)
    log_path = config.output_dir / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as handle:
        for record in result.log:
            handle.write(canonical_json(record) + "\n")
    if result.best_dev_accuracy is not None:
        print(f"best dev accuracy: {result.best_dev_accuracy:.4f}")
    print(f"checkpoint written to {checkpoint_path}")
    print(f"training log written to {log_path}")
    return 0


def cmd_eval(args) -> int:
    config = load_run_config(args.config)
    checkpoint_path = Path(args.checkpoint)
    config.require_inputs([checkpoint_path])
    checkpoint = load_checkpoint(checkpoint_path)
    if args.data:
        config.require_inputs([Path(args.data)])
        pairs = read_pairs(args.data)
        dataset_id = args.dataset_id or Path(args.data).stem
    elif args.target:
        if config.gold_qr is None:
            raise ConfigError("config has no data.gold_qr path for target evaluation")
        config.require_inputs([config.gold_qr])
        pairs = load_gold_qr(config.gold_qr)
        dataset_id = args.dataset_id or "target"
    else:
        test_path = config.pairs_dir() / "qa_test.tsv"
        config.require_inputs([test_path])
        pairs = read_pairs(test_path)
        dataset_id = args.dataset_id or "source"
    report = evaluate(checkpoint, pairs, dataset_id)
    reports_dir = config.output_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    report_path = reports_dir / f"{dataset_id}.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.summary())
    print(f"report written to {report_path}")
    return 0


def cmd_infer(args) -> int:
    if not args.question.strip():
        raise UsageError("question must not be empty")
    if not args.candidate.strip():
        raise UsageError("candidate must not be empty")
    checkpoint_path = Path(args.checkpoint)
    if not checkpoint_path.exists():
        raise ConfigError(f"checkpoint does not exist: {checkpoint_path}")
    checkpoint = load_checkpoint(checkpoint_path)
    label, confidence = predict_text(checkpoint.params, checkpoint.vocab, args.question, args.candidate)
    print(f"label={label} confidence={confidence:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewqa",
        description="Train and run a domain-adversarial question/review-sentence classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse raw dumps and write train/dev/test pair files")
    p_ingest.add_argument("--config", required=True, help="path to the JSON run config")
    p_ingest.set_defaults(func=cmd_ingest)

    p_train = sub.add_parser("train", help="train on ingested pairs and write a checkpoint")
    p_train.add_argument("--config", required=True)
    p_train.add_argument(
        "--no-adaptation", action="store_true", help="train the QA-only ablation (no domain adaptation)"
    )
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint and write a report")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    which = p_eval.add_mutually_exclusive_group()
    which.add_argument("--source", action="store_true", help="evaluate on the held-out QA test split (default)")
    which.add_argument("--target", action="store_true", help="evaluate on the gold question/review pairs")
    which.add_argument("--data", help="evaluate on an explicit labeled pair file")
    p_eval.add_argument("--dataset-id", help="identifier used in the report and its filename")
    p_eval.set_defaults(func=cmd_eval)

    p_infer = sub.add_parser("infer", help="classify one question/candidate pair")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--question", required=True)
    p_infer.add_argument("--candidate", required=True)
    p_infer.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReviewQAError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

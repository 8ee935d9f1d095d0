"""Run configuration: a single JSON file validated against a strict schema.

Unknown keys are rejected so that a config never silently misspells an
option. Relative paths are resolved against the config file's directory,
which makes bundled configs self-contained. The output directory can be
overridden with the REVIEWQA_OUTPUT_DIR environment variable (the only
environment override).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .training import TrainConfig

OUTPUT_DIR_ENV = "REVIEWQA_OUTPUT_DIR"


def _check_keys(obj: dict, allowed: set[str], required: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {sorted(missing)}")


def _typed(obj: dict, key: str, types, path: str, default=None):
    if key not in obj:
        return default
    value = obj[key]
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}.{key}: expected {types}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{path}.{key}: expected {types}, got {type(value).__name__}")
    return value


@dataclass
class RunConfig:
    seed: int
    output_dir: Path
    embeddings_path: Path
    embedding_dim: int
    categories: dict[str, tuple[Path, Path]]
    gold_qr: Path | None
    neg_ratio: float
    qr_per_question: int
    split_ratios: tuple[float, float, float]
    min_count: int
    hidden_size: int
    head_hidden1: int
    head_hidden2: int
    train: TrainConfig

    def pairs_dir(self) -> Path:
        return self.output_dir / "pairs"

    def require_inputs(self, paths: list[Path]) -> None:
        """Fail fast, before any side effect, if a referenced input is missing."""
        for path in paths:
            if not Path(path).exists():
                raise ConfigError(f"input path does not exist: {path}")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else (base / candidate)

    _check_keys(raw, {"seed", "output_dir", "embeddings", "data", "model", "train"},
                {"seed", "output_dir", "embeddings", "data"}, "config")

    seed = _typed(raw, "seed", int, "config")
    output_dir = _typed(raw, "output_dir", str, "config")

    emb = _typed(raw, "embeddings", dict, "config")
    _check_keys(emb, {"path", "dim"}, {"path"}, "config.embeddings")
    embeddings_path = resolve(_typed(emb, "path", str, "config.embeddings"))
    embedding_dim = _typed(emb, "dim", int, "config.embeddings", default=300)

    data = _typed(raw, "data", dict, "config")
    _check_keys(
        data,
        {"categories", "gold_qr", "neg_ratio", "qr_per_question", "split_ratios", "min_count"},
        {"categories"},
        "config.data",
    )
    raw_categories = _typed(data, "categories", dict, "config.data")
    if not raw_categories:
        raise ConfigError("config.data.categories: at least one category is required")
    categories = {}
    for name, entry in raw_categories.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"config.data.categories.{name}: expected an object")
        _check_keys(entry, {"qa", "reviews"}, {"qa", "reviews"}, f"config.data.categories.{name}")
        categories[name] = (
            resolve(_typed(entry, "qa", str, f"config.data.categories.{name}")),
            resolve(_typed(entry, "reviews", str, f"config.data.categories.{name}")),
        )
    gold_raw = _typed(data, "gold_qr", str, "config.data")
    gold_qr = resolve(gold_raw) if gold_raw else None
    neg_ratio = float(_typed(data, "neg_ratio", (int, float), "config.data", default=1.0))
    qr_per_question = _typed(data, "qr_per_question", int, "config.data", default=2)
    ratios_raw = _typed(data, "split_ratios", list, "config.data", default=[0.8, 0.1, 0.1])
    if len(ratios_raw) != 3 or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in ratios_raw):
        raise ConfigError("config.data.split_ratios: expected three numbers")
    split_ratios = tuple(float(r) for r in ratios_raw)
    min_count = _typed(data, "min_count", int, "config.data", default=1)
    if min_count < 1:
        raise ConfigError("config.data.min_count: must be >= 1")

    model = _typed(raw, "model", dict, "config", default={})
    _check_keys(model, {"hidden_size", "head_hidden1", "head_hidden2"}, set(), "config.model")
    hidden_size = _typed(model, "hidden_size", int, "config.model", default=300)
    head_hidden1 = _typed(model, "head_hidden1", int, "config.model", default=512)
    head_hidden2 = _typed(model, "head_hidden2", int, "config.model", default=256)

    train_raw = _typed(raw, "train", dict, "config", default={})
    _check_keys(
        train_raw,
        {"epochs", "batch_size", "learning_rate", "mix_ratio", "adaptation",
         "max_len_question", "max_len_candidate", "checkpoint_every"},
        set(),
        "config.train",
    )
    mix_raw = _typed(train_raw, "mix_ratio", list, "config.train", default=[1, 1])
    if len(mix_raw) != 2 or not all(isinstance(m, int) and not isinstance(m, bool) for m in mix_raw):
        raise ConfigError("config.train.mix_ratio: expected two integers")
    train_config = TrainConfig(
        epochs=_typed(train_raw, "epochs", int, "config.train", default=5),
        batch_size=_typed(train_raw, "batch_size", int, "config.train", default=8),
        learning_rate=float(_typed(train_raw, "learning_rate", (int, float), "config.train", default=1e-3)),
        seed=seed,
        adaptation_enabled=_typed(train_raw, "adaptation", bool, "config.train", default=True),
        mix_ratio=(mix_raw[0], mix_raw[1]),
        neg_ratio=neg_ratio,
        max_len_question=_typed(train_raw, "max_len_question", int, "config.train", default=50),
        max_len_candidate=_typed(train_raw, "max_len_candidate", int, "config.train", default=65),
        checkpoint_every=_typed(train_raw, "checkpoint_every", int, "config.train", default=0),
    )
    train_config.validate()

    env_out = os.environ.get(OUTPUT_DIR_ENV)
    out_path = Path(env_out) if env_out else resolve(output_dir)

    return RunConfig(
        seed=seed,
        output_dir=out_path,
        embeddings_path=embeddings_path,
        embedding_dim=embedding_dim,
        categories=categories,
        gold_qr=gold_qr,
        neg_ratio=neg_ratio,
        qr_per_question=qr_per_question,
        split_ratios=split_ratios,
        min_count=min_count,
        hidden_size=hidden_size,
        head_hidden1=head_hidden1,
        head_hidden2=head_hidden2,
        train=train_config,
    )

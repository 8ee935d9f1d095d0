"""Domain-adversarial sentence-pair classification for product question answering."""

from .autodiff import AdamState, Graph, Tensor, adam_step, backward, grad_reverse, softmax_cross_entropy
from .data import QA_KIND, QR_KIND, SentencePair
from .metrics import EvalReport
from .model import (
    Checkpoint,
    ModelConfig,
    ModelParams,
    PairBatch,
    adaptation_schedule,
    bilstm_encode,
    forward_pair,
    load_checkpoint,
    predict_text,
    save_checkpoint,
    total_loss,
)
from .text import Vocabulary, build_vocab, encode_sequence, load_embeddings, tokenize
from .training import TrainConfig, TrainData, ablation_compare, evaluate, make_batches, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Checkpoint",
    "EvalReport",
    "Graph",
    "ModelConfig",
    "ModelParams",
    "PairBatch",
    "QA_KIND",
    "QR_KIND",
    "SentencePair",
    "Tensor",
    "TrainConfig",
    "TrainData",
    "Vocabulary",
    "ablation_compare",
    "adam_step",
    "adaptation_schedule",
    "backward",
    "bilstm_encode",
    "build_vocab",
    "encode_sequence",
    "evaluate",
    "forward_pair",
    "grad_reverse",
    "load_checkpoint",
    "load_embeddings",
    "make_batches",
    "predict_text",
    "save_checkpoint",
    "softmax_cross_entropy",
    "tokenize",
    "total_loss",
    "train",
]

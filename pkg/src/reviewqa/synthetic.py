"""Synthetic two-domain relevance task for controlled adaptation experiments.

Relevance is decided purely by shared content tokens: a candidate answers a
question iff it carries the question's content token. Candidates are padded
with domain-specific style tokens that carry no label information, and the
two domains use disjoint style vocabularies. The source style vocabulary is
tiny, so a source-only model never learns to keep its content readout stable
under unfamiliar style tokens; the target style vocabulary is large and
unseen, which reliably corrupts that readout. The adaptation arm sees target
candidates through the domain loss and is pushed to make the encoding
invariant to style tokens, which is exactly what lets the relevance head
transfer. This mirrors the answers-versus-reviews shift at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import QA_KIND, QR_KIND, SentencePair


@dataclass
class SyntheticTask:
    n_content: int = 4          # distinct content tokens, shared by both domains
    n_source_style: int = 2     # style tokens seen in source candidates
    n_target_style: int = 24    # style tokens seen only in target candidates
    n_filler: int = 2           # neutral question filler tokens
    style_padding: int = 4      # style tokens per candidate, content sits mid-sequence

    def content(self, i: int) -> str:
        return f"c{i}"

    def question_text(self, content_index: int, rng: np.random.Generator) -> str:
        fillers = [f"f{rng.integers(self.n_filler)}" for _ in range(2)]
        return f"{fillers[0]} {self.content(content_index)} {fillers[1]}"

    def _candidate(self, content_index: int, style_pool: int, prefix: str, rng: np.random.Generator) -> str:
        style = [f"{prefix}{rng.integers(style_pool)}" for _ in range(self.style_padding)]
        middle = self.style_padding // 2
        tokens = style[:middle] + [self.content(content_index)] + style[middle:]
        return " ".join(tokens)

    def source_candidate(self, content_index: int, rng: np.random.Generator) -> str:
        return self._candidate(content_index, self.n_source_style, "s", rng)

    def target_candidate(self, content_index: int, rng: np.random.Generator) -> str:
        return self._candidate(content_index, self.n_target_style, "t", rng)

    def _other_content(self, content_index: int, rng: np.random.Generator) -> int:
        other = int(rng.integers(self.n_content - 1))
        return other if other < content_index else other + 1

    def make_source_pairs(self, n_questions: int, seed: int) -> list[SentencePair]:
        """Balanced labeled QA pairs: one positive and one negative per question."""
        rng = np.random.Generator(np.random.PCG64(seed))
        pairs = []
        for q in range(n_questions):
            content = int(rng.integers(self.n_content))
            question = self.question_text(content, rng)
            asin = f"src{q}"
            pairs.append(
                SentencePair(QA_KIND, question, self.source_candidate(content, rng), 1, asin, asin)
            )
            wrong = self._other_content(content, rng)
            pairs.append(
                SentencePair(QA_KIND, question, self.source_candidate(wrong, rng), 0, asin, asin)
            )
        return pairs

    def make_target_pairs(self, n_questions: int, seed: int, labeled: bool) -> list[SentencePair]:
        """Target-domain pairs; balanced labels when labeled, unlabeled QR rows otherwise."""
        rng = np.random.Generator(np.random.PCG64(seed))
        pairs = []
        for q in range(n_questions):
            content = int(rng.integers(self.n_content))
            question = self.question_text(content, rng)
            asin = f"tgt{q}"
            match = bool(rng.integers(2))
            candidate_content = content if match else self._other_content(content, rng)
            candidate = self.target_candidate(candidate_content, rng)
            pairs.append(
                SentencePair(
                    QR_KIND,
                    question,
                    candidate,
                    int(match) if labeled else None,
                    asin,
                    asin,
                )
            )
        return pairs


def random_embeddings(vocab_size: int, dim: int, seed: int) -> np.ndarray:
    """Uniform [-0.1, 0.1] rows with a zero PAD row; stands in for a pretrained table."""
    rng = np.random.Generator(np.random.PCG64(seed))
    matrix = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
    matrix[0] = 0.0
    return matrix

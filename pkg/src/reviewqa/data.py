"""Corpus ingestion: QA and review dumps in, train-ready sentence pairs out.

Input files are strict JSON lines (one object per line). The loosely quoted
upstream dumps (python-literal dicts) are handled by normalize_loose_dump,
which rewrites them into the strict form, keeping the parsers themselves
strict.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError, ParseError
from .utils import canonical_json, derive_seed

log = logging.getLogger(__name__)

QA_KIND = "QA"
QR_KIND = "QR"

OPEN_ENDED = "open-ended"

# Fraction of malformed lines above which parsing aborts.
MALFORMED_ABORT_RATIO = 0.10


@dataclass
class QARecord:
    asin: str
    question: str
    answers: list[str]
    question_type: str


@dataclass
class ReviewRecord:
    asin: str
    review_text: str
    sentences: list[str]


@dataclass
class SentencePair:
    """One (question, candidate) training or evaluation row.

    QA pairs carry a 0/1 relevance label; QR pairs built by the pipeline are
    unlabeled (gold evaluation rows are the exception). candidate_asin can
    differ from question_asin only for sampled negatives.
    """

    kind: str
    question: str
    candidate: str
    label: int | None = None
    question_asin: str = ""
    candidate_asin: str = ""


def _clean_text(text: str) -> str:
    # Pair files are tab-separated; keep record text single-line and tab-free.
    return re.sub(r"[\t\r\n]+", " ", text).strip()


# ---------------------------------------------------------------------------
# parsing


def _parse_jsonl(path, required: dict[str, type]):
    """Yield (lineno, record) for well-formed lines; collect malformed counts.

    Returns (records, total, malformed). A line is malformed if it is not a
    JSON object or misses/mistypes a required field. Extra fields are ignored.
    """
    records = []
    total = 0
    malformed = 0
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                malformed += 1
                log.warning("%s: line %d: invalid JSON, skipped", path, lineno)
                continue
            if not isinstance(obj, dict) or any(
                key not in obj or not isinstance(obj[key], typ) for key, typ in required.items()
            ):
                malformed += 1
                log.warning("%s: line %d: missing or mistyped required field, skipped", path, lineno)
                continue
            records.append(obj)
    if total and malformed / total > MALFORMED_ABORT_RATIO:
        raise ParseError(f"{path}: {malformed} of {total} lines malformed (more than 10%)")
    return records, total, malformed


def parse_qa(path) -> list[QARecord]:
    """Parse a QA dump; keeps open-ended questions that have at least one answer."""
    rows, _, _ = _parse_jsonl(path, {"asin": str, "question": str, "answers": list, "questionType": str})
    records = []
    for obj in rows:
        if obj["questionType"] != OPEN_ENDED:
            continue
        question = _clean_text(obj["question"])
        answers = [_clean_text(a) for a in obj["answers"] if isinstance(a, str) and _clean_text(a)]
        if not obj["asin"] or not question or not answers:
            continue
        records.append(QARecord(asin=obj["asin"], question=question, answers=answers, question_type=OPEN_ENDED))
    return records


def parse_reviews(path) -> list[ReviewRecord]:
    """Parse a review dump; de-duplicates on (asin, reviewText)."""
    rows, _, _ = _parse_jsonl(path, {"asin": str, "reviewText": str})
    seen: set[tuple[str, str]] = set()
    records = []
    for obj in rows:
        text = _clean_text(obj["reviewText"])
        if not obj["asin"] or not text:
            continue
        key = (obj["asin"], text)
        if key in seen:
            continue
        seen.add(key)
        records.append(ReviewRecord(asin=obj["asin"], review_text=text, sentences=split_sentences(text)))
    return records


# Words after which a terminal dot does not end a sentence.
ABBREVIATIONS = {
    "mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.",
    "i.e.", "inc.", "ltd.", "no.", "approx.", "oz.", "ft.", "in.", "lbs.", "lb.",
}

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s)")


def split_sentences(text: str) -> list[str]:
    """Split on ., !, ? followed by whitespace, guarded by an abbreviation list."""
    sentences = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        end = match.end()
        chunk = text[start:end].strip()
        last_word = chunk.rsplit(None, 1)[-1].lower() if chunk else ""
        if last_word in ABBREVIATIONS:
            continue
        if chunk:
            sentences.append(chunk)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def normalize_loose_dump(in_path, out_path, kind: str) -> int:
    """Rewrite a loosely quoted (python-literal) dump as strict JSON lines.

    kind="qa" keeps asin/question/answers/questionType, accepting both plain
    answer strings and {"answer": ...} objects, and a single "answer" field.
    kind="reviews" keeps asin/reviewText. Returns the number of lines written.
    """
    if kind not in ("qa", "reviews"):
        raise ParameterError(f"kind must be 'qa' or 'reviews', got {kind!r}")
    written = 0
    with open(in_path, "r", encoding="utf-8") as src, open(out_path, "w", encoding="utf-8") as dst:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                obj = ast.literal_eval(line.strip())
            except (ValueError, SyntaxError):
                log.warning("%s: line %d: not a python literal, skipped", in_path, lineno)
                continue
            if not isinstance(obj, dict):
                continue
            if kind == "qa":
                answers = obj.get("answers", [])
                if not answers and "answer" in obj:
                    answers = [obj["answer"]]
                flat = []
                for a in answers:
                    if isinstance(a, dict):
                        a = a.get("answer", "")
                    if isinstance(a, str) and a.strip():
                        flat.append(a)
                out = {
                    "asin": obj.get("asin", ""),
                    "question": obj.get("question", ""),
                    "answers": flat,
                    "questionType": obj.get("questionType", OPEN_ENDED),
                }
            else:
                out = {"asin": obj.get("asin", ""), "reviewText": obj.get("reviewText", "")}
            dst.write(json.dumps(out, sort_keys=True) + "\n")
            written += 1
    return written


# ---------------------------------------------------------------------------
# joining and pair construction


@dataclass
class MatchedProduct:
    asin: str
    category: str
    questions: list[QARecord]
    reviews: list[ReviewRecord]


@dataclass
class MatchedCorpus:
    """Products present in both the QA and the review stream, by category."""

    products: list[MatchedProduct]

    def by_category(self) -> dict[str, list[MatchedProduct]]:
        out: dict[str, list[MatchedProduct]] = {}
        for product in self.products:
            out.setdefault(product.category, []).append(product)
        return out

    @property
    def unique_asins(self) -> int:
        return len({p.asin for p in self.products})

    def qa_pair_count(self, category: str | None = None) -> int:
        return sum(
            len(q.answers)
            for p in self.products
            if category is None or p.category == category
            for q in p.questions
        )

    def review_count(self, category: str | None = None) -> int:
        return sum(len(p.reviews) for p in self.products if category is None or p.category == category)


def join_by_asin(
    qa_by_category: dict[str, list[QARecord]],
    reviews_by_category: dict[str, list[ReviewRecord]],
) -> MatchedCorpus:
    """Keep only products that appear in both streams of their category."""
    products = []
    for category in sorted(qa_by_category):
        questions: dict[str, list[QARecord]] = {}
        for record in qa_by_category[category]:
            questions.setdefault(record.asin, []).append(record)
        reviews: dict[str, list[ReviewRecord]] = {}
        for record in reviews_by_category.get(category, []):
            reviews.setdefault(record.asin, []).append(record)
        for asin in sorted(set(questions) & set(reviews)):
            products.append(
                MatchedProduct(asin=asin, category=category, questions=questions[asin], reviews=reviews[asin])
            )
    return MatchedCorpus(products=products)


def build_qa_pairs(corpus: MatchedCorpus, neg_ratio: float, seed: int) -> list[SentencePair]:
    """Labeled QA pairs: every true answer is a positive; negatives are answers
    of other questions from the same category but a different product.

    A category with no other product to draw from falls back to corpus-wide
    sampling with a warning. Deterministic under the seed.
    """
    if neg_ratio <= 0:
        raise ParameterError(f"neg_ratio must be > 0, got {neg_ratio}")
    rng = np.random.Generator(np.random.PCG64(seed))

    answers_by_category: dict[str, list[tuple[str, str]]] = {}
    for product in corpus.products:
        for record in product.questions:
            for answer in record.answers:
                answers_by_category.setdefault(product.category, []).append((product.asin, answer))
    all_answers = [entry for entries in answers_by_category.values() for entry in entries]

    pairs = []
    for product in corpus.products:
        for record in product.questions:
            for answer in record.answers:
                pairs.append(
                    SentencePair(
                        kind=QA_KIND,
                        question=record.question,
                        candidate=answer,
                        label=1,
                        question_asin=product.asin,
                        candidate_asin=product.asin,
                    )
                )
            pool = [e for e in answers_by_category[product.category] if e[0] != product.asin]
            if not pool:
                pool = [e for e in all_answers if e[0] != product.asin]
                if pool:
                    log.warning(
                        "category %s has no other product for %s; drawing negatives corpus-wide",
                        product.category,
                        product.asin,
                    )
            n_neg = int(neg_ratio * len(record.answers) + 0.5)
            if not pool:
                log.warning("no negative pool for question on %s; skipping negatives", product.asin)
                continue
            chosen = rng.choice(len(pool), size=n_neg, replace=len(pool) < n_neg)
            for idx in chosen:
                neg_asin, neg_answer = pool[int(idx)]
                pairs.append(
                    SentencePair(
                        kind=QA_KIND,
                        question=record.question,
                        candidate=neg_answer,
                        label=0,
                        question_asin=product.asin,
                        candidate_asin=neg_asin,
                    )
                )
    return pairs


def build_qr_pairs(corpus: MatchedCorpus, per_question_cap: int, seed: int) -> list[SentencePair]:
    """Unlabeled QR pairs: each question paired with up to `cap` review
    sentences sampled from the same product's reviews."""
    if per_question_cap < 1:
        raise ParameterError(f"per_question_cap must be >= 1, got {per_question_cap}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = []
    for product in corpus.products:
        sentence_pool = [s for review in product.reviews for s in review.sentences]
        for record in product.questions:
            if not sentence_pool:
                log.warning("product %s has no review sentences; question skipped for QR", product.asin)
                continue
            n = min(per_question_cap, len(sentence_pool))
            chosen = rng.choice(len(sentence_pool), size=n, replace=False)
            for idx in sorted(int(i) for i in chosen):
                pairs.append(
                    SentencePair(
                        kind=QR_KIND,
                        question=record.question,
                        candidate=sentence_pool[idx],
                        label=None,
                        question_asin=product.asin,
                        candidate_asin=product.asin,
                    )
                )
    return pairs


def load_gold_qr(path) -> list[SentencePair]:
    """Read the hand-labeled question/review-sentence evaluation file.

    Tab-separated (question, sentence, label); every row must carry a 0/1
    label, otherwise the gold set is incomplete and loading aborts.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3 or fields[2] not in ("0", "1"):
                raise DataError(f"{path}: line {lineno}: expected question<TAB>sentence<TAB>0/1 label")
            question, sentence, label = fields
            if not question.strip() or not sentence.strip():
                raise DataError(f"{path}: line {lineno}: empty question or sentence")
            pairs.append(
                SentencePair(kind=QR_KIND, question=question, candidate=sentence, label=int(label))
            )
    return pairs


def label_proportions(pairs: list[SentencePair]) -> dict[str, float]:
    labeled = [p for p in pairs if p.label is not None]
    if not labeled:
        return {"0": 0.0, "1": 0.0}
    ones = sum(p.label for p in labeled)
    return {"0": (len(labeled) - ones) / len(labeled), "1": ones / len(labeled)}


def split(pairs: list[SentencePair], ratios: tuple[float, ...], seed: int) -> list[list[SentencePair]]:
    """Partition pairs at the question level, so no question straddles splits."""
    if any(r <= 0 for r in ratios):
        raise ParameterError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"split ratios must sum to 1, got sum {sum(ratios)!r}")
    keys = sorted({(p.question_asin, p.question) for p in pairs})
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(keys))
    shuffled = [keys[int(i)] for i in order]

    assignment: dict[tuple[str, str], int] = {}
    bounds = [int(round(sum(ratios[: i + 1]) * len(keys))) for i in range(len(ratios))]
    start = 0
    for part, stop in enumerate(bounds):
        for key in shuffled[start:stop]:
            assignment[key] = part
        start = stop

    partitions: list[list[SentencePair]] = [[] for _ in ratios]
    for pair in pairs:
        partitions[assignment[(pair.question_asin, pair.question)]].append(pair)
    return partitions


# ---------------------------------------------------------------------------
# pair file i/o and statistics


def write_pairs(path, pairs: list[SentencePair]) -> None:
    """Write pairs as TSV: pair_kind, label-or-dash, question, candidate, asin."""
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            label = "-" if pair.label is None else str(pair.label)
            handle.write(
                "\t".join([pair.kind, label, pair.question, pair.candidate, pair.question_asin]) + "\n"
            )


def read_pairs(path) -> list[SentencePair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 5 or fields[0] not in (QA_KIND, QR_KIND) or fields[1] not in ("-", "0", "1"):
                raise ParseError(f"{path}: line {lineno}: bad pair row")
            kind, label, question, candidate, asin = fields
            pairs.append(
                SentencePair(
                    kind=kind,
                    question=question,
                    candidate=candidate,
                    label=None if label == "-" else int(label),
                    question_asin=asin,
                    candidate_asin=asin if kind == QR_KIND else "",
                )
            )
    return pairs


@dataclass
class DatasetStats:
    """Counts reported by ingestion; totals always equal emitted stream lengths."""

    categories: dict[str, dict[str, int]] = field(default_factory=dict)
    unique_asins: int = 0
    qa_pairs_total: int = 0          # matched (question, true answer) pairs
    reviews_total: int = 0
    labeled_pairs_total: int = 0     # emitted QA rows, negatives included
    qr_pairs_total: int = 0
    split_sizes: dict[str, int] = field(default_factory=dict)
    split_label_proportions: dict[str, dict[str, float]] = field(default_factory=dict)

    def validate(self) -> None:
        for name, props in self.split_label_proportions.items():
            if self.split_sizes.get(name, 0) and abs(sum(props.values()) - 1.0) > 1e-9:
                raise DataError(f"label proportions for split {name} do not sum to 1")

    def to_json(self) -> str:
        return canonical_json(
            {
                "categories": self.categories,
                "unique_asins": self.unique_asins,
                "qa_pairs_total": self.qa_pairs_total,
                "reviews_total": self.reviews_total,
                "labeled_pairs_total": self.labeled_pairs_total,
                "qr_pairs_total": self.qr_pairs_total,
                "split_sizes": self.split_sizes,
                "split_label_proportions": self.split_label_proportions,
            }
        )


SPLIT_NAMES = ("train", "dev", "test")


def run_ingest(
    category_files: dict[str, tuple[str, str]],
    out_dir,
    seed: int,
    neg_ratio: float = 1.0,
    qr_per_question: int = 2,
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> DatasetStats:
    """Full ingestion pipeline: parse, join, build pairs, split, write files.

    Writes qa_train.tsv / qa_dev.tsv / qa_test.tsv / qr_train.tsv and
    stats.json under out_dir.
    """
    qa_by_category = {}
    reviews_by_category = {}
    for category in sorted(category_files):
        qa_path, review_path = category_files[category]
        qa_by_category[category] = parse_qa(qa_path)
        reviews_by_category[category] = parse_reviews(review_path)

    corpus = join_by_asin(qa_by_category, reviews_by_category)
    qa_pairs = build_qa_pairs(corpus, neg_ratio, derive_seed(seed, "ingest.negatives"))
    qr_pairs = build_qr_pairs(corpus, qr_per_question, derive_seed(seed, "ingest.qr"))
    splits = split(qa_pairs, split_ratios, derive_seed(seed, "ingest.split"))

    stats = DatasetStats(unique_asins=corpus.unique_asins)
    for category in sorted(category_files):
        stats.categories[category] = {
            "qa_pairs": corpus.qa_pair_count(category),
            "reviews": corpus.review_count(category),
            "matched_asins": len([p for p in corpus.products if p.category == category]),
        }
    stats.qa_pairs_total = corpus.qa_pair_count()
    stats.reviews_total = corpus.review_count()
    stats.labeled_pairs_total = len(qa_pairs)
    stats.qr_pairs_total = len(qr_pairs)
    for name, part in zip(SPLIT_NAMES, splits):
        stats.split_sizes[name] = len(part)
        stats.split_label_proportions[name] = label_proportions(part)
    stats.validate()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, splits):
        write_pairs(out / f"qa_{name}.tsv", part)
    write_pairs(out / "qr_train.tsv", qr_pairs)
    (out / "stats.json").write_text(stats.to_json() + "\n", encoding="utf-8")
    return stats

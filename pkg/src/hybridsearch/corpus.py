"""WANDS-format corpus loading, text normalization and balanced training pairs."""

from __future__ import annotations

import csv
import enum
import logging
import sys
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusError

logger = logging.getLogger(__name__)

# WANDS descriptions exceed the csv module's default field limit.
csv.field_size_limit(sys.maxsize)

PRODUCT_ID_COLUMNS = ("product_id",)
TITLE_COLUMNS = ("product_name", "title")
DESCRIPTION_COLUMNS = ("product_description", "description")
QUERY_ID_COLUMNS = ("query_id",)
QUERY_TEXT_COLUMNS = ("query", "text")
GRADE_COLUMNS = ("label", "grade")


class Grade(enum.Enum):
    EXACT = "exact"
    PARTIAL = "partial"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class Product:
    product_id: int
    title: str
    description: str = ""
    extra_fields: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def text(self, title_only: bool = False) -> str:
        if title_only or not self.description:
            return self.title
        return f"{self.title} {self.description}"


@dataclass(frozen=True)
class Query:
    query_id: int
    text: str


@dataclass(frozen=True)
class RelevanceLabel:
    query_id: int
    product_id: int
    grade: Grade


@dataclass(frozen=True)
class TrainingPair:
    query_id: int
    product_id: int
    target: int


@dataclass
class Corpus:
    products: list[Product]
    queries: list[Query]
    labels: list[RelevanceLabel]

    def __post_init__(self) -> None:
        self.product_by_id = {p.product_id: p for p in self.products}
        self.query_by_id = {q.query_id: q for q in self.queries}


@dataclass
class LoadStats:
    products: int = 0
    queries: int = 0
    labels: int = 0
    rejected_rows: list[tuple[str, int, str]] = field(default_factory=list)
    dropped_labels: int = 0


def normalize_text(raw: str) -> str:
    """Lowercase, NFC-compose and collapse whitespace runs to single spaces."""
    text = unicodedata.normalize("NFC", raw).lower()
    # lower() can produce decomposed sequences (e.g. for "İ"), so recompose.
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.split())


def _pick_column(header: list[str], candidates: tuple[str, ...], path: Path, required: bool = True):
    lowered = [h.strip().lower() for h in header]
    for name in candidates:
        if name in lowered:
            return lowered.index(name)
    if required:
        raise CorpusError(f"{path}: missing required column {candidates[0]!r} (header: {header})")
    return None


def _read_tsv(path: Path):
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"{path}: file not found")
    fh = open(path, encoding="utf-8", newline="")
    reader = csv.reader(fh, delimiter="\t")
    try:
        header = next(reader)
    except StopIteration:
        return None, iter(()), fh
    return header, reader, fh


def _parse_int(value: str) -> int:
    return int(value.strip())


def load_corpus(
    products_path,
    queries_path,
    labels_path,
    strict: bool = False,
) -> tuple[list[Product], list[Query], list[RelevanceLabel]]:
    """Load the three tab-separated WANDS files.

    Columns are located by header name. Malformed rows are rejected with their
    line number (``strict=True`` turns any rejection into a ``CorpusError``);
    labels whose ids do not resolve are dropped with a warning.
    """
    products, queries, labels, stats = load_corpus_with_stats(products_path, queries_path, labels_path)
    if strict and stats.rejected_rows:
        detail = "; ".join(f"{Path(f).name}:{line}: {msg}" for f, line, msg in stats.rejected_rows[:20])
        raise CorpusError(f"{len(stats.rejected_rows)} malformed rows: {detail}")
    return products, queries, labels


def load_corpus_with_stats(products_path, queries_path, labels_path):
    stats = LoadStats()

    def reject(path, line, msg):
        stats.rejected_rows.append((str(path), line, msg))
        logger.error("%s:%d: %s", path, line, msg)

    products: list[Product] = []
    header, reader, fh = _read_tsv(products_path)
    with fh:
        if header is None:
            raise CorpusError(f"{products_path}: empty file, header row expected")
        id_col = _pick_column(header, PRODUCT_ID_COLUMNS, products_path)
        title_col = _pick_column(header, TITLE_COLUMNS, products_path)
        desc_col = _pick_column(header, DESCRIPTION_COLUMNS, products_path, required=False)
        extra_cols = [i for i in range(len(header)) if i not in (id_col, title_col, desc_col)]
        seen: set[int] = set()
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                pid = _parse_int(row[id_col])
                title = normalize_text(row[title_col])
            except (IndexError, ValueError):
                reject(products_path, line, "unparseable product row")
                continue
            if not title:
                reject(products_path, line, f"product {pid} has an empty title")
                continue
            if pid in seen:
                reject(products_path, line, f"duplicate product_id {pid}")
                continue
            seen.add(pid)
            desc = normalize_text(row[desc_col]) if desc_col is not None and desc_col < len(row) else ""
            extra = {header[i]: row[i] for i in extra_cols if i < len(row)}
            products.append(Product(pid, title, desc, extra))

    queries: list[Query] = []
    header, reader, fh = _read_tsv(queries_path)
    with fh:
        if header is None:
            raise CorpusError(f"{queries_path}: empty file, header row expected")
        id_col = _pick_column(header, QUERY_ID_COLUMNS, queries_path)
        text_col = _pick_column(header, QUERY_TEXT_COLUMNS, queries_path)
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                qid = _parse_int(row[id_col])
                text = normalize_text(row[text_col])
            except (IndexError, ValueError):
                reject(queries_path, line, "unparseable query row")
                continue
            if not text:
                reject(queries_path, line, f"query {qid} has empty text")
                continue
            if qid in seen:
                reject(queries_path, line, f"duplicate query_id {qid}")
                continue
            seen.add(qid)
            queries.append(Query(qid, text))

    labels: list[RelevanceLabel] = []
    header, reader, fh = _read_tsv(labels_path)
    with fh:
        if header is None:
            logger.warning("%s: empty label file", labels_path)
        else:
            qcol = _pick_column(header, QUERY_ID_COLUMNS, labels_path)
            pcol = _pick_column(header, PRODUCT_ID_COLUMNS, labels_path)
            gcol = _pick_column(header, GRADE_COLUMNS, labels_path)
            product_ids = {p.product_id for p in products}
            query_ids = {q.query_id for q in queries}
            seen_pairs: set[tuple[int, int]] = set()
            for row in reader:
                line = reader.line_num
                if not row:
                    continue
                try:
                    qid = _parse_int(row[qcol])
                    pid = _parse_int(row[pcol])
                    grade = Grade(row[gcol].strip().lower())
                except (IndexError, ValueError):
                    reject(labels_path, line, "unparseable label row")
                    continue
                if qid not in query_ids or pid not in product_ids:
                    logger.warning("%s:%d: label (%d, %d) references an unknown id; dropped",
                                   labels_path, line, qid, pid)
                    stats.dropped_labels += 1
                    continue
                if (qid, pid) in seen_pairs:
                    reject(labels_path, line, f"duplicate label for ({qid}, {pid})")
                    continue
                seen_pairs.add((qid, pid))
                labels.append(RelevanceLabel(qid, pid, grade))
            if not labels:
                logger.warning("%s: no labels loaded", labels_path)

    stats.products, stats.queries, stats.labels = len(products), len(queries), len(labels)
    logger.info("loaded %d products, %d queries, %d labels (%d rows rejected, %d labels dropped)",
                stats.products, stats.queries, stats.labels, len(stats.rejected_rows), stats.dropped_labels)
    return products, queries, labels, stats


def build_training_pairs(labels: list[RelevanceLabel], seed: int) -> list[TrainingPair]:
    """Drop Partial, downsample the majority class, shuffle; all seeded."""
    positives = [TrainingPair(l.query_id, l.product_id, 1) for l in labels if l.grade is Grade.EXACT]
    negatives = [TrainingPair(l.query_id, l.product_id, -1) for l in labels if l.grade is Grade.IRRELEVANT]
    if not positives or not negatives:
        raise CorpusError(
            f"cannot balance training pairs: {len(positives)} Exact, {len(negatives)} Irrelevant labels"
        )
    rng = np.random.default_rng(seed)
    n = min(len(positives), len(negatives))
    if len(positives) > n:
        keep = np.sort(rng.choice(len(positives), size=n, replace=False))
        positives = [positives[i] for i in keep]
    elif len(negatives) > n:
        keep = np.sort(rng.choice(len(negatives), size=n, replace=False))
        negatives = [negatives[i] for i in keep]
    pairs = positives + negatives
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


def load_brand_list(path) -> list[str]:
    """One term per line; normalized, blanks and duplicates dropped, order kept."""
    terms: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            term = normalize_text(raw)
            if term and term not in seen:
                seen.add(term)
                terms.append(term)
    return terms

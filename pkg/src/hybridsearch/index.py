"""Threshold-gated term index over query tokens, and retrieval from it.

For every query-vocabulary token ``t`` and product ``j`` the per-token score is
``max_k e_t . e_{j,k}`` for H1 (max-sim with a one-token query) or
``e_t . mean_k e_{j,k}`` for DE/SE. The posting list of ``t`` keeps the
products whose score exceeds the threshold, best first.

Index file layout (little-endian)::

    8 bytes   magic b"HSINDEX\\x00"
    u32       format version (1)
    u32       header length H
    H bytes   header JSON: gamma (repr string, may be "inf"/"-inf"),
              n_terms, n_postings, n_products, vocab_fingerprint,
              model_fingerprint, meta
    n_terms x (i64 token_id, i64 offset, i64 length)     term directory
    n_postings x i64                                    product ids
    n_postings x f64                                    scores
"""

from __future__ import annotations

import enum
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .catalog import Catalog, PackedTokens, pack
from .corpus import Query
from .encoder import EmbeddingModel, score
from .errors import FingerprintError, FormatError
from .tokenizer import Vocabulary, tokenize

logger = logging.getLogger(__name__)

INDEX_MAGIC = b"HSINDEX\x00"
INDEX_VERSION = 1
TERM_CHUNK = 256


class Rescoring(enum.Enum):
    ACCUMULATE = "accumulate"
    EXACT = "exact"


@dataclass
class TermIndex:
    gamma: float
    postings: dict[int, tuple[np.ndarray, np.ndarray]]
    vocab_fingerprint: str
    model_fingerprint: str
    n_products: int
    meta: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TermIndex):
            return NotImplemented
        if (repr(self.gamma), self.vocab_fingerprint, self.model_fingerprint, self.n_products) != (
                repr(other.gamma), other.vocab_fingerprint, other.model_fingerprint, other.n_products):
            return False
        if self.postings.keys() != other.postings.keys():
            return False
        return all(
            np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            for a, b in ((self.postings[t], other.postings[t]) for t in self.postings)
        )

    def posting(self, token_id: int) -> tuple[np.ndarray, np.ndarray]:
        return self.postings.get(token_id, (np.zeros(0, dtype=np.int64), np.zeros(0)))

    def list_lengths(self) -> np.ndarray:
        return np.array([len(self.postings[t][0]) for t in sorted(self.postings)], dtype=np.int64)

    def check(self, model: EmbeddingModel | None = None, vocab: Vocabulary | None = None) -> None:
        if vocab is not None and vocab.fingerprint != self.vocab_fingerprint:
            raise FingerprintError("index was built with a different vocabulary")
        if model is not None and model.fingerprint != self.model_fingerprint:
            raise FingerprintError("index was built with a different model")


@dataclass
class RetrievalResult:
    product_ids: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.product_ids)

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.product_ids.tolist(), self.scores.tolist()))


@dataclass
class ScoreStats:
    count: int
    mean: float
    std: float


def collect_query_vocab(queries: list[Query], vocab: Vocabulary) -> set[int]:
    out: set[int] = set()
    for q in queries:
        out.update(tokenize(vocab, q.text).ids)
    return out


def _unique_tokens(catalog: Catalog) -> PackedTokens:
    cached = getattr(catalog, "_unique_tokens", None)
    if cached is None:
        t = catalog.tokens
        cached = pack(t.keys, [np.unique(t.row(i)) for i in range(len(t))])
        catalog._unique_tokens = cached
    return cached


def _product_means(model: EmbeddingModel, catalog: Catalog) -> np.ndarray:
    t = catalog.tokens
    return _kernels.segment_mean(model.product_table, t.ids, t.offsets)


def term_scores(model: EmbeddingModel, catalog: Catalog, term_ids):
    """Yield ``(term_chunk, scores)`` with ``scores[i, j]`` = per-token score of
    ``term_chunk[i]`` against the j-th catalog product (ascending product id)."""
    term_ids = np.asarray(sorted(term_ids), dtype=np.int64)
    if model.maxsim:
        uniq = _unique_tokens(catalog)
        for a in range(0, len(term_ids), TERM_CHUNK):
            chunk = term_ids[a:a + TERM_CHUNK]
            vocab_scores = _kernels.pair_dots(model.query_table[chunk], model.product_table)
            yield chunk, _kernels.segment_max(vocab_scores, uniq.ids, uniq.offsets)
    else:
        means = _product_means(model, catalog)
        for a in range(0, len(term_ids), TERM_CHUNK):
            chunk = term_ids[a:a + TERM_CHUNK]
            yield chunk, _kernels.pair_dots(model.query_table[chunk], means)


def build_index(model: EmbeddingModel, vocab: Vocabulary, catalog: Catalog, query_vocab, gamma: float,
                meta: dict | None = None) -> TermIndex:
    model.check_vocab(vocab)
    if catalog.vocab_fingerprint != vocab.fingerprint:
        raise FingerprintError("catalog was tokenized with a different vocabulary")
    if not query_vocab:
        logger.warning("empty query vocabulary; the index will be empty")
    pids = catalog.product_ids
    postings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for chunk, scores in term_scores(model, catalog, query_vocab):
        for t, row in zip(chunk.tolist(), scores):
            keep = np.flatnonzero(row > gamma)
            s = row[keep]
            p = pids[keep]
            order = np.lexsort((p, -s))
            postings[t] = (p[order].astype(np.int64), s[order].astype(np.float64))
    return TermIndex(float(gamma), postings, vocab.fingerprint, model.fingerprint, len(catalog), meta or {})


def calibrate_threshold(model: EmbeddingModel, catalog: Catalog, query_vocab,
                        target_fraction: float = 0.01) -> tuple[float, ScoreStats]:
    """Threshold at which the mean posting-list length is ``target_fraction``
    of the catalog, plus mean/std of the full per-token score distribution."""
    n_terms, n_products = len(query_vocab), len(catalog)
    keep = int(round(target_fraction * n_terms * n_products))
    top = np.zeros(0)
    total = 0
    s1 = 0.0
    s2 = 0.0
    for _, scores in term_scores(model, catalog, query_vocab):
        flat = scores.ravel()
        total += flat.size
        s1 += float(flat.sum())
        s2 += float(np.square(flat).sum())
        merged = np.concatenate([top, flat])
        if merged.size > keep + 1:
            merged = np.partition(merged, merged.size - keep - 1)[merged.size - keep - 1:]
        top = merged
    if total == 0:
        return math.inf, ScoreStats(0, 0.0, 0.0)
    mean = s1 / total
    std = math.sqrt(max(s2 / total - mean * mean, 0.0))
    if keep <= 0:
        gamma = float(top.max())
    elif keep >= total:
        gamma = -math.inf
    else:
        # the (keep+1)-th largest score: exactly `keep` scores exceed it, barring ties
        gamma = float(np.sort(top)[-keep - 1])
    return gamma, ScoreStats(total, mean, std)


def retrieve(index: TermIndex, model: EmbeddingModel, vocab: Vocabulary, query,
             rescoring=Rescoring.ACCUMULATE, catalog: Catalog | None = None,
             top_k: int | None = None) -> RetrievalResult:
    """Union the posting lists of the query's tokens and rank the candidates.

    ``accumulate`` sums stored per-token scores (absent entries count 0, repeated
    query tokens count once per occurrence); ``exact`` rescores every candidate
    with the full model score and needs ``catalog``.
    """
    index.check(model, vocab)
    rescoring = Rescoring(rescoring)
    if isinstance(query, Query):
        ids = tokenize(vocab, query.text).ids
    elif isinstance(query, str):
        ids = tokenize(vocab, query).ids
    else:
        ids = list(getattr(query, "ids", query))
    empty = RetrievalResult(np.zeros(0, dtype=np.int64), np.zeros(0))
    if not ids:
        logger.warning("query tokenizes to nothing; empty result")
        return empty
    parts = [index.posting(t) for t in ids]
    parts = [p for p in parts if len(p[0])]
    if not parts:
        return empty
    all_pids = np.concatenate([p[0] for p in parts])
    cand, inverse = np.unique(all_pids, return_inverse=True)
    if rescoring is Rescoring.ACCUMULATE:
        scores = np.bincount(inverse, weights=np.concatenate([p[1] for p in parts]), minlength=len(cand))
    else:
        if catalog is None:
            raise ValueError("exact rescoring needs the tokenized catalog")
        scores = np.array([score(model, ids, catalog.ids_of(int(p))) for p in cand])
    order = np.lexsort((cand, -scores))
    if top_k is not None:
        order = order[:top_k]
    return RetrievalResult(cand[order], scores[order])


def save_index(index: TermIndex, path) -> None:
    terms = sorted(index.postings)
    lengths = [len(index.postings[t][0]) for t in terms]
    offsets = np.concatenate([[0], np.cumsum(lengths, dtype=np.int64)])[:-1] if terms else np.zeros(0)
    header = {
        "gamma": repr(float(index.gamma)),
        "n_terms": len(terms),
        "n_postings": int(sum(lengths)),
        "n_products": index.n_products,
        "vocab_fingerprint": index.vocab_fingerprint,
        "model_fingerprint": index.model_fingerprint,
        "meta": index.meta,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    directory = np.zeros((len(terms), 3), dtype="<i8")
    if terms:
        directory[:, 0] = terms
        directory[:, 1] = offsets
        directory[:, 2] = lengths
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<II", INDEX_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(directory.tobytes())
        for t in terms:
            fh.write(np.ascontiguousarray(index.postings[t][0], dtype="<i8").tobytes())
        for t in terms:
            fh.write(np.ascontiguousarray(index.postings[t][1], dtype="<f8").tobytes())


def load_index(path, model: EmbeddingModel | None = None, vocab: Vocabulary | None = None) -> TermIndex:
    data = Path(path).read_bytes()
    if data[:8] != INDEX_MAGIC:
        raise FormatError(f"{path}: not an index file (expected magic {INDEX_MAGIC!r})")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated index header")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version} (expected {INDEX_VERSION})")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: truncated or corrupted index header") from None
    nt, npost = header["n_terms"], header["n_postings"]
    pos = 16 + hlen
    expected = pos + nt * 24 + npost * 16
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)} (truncated?)")
    directory = np.frombuffer(data, dtype="<i8", count=nt * 3, offset=pos).reshape(nt, 3)
    pos += nt * 24
    pids = np.frombuffer(data, dtype="<i8", count=npost, offset=pos).astype(np.int64)
    scores = np.frombuffer(data, dtype="<f8", count=npost, offset=pos + npost * 8).astype(np.float64)
    postings = {
        int(t): (pids[o:o + n], scores[o:o + n]) for t, o, n in directory.tolist()
    }
    index = TermIndex(float(header["gamma"]), postings, header["vocab_fingerprint"],
                      header["model_fingerprint"], header["n_products"], header["meta"])
    index.check(model, vocab)
    return index

"""Tokenized products and queries packed as flat id arrays with offsets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Product, Query
from .tokenizer import Vocabulary, tokenize

logger = logging.getLogger(__name__)


@dataclass
class PackedTokens:
    """Row ``i`` owns ``ids[offsets[i]:offsets[i + 1]]``."""

    keys: np.ndarray
    ids: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    def row(self, i: int) -> np.ndarray:
        return self.ids[self.offsets[i]:self.offsets[i + 1]]

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)


def pack(keys, sequences) -> PackedTokens:
    lengths = [len(s) for s in sequences]
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    ids = np.fromiter((i for s in sequences for i in s), dtype=np.int64, count=int(offsets[-1]))
    return PackedTokens(np.asarray(keys, dtype=np.int64), ids, offsets)


class Catalog:
    """Products tokenized once, in ascending product_id order."""

    def __init__(self, products: list[Product], vocab: Vocabulary, title_only: bool = False):
        self.vocab_fingerprint = vocab.fingerprint
        self.title_only = title_only
        ordered = sorted(products, key=lambda p: p.product_id)
        keys, seqs = [], []
        for p in ordered:
            ids = tokenize(vocab, p.text(title_only)).ids
            if not ids:
                logger.warning("product %d tokenizes to nothing; skipped", p.product_id)
                continue
            keys.append(p.product_id)
            seqs.append(ids)
        self.tokens = pack(keys, seqs)
        self.product_ids = self.tokens.keys
        self.position = {int(pid): i for i, pid in enumerate(self.product_ids)}
        self.titles = {p.product_id: p.title for p in ordered}

    def __len__(self) -> int:
        return len(self.product_ids)

    def ids_of(self, product_id: int) -> np.ndarray:
        return self.tokens.row(self.position[product_id])


def tokenize_queries(queries: list[Query], vocab: Vocabulary) -> dict[int, list[int]]:
    return {q.query_id: tokenize(vocab, q.text).ids for q in queries}

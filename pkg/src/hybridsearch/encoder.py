"""Token-embedding encoders and the two similarity families.

``H1`` scores with token-wise max-sim (sum over query tokens of the best dot
product against any product token). ``DE`` (two tables) and ``SE`` (one shared
table) score with the dot product of mean-pooled token vectors. No
normalization is applied anywhere.

Model file layout (little-endian)::

    8 bytes   magic b"HSMODEL\\x00"
    u32       format version (1)
    u32       header length H
    H bytes   header JSON: variant, dim, vocab_size, vocab_fingerprint, seed,
              n_tables, has_optimizer, optimizer, meta
    tables    n_tables x vocab_size x dim float64, row-major (query table first)
    optimizer optional: u64 step, then m and v arrays shaped like the tables
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FingerprintError, FormatError, InvariantError
from .tokenizer import TokenSequence, Vocabulary

MODEL_MAGIC = b"HSMODEL\x00"
MODEL_VERSION = 1


class Variant(enum.Enum):
    H1 = "H1"
    DE = "DE"
    SE = "SE"


class Side(enum.Enum):
    QUERY = "query"
    PRODUCT = "product"


@dataclass
class EmbeddingModel:
    variant: Variant
    dim: int
    query_table: np.ndarray
    product_table: np.ndarray
    vocab_fingerprint: str
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, variant, vocab: Vocabulary, dim: int, seed: int) -> "EmbeddingModel":
        """Uniform init in [-1/sqrt(dim), 1/sqrt(dim)]."""
        variant = Variant(variant)
        if dim <= 0:
            raise ValueError("dim must be positive")
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        q = rng.uniform(-bound, bound, size=(len(vocab), dim))
        p = q if variant is Variant.SE else rng.uniform(-bound, bound, size=(len(vocab), dim))
        return cls(variant, dim, q, p, vocab.fingerprint, seed)

    @property
    def tied(self) -> bool:
        return self.variant is Variant.SE

    @property
    def maxsim(self) -> bool:
        return self.variant is Variant.H1

    @property
    def vocab_size(self) -> int:
        return self.query_table.shape[0]

    def tables(self) -> list[np.ndarray]:
        return [self.query_table] if self.tied else [self.query_table, self.product_table]

    def table(self, side) -> np.ndarray:
        return self.query_table if Side(side) is Side.QUERY else self.product_table

    def check_vocab(self, vocab: Vocabulary) -> None:
        if vocab.fingerprint != self.vocab_fingerprint:
            raise FingerprintError(
                f"model was trained with vocabulary {self.vocab_fingerprint[:12]}, "
                f"got {vocab.fingerprint[:12]}"
            )

    def check_finite(self) -> None:
        for t in self.tables():
            if not np.all(np.isfinite(t)):
                raise InvariantError("embedding table contains non-finite values")

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([self.variant.value, self.dim, self.vocab_fingerprint, self.seed]).encode())
        for t in self.tables():
            h.update(np.ascontiguousarray(t, dtype="<f8").tobytes())
        return h.hexdigest()

    def copy(self) -> "EmbeddingModel":
        q = self.query_table.copy()
        p = q if self.tied else self.product_table.copy()
        return EmbeddingModel(self.variant, self.dim, q, p, self.vocab_fingerprint, self.seed, dict(self.meta))


@dataclass
class EncodedText:
    vectors: np.ndarray
    token_ids: np.ndarray


def encode(model: EmbeddingModel, side, tokens: TokenSequence | list[int], vocab: Vocabulary | None = None) -> EncodedText:
    if vocab is not None:
        model.check_vocab(vocab)
    ids = np.asarray(tokens.ids if isinstance(tokens, TokenSequence) else tokens, dtype=np.int64)
    table = model.table(side)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise FingerprintError("token id outside the embedding table; model and vocabulary do not match")
    return EncodedText(table[ids].reshape(len(ids), model.dim), ids)


def _check_pair(q_enc: EncodedText, p_enc: EncodedText) -> None:
    if len(q_enc.vectors) == 0 or len(p_enc.vectors) == 0:
        raise ValueError("similarity is undefined for an empty token sequence")
    if q_enc.vectors.shape[1] != p_enc.vectors.shape[1]:
        raise ValueError("embedding dimensions differ")


def sim_pooled(q_enc: EncodedText, p_enc: EncodedText) -> float:
    _check_pair(q_enc, p_enc)
    q_mean = _kernels.row_mean(q_enc.vectors)[None]
    p_mean = _kernels.row_mean(p_enc.vectors)[None]
    return float(_kernels.pair_dots(q_mean, p_mean)[0, 0])


def sim_maxsim(q_enc: EncodedText, p_enc: EncodedText) -> float:
    _check_pair(q_enc, p_enc)
    return _kernels.seq_sum(_kernels.pair_dots(q_enc.vectors, p_enc.vectors).max(axis=1))


def score(model: EmbeddingModel, q_tokens, p_tokens) -> float:
    """The one scoring entry point: max-sim for H1, pooled dot product otherwise."""
    q_enc = encode(model, Side.QUERY, q_tokens)
    p_enc = encode(model, Side.PRODUCT, p_tokens)
    return sim_maxsim(q_enc, p_enc) if model.maxsim else sim_pooled(q_enc, p_enc)


def save_model(model: EmbeddingModel, path, optimizer_state: dict | None = None) -> None:
    model.check_finite()
    header = {
        "variant": model.variant.value,
        "dim": model.dim,
        "vocab_size": model.vocab_size,
        "vocab_fingerprint": model.vocab_fingerprint,
        "seed": model.seed,
        "n_tables": len(model.tables()),
        "has_optimizer": optimizer_state is not None,
        "optimizer": {k: v for k, v in (optimizer_state or {}).items() if k not in ("m", "v", "step")},
        "meta": model.meta,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(hbytes)))
        fh.write(hbytes)
        for t in model.tables():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
        if optimizer_state is not None:
            fh.write(struct.pack("<Q", optimizer_state["step"]))
            for arr in list(optimizer_state["m"]) + list(optimizer_state["v"]):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model_with_state(path) -> tuple[EmbeddingModel, dict | None]:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (expected magic {MODEL_MAGIC!r})")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated model header")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version} (expected {MODEL_VERSION})")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: truncated or corrupted model header") from None
    n, dim, nt = header["vocab_size"], header["dim"], header["n_tables"]
    table_bytes = n * dim * 8
    pos = 16 + hlen
    expected = pos + nt * table_bytes
    if header["has_optimizer"]:
        expected += 8 + 2 * nt * table_bytes
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)} (truncated?)")

    def read_table():
        nonlocal pos
        arr = np.frombuffer(data, dtype="<f8", count=n * dim, offset=pos).reshape(n, dim).astype(np.float64)
        pos += table_bytes
        return arr

    tables = [read_table() for _ in range(nt)]
    variant = Variant(header["variant"])
    q = tables[0]
    p = q if variant is Variant.SE else tables[1]
    model = EmbeddingModel(variant, dim, q, p, header["vocab_fingerprint"], header["seed"], header["meta"])
    state = None
    if header["has_optimizer"]:
        (step,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        m = [read_table() for _ in range(nt)]
        v = [read_table() for _ in range(nt)]
        state = dict(header["optimizer"], step=step, m=m, v=v)
    return model, state


def load_model(path) -> EmbeddingModel:
    return load_model_with_state(path)[0]

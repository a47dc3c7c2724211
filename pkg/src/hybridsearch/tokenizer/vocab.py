"""Vocabulary type and its on-disk format.

File layout (UTF-8 text, ``\\n`` line endings)::

    HYBRIDSEARCH-VOCAB 1
    sha256:<hex digest of line 3>
    <canonical JSON body>

The body holds ``kind``, ``tokens`` (index = token id), ``special_terms``,
``merges`` (BPE), ``token_log_probs`` (Unigram, aligned with ``tokens``) and
``meta`` (provenance; excluded from the fingerprint).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import FormatError

MAGIC = "HYBRIDSEARCH-VOCAB"
VERSION = 1
UNK = "<unk>"


class TokenizerKind(enum.Enum):
    WORD = "word"
    BPE = "bpe"
    UNIGRAM = "unigram"


@dataclass(eq=False)
class Vocabulary:
    kind: TokenizerKind
    tokens: list[str]
    special_terms: frozenset[str] = frozenset()
    merges: list[tuple[str, str]] = field(default_factory=list)
    token_log_probs: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.special_terms = frozenset(self.special_terms)
        self.merges = [tuple(m) for m in self.merges]
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("duplicate token surfaces")
        missing = [s for s in self.special_terms if s not in self.token_to_id]
        if missing:
            raise ValueError(f"special terms missing from tokens: {missing}")
        for t, lp in self.token_log_probs.items():
            if not (math.isfinite(lp) and lp <= 0.0):
                raise ValueError(f"log-prob of {t!r} must be finite and <= 0, got {lp}")
        self._fingerprint = None
        self._segmenter = None

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._body(False) == other._body(False)

    __hash__ = None

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = hashlib.sha256(_dumps(self._body(False)).encode()).hexdigest()
        return self._fingerprint

    def _body(self, with_meta: bool = True) -> dict:
        body = {
            "kind": self.kind.value,
            "tokens": list(self.tokens),
            "special_terms": sorted(self.special_terms),
            "merges": [list(m) for m in self.merges],
            "token_log_probs": (
                [self.token_log_probs[t] for t in self.tokens] if self.token_log_probs else None
            ),
        }
        if with_meta:
            body["meta"] = self.meta
        return body


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def save_vocab(vocab: Vocabulary, path) -> None:
    body = _dumps(vocab._body(True))
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    Path(path).write_bytes(f"{MAGIC} {VERSION}\nsha256:{digest}\n{body}\n".encode("utf-8"))


def load_vocab(path) -> Vocabulary:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not a UTF-8 vocabulary file ({exc})") from None
    lines = text.split("\n")
    header = lines[0].split(" ")
    if len(header) != 2 or header[0] != MAGIC:
        raise FormatError(f"{path}: bad header, expected magic string {MAGIC!r}")
    if header[1] != str(VERSION):
        raise FormatError(f"{path}: unsupported vocabulary version {header[1]!r} (expected {VERSION})")
    if len(lines) != 4 or lines[3] != "" or not lines[1].startswith("sha256:"):
        raise FormatError(f"{path}: truncated or malformed vocabulary file")
    body = lines[2]
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != lines[1][len("sha256:"):]:
        raise FormatError(f"{path}: checksum mismatch, file truncated or corrupted")
    data = json.loads(body)
    log_probs = data["token_log_probs"]
    return Vocabulary(
        kind=TokenizerKind(data["kind"]),
        tokens=data["tokens"],
        special_terms=frozenset(data["special_terms"]),
        merges=[tuple(m) for m in data["merges"]],
        token_log_probs=dict(zip(data["tokens"], log_probs)) if log_probs is not None else {},
        meta=data.get("meta", {}),
    )

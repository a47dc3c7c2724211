"""Applying a trained vocabulary to normalized text."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .vocab import TokenizerKind, Vocabulary

# Score of an out-of-alphabet character in unigram Viterbi, below any real piece.
UNK_PENALTY = 10.0


@dataclass
class TokenSequence:
    ids: list[int] = field(default_factory=list)
    surfaces: list[str] = field(default_factory=list)
    # True where a token begins a new whitespace-delimited word.
    word_starts: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)

    def join(self) -> str:
        """Inverse of tokenization: a space precedes every word-initial token but the first."""
        parts = []
        for i, (s, start) in enumerate(zip(self.surfaces, self.word_starts)):
            if start and i:
                parts.append(" ")
            parts.append(s)
        return "".join(parts)


def split_special_terms(text: str, special_terms) -> list[tuple[str, bool]]:
    """Split normalized text into ``(span, is_special)`` pieces.

    Special terms are matched longest-first, left to right, on whole-word
    boundaries, and may span several words. Non-special spans are single words.
    """
    if not text:
        return []
    words = text.split(" ")
    if not special_terms:
        return [(w, False) for w in words]
    by_first: dict[str, list[list[str]]] = {}
    for term in special_terms:
        parts = term.split(" ")
        by_first.setdefault(parts[0], []).append(parts)
    for cands in by_first.values():
        cands.sort(key=lambda p: (-len(" ".join(p)), p))
    out = []
    i = 0
    while i < len(words):
        for parts in by_first.get(words[i], ()):
            k = len(parts)
            if words[i:i + k] == parts:
                out.append((" ".join(parts), True))
                i += k
                break
        else:
            out.append((words[i], False))
            i += 1
    return out


def bpe_segment(word: str, ranks: dict[tuple[str, str], int]) -> list[str]:
    """Apply merges in rank order; each step merges every occurrence left to right."""
    symbols = list(word)
    while len(symbols) > 1:
        best = None
        best_rank = None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best, best_rank = pair, r
        if best is None:
            break
        merged = best[0] + best[1]
        out = []
        i = 0
        while i < len(symbols):
            if i + 1 < len(symbols) and symbols[i] == best[0] and symbols[i + 1] == best[1]:
                out.append(merged)
                i += 2
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
    return symbols


def viterbi_segment(word: str, log_probs: dict[str, float], max_len: int,
                    unk_score: float | None = None) -> tuple[list[str], float]:
    """Best segmentation of ``word`` under a unigram model.

    Maximizes the summed log-prob; ties go to fewer pieces, then to the longest
    leading piece. Characters with no piece score ``unk_score`` as single pieces
    (``None`` makes them unsegmentable, yielding ``([], -inf)``).
    """
    n = len(word)
    # best[i] = (score, n_pieces, first_piece_end) for the suffix word[i:]
    best: list[tuple[float, int, int] | None] = [None] * (n + 1)
    best[n] = (0.0, 0, n)
    for i in range(n - 1, -1, -1):
        cand = None
        for j in range(min(n, i + max_len), i, -1):
            tail = best[j]
            if tail is None:
                continue
            lp = log_probs.get(word[i:j])
            if lp is None:
                if j == i + 1 and unk_score is not None:
                    lp = unk_score
                else:
                    continue
            key = (lp + tail[0], -(tail[1] + 1))
            # j descends, so strict '>' keeps the longest piece on exact ties
            if cand is None or key > cand[0]:
                cand = (key, j)
        if cand is not None:
            (score, neg_pieces), j = cand
            best[i] = (score, -neg_pieces, j)
    if best[0] is None:
        return [], -math.inf
    pieces = []
    i = 0
    while i < n:
        j = best[i][2]
        pieces.append(word[i:j])
        i = j
    return pieces, best[0][0]


class Segmenter:
    """Per-vocabulary compiled state plus a word-level cache."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.unk = vocab.unk_id
        self.cache: dict[str, tuple[tuple[int, ...], tuple[str, ...]]] = {}
        if vocab.kind is TokenizerKind.BPE:
            self.ranks = {m: r for r, m in enumerate(vocab.merges)}
        elif vocab.kind is TokenizerKind.UNIGRAM:
            self.log_probs = {
                t: lp for t, lp in vocab.token_log_probs.items()
                if t not in vocab.special_terms and t != "<unk>"
            }
            self.max_len = max((len(t) for t in self.log_probs), default=1)
            self.unk_score = min(self.log_probs.values(), default=0.0) - UNK_PENALTY

    def word(self, word: str) -> tuple[tuple[int, ...], tuple[str, ...]]:
        hit = self.cache.get(word)
        if hit is not None:
            return hit
        t2i = self.vocab.token_to_id
        kind = self.vocab.kind
        if kind is TokenizerKind.WORD:
            pieces = [word]
        elif kind is TokenizerKind.BPE:
            pieces = bpe_segment(word, self.ranks)
        else:
            pieces, _ = viterbi_segment(word, self.log_probs, self.max_len, self.unk_score)
        ids = tuple(t2i.get(p, self.unk) for p in pieces)
        out = (ids, tuple(pieces))
        self.cache[word] = out
        return out


def tokenize(vocab: Vocabulary, text: str) -> TokenSequence:
    seg = vocab._segmenter
    if seg is None:
        seg = vocab._segmenter = Segmenter(vocab)
    seq = TokenSequence()
    t2i = vocab.token_to_id
    for span, special in split_special_terms(text, vocab.special_terms):
        if special:
            seq.ids.append(t2i[span])
            seq.surfaces.append(span)
            seq.word_starts.append(True)
            continue
        ids, pieces = seg.word(span)
        seq.ids.extend(ids)
        seq.surfaces.extend(pieces)
        seq.word_starts.extend([True] + [False] * (len(pieces) - 1))
    return seq

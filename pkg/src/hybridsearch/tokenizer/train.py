"""Word, BPE and unigram vocabulary training."""

from __future__ import annotations

import heapq
import logging
import math
from collections import Counter, defaultdict

from ..errors import ConfigError
from .segment import split_special_terms, viterbi_segment
from .vocab import UNK, TokenizerKind, Vocabulary

logger = logging.getLogger(__name__)

SUBSTRING_CAP = 16
EM_ITERATIONS = 2
# Count assigned to pieces absent from every best segmentation.
ZERO_COUNT_FLOOR = 0.1


def _prepare_specials(special_terms) -> list[str]:
    specials = sorted({t for t in special_terms if t})
    for t in specials:
        if t != " ".join(t.split()):
            raise ConfigError(f"special term {t!r} is not normalized")
    return specials


def count_words(corpus_texts, special_terms) -> tuple[Counter, Counter]:
    """Word and special-term frequencies, with special terms masked out of words."""
    words: Counter = Counter()
    specials: Counter = Counter()
    for text in corpus_texts:
        for span, is_special in split_special_terms(text, special_terms):
            (specials if is_special else words)[span] += 1
    return words, specials


def _base_tokens(specials: list[str]) -> list[str]:
    return [UNK] + specials


def train_word(corpus_texts, max_vocab: int, special_terms=frozenset()) -> Vocabulary:
    specials = _prepare_specials(special_terms)
    if not corpus_texts:
        raise ConfigError("cannot train a tokenizer on an empty corpus")
    if max_vocab < len(specials) + 1:
        raise ConfigError(f"max_vocab={max_vocab} cannot hold {len(specials)} special terms plus <unk>")
    words, _ = count_words(corpus_texts, specials)
    tokens = _base_tokens(specials)
    taken = set(tokens)
    ranked = sorted(words.items(), key=lambda kv: (-kv[1], kv[0]))
    for w, _ in ranked:
        if len(tokens) >= max_vocab:
            break
        if w not in taken:
            tokens.append(w)
            taken.add(w)
    return Vocabulary(TokenizerKind.WORD, tokens, frozenset(specials))


def _alphabet(words) -> list[str]:
    return sorted({ch for w in words for ch in w})


def train_bpe(corpus_texts, vocab_size: int, special_terms=frozenset()) -> Vocabulary:
    """Byte-pair merges within words; most frequent pair first, ties by smallest pair."""
    specials = _prepare_specials(special_terms)
    if not corpus_texts:
        raise ConfigError("cannot train a tokenizer on an empty corpus")
    words, _ = count_words(corpus_texts, specials)
    alphabet = _alphabet(words)
    tokens = _base_tokens(specials)
    floor = len(alphabet) + len(specials)
    if vocab_size < floor:
        raise ConfigError(
            f"vocab_size={vocab_size} is smaller than alphabet ({len(alphabet)}) + special terms ({len(specials)})"
        )
    taken = set(tokens)
    for ch in alphabet:
        if ch not in taken:
            tokens.append(ch)
            taken.add(ch)
    # <unk> is reserved and does not count against vocab_size
    budget = vocab_size + 1

    word_list = sorted(words)
    seqs = [list(w) for w in word_list]
    freqs = [words[w] for w in word_list]
    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, seq in enumerate(seqs):
        f = freqs[wi]
        for pair in zip(seq, seq[1:]):
            pair_counts[pair] += f
            where[pair].add(wi)
    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[str, str]] = []
    while len(tokens) < budget and heap:
        negc, pair = heapq.heappop(heap)
        if pair_counts.get(pair, 0) != -negc or negc == 0:
            continue
        merges.append(pair)
        merged = pair[0] + pair[1]
        if merged not in taken:
            tokens.append(merged)
            taken.add(merged)
        changed: set[tuple[str, str]] = set()
        for wi in sorted(where.pop(pair, ())):
            seq = seqs[wi]
            f = freqs[wi]
            for p in zip(seq, seq[1:]):
                pair_counts[p] -= f
                changed.add(p)
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[wi] = out
            for p in zip(out, out[1:]):
                pair_counts[p] += f
                where[p].add(wi)
                changed.add(p)
        for p in changed:
            c = pair_counts.get(p, 0)
            if c <= 0:
                pair_counts.pop(p, None)
                where.pop(p, None)
            else:
                heapq.heappush(heap, (-c, p))
    return Vocabulary(TokenizerKind.BPE, tokens, frozenset(specials), merges=merges)


def _seed_pieces(words: Counter, limit: int) -> dict[str, float]:
    """Frequency-scored substrings up to SUBSTRING_CAP; every character is kept."""
    chars: Counter = Counter()
    subs: Counter = Counter()
    for w, f in words.items():
        n = len(w)
        for i in range(n):
            chars[w[i]] += f
            for j in range(i + 2, min(n, i + SUBSTRING_CAP) + 1):
                subs[w[i:j]] += f
    ranked = sorted(subs.items(), key=lambda kv: (-kv[1], kv[0]))
    pieces = dict(chars)
    for s, f in ranked[:max(0, limit - len(chars))]:
        pieces[s] = f
    return pieces


def _normalize(counts: dict[str, float]) -> dict[str, float]:
    total = sum(counts.values())
    return {t: math.log(c / total) for t, c in counts.items()}


def _em_step(words: Counter, log_probs: dict[str, float], max_len: int):
    """Hard EM: count pieces in every word's best segmentation."""
    counts = dict.fromkeys(log_probs, 0.0)
    loss = 0.0
    for w, f in words.items():
        pieces, score = viterbi_segment(w, log_probs, max_len)
        loss -= f * score
        for p in pieces:
            counts[p] += f
    return counts, loss


def train_unigram(corpus_texts, vocab_size: int, special_terms=frozenset(),
                  seed_multiplier: float = 4.0, prune_fraction: float = 0.25) -> Vocabulary:
    """Unigram LM vocabulary: seed with frequent substrings, then alternate
    hard-EM re-estimation and pruning of the least useful pieces."""
    specials = _prepare_specials(special_terms)
    if not corpus_texts:
        raise ConfigError("cannot train a tokenizer on an empty corpus")
    if not 0.0 < prune_fraction < 1.0:
        raise ConfigError("prune_fraction must lie in (0, 1)")
    words, special_counts = count_words(corpus_texts, specials)
    alphabet = _alphabet(words)
    if vocab_size < len(alphabet) + len(specials):
        raise ConfigError(
            f"vocab_size={vocab_size} is smaller than alphabet ({len(alphabet)}) + special terms ({len(specials)})"
        )
    target = vocab_size - len(specials)
    seed = _seed_pieces(words, max(int(seed_multiplier * vocab_size), len(alphabet)))
    protected = set(alphabet)
    log_probs = _normalize(seed)
    max_len = max((len(t) for t in log_probs), default=1)

    counts = seed
    while True:
        for _ in range(EM_ITERATIONS):
            counts, loss = _em_step(words, log_probs, max_len)
            log_probs = _normalize({t: max(c, ZERO_COUNT_FLOOR) for t, c in counts.items()})
        if len(log_probs) <= target:
            break
        # Loss increase if a piece is removed: its occurrences are re-segmented
        # with the remaining pieces.
        delta = []
        for t, lp in list(log_probs.items()):
            if t in protected:
                continue
            c = counts[t]
            if c <= 0:
                delta.append((0.0, t))
                continue
            del log_probs[t]
            _, alt = viterbi_segment(t, log_probs, len(t))
            log_probs[t] = lp
            delta.append((c * (lp - alt), t))
        delta.sort()
        excess = len(log_probs) - target
        n_remove = min(excess, max(1, int(len(log_probs) * prune_fraction)))
        for _, t in delta[:n_remove]:
            del log_probs[t]
        logger.debug("unigram prune: %d pieces remain (loss %.1f)", len(log_probs), loss)
        log_probs = _normalize({t: max(counts[t], ZERO_COUNT_FLOOR) for t in log_probs})
        max_len = max(len(t) for t in log_probs)

    # Special terms get their observed frequency in the shared normalization.
    final_counts = {t: max(counts.get(t, 0.0), ZERO_COUNT_FLOOR) for t in log_probs}
    for s in specials:
        final_counts[s] = max(float(special_counts.get(s, 0)), ZERO_COUNT_FLOOR)
    final_lp = _normalize(final_counts)
    pieces = sorted((t for t in log_probs), key=lambda t: (-final_lp[t], t))
    tokens = _base_tokens(specials) + pieces
    token_lp = {t: final_lp[t] for t in specials}
    token_lp.update({t: final_lp[t] for t in pieces})
    token_lp[UNK] = min(token_lp.values(), default=0.0)
    # guard exact-zero rounding: log(c/total) can exceed 0 only through rounding
    token_lp = {t: min(v, 0.0) for t, v in token_lp.items()}
    return Vocabulary(TokenizerKind.UNIGRAM, tokens, frozenset(specials), token_log_probs=token_lp)

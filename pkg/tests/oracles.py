"""Independent reference implementations used by the tests and the acceptance suite."""

import itertools
import math
from collections import Counter

import numpy as np

from hybridsearch.encoder import EmbeddingModel, Variant


def brute_maxsim(qt, pt, q_ids, p_ids):
    total = 0.0
    for i in q_ids:
        best = None
        for j in p_ids:
            d = sum(qt[i, k] * pt[j, k] for k in range(qt.shape[1]))
            best = d if best is None or d > best else best
        total += best
    return total


def brute_pooled(qt, pt, q_ids, p_ids):
    dim = qt.shape[1]
    qm = [sum(qt[i, k] for i in q_ids) / len(q_ids) for k in range(dim)]
    pm = [sum(pt[j, k] for j in p_ids) / len(p_ids) for k in range(dim)]
    return sum(a * b for a, b in zip(qm, pm))


def brute_score(model, q_ids, p_ids):
    f = brute_maxsim if model.variant is Variant.H1 else brute_pooled
    return f(model.query_table, model.product_table, q_ids, p_ids)


def hinge(model, q, pos, neg, margin):
    return max(0.0, margin - brute_score(model, q, pos) + brute_score(model, q, neg))


def argmax_gap(model, q_ids, p_ids):
    """Smallest gap between the best and runner-up distinct product rows over query tokens."""
    distinct = sorted(set(p_ids))
    if len(distinct) < 2:
        return np.inf
    gaps = []
    for i in q_ids:
        d = np.sort(model.product_table[distinct] @ model.query_table[i])[::-1]
        gaps.append(d[0] - d[1])
    return min(gaps)


def numeric_gradient(model, q, pos, neg, margin, step=1e-5):
    """Central differences over every entry of every touched row of every table."""
    rows = sorted(set(q) | set(pos) | set(neg))
    out = []
    for table in model.tables():
        g = np.zeros_like(table)
        for r in rows:
            for k in range(table.shape[1]):
                old = table[r, k]
                table[r, k] = old + step
                up = hinge(model, q, pos, neg, margin)
                table[r, k] = old - step
                down = hinge(model, q, pos, neg, margin)
                table[r, k] = old
                g[r, k] = (up - down) / (2 * step)
        out.append(g)
    return out


def dense(grad_rows, like):
    g = np.zeros_like(like)
    for r, v in grad_rows.items():
        g[r] = v
    return g


def random_model(variant, vocab_size, dim, rng, fingerprint="test"):
    q = rng.normal(size=(vocab_size, dim))
    p = q if Variant(variant) is Variant.SE else rng.normal(size=(vocab_size, dim))
    return EmbeddingModel(Variant(variant), dim, q, p, fingerprint, 0)


def smooth_triplets(variant, count, seed, vocab_size=12, dim=4, margin=1.0, min_loss=1e-3, min_gap=1e-3):
    """Yield (model, q, pos, neg) at points where the hinge and the max are locally smooth."""
    rng = np.random.default_rng(seed)
    found = 0
    while found < count:
        model = random_model(variant, vocab_size, dim, rng)
        q, pos, neg = (list(rng.integers(vocab_size, size=rng.integers(1, 5))) for _ in range(3))
        if hinge(model, q, pos, neg, margin) <= min_loss:
            continue
        if variant == "H1" and min(argmax_gap(model, q, pos), argmax_gap(model, q, neg)) <= min_gap:
            continue
        found += 1
        yield model, q, pos, neg


def relative_error(analytic, numeric, floor=1e-6):
    """Max-norm relative error; ``floor`` keeps exactly-zero gradients (p+ and p- sharing
    every argmax row) from turning accumulation round-off into a large ratio."""
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), np.max(np.abs(a)), floor))


# ---------------------------------------------------------------- tokenizers

def brute_force_bpe_merges(texts, vocab_size):
    """Recount every adjacent pair from scratch after each merge."""
    words = Counter(w for t in texts for w in t.split(" ") if w)
    alphabet = sorted({c for w in words for c in w})
    budget = vocab_size - len(alphabet)
    merges = []
    surfaces = set(alphabet)
    while len(surfaces) - len(alphabet) < budget:
        counts = Counter()
        for w, f in words.items():
            seq = list(w)
            for a, b in merges:
                out, i = [], 0
                while i < len(seq):
                    if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                        out.append(a + b)
                        i += 2
                    else:
                        out.append(seq[i])
                        i += 1
                seq = out
            for pair in zip(seq, seq[1:]):
                counts[pair] += f
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p))
        merges.append(best)
        surfaces.add(best[0] + best[1])
    return merges


def exhaustive_best(word, log_probs):
    """All 2^(n-1) segmentations; best by score, then fewer pieces, then leftmost-longest."""
    n = len(word)
    cands = []
    for cuts in itertools.product([False, True], repeat=n - 1):
        pieces, start = [], 0
        for i, cut in enumerate(cuts, start=1):
            if cut:
                pieces.append(word[start:i])
                start = i
        pieces.append(word[start:])
        if all(p in log_probs for p in pieces):
            cands.append((math.fsum(log_probs[p] for p in pieces), pieces))
    top = max(s for s, _ in cands)
    near = [p for s, p in cands if s > top - 1e-9]
    near.sort(key=lambda p: (len(p), [-len(x) for x in p]))
    return top, near[0]

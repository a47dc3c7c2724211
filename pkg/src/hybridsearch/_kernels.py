"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``HYBRIDSEARCH_NUMBA`` is not
``0``; both paths produce identical results (tested), the numpy one only
slower. ``set_backend`` switches at runtime, mainly for tests and benchmarks.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("HYBRIDSEARCH_NUMBA", "1") != "0"


def set_backend(name: str) -> None:
    global USE_NUMBA
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# pair dots: out[i, j] = sum_k a[i, k] * b[j, k], summed strictly in k order
#
# BLAS reorders the k-sum depending on matrix shapes, so the same pair of
# vectors can score 1 ulp apart in two call sites. Every scoring path goes
# through this kernel instead, so mathematically tied scores are bit-equal and
# rankings break ties by product id everywhere.
# --------------------------------------------------------------------------

PAIR_BLOCK = 1 << 16


def _pair_dots_numpy(a, b):
    m, n, d = a.shape[0], b.shape[0], a.shape[1]
    if d == 0:
        return np.zeros((m, n))
    if m * n * d <= PAIR_BLOCK:
        # cumsum accumulates left to right; its last entry is the sequential sum
        return np.cumsum(a[:, None, :] * b[None, :, :], axis=2)[:, :, -1]
    out = a[:, 0:1] * b[None, :, 0]
    for k in range(1, d):
        out += a[:, k:k + 1] * b[None, :, k]
    return out


if HAS_NUMBA:
    @njit(cache=True)
    def _pair_dots_numba(a, b):
        m, n, d = a.shape[0], b.shape[0], a.shape[1]
        out = np.empty((m, n))
        for i in range(m):
            for j in range(n):
                s = 0.0
                for k in range(d):
                    s += a[i, k] * b[j, k]
                out[i, j] = s
        return out


def pair_dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if USE_NUMBA:
        return _pair_dots_numba(a, b)
    return _pair_dots_numpy(a, b)


def seq_sum(x: np.ndarray) -> float:
    """Left-to-right sum (``np.sum`` is pairwise for longer inputs)."""
    return float(np.cumsum(x)[-1]) if len(x) else 0.0


def row_mean(x: np.ndarray) -> np.ndarray:
    """Column means with rows added in order (``mean(axis=0)`` regroups the sum)."""
    return np.cumsum(x, axis=0)[-1] / x.shape[0]


def _segment_mean_numpy(table, ids, offsets):
    lengths = np.diff(offsets)
    out = np.zeros((len(lengths), table.shape[1]))
    for pos in range(int(lengths.max()) if len(lengths) else 0):
        live = np.flatnonzero(lengths > pos)
        out[live] += table[ids[offsets[live] + pos]]
    return out / lengths[:, None]


if HAS_NUMBA:
    @njit(cache=True)
    def _segment_mean_numba(table, ids, offsets):
        n_seg = offsets.shape[0] - 1
        d = table.shape[1]
        out = np.zeros((n_seg, d))
        for p in range(n_seg):
            for r in range(offsets[p], offsets[p + 1]):
                for k in range(d):
                    out[p, k] += table[ids[r], k]
            n = offsets[p + 1] - offsets[p]
            for k in range(d):
                out[p, k] /= n
        return out


def segment_mean(table: np.ndarray, ids: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Row ``p`` = mean of ``table[ids[offsets[p]:offsets[p + 1]]]``, summed in order."""
    table = np.ascontiguousarray(table, dtype=np.float64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if USE_NUMBA:
        return _segment_mean_numba(table, ids, offsets)
    return _segment_mean_numpy(table, ids, offsets)


# --------------------------------------------------------------------------
# segment max: out[t, p] = max_{k in offsets[p]:offsets[p+1]} scores[t, cols[k]]
# --------------------------------------------------------------------------

def _segment_max_numpy(scores, cols, offsets):
    n_terms = scores.shape[0]
    n_seg = len(offsets) - 1
    out = np.empty((n_terms, n_seg))
    if n_seg == 0:
        return out
    # reduceat needs non-empty segments; callers guarantee that
    step = 4096
    for a in range(0, n_seg, step):
        b = min(n_seg, a + step)
        lo, hi = offsets[a], offsets[b]
        block = scores[:, cols[lo:hi]]
        out[:, a:b] = np.maximum.reduceat(block, offsets[a:b] - lo, axis=1)
    return out


if HAS_NUMBA:
    @njit(cache=True)
    def _segment_max_numba(scores, cols, offsets):
        n_terms = scores.shape[0]
        n_seg = offsets.shape[0] - 1
        out = np.empty((n_terms, n_seg))
        for p in range(n_seg):
            lo = offsets[p]
            hi = offsets[p + 1]
            for t in range(n_terms):
                best = scores[t, cols[lo]]
                for k in range(lo + 1, hi):
                    v = scores[t, cols[k]]
                    if v > best:
                        best = v
                out[t, p] = best
        return out


def segment_max(scores: np.ndarray, cols: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if USE_NUMBA:
        return _segment_max_numba(scores, cols, offsets)
    return _segment_max_numpy(scores, cols, offsets)


# --------------------------------------------------------------------------
# triplet margin loss and its subgradient over a batch
# --------------------------------------------------------------------------

def _score_numpy(qt, pt, q, p, maxsim):
    """Returns (score, per-query-token argmax positions or None)."""
    Q = qt[q]
    P = pt[p]
    if maxsim:
        S = _pair_dots_numpy(Q, P)
        arg = np.argmax(S, axis=1)  # first maximum = lowest index
        return seq_sum(S[np.arange(len(q)), arg]), arg
    return float(_pair_dots_numpy(row_mean(Q)[None], row_mean(P)[None])[0, 0]), None


def _accumulate_numpy(qt, pt, q, p, maxsim, arg, sign, grad_q, grad_p):
    if maxsim:
        for i in range(len(q)):
            j = arg[i]
            grad_q[q[i]] += sign * pt[p[j]]
            grad_p[p[j]] += sign * qt[q[i]]
    else:
        q_mean = row_mean(qt[q])
        p_mean = row_mean(pt[p])
        for i in range(len(q)):
            grad_q[q[i]] += sign * p_mean / len(q)
        for j in range(len(p)):
            grad_p[p[j]] += sign * q_mean / len(p)


def _batch_loss_grad_numpy(qt, pt, q_flat, q_off, pos_flat, pos_off, neg_flat, neg_off,
                           margin, maxsim, grad_q, grad_p):
    n = len(q_off) - 1
    losses = np.empty(n)
    for b in range(n):
        q = q_flat[q_off[b]:q_off[b + 1]]
        pp = pos_flat[pos_off[b]:pos_off[b + 1]]
        pn = neg_flat[neg_off[b]:neg_off[b + 1]]
        s_pos, arg_pos = _score_numpy(qt, pt, q, pp, maxsim)
        s_neg, arg_neg = _score_numpy(qt, pt, q, pn, maxsim)
        loss = margin - s_pos + s_neg
        if loss > 0.0:
            losses[b] = loss
            _accumulate_numpy(qt, pt, q, pp, maxsim, arg_pos, -1.0, grad_q, grad_p)
            _accumulate_numpy(qt, pt, q, pn, maxsim, arg_neg, 1.0, grad_q, grad_p)
        else:
            losses[b] = 0.0
    return losses


if HAS_NUMBA:
    @njit(cache=True)
    def _dot(a, b):
        s = 0.0
        for k in range(a.shape[0]):
            s += a[k] * b[k]
        return s

    @njit(cache=True)
    def _score_numba(qt, pt, q, p, maxsim, arg):
        if maxsim:
            total = 0.0
            for i in range(q.shape[0]):
                best = _dot(qt[q[i]], pt[p[0]])
                bj = 0
                for j in range(1, p.shape[0]):
                    v = _dot(qt[q[i]], pt[p[j]])
                    if v > best:
                        best = v
                        bj = j
                arg[i] = bj
                total += best
            return total
        d = qt.shape[1]
        qm = np.zeros(d)
        pm = np.zeros(d)
        for i in range(q.shape[0]):
            qm += qt[q[i]]
        for j in range(p.shape[0]):
            pm += pt[p[j]]
        qm /= q.shape[0]
        pm /= p.shape[0]
        return _dot(qm, pm)

    @njit(cache=True)
    def _accumulate_numba(qt, pt, q, p, maxsim, arg, sign, grad_q, grad_p):
        d = qt.shape[1]
        if maxsim:
            for i in range(q.shape[0]):
                j = arg[i]
                for k in range(d):
                    grad_q[q[i], k] += sign * pt[p[j], k]
                for k in range(d):
                    grad_p[p[j], k] += sign * qt[q[i], k]
            return
        qm = np.zeros(d)
        pm = np.zeros(d)
        for i in range(q.shape[0]):
            qm += qt[q[i]]
        for j in range(p.shape[0]):
            pm += pt[p[j]]
        qm /= q.shape[0]
        pm /= p.shape[0]
        for i in range(q.shape[0]):
            for k in range(d):
                grad_q[q[i], k] += sign * pm[k] / q.shape[0]
        for j in range(p.shape[0]):
            for k in range(d):
                grad_p[p[j], k] += sign * qm[k] / p.shape[0]

    @njit(cache=True)
    def _batch_loss_grad_numba(qt, pt, q_flat, q_off, pos_flat, pos_off, neg_flat, neg_off,
                               margin, maxsim, grad_q, grad_p):
        n = q_off.shape[0] - 1
        losses = np.empty(n)
        for b in range(n):
            q = q_flat[q_off[b]:q_off[b + 1]]
            pp = pos_flat[pos_off[b]:pos_off[b + 1]]
            pn = neg_flat[neg_off[b]:neg_off[b + 1]]
            arg_pos = np.zeros(q.shape[0], dtype=np.int64)
            arg_neg = np.zeros(q.shape[0], dtype=np.int64)
            s_pos = _score_numba(qt, pt, q, pp, maxsim, arg_pos)
            s_neg = _score_numba(qt, pt, q, pn, maxsim, arg_neg)
            loss = margin - s_pos + s_neg
            if loss > 0.0:
                losses[b] = loss
                _accumulate_numba(qt, pt, q, pp, maxsim, arg_pos, -1.0, grad_q, grad_p)
                _accumulate_numba(qt, pt, q, pn, maxsim, arg_neg, 1.0, grad_q, grad_p)
            else:
                losses[b] = 0.0
        return losses


def batch_loss_grad(query_table, product_table, q_flat, q_off, pos_flat, pos_off, neg_flat, neg_off,
                    margin: float, maxsim: bool, grad_q, grad_p) -> np.ndarray:
    """Per-triplet hinge losses; subgradients are added into ``grad_q``/``grad_p``.

    ``grad_q is grad_p`` (and ``query_table is product_table``) for tied tables.
    Accumulation runs in triplet order and dot products sum in k order, so both
    backends return identical results.
    """
    args = [np.ascontiguousarray(a, dtype=np.int64) for a in (q_flat, q_off, pos_flat, pos_off, neg_flat, neg_off)]
    if USE_NUMBA:
        return _batch_loss_grad_numba(query_table, product_table, *args, float(margin), bool(maxsim),
                                      grad_q, grad_p)
    return _batch_loss_grad_numpy(query_table, product_table, *args, float(margin), bool(maxsim),
                                  grad_q, grad_p)

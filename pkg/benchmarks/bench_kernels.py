"""Time the numba and numpy kernel backends on catalog-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints one row per kernel: best-of-N wall time for each backend and the speedup.
Outputs are compared bitwise; a mismatch is reported next to the timings.
"""

import argparse
import time

import numpy as np

from hybridsearch import _kernels


def packed(rng, n_seg, vocab, lo, hi):
    lengths = rng.integers(lo, hi + 1, size=n_seg)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return rng.integers(vocab, size=int(offsets[-1])).astype(np.int64), offsets


def cases(scale, rng):
    vocab, dim = 8000, 64
    n_products = int(20000 * scale)
    qt, pt = rng.normal(size=(vocab, dim)), rng.normal(size=(vocab, dim))
    ids, offsets = packed(rng, n_products, vocab, 10, 80)
    scores = rng.normal(size=(16, vocab))
    batch = 256
    q = packed(rng, batch, vocab, 1, 6)
    p = packed(rng, batch, vocab, 10, 80)
    n = packed(rng, batch, vocab, 10, 80)

    def loss_grad(maxsim):
        def run():
            gq, gp = np.zeros_like(qt), np.zeros_like(pt)
            losses = _kernels.batch_loss_grad(qt, pt, *q, *p, *n, 1.0, maxsim, gq, gp)
            return np.concatenate([losses, gq.ravel(), gp.ravel()])
        return run

    return {
        "pair_dots 16 x vocab": lambda: _kernels.pair_dots(qt[:16], pt),
        "segment_max": lambda: _kernels.segment_max(scores, ids, offsets),
        "segment_mean": lambda: _kernels.segment_mean(pt, ids, offsets),
        "batch_loss_grad maxsim": loss_grad(True),
        "batch_loss_grad pooled": loss_grad(False),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="catalog size multiplier (1.0 = 20k products)")
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    before = _kernels.backend()
    print(f"{'kernel':<26}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  identical")
    try:
        for name, fn in cases(args.scale, np.random.default_rng(0)).items():
            _kernels.set_backend("numba")
            fn()  # compile
            t_nb, out_nb = best_of(fn, args.repeat)
            _kernels.set_backend("numpy")
            t_np, out_np = best_of(fn, args.repeat)
            same = np.array_equal(out_nb, out_np)
            print(f"{name:<26}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x  {same}")
    finally:
        _kernels.set_backend(before)


if __name__ == "__main__":
    main()

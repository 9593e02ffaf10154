#!/usr/bin/env python3
"""Benchmark the JIT kernels against the pure-numpy fallback.

Runs each hot kernel on training-scale inputs with both backends, checks
they agree, and prints a timing table.  Numba compilation happens in an
untimed warmup pass.

    python3 benchmarks/kernel_bench.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from hgtul.hypergraph import build_hypergraph
from hgtul.kernels import numpy_backend

try:
    from hgtul.kernels import numba_backend
except ImportError:
    numba_backend = None


def bench(fn, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_dev(a, b):
    if isinstance(a, tuple):
        return max(max_dev(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(a - b)))


def make_cases(rng):
    # hypergraph roughly at published-dataset scale: 4k POIs, 6k trajectories
    n_pois, n_trajs, dim = 4000, 6000, 128
    lists = [
        rng.choice(n_pois, size=rng.integers(2, 15), replace=False)
        for _ in range(n_trajs)
    ]
    used = np.unique(np.concatenate(lists))
    missing = np.setdiff1d(np.arange(n_pois), used)
    for i, p in enumerate(missing):
        lists[i % n_trajs] = np.append(lists[i % n_trajs], p)
    hg = build_hypergraph([sorted(set(l.tolist())) for l in lists], n_pois)
    x = rng.normal(size=(n_pois, dim))
    vals = rng.uniform(0.1, 1.0, size=hg.nnz)
    dy = rng.normal(size=(n_pois, dim))
    scores = rng.normal(size=hg.nnz)
    probs = numpy_backend.segment_softmax(hg.indptr, scores)

    # one training batch: 64 trajectories, up to 64 steps
    bsz, tmax = 64, 64
    lengths = rng.integers(1, tmax + 1, size=bsz)
    seq = np.zeros((bsz, tmax, dim))
    for b in range(bsz):
        seq[b, : lengths[b]] = rng.normal(size=(int(lengths[b]), dim))
    wx = rng.normal(size=(dim, 4 * dim)) * 0.1
    wh = rng.normal(size=(dim, 4 * dim)) * 0.1
    bias = rng.normal(size=4 * dim) * 0.1
    h_np, g_np, c_np, hs_np = numpy_backend.lstm_forward(seq, lengths, wx, wh, bias)
    dh = rng.normal(size=h_np.shape)

    op_args = (hg.indptr, hg.cols, hg.rows, vals, hg.d_isqrt, hg.b_inv, x)
    _, xs, u = numpy_backend.hyperop_forward(*op_args)
    return {
        "hyperop_forward": op_args,
        "hyperop_backward": op_args[:6] + (dy, xs, u),
        "segment_softmax": (hg.indptr, scores),
        "segment_softmax_backward": (hg.indptr, probs, scores),
        "lstm_forward": (seq, lengths, wx, wh, bias),
        "lstm_backward": (seq, lengths, wx, wh, g_np, c_np, hs_np, dh),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = make_cases(rng)

    if numba_backend is None:
        print("numba not importable; nothing to compare")
        return

    print(f"{'kernel':<26} {'numpy':>10} {'numba':>10} {'speedup':>9} {'max dev':>10}")
    for name, call_args in cases.items():
        nb_fn = getattr(numba_backend, name)
        np_fn = getattr(numpy_backend, name)
        nb_fn(*call_args)  # untimed JIT warmup
        t_np, out_np = bench(np_fn, call_args, args.repeats)
        t_nb, out_nb = bench(nb_fn, call_args, args.repeats)
        dev = max_dev(out_np, out_nb)
        print(f"{name:<26} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>8.1f}x {dev:>10.2e}")


if __name__ == "__main__":
    main()

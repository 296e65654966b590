"""Time each hot kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call of each kernel compiles it; that warm-up is excluded.
"""

import argparse
import time

import numpy as np

from kglit.kernels import numba_impl, numpy_impl


def cases(rng):
    n_ent, n_rel, b, d, a = 2000, 20, 128, 100, 3
    scores = rng.normal(size=(b, n_ent))
    targets = rng.integers(n_ent, size=b)
    excl = [np.unique(rng.integers(n_ent, size=20)) for _ in range(b)]
    ptr = np.concatenate([[0], np.cumsum([len(e) for e in excl])]).astype(np.int64)
    idx = np.concatenate(excl).astype(np.int64)
    out = np.zeros((n_ent, 200))
    rows = rng.integers(n_ent, size=4096)
    vals = rng.normal(size=(4096, 200))
    p, q, w = rng.normal(size=(b, d)), rng.normal(size=(n_ent, d)), rng.normal(size=d)
    dlog = rng.normal(size=(b, n_ent))
    xa, x = rng.random((b, a)), rng.random((n_ent, a))
    centers, widths, weights = rng.normal(size=(b, a)), 0.5 + rng.random((b, a)), rng.normal(size=(b, a))
    triples = np.stack([rng.integers(n_ent, size=20000), rng.integers(n_rel, size=20000),
                        rng.integers(n_ent, size=20000)], axis=1)
    keys = np.unique((triples[:, 0] * n_rel + triples[:, 1]) * n_ent + triples[:, 2])
    heads = rng.random(20000) < 0.5
    first, second = rng.integers(n_ent - 1, size=20000), rng.integers(n_ent - 1, size=20000)
    labels = (rng.random((b, n_ent)) < 0.01).astype(float)
    return {
        "filtered_ranks": lambda m: m.filtered_ranks(scores, targets, ptr, idx),
        "scatter_add_rows": lambda m: m.scatter_add_rows(out, rows, vals),
        "pair_mlp_forward": lambda m: m.pair_mlp_forward(p, q, w, 0.1),
        "pair_mlp_backward": lambda m: m.pair_mlp_backward(p, q, w, dlog),
        "rbf_forward": lambda m: m.rbf_forward(xa, x, centers, widths, weights, 1.0),
        "rbf_weight_grad": lambda m: m.rbf_weight_grad(xa, x, centers, widths, dlog, 1.0),
        "corrupt": lambda m: m.corrupt(triples, n_ent, n_rel, keys, heads, first, second),
        "bce_with_logits": lambda m: m.bce_with_logits(scores, labels),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if numba_impl is None:
        raise SystemExit("numba backend unavailable (missing, or KGLIT_DISABLE_NUMBA set)")
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call in cases(np.random.default_rng(0)).items():
        call(numba_impl)
        t_np = best_of(lambda: call(numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(numba_impl), args.repeat)
        print(f"{name:<20}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()

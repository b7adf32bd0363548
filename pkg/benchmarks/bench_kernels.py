"""Benchmark the compiled kernels against the numpy fallback.

Run from the repo root after an editable install:

    python benchmarks/bench_kernels.py [--repeats 5]

Times the three hot kernels (sigmoid batch eval, MSE+gradient, parameter
grid scan) and BM25 posting-list accumulation on production-shaped inputs,
printing per-backend timings and the speedup.
"""

import argparse
import time

import numpy as np

from capval.kernels import _numpy

try:
    from capval.kernels import _native
except ImportError:
    _native = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def make_cases(rng):
    n_eval = 1_000_000
    losses_big = rng.uniform(0.2, 4.0, n_eval)

    n_obs = 200
    losses = rng.uniform(0.2, 4.0, n_obs)
    caps = rng.uniform(0.25, 1.0, n_obs)

    alpha_grid = np.linspace(1e-3, 100, 400)
    beta_grid = np.linspace(0, 8, 400)

    # BM25: 200k postings over 50k passages, 6 query terms
    n_docs, n_terms = 50_000, 6
    chunks_ids, chunks_tfs, offsets = [], [], [0]
    for _ in range(n_terms):
        df = int(rng.integers(5_000, 60_000))
        ids = np.sort(rng.choice(n_docs, size=min(df, n_docs), replace=False)).astype(np.int32)
        chunks_ids.append(ids)
        chunks_tfs.append(rng.integers(1, 8, size=ids.size).astype(np.float64))
        offsets.append(offsets[-1] + ids.size)
    bm25_args = (
        np.concatenate(chunks_ids), np.concatenate(chunks_tfs),
        np.array(offsets, dtype=np.int64), rng.uniform(0.5, 4.0, n_terms),
        rng.integers(50, 400, n_docs).astype(np.float64),
    )

    def case(mod):
        return {
            "sigmoid_eval (1e6 pts)":
                lambda: mod.sigmoid_eval(losses_big, 4.0, 1.2, 0.25),
            "mse_grad (200 pts x 1000 calls)":
                lambda: [mod.sigmoid_mse_grad(losses, caps, 4.0, 1.2, 0.25)
                         for _ in range(1000)],
            "mse_grid (400x400 x 200 pts)":
                lambda: mod.sigmoid_mse_grid(losses, caps, alpha_grid, beta_grid, 0.25),
            "bm25 (~200k postings, 50k passages)":
                lambda: mod.bm25_scores(*bm25_args, float(bm25_args[4].mean()),
                                        1.2, 0.75, n_docs),
        }

    return case


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    case = make_cases(rng)
    numpy_cases = case(_numpy)
    native_cases = case(_native) if _native is not None else None

    if _native is None:
        print("compiled extension not built; timing the numpy fallback only\n")

    width = max(len(k) for k in numpy_cases)
    header = f"{'kernel':<{width}}  {'numpy':>10}  {'native':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, numpy_fn in numpy_cases.items():
        t_numpy = best_of(numpy_fn, args.repeats)
        if native_cases is not None:
            t_native = best_of(native_cases[name], args.repeats)
            print(f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms  {t_native * 1e3:>8.2f}ms  "
                  f"{t_numpy / t_native:>7.1f}x")
        else:
            print(f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")


if __name__ == "__main__":
    main()

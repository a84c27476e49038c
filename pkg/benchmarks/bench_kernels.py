"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel on workloads shaped like the real pipeline (Gibbs
classification sweeps and point-process clustering) and prints per-call
timings for both backends plus the speedup.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import time

import numpy as np

from sparsemix.kernels import numpy_impl

try:
    from sparsemix.kernels import numba_impl
except ImportError:
    numba_impl = None


CASES = {
    "classification sweep (N=1000, K=15, r=4)": dict(n=1000, K=15, r=4),
    "classification sweep (N=1000, K=30, r=4)": dict(n=1000, K=30, r=4),
    "point process assignment (N=40000, K=4, r=4)": dict(n=40000, K=4, r=4),
}


def _inputs(n, K, r, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, r))
    centers = rng.standard_normal((K, r))
    A = rng.standard_normal((K, r, r)) * 0.3
    covs = A @ A.transpose(0, 2, 1) + np.eye(r)[None]
    inv_factors = np.linalg.solve(np.linalg.cholesky(covs), np.broadcast_to(np.eye(r), (K, r, r)))
    labels = rng.integers(0, K, n).astype(np.int64)
    log_norm_w = rng.standard_normal(K)
    u = rng.random(n)
    return X, centers, inv_factors, labels, log_norm_w, u


def _time(fn, repeat):
    fn()  # warm-up (and numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    if numba_impl is None:
        print("numba unavailable; only the numpy fallback can be timed")

    header = f"{'case':52s} {'kernel':24s} {'numpy ms':>9s} {'numba ms':>9s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for case, shape in CASES.items():
        X, centers, inv_factors, labels, log_norm_w, u = _inputs(**shape)
        K = shape["K"]
        kernels = {
            "pairwise_mahalanobis_sq": lambda impl: impl.pairwise_mahalanobis_sq(X, centers, inv_factors),
            "grouped_moments": lambda impl: impl.grouped_moments(X, labels, K),
            "classify_draw": lambda impl: impl.classify_draw(X, centers, inv_factors, log_norm_w, u),
        }
        for name, call in kernels.items():
            t_np = _time(lambda: call(numpy_impl), args.repeat)
            if numba_impl is not None:
                t_nb = _time(lambda: call(numba_impl), args.repeat)
                print(f"{case:52s} {name:24s} {t_np*1e3:9.3f} {t_nb*1e3:9.3f} {t_np/t_nb:7.1f}x")
            else:
                print(f"{case:52s} {name:24s} {t_np*1e3:9.3f} {'-':>9s} {'-':>8s}")


if __name__ == "__main__":
    main()

"""Time the numba kernels against the pure-numpy fallback.

Run with ``python benchmarks/bench_backends.py [--repeat N]``. Each kernel is
called once per backend before timing so numba compilation is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from countsplit import NUMBA_AVAILABLE, _kernels, glm, use_backend


def _cases(rng):
    counts = rng.poisson(rng.uniform(0.5, 50.0, (2000, 1)), (2000, 500)).astype(np.int64)
    probs = np.full(2000, 0.5)
    key = _kernels.stream_key(1, 0)
    z = rng.standard_normal(2000)
    A = glm.design_matrix(z)
    Y = rng.poisson(np.exp(1.0 + np.outer(z, rng.uniform(-0.5, 0.5, 500)))).astype(np.float64)
    M = rng.standard_normal((2000, 300))
    C = np.cov(M.T)
    v0 = np.ones(300) / np.sqrt(300)
    K = rng.standard_normal((2000, 20))
    centers = K[rng.choice(2000, 2, replace=False)].copy()
    return {
        "binomial_rows 2000x500": lambda: _kernels.binomial_rows(counts, probs, key),
        "poisson_irls 2000x500": lambda: _kernels.poisson_irls(A, np.zeros(2000), Y),
        "power_iteration 300x300": lambda: _kernels.power_iteration(C, v0),
        "lloyd 2000x20 k=2": lambda: _kernels.lloyd(K, centers.copy(), 300),
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':28s} {'numba (s)':>10s} {'numpy (s)':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        times = {}
        for backend in ("numba", "numpy"):
            with use_backend(backend):
                fn()
                times[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        print(f"{name:28s} {times['numba']:10.4f} {times['numpy']:10.4f} {times['numpy'] / times['numba']:8.1f}x")


if __name__ == "__main__":
    main()

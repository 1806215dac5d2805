"""Time the numba kernels against the pure numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs through both paths; outputs are
checked for relative agreement before timing, and jit compilation is excluded by a
warm-up call.
"""

from __future__ import annotations

import argparse
import itertools
import time

import numpy as np

from lts0 import _kernels as kern


def _best(func, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        func()
        times.append(time.perf_counter() - t)
    return min(times)


def _cases():
    rng = np.random.default_rng(0)
    n, m, steps = 128, 3, 2000
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    B = rng.standard_normal((n, m))
    x0 = rng.standard_normal(n)
    U = rng.standard_normal((steps, m))
    G = rng.standard_normal((steps, n))
    Y = rng.standard_normal((32, 32)) / 8.0
    lam = np.linspace(-0.9, 2.0, 10)
    d = rng.standard_normal(10)
    sub2 = np.array(list(itertools.combinations(range(10), 2)), dtype=np.int64)
    sub3 = np.array(list(itertools.combinations(range(10), 3)), dtype=np.int64)
    seed_state = np.array([1, 2, 3, 4], dtype=np.uint64)
    return {
        "xoshiro_uniforms(200000)": (
            lambda: kern.py_xoshiro_uniforms(seed_state.copy(), 200_000),
            lambda: kern.nb_xoshiro_uniforms(seed_state.copy(), 200_000),
        ),
        "simulate(n=128, 2000 steps)": (
            lambda: kern.py_simulate(A, B, x0, U, G, 0.01, 1e300)[0],
            lambda: kern.nb_simulate(A, B, x0, U, G, 0.01, 1e300)[0],
        ),
        "power_norms(32x32, t=200)": (
            lambda: kern.py_power_norms(Y, 200),
            lambda: kern.nb_power_norms(Y, 200),
        ),
        "vandermonde_sums(n=10, k=3)": (
            lambda: kern.py_vandermonde_sums(lam, d, sub2, sub3)[0],
            lambda: kern.nb_vandermonde_sums(lam, d, sub2, sub3)[0],
        ),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kern.numba is None:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  rel. diff")
    for name, (py, nb) in _cases().items():
        a, b = py(), nb()  # warm-up and agreement check
        a, b = np.asarray(a), np.asarray(b)
        diff = float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(a))), 1e-300))
        tp = _best(py, args.repeat)
        tn = _best(nb, args.repeat)
        print(f"{name:32s} {tp * 1e3:11.3f} {tn * 1e3:11.3f} {tp / tn:8.1f}x  {diff:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

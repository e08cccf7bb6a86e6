"""Benchmark the compiled sweep kernel against the pure-NumPy fallback.

Runs identical coordinate-descent sweeps through both backends on the same
random problems, reports wall-clock per sweep and the worst element-wise
disagreement of the iterates.  Run as:

    python benchmarks/bench_backends.py [--sizes 10,30,60] [--sweeps 20]
"""

import argparse
import time

import numpy as np

from envcore import _sweep_py

try:
    from envcore import _sweep_cy
except ImportError:
    _sweep_cy = None


def _problem(rng, r, u):
    A = rng.standard_normal((r, 2 * r))
    M1 = A @ A.T / (2 * r)
    B = rng.standard_normal((r, 2 * r))
    M2 = np.linalg.inv(B @ B.T / (2 * r))
    G = np.linalg.qr(rng.standard_normal((r, u)))[0]
    return M1, M2, np.ascontiguousarray(G)


def _time_backend(mod, M1, M2, G, sweeps):
    G = G.copy(order="C")
    start = time.perf_counter()
    for _ in range(sweeps):
        mod.sweep(M1, M2, G, 40, 1e-12)
    return (time.perf_counter() - start) / sweeps, G


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="10,30,60")
    parser.add_argument("--sweeps", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if _sweep_cy is None:
        print("compiled backend unavailable; run pip install -e . first")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'r':>4} {'u':>4} {'python ms':>10} {'cython ms':>10} "
          f"{'speedup':>8} {'max |diff|':>11}")
    for r in (int(s) for s in args.sizes.split(",")):
        u = max(1, r // 3)
        M1, M2, G = _problem(rng, r, u)
        t_py, G_py = _time_backend(_sweep_py, M1, M2, G, args.sweeps)
        t_cy, G_cy = _time_backend(_sweep_cy, M1, M2, G, args.sweeps)
        diff = np.abs(G_py - G_cy).max()
        print(f"{r:>4} {u:>4} {1e3 * t_py:>10.3f} {1e3 * t_cy:>10.3f} "
              f"{t_py / t_cy:>8.2f} {diff:>11.2e}")


if __name__ == "__main__":
    main()

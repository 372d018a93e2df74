#!/usr/bin/env python3
"""Timing of the coordinate-descent kernels: numba vs pure numpy.

Run ``python3 benchmarks/bench_kernels.py [--p 50 100 200] [--repeat 3]``.
Both backends are called directly, so the ``DPGLASSO_BACKEND`` setting does
not matter here. Results are checked to agree before timings are printed.
"""

import argparse
import time

import numpy as np

from dpglasso import _kernels
from dpglasso import graph_model as gm
from dpglasso.privacy import center


def _problem(p, n, seed):
    X = gm.sample_gaussian(gm.chain_precision(p), n, seed)
    Xc = center(X)
    return np.ascontiguousarray(Xc.T @ Xc / n)


def _run_sweeps(sweep, S, lam, n_sweeps):
    p = S.shape[0]
    W = S.copy()
    W[np.diag_indices(p)] += lam
    B = np.zeros((p, p))
    for _ in range(n_sweeps):
        sweep(S, W, B, lam, 1e-8, 1000)
    return W


def _best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, nargs="+", default=[20, 50, 100])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--lam", type=float, default=0.05)
    ap.add_argument("--sweeps", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if _kernels.glasso_sweep_numba is None:
        raise SystemExit("numba is not installed; nothing to compare")

    # compile outside the timed region
    S0 = _problem(5, 100, 0)
    _run_sweeps(_kernels.glasso_sweep_numba, S0, args.lam, 1)

    print(f"{'p':>6} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'max|dW|':>10}")
    for p in args.p:
        S = _problem(p, args.n, 1)
        W_np = _run_sweeps(_kernels.glasso_sweep_numpy, S, args.lam, args.sweeps)
        W_nb = _run_sweeps(_kernels.glasso_sweep_numba, S, args.lam, args.sweeps)
        diff = float(np.max(np.abs(W_np - W_nb)))
        t_np = _best_time(lambda: _run_sweeps(_kernels.glasso_sweep_numpy, S, args.lam, args.sweeps), args.repeat)
        t_nb = _best_time(lambda: _run_sweeps(_kernels.glasso_sweep_numba, S, args.lam, args.sweeps), args.repeat)
        print(f"{p:>6} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()

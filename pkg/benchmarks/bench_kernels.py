"""Time the numba and numpy thresholding kernels on agent-sized blocks.

Prox maps are applied one agent row at a time, so the default size is one
row at p = 256.

Usage: python3 benchmarks/bench_kernels.py [--size 256] [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from diropt import _kernels

KERNELS = ("soft_threshold", "hard_threshold", "half_threshold", "two_thirds_threshold")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="entries per call")
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    z = np.random.default_rng(0).standard_normal(args.size)
    tau = 0.05
    print(f"{'kernel':22s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name in KERNELS:
        f_np = getattr(_kernels, name + "_np")
        f_nb = getattr(_kernels, name + "_nb")
        f_nb(z, tau)  # compile outside the timer
        diff = float(np.max(np.abs(f_np(z, tau) - f_nb(z, tau))))
        t_np = min(timeit.repeat(lambda: f_np(z, tau), number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(lambda: f_nb(z, tau), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:22s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:8.2f} {diff:10.1e}")


if __name__ == "__main__":
    main()

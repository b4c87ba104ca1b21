"""Primal feasibility of the averaged iterate versus iteration count.

Solves a two-block entropic consensus problem (two distributions forced to
coincide) with the deterministic primal-dual method and prints
``||A x_N - b||`` together with the ratio to the previous row.

    python scripts/rate_demo.py --gamma 0.1 --n 4
"""

import argparse

import numpy as np

from decbary.apdsgd import apdsgd, entropic_simplex_oracle


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.n
    A = np.hstack([np.eye(n), -np.eye(n)])
    oracle = entropic_simplex_oracle(A, np.zeros(n), rng.uniform(0, 1, (2, n)), args.gamma)
    L = np.linalg.eigvalsh(A @ A.T)[-1] / args.gamma

    prev = None
    print(f"{'N':>6} {'feasibility':>12} {'ratio':>7}")
    for N in (25, 50, 100, 200, 400, 800):
        err = np.linalg.norm(A @ apdsgd(oracle, L, N).x_hat)
        ratio = "" if prev is None else f"{err / prev:7.3f}"
        print(f"{N:>6} {err:>12.3e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()

"""Gaussian barycenter over four network families.

Runs the gauss1d scenario on each topology and writes one output directory
per topology plus a summary table of consensus and dual value.

    python scripts/network_comparison.py --m 10 --rounds 1000 --out runs/networks
"""

import argparse
from pathlib import Path

from decbary import cli
from decbary.graph import KINDS
from decbary.runtime import build_scenario, run, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--rounds", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--algorithm", choices=("accel", "nonaccel"), default="accel")
    ap.add_argument("--out", default="runs/networks")
    args = ap.parse_args()

    print(f"{'topology':<12} {'lambda_max':>10} {'C(10)':>10} {'C(end)':>10} {'dual(end)':>10}")
    for kind in KINDS:
        cfg = cli.preset("gauss1d", m=args.m, seed=args.seed, topology=kind)
        cfg.solver.rounds = args.rounds
        cfg.solver.algorithm = args.algorithm
        sc = build_scenario(cfg)
        trace = run(cfg, scenario=sc)
        write_outputs(trace, cfg, sc, Path(args.out) / kind)
        at10 = next(r for r in trace.rows if r.round == min(10, args.rounds))
        last = trace.rows[-1]
        print(f"{kind:<12} {sc.lambda_max:>10.3f} {at10.consensus:>10.4f} "
              f"{last.consensus:>10.4f} {last.dual_value:>10.3f}")


if __name__ == "__main__":
    main()

"""Compiled versus numpy time loop of the reference solver.

    python benchmarks/bench_reference.py [--scenario example1] [--m 1000 4000 16000] [--repeats 3]

Prints wall time per backend and grid size, the speedup, and the largest
difference between the two results.
"""
import argparse
import sys

import numpy as np

from charsweep import kernels
from charsweep.cli import load_scenario
from charsweep.validate import reference_solve


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="example1")
    ap.add_argument("--m", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--T", type=float, default=None, help="final time (default: the scenario's)")
    args = ap.parse_args(argv)

    sc = load_scenario(args.scenario)
    T = args.T or sc.T
    backends = sorted(kernels.BACKENDS)
    if "compiled" not in backends:
        print("compiled kernel not built; only the numpy backend is available", file=sys.stderr)

    print(f"scenario {sc.name}, T = {T}, default backend {kernels.BACKEND}")
    print(f"{'m':>7} " + " ".join(f"{b + ' [s]':>14}" for b in backends) + f" {'speedup':>8} {'max |du|':>10}")
    for m in args.m:
        secs, results = {}, {}
        for b in backends:
            runs = [reference_solve(sc.profile, sc.model, T, m, domain=sc.domain, backend=b) for _ in range(args.repeats)]
            secs[b] = min(r.seconds for r in runs)
            results[b] = runs[0].u
        speed = secs["numpy"] / secs["compiled"] if "compiled" in secs else float("nan")
        diff = float(np.max(np.abs(results["numpy"] - results["compiled"]))) if "compiled" in results else 0.0
        print(f"{m:>7} " + " ".join(f"{secs[b]:>14.4f}" for b in backends) + f" {speed:>8.1f} {diff:>10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

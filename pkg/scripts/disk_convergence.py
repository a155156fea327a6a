#!/usr/bin/env python3
"""Sup-norm error of the geometric solver on the unit disk against (|x|^2 - 1)/2."""
import argparse
import time

import numpy as np

from sharpma.geometry import ConvexDomain
from sharpma.solver import RhsSpec, SolverConfig, solve_dirichlet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, nargs="+", default=[0.16, 0.08, 0.04, 0.02])
    args = ap.parse_args()
    prev = None
    print(f"{'h':>8} {'nodes':>7} {'error':>10} {'ratio':>6} {'sec':>6}")
    for h in args.h:
        t0 = time.perf_counter()
        sol = solve_dirichlet(ConvexDomain.disk(), None, RhsSpec.constant(1.0), SolverConfig(h=h))
        err = np.max(np.abs(sol.values - 0.5 * (np.sum(sol.points ** 2, axis=1) - 1)))
        ratio = f"{err / prev:.2f}" if prev else "-"
        print(f"{h:8.4f} {len(sol.points):7d} {err:10.3e} {ratio:>6} {time.perf_counter() - t0:6.1f}")
        prev = err


if __name__ == "__main__":
    main()

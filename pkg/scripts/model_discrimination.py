#!/usr/bin/env python3
"""Power law versus log-Lipschitz fits on two boundary profiles.

The closed-form lozenge surface tension should favour the log-Lipschitz model;
the discrete q = -1 solution on the square should favour the power law. At
desktop resolutions the second comparison is not decisive (see README).
"""
import argparse

from sharpma import analysis as an
from sharpma.closed_forms import surface_tension_T
from sharpma.geometry import ConvexDomain
from sharpma.solver import SolverConfig, solve_power_rhs


def show(label, samples):
    cmp = an.compare_models(samples)
    beta = an.fit_exponent(samples, "power").exponent
    print(f"{label:<28} power={cmp['power']:.4f} loglip={cmp['loglip']:.4f} beta={beta:.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-cells", type=int, nargs="+", default=[64, 128])
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    S, _ = an.value_probe(surface_tension_T, 0, 6, 0.1, anchor=[0.5, 0.0])
    show("surface tension (exact)", S)
    for N in args.n_cells:
        sol = solve_power_rhs(ConvexDomain.unit_square(), -1.0, SolverConfig(backend="fd", h=1 / N))
        S, _ = an.value_probe(sol, 2, args.levels, 8 * sol.h)
        show(f"q=-1 square, N={N}", S)


if __name__ == "__main__":
    main()

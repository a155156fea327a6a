#!/usr/bin/env python3
"""Aleksandrov-type constants max |u| / (dist * mass)^(1/n) under mesh refinement."""
from sharpma import analysis as an
from sharpma.geometry import ConvexDomain
from sharpma.solver import RhsSpec, SolverConfig, solve_dirichlet

LADDERS = {
    "square": (ConvexDomain.unit_square(), (1 / 8, 1 / 16, 1 / 32, 1 / 64)),
    "disk": (ConvexDomain.disk(), (0.2, 0.1, 0.05, 0.025)),
    "triangle": (ConvexDomain.triangle(), (1 / 16, 1 / 32, 1 / 64)),
}

if __name__ == "__main__":
    for name, (dom, hs) in LADDERS.items():
        for h in hs:
            sol = solve_dirichlet(dom, None, RhsSpec.constant(1.0), SolverConfig(h=h))
            print(f"{name:<9} h={h:<8.4f} C={an.aleksandrov_constant(sol):.4f} c0={an.linear_lower_constant(sol):.4f}")

#!/usr/bin/env python3
"""Run bundled experiments and print a one-line summary for each.

Reports land in ``$SHARPMA_OUTPUT_DIR`` (default: current directory).

    python3 scripts/run_bundled.py                 # all of them
    python3 scripts/run_bundled.py neg-q-2d cube-q0-3d
"""
import argparse
import time

from sharpma.experiments import bundled_config, list_experiments, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="experiment names (default: all bundled)")
    args = ap.parse_args()
    names = args.names or [e["name"] for e in list_experiments()]
    for name in names:
        t0 = time.perf_counter()
        rep = run_experiment(bundled_config(name))
        coef = rep.get("fit", {}).get("coefficients", {})
        coef = " ".join(f"{k}={v:.4f}" for k, v in coef.items())
        status = "PASS" if rep["pass"] else "FAIL"
        print(f"{status}  {name:<18} stage={rep['stage']:<6} {coef}  [{time.perf_counter() - t0:.1f} s]")


if __name__ == "__main__":
    main()

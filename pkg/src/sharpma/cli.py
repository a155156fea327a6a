"""Command line interface.

Relative output paths are resolved against ``$SHARPMA_OUTPUT_DIR`` when it is set.
Exit codes: 0 success, 1 a check failed, 2 usage error, 3 convergence failure,
4 any other validation error.
"""

from __future__ import annotations

import ast
import json
import sys
from pathlib import Path

import click

from . import analysis
from .closed_forms import FAMILIES, make_family, verify_family_inequality
from .errors import ConvergenceError, SharpMAError
from .experiments import (
    ExperimentConfig,
    bundled_config,
    list_experiments,
    output_dir,
    run_experiment,
)
from .geometry import ConvexDomain
from .solver import BoundaryData, DiscreteSolution, RhsSpec, SolverConfig, solve_dirichlet, solve_power_rhs

EXIT_FAIL, EXIT_CONVERGENCE, EXIT_INVALID = 1, 3, 4

# default closed-form suite: (family, params)
DEFAULT_SUITE = (
    [("NegPowerSuper", dict(n=n, p=p)) for n in (2, 3) for p in (0.5, 1.0, 2.0, 3.0)]
    + [("PosPowerSuper", dict(n=n, gamma=g)) for n in (3, 4) for g in (0.0, 0.5)]
    + [("HolderSub", dict(n=3, M=M)) for M in (1.0, 10.0)]
    + [("LogLipschitzSub", dict(n=2, M=M)) for M in (1.0, 10.0)]
    + [("AbreuComparison", dict(n=n, alpha=a)) for n in (2, 3, 4) for a in sorted({2.0 / n + k * (1 - 2.0 / n) / 8 for k in range(9)})]
    + [("PnWitness", dict(n=2, p=1.0)), ("Conical", dict())]
)


def _out_path(p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else output_dir() / p


def _write_json(path, obj):
    path = _out_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))
    return path


def _fail(exc: SharpMAError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_CONVERGENCE if isinstance(exc, ConvergenceError) else EXIT_INVALID)


def _parse_params(items) -> dict:
    out = {}
    for it in items:
        k, _, v = it.partition("=")
        try:
            out[k] = ast.literal_eval(v)
        except (ValueError, SyntaxError):
            out[k] = v
    return out


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Sharp boundary rates for singular Monge-Ampère equations."""


@main.command()
@click.argument("target", type=click.Choice(["closed-forms"]), default="closed-forms")
@click.option("--family", type=click.Choice(FAMILIES), help="Check one family instead of the default suite.")
@click.option("--param", "params", multiple=True, help="Family parameter as key=value (repeatable).")
@click.option("--samples", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), help="Write the JSON report here.")
def verify(target, family, params, samples, seed, report):
    """Verify the defining inequalities of the closed-form families."""
    suite = [(family, _parse_params(params))] if family else DEFAULT_SUITE
    rows = []
    try:
        for fam, kw in suite:
            rep = verify_family_inequality(make_family(fam, **kw), sample_count=samples, seed=seed)
            rows.append(rep.to_dict())
            click.echo(f"{'PASS' if rep.passed else 'FAIL'}  {fam:<16} {json.dumps(kw)}  max_violation={rep.max_violation:.3e}")
    except SharpMAError as exc:
        _fail(exc)
    ok = all(r["pass"] for r in rows)
    if report:
        _write_json(report, {"schema_version": 1, "target": target, "results": rows, "pass": ok})
    sys.exit(0 if ok else EXIT_FAIL)


@main.command()
@click.option("--domain", "domain_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rhs", default="const:1", show_default=True, help='"const:m", "distpow:m,gamma", "upow:q" or "measure:gas=[(x,y,c),...]"')
@click.option("--backend", type=click.Choice(["geo", "fd", "geometric", "wide-stencil"]), default="geo", show_default=True)
@click.option("--h", "h", type=float, default=0.02, show_default=True)
@click.option("--width", type=int, default=None, help="Stencil width W (fd backend).")
@click.option("--boundary", type=click.Path(exists=True, dir_okay=False), help="Boundary data JSON.")
@click.option("--max-iter", type=int, default=300, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def solve(domain_path, rhs, backend, h, width, boundary, max_iter, out):
    """Solve a Dirichlet problem and write the solution CSV."""
    try:
        domain = ConvexDomain.load(domain_path)
        spec = RhsSpec.parse(rhs)
        kw = dict(backend=backend, h=h, max_iter=max_iter)
        if width is not None:
            kw["stencil_width"] = width
        elif backend in ("fd", "wide-stencil") and domain.dimension > 2:
            kw["stencil_width"] = 1
        cfg = SolverConfig(**kw)
        if spec.kind == "upow":
            sol = solve_power_rhs(domain, spec.q, cfg, eps=spec.eps)
        else:
            data = BoundaryData.from_dict(json.loads(Path(boundary).read_text()), domain) if boundary else BoundaryData.zero()
            sol = solve_dirichlet(domain, data, spec, cfg)
    except SharpMAError as exc:
        _fail(exc)
    path = _out_path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    sol.to_csv(path)
    d = sol.diagnostics
    click.echo(f"wrote {path} ({len(sol.points)} nodes, {d.get('iterations')} iterations, residual {d.get('residual'):.3e})")


@main.command("fit-exponent")
@click.option("--solution", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--facet", type=int, required=True)
@click.option("--model", type=click.Choice(["power", "loglip", "gradlog"]), default="power", show_default=True)
@click.option("--d0", type=float, default=None, help="Largest probe distance (default 8h).")
@click.option("--levels", "J", type=int, default=3, show_default=True, help="Number of dyadic halvings.")
@click.option("--anchor", default=None, help="Probe anchor on the facet, comma separated.")
@click.option("--domain", "domain_path", type=click.Path(exists=True, dir_okay=False), help="Needed when the CSV has no sidecar.")
@click.option("--report", required=True, type=click.Path(dir_okay=False))
def fit_exponent(solution, facet, model, d0, J, anchor, domain_path, report):
    """Fit a boundary growth model to a solution along a facet normal."""
    try:
        dom = ConvexDomain.load(domain_path) if domain_path else None
        sol = DiscreteSolution.from_csv(solution, dom)
        d0 = 2.0 ** J * sol.h if d0 is None else d0
        a = [float(t) for t in anchor.split(",")] if anchor else None
        probe = analysis.gradient_probe if model == "gradlog" else analysis.value_probe
        samples, info = probe(sol, facet, J, d0, anchor=a)
        fit = analysis.fit_exponent(samples, model, probe=info)
    except SharpMAError as exc:
        _fail(exc)
    _write_json(report, fit.to_dict())
    click.echo(f"{model}: {json.dumps(fit.coefficients)}  r2={fit.r2:.5f}")


@main.command("surface-tension")
@click.option("--domain", "domain_path", type=click.Path(exists=True, dir_okay=False), help="Polygon domain (default unit square).")
@click.option("--gas", default="[(0.5,0.5,0.5)]", show_default=True, help="Gas points as [(x,y,c),...].")
@click.option("--h", "h", type=float, default=1 / 64, show_default=True)
@click.option("--facet", type=int, default=2, show_default=True)
@click.option("--r", "r", type=float, default=0.3, show_default=True)
@click.option("--w1", type=float, default=0.1, show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Also write the solution CSV.")
@click.option("--report", required=True, type=click.Path(dir_okay=False))
def surface_tension(domain_path, gas, h, facet, r, w1, gamma, out, report):
    """Solve a surface tension problem with gas points, check both envelopes and fit the gradient rate."""
    try:
        domain = ConvexDomain.load(domain_path) if domain_path else ConvexDomain.unit_square()
        rhs = RhsSpec.parse(f"measure:gas={gas}")
        sol = solve_dirichlet(domain, BoundaryData.zero(), rhs, SolverConfig(backend="geometric", h=h))
        env = analysis.check_envelopes(sol, facet, r, w1, gamma)
        frame = analysis.facet_frame(domain, facet)
        anchor = frame.to_global([[w1 + r * gamma, 0.0]])[0]
        samples, info = analysis.gradient_probe(sol, facet, 3, 8 * sol.h, anchor=anchor)
        fit = analysis.fit_exponent(samples, "gradlog", probe=info)
    except SharpMAError as exc:
        _fail(exc)
    if out:
        sol.to_csv(_out_path(out))
    ok = env.passed and fit.r2 >= 0.99
    _write_json(report, {"schema_version": 1, "envelopes": env.to_dict(), "fit": fit.to_dict(), "pass": ok})
    click.echo(
        f"{'PASS' if ok else 'FAIL'}  lower={env.lower_violation:.3e} upper={env.upper_violation:.3e} "
        f"slope={fit.slope:.4f} r2={fit.r2:.5f}"
    )
    sys.exit(0 if ok else EXIT_FAIL)


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment JSON.")
@click.option("--name", help="Run a bundled experiment by name.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def run(config_path, name, out_dir):
    """Run an experiment (solve, probe, fit, compare) and write its report."""
    if bool(config_path) == bool(name):
        raise click.UsageError("give exactly one of --config or --name")
    try:
        cfg = ExperimentConfig.load(config_path) if config_path else bundled_config(name)
    except SharpMAError as exc:
        _fail(exc)
    rep = run_experiment(cfg, out_dir=out_dir)
    fit = rep.get("fit", {})
    click.echo(f"{'PASS' if rep['pass'] else 'FAIL'}  {cfg.name}  stage={rep['stage']}  coefficients={json.dumps(fit.get('coefficients'))}")
    if "error" in rep:
        click.echo(f"error: {rep['error']['message']}", err=True)
        sys.exit(EXIT_CONVERGENCE if rep["error"]["type"] in ("ConvergenceError", "DegeneracyError") else EXIT_INVALID)
    sys.exit(0 if rep["pass"] else EXIT_FAIL)


@main.command("list-experiments")
def list_experiments_cmd():
    """List the bundled experiments."""
    for e in list_experiments():
        click.echo(f"{e['name']:<18} {e['description']}")


if __name__ == "__main__":  # pragma: no cover
    main()

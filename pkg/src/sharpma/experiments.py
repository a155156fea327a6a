"""Declarative experiments: solve, probe, fit and compare against a rate oracle."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .closed_forms import make_family
from .errors import ParameterError, SharpMAError
from .geometry import ConvexDomain
from .solver import BoundaryData, RhsSpec, SolverConfig, solve_dirichlet, solve_power_rhs

REPORT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1
OUTPUT_ENV = "SHARPMA_OUTPUT_DIR"

ORACLES = ("2/(n-q)", "2/n", "log-lipschitz", "gradient-log", "band(2/(n-q),1)")
_ORACLE_MODEL = {
    "2/(n-q)": "power",
    "2/n": "power",
    "band(2/(n-q),1)": "power",
    "log-lipschitz": "loglip",
    "gradient-log": "gradlog",
}


_CHECK_KEYS = {
    "hessian-det": {"points", "h", "min_dist", "tolerance"},
    "envelopes": {"facet", "r", "w1", "gamma", "tol"},
}


@dataclass
class ExperimentConfig:
    """One experiment.

    ``source`` is ``{"kind": "solve"}`` or ``{"kind": "closed-form", "family": ...}``.
    ``probe`` holds ``facet``, ``quantity`` (``value`` or ``gradient``), ``d0``, ``J``
    and optionally ``anchor``; ``d0`` may be given as ``"8h"``. ``expected`` names an
    oracle from ``ORACLES`` with a ``tolerance`` (and ``value`` for the gradient-log
    slope). ``checks`` lists extra stages (``hessian-det``, ``envelopes``).
    """

    name: str
    domain: dict
    rhs: str = "const:1"
    solver: dict = field(default_factory=dict)
    source: dict = field(default_factory=lambda: {"kind": "solve"})
    boundary: dict = field(default_factory=lambda: {"kind": "zero"})
    probe: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    description: str = ""
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ParameterError(f"unsupported config schema version {self.schema_version}")
        oracle = self.expected.get("oracle")
        if oracle not in ORACLES:
            raise ParameterError(f"unknown rate oracle {oracle!r}; expected one of {', '.join(ORACLES)}")
        if self.source.get("kind") not in ("solve", "closed-form"):
            raise ParameterError("source kind must be 'solve' or 'closed-form'")
        if self.probe.get("quantity", "value") not in ("value", "gradient"):
            raise ParameterError("probe quantity must be 'value' or 'gradient'")
        RhsSpec.parse(self.rhs)
        SolverConfig(**self.solver)
        for name, spec in self.checks.items():
            allowed = _CHECK_KEYS.get(name)
            if allowed is None:
                raise ParameterError(f"unknown check {name!r}; expected one of {', '.join(_CHECK_KEYS)}")
            if set(spec) - allowed:
                raise ParameterError(f"unknown keys for check {name!r}: {', '.join(sorted(set(spec) - allowed))}")
        if "envelopes" in self.checks and not {"facet", "r", "w1"} <= set(self.checks["envelopes"]):
            raise ParameterError("the envelopes check needs facet, r and w1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        if "domain_file" in d:
            p = Path(d.pop("domain_file"))
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            if not p.exists():
                raise ParameterError(f"domain file {p} does not exist")
            d["domain"] = json.loads(p.read_text())
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ParameterError(f"config {path} does not exist")
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# bundled experiments
# ---------------------------------------------------------------------------


def _square():
    return ConvexDomain.unit_square().to_dict()


BUNDLED = {
    "neg-q-2d": dict(
        name="neg-q-2d",
        description="det D^2u = |u|^-1 on the unit square; facet exponent against 2/(n-q) = 2/3",
        domain=_square(),
        rhs="upow:-1",
        solver={"backend": "wide-stencil", "h": 1 / 128, "stencil_width": 2},
        probe={"facet": 2, "quantity": "value", "d0": "8h", "J": 3},
        expected={"oracle": "2/(n-q)", "n": 2, "q": -1, "tolerance": 0.05},
    ),
    "lozenge-selftest": dict(
        name="lozenge-selftest",
        description="closed-form lozenge surface tension: Hessian determinant 1 and log-rate gradient slope 1/pi",
        domain=ConvexDomain.triangle().to_dict(),
        source={"kind": "closed-form", "family": "SurfaceTensionT"},
        probe={"facet": 0, "quantity": "gradient", "d0": 0.1, "J": 6, "anchor": [0.5, 0.0]},
        expected={"oracle": "gradient-log", "value": 1 / math.pi, "tolerance": 0.1},
        checks={"hessian-det": {"points": 100, "h": 1e-3, "min_dist": 0.1, "tolerance": 1e-4}},
    ),
    "cube-q0-3d": dict(
        name="cube-q0-3d",
        description="det D^2u = 1 on the unit cube; facet exponent against 2/n = 2/3",
        domain=ConvexDomain.unit_cube(3).to_dict(),
        rhs="const:1",
        solver={"backend": "wide-stencil", "h": 1 / 64, "stencil_width": 1},
        probe={"facet": 4, "quantity": "value", "d0": "8h", "J": 3},
        expected={"oracle": "2/n", "n": 3, "tolerance": 0.1},
    ),
    "band-q1-4d": dict(
        name="band-q1-4d",
        description="det D^2u = |u| on the unit 4-cube; facet exponent inside the band (2/(n-q), 1]",
        domain=ConvexDomain.unit_cube(4).to_dict(),
        rhs="upow:1",
        solver={"backend": "wide-stencil", "h": 1 / 32, "stencil_width": 1},
        probe={"facet": 6, "quantity": "value", "d0": "8h", "J": 3},
        expected={"oracle": "band(2/(n-q),1)", "n": 4, "q": 1, "tolerance": 0.05},
    ),
    "gas-dimer-2d": dict(
        name="gas-dimer-2d",
        description="surface tension on the square with a gas point of mass 0.5; envelopes and log-rate gradient",
        domain=_square(),
        rhs="measure:gas=[(0.5,0.5,0.5)]",
        solver={"backend": "geometric", "h": 1 / 128},
        probe={"facet": 2, "quantity": "gradient", "d0": "8h", "J": 3, "anchor": [0.25, 0.0]},
        expected={"oracle": "gradient-log", "min_r2": 0.99},
        checks={"envelopes": {"facet": 2, "r": 0.3, "w1": 0.1, "gamma": 0.5}},
    ),
}


def bundled_config(name: str) -> ExperimentConfig:
    if name not in BUNDLED:
        raise ParameterError(f"unknown experiment {name!r}; bundled: {', '.join(BUNDLED)}")
    return ExperimentConfig.from_dict(BUNDLED[name])


def list_experiments() -> list[dict]:
    return [{"name": k, "description": v.get("description", "")} for k, v in BUNDLED.items()]


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def output_dir(default=".") -> Path:
    return Path(os.environ.get(OUTPUT_ENV, default))


def _resolve_length(val, h):
    if isinstance(val, str) and val.endswith("h"):
        return float(val[:-1] or 1.0) * h
    return float(val)


def oracle_target(expected: dict, n: int) -> dict:
    name = expected["oracle"]
    tol = float(expected.get("tolerance", 0.05))
    q = float(expected.get("q", 0.0))
    if name == "2/(n-q)":
        return {"name": name, "value": 2.0 / (n - q), "tolerance": tol}
    if name == "2/n":
        return {"name": name, "value": 2.0 / n, "tolerance": tol}
    if name == "band(2/(n-q),1)":
        return {"name": name, "band": [2.0 / (n - q) - tol, 1.0], "tolerance": tol}
    if name == "log-lipschitz":
        return {"name": name, "min_improvement": float(expected.get("tolerance", 0.2))}
    out = {"name": name, "min_r2": float(expected.get("min_r2", 0.0))}
    if "value" in expected:
        out.update(value=float(expected["value"]), tolerance=tol)
    return out


def judge(oracle: dict, fit, samples) -> bool:
    name = oracle["name"]
    if name in ("2/(n-q)", "2/n"):
        return abs(fit.exponent - oracle["value"]) <= oracle["tolerance"]
    if name == "band(2/(n-q),1)":
        lo, hi = oracle["band"]
        return lo < fit.exponent <= hi
    if name == "log-lipschitz":
        cmp = analysis.compare_models(samples)
        oracle["comparison"] = cmp
        return cmp["improvement"] >= oracle["min_improvement"]
    ok = fit.r2 >= oracle["min_r2"] and fit.slope > 0
    if "value" in oracle:
        ok = ok and abs(fit.slope - oracle["value"]) <= oracle["tolerance"] * abs(oracle["value"])
    return ok


def _hessian_check(fn, domain, spec, seed):
    from .closed_forms import sample_domain

    rng_pts = sample_domain(domain, 20 * spec.get("points", 100), seed=seed)
    d = domain.dist_to_boundary(rng_pts)
    pts = rng_pts[d >= spec.get("min_dist", 0.1)][: spec.get("points", 100)]
    dets = np.array([analysis.fd_hessian_det(fn, p, spec.get("h", 1e-3)) for p in pts])
    err = float(np.max(np.abs(dets - 1.0)))
    return {"points": len(pts), "max_error": err, "pass": bool(err <= spec.get("tolerance", 1e-4))}


def run_experiment(config: ExperimentConfig, out_dir=None, write: bool = True) -> dict:
    """Run all stages; returns the report (also written as JSON plus a tidy sample CSV)."""
    out = Path(out_dir) if out_dir is not None else output_dir()
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment": config.name,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "stage": "setup",
        "pass": False,
    }
    samples = None
    try:
        domain = ConvexDomain.from_dict(config.domain)
        n = domain.dimension
        report["stage"] = "solve"
        if config.source["kind"] == "closed-form":
            params = {k: v for k, v in config.source.items() if k not in ("kind", "family")}
            fn = make_family(config.source["family"], **params)
            h = None
        else:
            scfg = SolverConfig(**config.solver)
            rhs = RhsSpec.parse(config.rhs)
            if rhs.kind == "upow":
                fn = solve_power_rhs(domain, rhs.q, scfg, eps=rhs.eps)
            else:
                data = BoundaryData.from_dict(config.boundary, domain)
                fn = solve_dirichlet(domain, data, rhs, scfg)
            h = fn.h
            report["solver"] = {k: fn.diagnostics[k] for k in ("iterations", "residual") if k in fn.diagnostics}
            report["solver"]["nodes"] = int(len(fn.points))
            if config.outputs.get("solution"):
                fn.to_csv(out / config.outputs["solution"])

        report["stage"] = "checks"
        checks = {}
        if "hessian-det" in config.checks:
            checks["hessian-det"] = _hessian_check(fn, domain, config.checks["hessian-det"], config.seed)
        if "envelopes" in config.checks:
            e = dict(config.checks["envelopes"])
            e["facet_id"] = e.pop("facet")
            checks["envelopes"] = analysis.check_envelopes(fn, **e).to_dict()
        report["checks"] = checks

        report["stage"] = "probe"
        pr = config.probe
        scale = h if h is not None else 1.0
        d0 = _resolve_length(pr.get("d0", "8h" if h else 0.1), scale)
        J = int(pr.get("J", 3 if h else 6))
        probe = analysis.gradient_probe if pr.get("quantity", "value") == "gradient" else analysis.value_probe
        samples, pinfo = probe(fn, int(pr.get("facet", 0)), J, d0, anchor=pr.get("anchor"))

        report["stage"] = "fit"
        oracle = oracle_target(config.expected, n)
        fit = analysis.fit_exponent(samples, _ORACLE_MODEL[oracle["name"]], probe=pinfo)
        report["fit"] = fit.to_dict()

        report["stage"] = "compare"
        ok = judge(oracle, fit, samples)
        report["oracle"] = oracle
        report["pass"] = bool(ok and all(c.get("pass", True) for c in checks.values()))
        report["stage"] = "done"
    except SharpMAError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    if write:
        out.mkdir(parents=True, exist_ok=True)
        rp = out / config.outputs.get("report", f"{config.name}.report.json")
        rp.write_text(json.dumps(_clean(report), indent=2, sort_keys=True))
        if samples is not None:
            with (out / config.outputs.get("samples", f"{config.name}.samples.csv")).open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["experiment", "j", "d", "value"])
                for j, (d, v) in enumerate(samples):
                    w.writerow([config.name, j, repr(float(d)), repr(float(v))])
    return _clean(report)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj

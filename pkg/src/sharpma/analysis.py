"""Boundary growth fits, finite-difference Hessian oracles and comparison envelopes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .closed_forms import (
    INEQUALITY_SLACK,
    ClosedFormFunction,
    abreu_comparison,
    conical,
    surface_tension_T,
    verify_family_inequality,
)
from .errors import DomainError, GeometryError, ParameterError
from .geometry import ConvexDomain
from .solver.solution import DiscreteSolution
from .solver.spec import BoundaryData, RhsSpec

FIT_SCHEMA_VERSION = 1
MODELS = ("power", "loglip", "gradlog")
_MODEL_ALIASES = {
    "power": "power",
    "powerlaw": "power",
    "loglip": "loglip",
    "loglipschitz": "loglip",
    "gradlog": "gradlog",
    "gradientlog": "gradlog",
}


# ---------------------------------------------------------------------------
# exponent fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of boundary samples in a model's linearizing coordinates.

    ``power``: ``log|u| = log c + beta log d``; ``loglip``: ``|u|/d = a + b log(1/d)``;
    ``gradlog``: ``|D_nu u| = a + b log(1/d)``.
    """

    model: str
    coefficients: dict
    r2: float
    residuals: np.ndarray
    samples: np.ndarray
    dropped: tuple = ()
    probe: dict = field(default_factory=dict)

    @property
    def exponent(self) -> float:
        if self.model != "power":
            raise ParameterError("only the power model has an exponent")
        return self.coefficients["beta"]

    @property
    def slope(self) -> float:
        return self.coefficients["beta" if self.model == "power" else "b"]

    def predict(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        c = self.coefficients
        if self.model == "power":
            return c["c"] * d ** c["beta"]
        lin = c["a"] + c["b"] * np.log(1.0 / d)
        return d * lin if self.model == "loglip" else lin

    def log_rms(self) -> float:
        """RMS of ``log(value / prediction)`` over the kept samples; comparable across
        models fitted to the same data."""
        d, v = self.samples[:, 0], self.samples[:, 1]
        p = self.predict(d)
        if np.any(p <= 0):
            return math.inf
        return float(np.sqrt(np.mean(np.log(v / p) ** 2)))

    def to_dict(self) -> dict:
        return {
            "schema_version": FIT_SCHEMA_VERSION,
            "model": self.model,
            "coefficients": dict(self.coefficients),
            "r2": self.r2,
            "samples": self.samples.tolist(),
            "residuals": self.residuals.tolist(),
            "dropped": [list(s) for s in self.dropped],
            "log_rms": self.log_rms(),
            "probe": self.probe,
        }


def _linear_fit(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss if ss > 0 else 1.0
    return coef, res, r2


def _coords(model, d, v):
    if model == "power":
        return np.log(d), np.log(v)
    if model == "loglip":
        return np.log(1.0 / d), v / d
    return np.log(1.0 / d), v


def fit_exponent(samples, model: str = "power", probe: dict | None = None, guard: bool = True) -> ExponentFit:
    """Fit ``(d_j, value_j)`` samples, ``d_j`` strictly decreasing and values positive.

    The largest-``d`` sample is dropped (once) when its residual exceeds three
    times the median residual and at least four samples remain.
    """
    key = str(model).lower().replace("-", "").replace("_", "")
    if key not in _MODEL_ALIASES:
        raise ParameterError(f"unknown model {model!r}; use one of {', '.join(MODELS)}")
    model = _MODEL_ALIASES[key]
    S = np.asarray(samples, dtype=float)
    if S.ndim != 2 or S.shape[1] != 2:
        raise ParameterError("samples must be (d, value) pairs")
    if len(S) < 4:
        raise ParameterError("at least 4 samples are required")
    d, v = S[:, 0], S[:, 1]
    if np.any(d <= 0) or np.any(np.diff(d) >= 0):
        raise ParameterError("distances must be positive and strictly decreasing")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ParameterError("values must be positive and finite")
    dropped = ()
    x, y = _coords(model, d, v)
    coef, res, r2 = _linear_fit(x, y)
    if guard and len(S) > 4:
        med = float(np.median(np.abs(res)))
        scale = 1e-12 * (1.0 + float(np.max(np.abs(y))))
        if abs(res[0]) > 3.0 * med and abs(res[0]) > scale:
            dropped = (tuple(S[0]),)
            S, d, v = S[1:], d[1:], v[1:]
            x, y = _coords(model, d, v)
            coef, res, r2 = _linear_fit(x, y)
    if model == "power":
        coefs = {"c": float(math.exp(coef[0])), "beta": float(coef[1])}
        if not coefs["beta"] > 0:
            raise ParameterError(f"fitted power {coefs['beta']:.4g} is not positive")
    else:
        coefs = {"a": float(coef[0]), "b": float(coef[1])}
    return ExponentFit(model, coefs, float(r2), res, S.copy(), dropped, dict(probe or {}))


def compare_models(samples) -> dict:
    """Log-residual RMS of the power and log-Lipschitz fits on the same samples."""
    p = fit_exponent(samples, "power", guard=False)
    lg = fit_exponent(samples, "loglip", guard=False)
    rp, rl = p.log_rms(), lg.log_rms()
    return {"power": rp, "loglip": rl, "improvement": 1.0 - rl / rp if rp > 0 else 0.0}


# ---------------------------------------------------------------------------
# evaluation helpers and probes
# ---------------------------------------------------------------------------


def _value_fn(f):
    """Vectorised value function and (optional) domain of ``f``."""
    if isinstance(f, ClosedFormFunction):
        return f.value, f.domain
    if isinstance(f, DiscreteSolution):
        return f.evaluate, f.domain
    if f is surface_tension_T:
        return (lambda X: surface_tension_T(X)[0]), ConvexDomain.triangle()

    def call(X):
        out = f(X)
        return out[0] if isinstance(out, tuple) else out

    return call, getattr(f, "domain", None)


def _eval(fn, X):
    return np.asarray(fn(np.atleast_2d(X)), dtype=float).reshape(-1)


def fd_hessian(f, x, h: float, domain: ConvexDomain | None = None) -> np.ndarray:
    """Central second-difference Hessian with step ``h``.

    The closed ball of radius ``n h`` around ``x`` must lie inside the domain
    (taken from ``f`` when it has one); otherwise ``GeometryError``.
    """
    fn, dom = _value_fn(f)
    dom = domain if domain is not None else dom
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not h > 0:
        raise ParameterError("h must be positive")
    if dom is not None:
        try:
            d = dom.dist_to_boundary(x)
        except DomainError:
            raise GeometryError(f"point {x.tolist()} lies outside the domain") from None
        if d < n * h:
            raise GeometryError(f"stencil of radius {n * h:g} around {x.tolist()} leaves the domain")
    E = np.eye(n) * h
    pts = [x]
    for i in range(n):
        pts += [x + E[i], x - E[i]]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        pts += [x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]]
    try:
        vals = _eval(fn, np.array(pts))
    except DomainError as exc:
        raise GeometryError(f"stencil leaves the domain: {exc}") from None
    f0 = vals[0]
    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (vals[1 + 2 * i] - 2 * f0 + vals[2 + 2 * i]) / h ** 2
    base = 1 + 2 * n
    for k, (i, j) in enumerate(pairs):
        a, b, c, e = vals[base + 4 * k : base + 4 * k + 4]
        H[i, j] = H[j, i] = (a - b - c + e) / (4 * h ** 2)
    return H


def fd_hessian_det(f, x, h: float, domain: ConvexDomain | None = None) -> float:
    """Determinant of the central-difference Hessian of ``f`` at ``x``."""
    return float(np.linalg.det(fd_hessian(f, x, h, domain)))


def value_probe(f, facet_id: int, J: int, d0: float, anchor=None, domain: ConvexDomain | None = None):
    """``(d_j, |f|)`` along the inward normal of a facet at ``d_j = d0 2^-j``."""
    fn, dom = _value_fn(f)
    dom = domain if domain is not None else dom
    pr = dom.normal_probe(facet_id, J, d0, anchor=anchor)
    vals = np.abs(_eval(fn, pr.points))
    return np.column_stack([pr.distances, vals]), _probe_dict(pr)


def gradient_probe(f, facet_id: int, J: int, d0: float, anchor=None, domain: ConvexDomain | None = None):
    """``(d_j, |D_nu f|)`` by one-sided forward differences into the domain with step ``d_j/4``."""
    fn, dom = _value_fn(f)
    dom = domain if domain is not None else dom
    pr = dom.normal_probe(facet_id, J, d0, anchor=anchor)
    P = pr.points
    s = pr.distances / 4.0
    fwd = P + s[:, None] * pr.normal[None, :]
    if not np.all(dom.contains(fwd, strict=True)):
        raise GeometryError("forward difference point leaves the domain")
    g = (_eval(fn, fwd) - _eval(fn, P)) / s
    return np.column_stack([pr.distances, np.abs(g)]), _probe_dict(pr)


def _probe_dict(pr):
    return {"facet": pr.facet_id, "anchor": pr.anchor.tolist(), "normal": pr.normal.tolist(), "d": pr.distances.tolist()}


def solution_probe_window(sol: DiscreteSolution, levels: int = 3):
    """Default window for discrete solutions: ``d0 = 2^levels h`` and ``J = levels``."""
    return 2.0 ** levels * sol.h, levels


def aleksandrov_constant(sol: DiscreteSolution) -> float:
    """Smallest ``C`` with ``|u| <= C dist^(1/n) (total mass)^(1/n)`` at every interior node."""
    m = sol.interior
    n = sol.dimension
    d = sol.domain.dist_to_boundary(sol.points[m])
    M = float(np.sum(sol.targets))
    return float(np.max(np.abs(sol.values[m]) / (d * M) ** (1.0 / n)))


def linear_lower_constant(sol: DiscreteSolution) -> float:
    """Largest ``c0`` with ``|u| >= c0 dist`` at every interior node."""
    m = sol.interior
    d = sol.domain.dist_to_boundary(sol.points[m])
    return float(np.min(np.abs(sol.values[m]) / d))


# ---------------------------------------------------------------------------
# envelopes for planar surface tensions with gas points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FacetFrame:
    """Local coordinates with the facet on the first axis, interior at positive second axis."""

    origin: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    length: float

    def to_local(self, X):
        Y = np.atleast_2d(X) - self.origin
        return np.column_stack([Y @ self.tangent, Y @ self.normal])

    def to_global(self, Y):
        Y = np.atleast_2d(Y)
        return self.origin + Y[:, :1] * self.tangent + Y[:, 1:] * self.normal


def facet_frame(domain: ConvexDomain, facet_id: int) -> FacetFrame:
    f = domain.facet(facet_id)
    nu = f.inward_normal
    t = np.array([nu[1], -nu[0]])
    V = np.asarray(f.vertices)
    s = V @ t
    o = V[int(np.argmin(s))]
    return FacetFrame(o, t, nu, float(np.ptp(s)))


def _polygon_corners(domain: ConvexDomain) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(f.vertices) for f in domain.facets]), axis=0)


def _boundary_samples(domain: ConvexDomain, per_edge: int = 4000) -> np.ndarray:
    parts = []
    for f in domain.facets:
        a, b = np.asarray(f.vertices)
        t = (np.arange(per_edge) + 0.5) / per_edge
        parts.append(a + t[:, None] * (b - a))
    return np.vstack(parts + [_polygon_corners(domain)])


def _segment_affine(data: BoundaryData, frame: FacetFrame, base):
    """Affine function of the local first coordinate matching the data on the base segment."""
    P = frame.to_global(np.array([[base[0], 0.0], [base[1], 0.0]]))
    g = data(P)
    slope = (g[1] - g[0]) / (base[1] - base[0])
    return lambda Y: g[0] + slope * (Y[:, 0] - base[0])


def boundary_deficit_constant(domain: ConvexDomain, data: BoundaryData, frame: FacetFrame, base) -> float:
    """``C0 = max(0, sup -L_j / dist(., l_j))`` over the boundary, with ``L_j`` the data
    minus its affine extension from the base segment; evaluated on dense boundary samples."""
    X = _boundary_samples(domain)
    Y = frame.to_local(X)
    Lj = data(X) - _segment_affine(data, frame, base)(Y)
    off = Y[:, 1] > 1e-12
    if not off.any():
        return 0.0
    return float(max(0.0, np.max(-Lj[off] / Y[off, 1])))


@dataclass(frozen=True)
class EnvelopeReport:
    lower_violation: float
    upper_violation: float
    tolerance: float
    lower_nodes: int
    upper_nodes: int
    C0: float
    gas_scales: list
    worst_lower: list
    worst_upper: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "lower_max_violation": self.lower_violation,
            "upper_max_violation": self.upper_violation,
            "tolerance": self.tolerance,
            "lower_nodes": self.lower_nodes,
            "upper_nodes": self.upper_nodes,
            "C0": self.C0,
            "gas_scales": self.gas_scales,
            "worst_lower": self.worst_lower,
            "worst_upper": self.worst_upper,
            "pass": self.passed,
        }


def check_envelopes(
    sol: DiscreteSolution,
    facet_id: int,
    r: float,
    w1: float,
    gamma: float = 0.5,
    data: BoundaryData | None = None,
    gas=None,
    tol: float | None = None,
) -> EnvelopeReport:
    """Check the lower barrier (all nodes) and the triangle upper barrier (nodes of ``rT + w``).

    In the frame of ``facet_id`` (facet on the first axis, domain above it), the
    lower barrier is ``v + sum_k a_k C_k`` with
    ``v = (1 + 2 d^2) y log(y/d) + y ((x - x*)^2 - d^2 - C0)``, ``x* = w1 + r gamma``,
    ``d`` the diameter and ``C_k`` the conical function with apex mass ``c_k``. The
    upper barrier on ``rT + (w1, 0)`` is ``r^2 sigma_T((y - w)/r) + u(w + (0, r)) y/r``.
    Both are applied to ``u`` minus the affine extension of the data on the base.
    The tolerance defaults to the mesh size ``h``.
    """
    dom = sol.domain
    if dom.dimension != 2 or dom.kind not in ("polygon", "box"):
        raise DomainError("envelopes are defined on planar polygons")
    data = BoundaryData.zero() if data is None else data
    if gas is None:
        gas = RhsSpec.parse(sol.rhs).gas if sol.rhs.startswith("measure") else ()
    if not (r > 0 and 0 < gamma < 1):
        raise GeometryError("need r > 0 and 0 < gamma < 1")
    frame = facet_frame(dom, facet_id)
    base = (w1, w1 + r)
    tri_local = np.array([[w1, 0.0], [w1 + r, 0.0], [w1, r]])
    tri = frame.to_global(tri_local)
    if w1 <= 0 or w1 + r >= frame.length:
        raise GeometryError("the base of rT must lie strictly inside the facet")
    if not np.all(dom.contains(tri)):
        raise GeometryError("rT is not contained in the domain")
    blockers = [_polygon_corners(dom), data.quasi_frozen_points(), np.array([p for p, _ in gas]).reshape(-1, 2)]
    B = frame.to_local(np.vstack(blockers))
    lam = _barycentric(B, tri_local)
    if np.any(np.all(lam >= -1e-12, axis=1)):
        raise GeometryError("rT meets a corner, quasi-frozen point or gas point")

    h = sol.h
    tol = h if tol is None else tol
    X = sol.points
    Y = frame.to_local(X)
    aff = _segment_affine(data, frame, base)
    u = sol.values - aff(Y)

    d = dom.diameter
    C0 = boundary_deficit_constant(dom, data, frame, base)
    xs = w1 + r * gamma
    y = Y[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(y > 0, (1 + 2 * d * d) * y * np.log(y / d), 0.0) + y * ((Y[:, 0] - xs) ** 2 - d * d - C0)
    scales = []
    for p, c in gas:
        cf = conical(dom, p, c)
        v = v + cf.value(X)
        scales.append(cf.params["a"])
    low = v - u
    kl = int(np.argmax(low))

    lam = _barycentric(Y, tri_local)
    inside = np.all(lam >= -1e-12, axis=1)
    top = frame.to_global(np.array([[w1, r]]))[0]
    u_top = float(sol.evaluate(top)[0] - aff(np.array([[w1, r]]))[0])
    Z = (Y[inside] - np.array([w1, 0.0])) / r
    Z = np.clip(Z, 0.0, None)
    zs = Z.sum(axis=1)
    Z[zs > 1] /= zs[zs > 1, None]
    Z[:, 1] = np.minimum(Z[:, 1], 1.0 - Z[:, 0])  # rounding after the rescale
    st = surface_tension_T(Z, boundary_limit=True)[0]
    upper = r * r * st + u_top * Y[inside, 1] / r
    up = u[inside] - upper
    ku = int(np.argmax(up)) if up.size else 0
    lv = float(low[kl])
    uv = float(up[ku]) if up.size else -math.inf
    return EnvelopeReport(
        lower_violation=lv,
        upper_violation=uv,
        tolerance=tol,
        lower_nodes=int(len(X)),
        upper_nodes=int(inside.sum()),
        C0=C0,
        gas_scales=scales,
        worst_lower=X[kl].tolist(),
        worst_upper=X[inside][ku].tolist() if up.size else [],
        passed=bool(lv <= tol and uv <= tol),
    )


def _barycentric(P, tri):
    a, b, c = tri
    T = np.column_stack([b - a, c - a])
    lam12 = np.linalg.solve(T, (np.atleast_2d(P) - a).T).T
    return np.column_stack([1 - lam12.sum(axis=1), lam12])


# ---------------------------------------------------------------------------
# Abreu comparison ladder
# ---------------------------------------------------------------------------


def abreu_ladder(n: int) -> list[float]:
    """Exponents ``2/n, 3/n, ..., (n-1)/n`` climbed by ``+1/n`` before the log endpoint 1."""
    return [k / n for k in range(2, n)]


def matrix_inequality_slack(A, B) -> float:
    """``trace(AB) - n (det A det B)^(1/n)`` scaled by ``trace(AB)``."""
    n = A.shape[-1]
    tr = np.einsum("...ij,...ji->...", A, B)
    gm = n * (np.linalg.det(A) * np.linalg.det(B)) ** (1.0 / n)
    return (tr - gm) / tr


def abreu_bootstrap_check(n: int, D: float | None = None, grid: int = 9, trials: int = 10_000, samples: int = 20_000, seed: int = 0) -> dict:
    """Closed-form check of the comparison family on a grid of exponents, random SPD
    checks of ``trace(AB) >= n (det A)^(1/n) (det B)^(1/n)`` and the exponent ladder."""
    if n < 2:
        raise ParameterError("n must be at least 2")
    D = math.sqrt(n) if D is None else float(D)
    if D <= 0:
        raise ParameterError("D must be positive")
    ladder = abreu_ladder(n)
    alphas = sorted(set(np.round(np.r_[np.linspace(2.0 / n, 1.0, grid), ladder, 1.0], 15).tolist()))
    family = []
    for a in alphas:
        rep = verify_family_inequality(abreu_comparison(n, a, D), sample_count=samples, seed=seed)
        family.append({"alpha": a, "max_violation": rep.max_violation, "pass": rep.passed})
    rng = np.random.default_rng(seed)
    G1 = rng.standard_normal((trials, n, n))
    G2 = rng.standard_normal((trials, n, n))
    A = G1 @ G1.transpose(0, 2, 1) + 1e-3 * np.eye(n)
    B = G2 @ G2.transpose(0, 2, 1) + 1e-3 * np.eye(n)
    slack = matrix_inequality_slack(A, B)
    min_slack = float(slack.min())
    matrix_ok = min_slack >= -1e-12
    steps = [{"from": b, "to": (ladder[i + 1] if i + 1 < len(ladder) else 1.0)} for i, b in enumerate(ladder)]
    return {
        "n": n,
        "D": D,
        "family": family,
        "family_pass": all(f["pass"] for f in family),
        "matrix_trials": trials,
        "matrix_min_slack": min_slack,
        "matrix_pass": bool(matrix_ok),
        "ladder": ladder,
        "ladder_steps": steps,
        "terminal_alpha": 1.0,
        "pass": bool(all(f["pass"] for f in family) and matrix_ok),
        "slack": INEQUALITY_SLACK,
    }

"""Explicit barrier functions for boundary growth of Monge-Ampere solutions, the
Lobachevsky function and the lozenge surface tension on the unit right triangle.

Every family bundles value, gradient and a closed-form Hessian determinant. The
determinant is never computed numerically here; ``analysis.fd_hessian_det`` is the
independent check.

Coordinates are split as ``x = (x', x_n)`` with ``r = |x'|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import zeta
from scipy.stats import qmc

from .errors import DomainError, ParameterError, UnsupportedFamilyError
from .geometry import ConvexDomain, subgradient_cell_volumes

FAMILIES = (
    "PnWitness",
    "NegPowerSuper",
    "PosPowerSuper",
    "HolderSub",
    "LogLipschitzSub",
    "AbreuComparison",
    "Conical",
    "SurfaceTensionT",
)

INEQUALITY_SLACK = 1e-12

# ---------------------------------------------------------------------------
# Lobachevsky function
# ---------------------------------------------------------------------------

_LOB_TERMS = 40
_k = np.arange(1, _LOB_TERMS + 1)
# L(t) = t - t log(2t) + t * sum_k zeta(2k)/(k(2k+1)) (t/pi)^(2k)   for 0 <= t <= pi/2
_LOB_COEF = zeta(2.0 * _k, 1.0) / (_k * (2 * _k + 1))


@dataclass(frozen=True)
class LobachevskyEvaluator:
    """Evaluates ``-int_0^theta log|2 sin u| du``.

    The argument is reduced to ``[-pi/2, pi/2]`` using oddness and pi-periodicity, then
    the power series of ``log(sin u / u)`` is integrated term by term. With
    ``|theta| <= pi/2`` the terms decay like ``4^-k``, so ``terms=40`` is far below
    double precision.
    """

    terms: int = _LOB_TERMS

    def __call__(self, theta):
        t = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ParameterError("Lobachevsky argument must be finite")
        r = t - np.pi * np.round(t / np.pi)
        a = np.abs(r)
        x = (a / np.pi) ** 2
        poly = np.zeros_like(a)
        for c in _LOB_COEF[: self.terms][::-1]:
            poly = poly * x + c
        with np.errstate(divide="ignore", invalid="ignore"):
            main = np.where(a > 0, a - a * np.log(2.0 * a), 0.0)
        out = np.sign(r) * (main + a * x * poly)
        return float(out) if np.ndim(theta) == 0 else out


lobachevsky = LobachevskyEvaluator()


# ---------------------------------------------------------------------------
# lozenge surface tension on T = conv{(0,0), (1,0), (0,1)}
# ---------------------------------------------------------------------------


def _as_points(x, n=None):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if n is not None and X.shape[1] != n:
        raise DomainError(f"expected points in R^{n}")
    return X, single


def _in_triangle(X, strict=True):
    x1, x2 = X[:, 0], X[:, 1]
    x3 = 1.0 - x1 - x2
    if strict:
        return (x1 > 0) & (x2 > 0) & (x3 > 0)
    return (x1 >= 0) & (x2 >= 0) & (x3 >= 0)


def surface_tension_T(x, boundary_limit: bool = False):
    """Value and gradient of the lozenge surface tension.

    Points on the boundary of T raise ``DomainError`` unless ``boundary_limit`` is
    set, in which case the boundary value 0 is returned with a NaN gradient.
    """
    X, single = _as_points(x, 2)
    if not np.all(_in_triangle(X, strict=False)):
        raise DomainError("point lies outside the triangle T")
    inner = _in_triangle(X, strict=True)
    if not np.all(inner) and not boundary_limit:
        raise DomainError("surface_tension_T is defined on the open triangle; pass boundary_limit=True")
    x1, x2 = X[:, 0], X[:, 1]
    val = -(lobachevsky(np.pi * x1) + lobachevsky(np.pi * x2) + lobachevsky(np.pi * (1 - x1 - x2))) / np.pi ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s12 = np.sin(np.pi * (x1 + x2))
        g = np.column_stack([np.log(np.sin(np.pi * x1) / s12), np.log(np.sin(np.pi * x2) / s12)]) / np.pi
    val = np.where(inner, val, 0.0)
    g[~inner] = np.nan
    if single:
        return float(val[0]), g[0]
    return val, g


def surface_tension_T_hessian_det(x):
    X, single = _as_points(x, 2)
    if not np.all(_in_triangle(X)):
        raise DomainError("point lies outside the open triangle T")
    c1 = 1.0 / np.tan(np.pi * X[:, 0])
    c2 = 1.0 / np.tan(np.pi * X[:, 1])
    c12 = 1.0 / np.tan(np.pi * (X[:, 0] + X[:, 1]))
    det = c1 * c2 - c12 * (c1 + c2)
    return float(det[0]) if single else det


# ---------------------------------------------------------------------------
# the three analytic shapes behind the barrier families
# ---------------------------------------------------------------------------


def _bowl_power(X, C, a, b):
    """``w = C (x_n - x_n^a (1 - r^2)^b)``."""
    xp, xn = X[:, :-1], X[:, -1]
    n = X.shape[1]
    r2 = np.sum(xp ** 2, axis=1)
    s = np.maximum(1.0 - r2, 0.0)
    val = C * (xn - xn ** a * s ** b)
    with np.errstate(divide="ignore", invalid="ignore"):
        gp = (2 * C * b * xn ** a * s ** (b - 1))[:, None] * xp
        gn = C * (1 - a * xn ** (a - 1) * s ** b)
        det = C ** n * (2 * b) ** (n - 1) * xn ** (n * a - 2) * s ** (n * (b - 1)) * a * (1 - a + (1 - 2 * b - a) * r2)
    return val, np.column_stack([gp, gn]), det


def _xn_power(X, lam, alpha, kappa):
    """``w = lam x_n + x_n^alpha (|x'|^2 - kappa)``."""
    xp, xn = X[:, :-1], X[:, -1]
    n = X.shape[1]
    r2 = np.sum(xp ** 2, axis=1)
    val = lam * xn + xn ** alpha * (r2 - kappa)
    with np.errstate(divide="ignore", invalid="ignore"):
        gp = 2 * (xn ** alpha)[:, None] * xp
        gn = lam + alpha * xn ** (alpha - 1) * (r2 - kappa)
        det = 2.0 ** (n - 1) * xn ** (n * alpha - 2) * (alpha * (1 - alpha) * kappa - (alpha ** 2 + alpha) * r2)
    return val, np.column_stack([gp, gn]), det


def _xn_log(X, A, D):
    """``w = A x_n log(x_n / D) + x_n (|x'|^2 - D^2)``."""
    xp, xn = X[:, :-1], X[:, -1]
    n = X.shape[1]
    r2 = np.sum(xp ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(xn > 0, np.log(xn / D), 0.0)
        val = A * xn * lg + xn * (r2 - D ** 2)
        gp = 2 * xn[:, None] * xp
        gn = A * (lg + 1) + r2 - D ** 2
        det = 2.0 ** (n - 1) * xn ** (n - 2) * (A - 2 * r2)
    return val, np.column_stack([gp, gn]), det


def frame_box(n: int, D: float) -> ConvexDomain:
    """Cube ``[-s/2, s/2]^(n-1) x [0, s]`` of diameter ``D``; facet ``2(n-1)`` is its base."""
    s = D / math.sqrt(n)
    lo = np.full(n, -s / 2)
    hi = np.full(n, s / 2)
    lo[-1], hi[-1] = 0.0, s
    return ConvexDomain.box(lo, hi, flat_facet_id=2 * (n - 1))


def unit_ball_volume(k: int) -> float:
    return float(math.pi ** (k / 2) / _gamma(k / 2 + 1))


# ---------------------------------------------------------------------------
# ClosedFormFunction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClosedFormFunction:
    family: str
    params: Mapping
    domain: ConvexDomain
    _impl: object = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.domain.dimension

    def _check(self, X, strict):
        if X.shape[1] != self.n:
            raise DomainError(f"{self.family} lives in R^{self.n}")
        ok = self.domain.contains(X, strict=strict)
        if not np.all(ok):
            where = "interior of" if strict else "closure of"
            raise DomainError(f"point {X[np.argmin(ok)].tolist()} is not in the {where} the natural domain")

    def _raw(self, X):
        return self._impl(X)

    def value(self, x):
        """Value on the closed natural domain (boundary values allowed)."""
        X, single = _as_points(x)
        self._check(X, strict=False)
        v = self._raw(X)[0]
        return float(v[0]) if single else v

    def gradient(self, x):
        X, single = _as_points(x)
        self._check(X, strict=True)
        g = self._raw(X)[1]
        return g[0] if single else g

    def hessian_det(self, x):
        X, single = _as_points(x)
        self._check(X, strict=True)
        d = self._raw(X)[2]
        return float(d[0]) if single else d

    def evaluate(self, x):
        """``(value, gradient, hessian_det)`` at interior points."""
        X, single = _as_points(x)
        self._check(X, strict=True)
        v, g, d = self._raw(X)
        if single:
            return float(v[0]), g[0], float(d[0])
        return v, g, d

    __call__ = value


def eval_family(f: ClosedFormFunction, x):
    return f.evaluate(x)


def _finalize(family, params, domain, impl):
    return ClosedFormFunction(family, MappingProxyType(dict(params)), domain, impl)


def pn_witness(n: int, p: float) -> ClosedFormFunction:
    if n < 2 or not 0 < p <= n:
        raise ParameterError("PnWitness needs n >= 2 and 0 < p <= n")
    a = 2.0 / (n + p)
    b = (n + p - 2.0) / (n + p)
    dom = ConvexDomain.bowl(1.0, n=n, flat_facet_id=0)
    return _finalize("PnWitness", dict(n=n, p=p, a=a, b=b), dom, lambda X: _bowl_power(X, 1.0, a, b))


def neg_power_super(n: int, p: float) -> ClosedFormFunction:
    if n < 2 or p <= 0:
        raise ParameterError("NegPowerSuper needs n >= 2 and p > 0")
    a = 2.0 / (n + p)
    b = n / (n + p)
    C = 0.5
    dom = ConvexDomain.bowl(n / (n + p - 2.0), n=n, flat_facet_id=0)
    return _finalize("NegPowerSuper", dict(n=n, p=p, a=a, b=b, C=C), dom, lambda X: _bowl_power(X, C, a, b))


def pos_power_super(n: int, gamma: float = 0.0, m: float = 1.0, t: float | None = None) -> ClosedFormFunction:
    if n < 3 or not 0 <= gamma < n - 2 or m <= 0:
        raise ParameterError("PosPowerSuper needs n >= 3, 0 <= gamma < n-2 and m > 0")
    alpha = (2.0 + gamma) / n
    tmax = 2.0 ** (-n / 2) * math.sqrt(m)
    t = tmax if t is None else float(t)
    if not 0 < t <= tmax:
        raise ParameterError(f"t must lie in (0, 2^(-n/2) m^(1/2)] = (0, {tmax}]")
    dom = ConvexDomain.bowl(1.0 / (1.0 - alpha), n=n, radius=t, flat_facet_id=0)
    return _finalize(
        "PosPowerSuper", dict(n=n, gamma=gamma, m=m, t=t, alpha=alpha), dom, lambda X: _xn_power(X, 1.0, alpha, t * t)
    )


def holder_sub(n: int, gamma: float = 0.0, M: float = 1.0, D: float | None = None) -> ClosedFormFunction:
    if n < 3 or not 0 <= gamma < n - 2 or M <= 0:
        raise ParameterError("HolderSub needs n >= 3, 0 <= gamma < n-2 and M > 0")
    D = math.sqrt(n) if D is None else float(D)
    alpha = (2.0 + gamma) / n
    K = (2 * D ** 2 + M + 1) / (alpha * (1 - alpha))
    return _finalize(
        "HolderSub", dict(n=n, gamma=gamma, M=M, D=D, alpha=alpha, K=K), frame_box(n, D), lambda X: _xn_power(X, 1.0, alpha, K)
    )


def log_lipschitz_sub(n: int, M: float = 1.0, D: float | None = None) -> ClosedFormFunction:
    if n < 2 or M <= 0:
        raise ParameterError("LogLipschitzSub needs n >= 2 and M > 0")
    D = math.sqrt(n) if D is None else float(D)
    A = M + 2 * D ** 2
    return _finalize("LogLipschitzSub", dict(n=n, M=M, D=D), frame_box(n, D), lambda X: _xn_log(X, A, D))


def abreu_comparison(n: int, alpha: float, D: float | None = None) -> ClosedFormFunction:
    if n < 2 or not (2.0 / n - 1e-15 <= alpha <= 1.0):
        raise ParameterError("AbreuComparison needs alpha in [2/n, 1]")
    D = math.sqrt(n) if D is None else float(D)
    dom = frame_box(n, D)
    if alpha >= 1.0:
        return _finalize("AbreuComparison", dict(n=n, alpha=1.0, D=D), dom, lambda X: _xn_log(X, 1 + 2 * D ** 2, D))
    C_alpha = (1 + 2 * D ** 2) / (alpha * (1 - alpha))
    return _finalize(
        "AbreuComparison", dict(n=n, alpha=alpha, D=D, C_alpha=C_alpha), dom, lambda X: _xn_power(X, 0.0, alpha, C_alpha)
    )


def _conical_raw(X, normals, offsets, apex, scale):
    denom = offsets - normals @ apex
    G = normals / denom[:, None]
    vals = (X - apex) @ G.T
    k = np.argmax(vals, axis=1)
    return scale * (vals[np.arange(len(X)), k] - 1.0), scale * G[k], np.zeros(len(X))


def conical(domain: ConvexDomain | None = None, apex=(0.5, 0.5), c: float = 1.0) -> ClosedFormFunction:
    """``a * C_hat`` where ``C_hat`` is -1 at the apex, 0 on the boundary of the polygon and
    affine on each cone over a facet. The scale ``a`` is calibrated so that the Dirac
    mass at the apex equals ``c``, using the brute-force subgradient measure."""
    domain = ConvexDomain.unit_square() if domain is None else domain
    if domain.kind not in ("polygon", "box") or domain.dimension != 2:
        raise ParameterError("Conical needs a planar polygon or rectangle")
    apex = np.asarray(apex, dtype=float)
    if not domain.contains(apex, strict=True)[0] or c <= 0:
        raise ParameterError("apex must be interior and c > 0")
    normals = np.array([f.normal for f in domain.facets])
    offsets = np.array([f.offset for f in domain.facets])
    corners = np.unique(np.concatenate([f.vertices for f in domain.facets]), axis=0)
    nodes = np.vstack([corners, apex])
    vals = _conical_raw(nodes, normals, offsets, apex, 1.0)[0]
    unit_mass = float(subgradient_cell_volumes(nodes, vals, nodes=[len(nodes) - 1])[0])
    a = math.sqrt(c / unit_mass)
    params = dict(n=2, apex=tuple(apex.tolist()), c=c, a=a, unit_apex_mass=unit_mass)
    fn = _finalize("Conical", params, domain, lambda X: _conical_raw(X, normals, offsets, apex, a))
    return fn


def surface_tension_family() -> ClosedFormFunction:
    def impl(X):
        inner = _in_triangle(X)
        v, g = surface_tension_T(X, boundary_limit=True)
        det = np.full(len(X), np.nan)
        if np.any(inner):
            det[inner] = surface_tension_T_hessian_det(X[inner])
        return v, g, det

    return _finalize("SurfaceTensionT", dict(n=2), ConvexDomain.triangle(flat_facet_id=0), impl)


_BUILDERS = {
    "PnWitness": pn_witness,
    "NegPowerSuper": neg_power_super,
    "PosPowerSuper": pos_power_super,
    "HolderSub": holder_sub,
    "LogLipschitzSub": log_lipschitz_sub,
    "AbreuComparison": abreu_comparison,
    "Conical": conical,
    "SurfaceTensionT": surface_tension_family,
}


def make_family(family: str, **params) -> ClosedFormFunction:
    """Build a family by tag. ``n`` is accepted by every family (Conical and
    SurfaceTensionT require n = 2)."""
    if family not in _BUILDERS:
        raise UnsupportedFamilyError(f"unknown family {family!r}; known: {', '.join(FAMILIES)}")
    if family in ("Conical", "SurfaceTensionT"):
        n = params.pop("n", 2)
        if n != 2:
            raise ParameterError(f"{family} is planar")
        if family == "Conical" and "vertices" in params:
            params["domain"] = ConvexDomain.polygon(params.pop("vertices"))
    try:
        return _BUILDERS[family](**params)
    except TypeError as exc:
        raise ParameterError(str(exc)) from None


# ---------------------------------------------------------------------------
# sampling and inequality verification
# ---------------------------------------------------------------------------


def sample_domain(domain: ConvexDomain, count: int, seed: int = 0, layers: int = 24) -> np.ndarray:
    """Scrambled-Halton interior points plus boundary layers at relative depth ``2^-j``.

    Roughly four fifths of the points are space filling; the rest hug the boundary,
    where the barrier inequalities degenerate. All points are strictly interior.
    """
    n = domain.dimension
    rng = np.random.default_rng(seed)
    halton = qmc.Halton(d=n, scramble=True, seed=rng)
    n_fill = max(1, int(0.8 * count))
    n_layer = max(0, count - n_fill)
    lo, hi = domain.bounds

    if domain.kind == "bowl":
        R = domain.radius
        out = []
        need = n_fill
        while need > 0:
            U = halton.random(4 * need + 16)
            xp = R * (2 * U[:, :-1] - 1)
            r = np.linalg.norm(xp, axis=1)
            keep = r < R
            xp, U, r = xp[keep], U[keep], r[keep]
            xn = domain.profile(r) * U[:, -1]
            out.append(np.column_stack([xp, xn])[:need])
            need -= len(out[-1])
        P = np.vstack(out)
        if n_layer:
            U = rng.random((n_layer, n))
            j = rng.integers(1, layers + 1, n_layer)
            eps = 2.0 ** -j
            kind = rng.integers(0, 3, n_layer)
            d = rng.normal(size=(n_layer, n - 1))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            rr = np.where(kind == 2, R * (1 - eps), R * np.sqrt(U[:, 0]) if n > 2 else R * U[:, 0])
            frac = np.where(kind == 0, eps, np.where(kind == 1, 1 - eps, U[:, -1]))
            Q = np.column_stack([rr[:, None] * d, domain.profile(rr) * frac])
            P = np.vstack([P, Q])
    else:
        out = []
        need = n_fill
        while need > 0:
            U = halton.random(2 * need + 16)
            Q = lo + (hi - lo) * U
            out.append(Q[domain.contains(Q, strict=True)][:need])
            need -= len(out[-1])
        P = np.vstack(out)
        if n_layer and domain.facets:
            F = domain.facets
            which = rng.integers(0, len(F), n_layer)
            j = rng.integers(1, layers + 1, n_layer)
            Q = []
            for fi, jj in zip(which, j):
                f = F[fi]
                if f.vertices is not None:
                    w = rng.dirichlet(np.ones(len(f.vertices)))
                    base = 0.9 * (w @ f.vertices) + 0.1 * f.center
                else:
                    base = f.center
                Q.append(base + f.inward_normal * f.inradius * 2.0 ** -jj)
            Q = np.array(Q)
            P = np.vstack([P, Q[domain.contains(Q, strict=True)]])
    P = P[domain.contains(P, strict=True)]
    if domain.kind == "bowl":
        P = P[P[:, -1] > 0]
    return P


@dataclass(frozen=True)
class InequalityReport:
    family: str
    params: dict
    max_violation: float
    worst_point: list
    samples: int
    passed: bool
    description: str

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "max_violation": self.max_violation,
            "worst_point": self.worst_point,
            "samples": self.samples,
            "pass": self.passed,
            "inequality": self.description,
        }


def _violations(f: ClosedFormFunction, X):
    """Signed, scale-free violation per sample (<= 0 means the inequality holds)."""
    P = f.params
    n = f.n
    v, _, det = f._raw(X)
    fam = f.family
    if fam == "PnWitness":
        return -det / np.max(np.abs(det)), "det D^2 w > 0 (smooth convexity)"
    if fam == "NegPowerSuper":
        return det * np.abs(v) ** P["p"] - 1.0, "det D^2 w <= |w|^-p"
    if fam == "PosPowerSuper":
        rhs = P["m"] * X[:, -1] ** P["gamma"] / 4.0
        return det / rhs - 1.0, "det D^2 v <= m x_n^gamma / 4"
    if fam == "HolderSub":
        rhs = (P["M"] + 1) * X[:, -1] ** (n * P["alpha"] - 2)
        return 1.0 - det / rhs, "det D^2 w >= (M+1) x_n^(n alpha - 2)"
    dist = f.domain.dist_to_boundary(X)
    if fam == "LogLipschitzSub":
        rhs = 2 * P["M"] * dist ** (n - 2)
        return 1.0 - det / rhs, "det D^2 v >= 2M dist^(n-2)"
    if fam == "AbreuComparison":
        rhs = dist ** (n * P["alpha"] - 2)
        return 1.0 - det / rhs, "det D^2 v_alpha >= dist^(n alpha - 2)"
    raise UnsupportedFamilyError(f"{fam} has no sampled inequality")


def verify_family_inequality(f: ClosedFormFunction, sample_count: int = 100_000, seed: int = 0) -> InequalityReport:
    """Check the defining inequality of a family on low-discrepancy and boundary-layer
    samples. Violations are relative (``lhs/rhs - 1`` for upper bounds); PASS iff the
    worst one is at most ``INEQUALITY_SLACK``."""
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in f.params.items()}
    if f.family == "SurfaceTensionT":
        raise UnsupportedFamilyError("SurfaceTensionT is checked through fd_hessian_det, not an inequality")
    if f.family == "Conical":
        apex = np.array(f.params["apex"])
        dom = f.domain
        corners = np.unique(np.concatenate([fc.vertices for fc in dom.facets]), axis=0)
        nodes = np.vstack([corners, apex])
        vals = f.value(nodes)
        mass = float(subgradient_cell_volumes(nodes, vals, nodes=[len(nodes) - 1])[0])
        viol = abs(mass - f.params["c"]) / f.params["c"]
        return InequalityReport(
            "Conical", params, viol, apex.tolist(), 1, viol <= INEQUALITY_SLACK, "apex Monge-Ampere mass equals c"
        )
    X = sample_domain(f.domain, sample_count, seed)
    viol, desc = _violations(f, X)
    viol = np.where(np.isfinite(viol), viol, np.inf)
    k = int(np.argmax(viol))
    mv = float(viol[k])
    return InequalityReport(f.family, params, mv, X[k].tolist(), len(X), mv <= INEQUALITY_SLACK, desc)


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------


def pn_total_mass(n: int, p: float) -> float:
    """Total Monge-Ampere mass of the PnWitness function on its bowl."""
    if n < 2 or not 0 < p < n:
        raise ParameterError("total mass is finite only for 0 < p < n")
    a = 2.0 / (n + p)
    b = 1.0 - a
    return a * b * (2 * b) ** (n - 1) / (n * a - 1) * unit_ball_volume(n - 1)


def bootstrap_sequence(n: int, q: float, k_max: int) -> list[float]:
    """``alpha_0 = 1``, ``alpha_{k+1} = (2 + q alpha_k)/n``; decreases to ``2/(n-q)``."""
    if n < 3 or not 0 < q < n - 2 or k_max < 0:
        raise ParameterError("bootstrap needs n >= 3, 0 < q < n-2 and k_max >= 0")
    out = [1.0]
    for _ in range(k_max):
        out.append((2.0 + q * out[-1]) / n)
    return out

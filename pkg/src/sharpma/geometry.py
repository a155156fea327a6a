"""Convex domains, distances to the boundary, normal probes and a brute-force
Monge-Ampere measure for piecewise-linear convex functions.

Four domain kinds are supported:

* ``polygon``: a convex polygon in the plane, vertices listed once.
* ``box``: an axis-aligned box ``[lo, hi]`` in any dimension n >= 2.
* ``ball``: a Euclidean ball (disk in 2D).
* ``bowl``: ``{(x', x_n) : |x'| < R, 0 < x_n < (R^2 - |x'|^2)^s}``, stored through
  its profile rather than as a polytope. Its only flat facet is the base.

Facets of polytopes are numbered as follows. Polygon facet ``k`` is the edge from
vertex ``k`` to vertex ``k+1`` (vertices are reoriented counter-clockwise on
construction). Box facet ``2k`` is ``{x_k = lo_k}`` and ``2k+1`` is ``{x_k = hi_k}``.
The bowl has a single facet ``0`` (the base ``x_n = 0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, minimize_scalar
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.spatial.distance import pdist

from .errors import ConvexityError, DomainError, GeometryError, ParameterError

DOMAIN_SCHEMA_VERSION = 1
KINDS = ("polygon", "box", "ball", "bowl")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Facet:
    """Flat boundary piece ``{x : normal . x = offset}`` with outward unit ``normal``."""

    id: int
    normal: np.ndarray
    offset: float
    center: np.ndarray
    inradius: float
    vertices: np.ndarray | None = None

    @property
    def inward_normal(self) -> np.ndarray:
        return -self.normal


@dataclass(frozen=True)
class NormalProbe:
    facet_id: int
    anchor: np.ndarray
    normal: np.ndarray
    distances: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.anchor[None, :] + self.distances[:, None] * self.normal[None, :]


@dataclass(frozen=True)
class RigidFrame:
    """Orthonormal frame with ``origin`` on the boundary and last axis pointing inward.

    ``to_local(x) = R (x - origin)``; the rows of ``R`` are the new axes.
    """

    origin: np.ndarray
    R: np.ndarray

    def to_local(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.origin) @ self.R.T

    def to_global(self, y):
        y = np.asarray(y, dtype=float)
        return y @ self.R + self.origin


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    dimension: int
    kind: str
    vertices: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    s: float | None = None
    flat_facet_id: int | None = None
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        n = self.dimension
        if n < 2:
            raise DomainError("dimension must be at least 2")
        if self.kind == "polygon":
            if n != 2:
                raise DomainError("polygons are planar")
            V = np.asarray(self.vertices, dtype=float)
            if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
                raise DomainError("polygon needs at least three 2D vertices")
            area2 = np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
            if area2 < 0:
                V = V[::-1]
            e = np.roll(V, -1, axis=0) - V
            cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
            if np.any(cross <= 1e-14 * np.max(np.abs(e)) ** 2):
                raise ConvexityError("polygon vertices are not in strictly convex position")
            object.__setattr__(self, "vertices", _frozen(V))
        elif self.kind == "box":
            V = np.asarray(self.vertices, dtype=float)
            if V.shape != (2, n) or np.any(V[1] <= V[0]):
                raise DomainError("box needs vertices [lo, hi] with lo < hi")
            object.__setattr__(self, "vertices", _frozen(V))
        elif self.kind == "ball":
            c = np.zeros(n) if self.center is None else np.asarray(self.center, dtype=float)
            if c.shape != (n,) or self.radius is None or self.radius <= 0:
                raise DomainError("ball needs a center of the right dimension and radius > 0")
            object.__setattr__(self, "center", _frozen(c))
        else:
            if self.s is None or self.s <= 0:
                raise DomainError("bowl needs a positive shape exponent s")
            object.__setattr__(self, "radius", 1.0 if self.radius is None else float(self.radius))
            if self.radius <= 0:
                raise DomainError("bowl radius must be positive")
        if self.flat_facet_id is not None:
            ids = [f.id for f in self.facets]
            if self.flat_facet_id not in ids:
                raise DomainError(f"flat_facet_id {self.flat_facet_id} is not a facet of this domain")
            if self.facet(self.flat_facet_id).inradius <= 0:
                raise DomainError("flat facet has empty relative interior")

    # ------------------------------------------------------------------ builders
    @classmethod
    def polygon(cls, vertices, flat_facet_id=None):
        return cls(2, "polygon", vertices=vertices, flat_facet_id=flat_facet_id)

    @classmethod
    def box(cls, lo, hi, flat_facet_id=None):
        lo = np.asarray(lo, dtype=float)
        return cls(len(lo), "box", vertices=[lo, hi], flat_facet_id=flat_facet_id)

    @classmethod
    def unit_cube(cls, n=2, flat_facet_id=None):
        return cls.box(np.zeros(n), np.ones(n), flat_facet_id=flat_facet_id)

    @classmethod
    def unit_square(cls, flat_facet_id=None):
        return cls.unit_cube(2, flat_facet_id)

    @classmethod
    def triangle(cls, flat_facet_id=None):
        """The right triangle with vertices (0,0), (1,0), (0,1); facet 0 is the bottom leg."""
        return cls.polygon([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], flat_facet_id)

    @classmethod
    def ball(cls, center=None, radius=1.0, n=None):
        if center is None:
            center = np.zeros(2 if n is None else n)
        center = np.asarray(center, dtype=float)
        return cls(len(center), "ball", center=center, radius=float(radius))

    @classmethod
    def disk(cls, center=(0.0, 0.0), radius=1.0):
        return cls.ball(center, radius)

    @classmethod
    def bowl(cls, s, n=2, radius=1.0, flat_facet_id=None):
        return cls(n, "bowl", s=float(s), radius=float(radius), flat_facet_id=flat_facet_id)

    # --------------------------------------------------------------- structure
    @cached_property
    def facets(self) -> tuple[Facet, ...]:
        n = self.dimension
        if self.kind == "polygon":
            V = self.vertices
            out = []
            for k in range(len(V)):
                a, b = V[k], V[(k + 1) % len(V)]
                e = b - a
                L = float(np.hypot(*e))
                nrm = np.array([e[1], -e[0]]) / L
                out.append(Facet(k, _frozen(nrm), float(nrm @ a), _frozen((a + b) / 2), L / 2, _frozen([a, b])))
            return tuple(out)
        if self.kind == "box":
            lo, hi = self.vertices
            out = []
            for k in range(n):
                others = [j for j in range(n) if j != k]
                rad = 0.5 * float(np.min((hi - lo)[others]))
                for side, val in ((0, lo[k]), (1, hi[k])):
                    nrm = np.zeros(n)
                    nrm[k] = 1.0 if side else -1.0
                    c = (lo + hi) / 2
                    c[k] = val
                    corners = []
                    for bits in range(2 ** (n - 1)):
                        p = np.empty(n)
                        p[k] = val
                        for t, j in enumerate(others):
                            p[j] = hi[j] if (bits >> t) & 1 else lo[j]
                        corners.append(p)
                    out.append(Facet(2 * k + side, _frozen(nrm), float(nrm @ c), _frozen(c), rad, _frozen(corners)))
            return tuple(out)
        if self.kind == "bowl":
            nrm = np.zeros(n)
            nrm[-1] = -1.0
            return (Facet(0, _frozen(nrm), 0.0, _frozen(np.zeros(n)), float(self.radius)),)
        return ()

    def facet(self, facet_id: int) -> Facet:
        for f in self.facets:
            if f.id == facet_id:
                return f
        raise GeometryError(f"domain has no facet {facet_id}")

    def profile(self, rho):
        """Height of the bowl's curved part above ``|x'| = rho``."""
        rho = np.asarray(rho, dtype=float)
        return np.maximum(self.radius ** 2 - rho ** 2, 0.0) ** self.s

    @cached_property
    def diameter(self) -> float:
        if self.kind == "polygon":
            return float(pdist(self.vertices).max())
        if self.kind == "box":
            lo, hi = self.vertices
            return float(np.linalg.norm(hi - lo))
        if self.kind == "ball":
            return 2.0 * float(self.radius)
        rho = np.linspace(0, self.radius, 2001)
        P = np.concatenate([np.column_stack([rho, self.profile(rho)]), np.column_stack([-rho, self.profile(rho)])])
        return float(pdist(P).max())

    @cached_property
    def bounds(self) -> np.ndarray:
        """Axis-aligned bounding box as a ``(2, n)`` array."""
        n = self.dimension
        if self.kind in ("polygon", "box"):
            V = self.vertices
            return np.array([V.min(0), V.max(0)])
        if self.kind == "ball":
            return np.array([self.center - self.radius, self.center + self.radius])
        lo = np.full(n, -self.radius)
        hi = np.full(n, self.radius)
        lo[-1] = 0.0
        hi[-1] = float(self.profile(0.0))
        return np.array([lo, hi])

    # ------------------------------------------------------------- membership
    def signed_margin(self, x) -> np.ndarray:
        """Positive inside, zero on the boundary, negative outside.

        For polytopes and balls this is the signed distance to the boundary inside the
        domain; for bowls it is only a membership indicator.
        """
        X = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind in ("polygon", "box"):
            N = np.array([f.normal for f in self.facets])
            b = np.array([f.offset for f in self.facets])
            return np.min(b[None, :] - X @ N.T, axis=1)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(X - self.center, axis=1)
        r = np.linalg.norm(X[:, :-1], axis=1)
        z = X[:, -1]
        return np.minimum.reduce([z, self.profile(np.minimum(r, self.radius)) - z, self.radius - r])

    def contains(self, x, strict=False) -> np.ndarray:
        m = self.signed_margin(x)
        slack = self.tol * max(1.0, self.diameter)
        return m > slack if strict else m >= -slack

    # ---------------------------------------------------------------- distance
    def dist_to_boundary(self, x):
        """Euclidean distance to the boundary; scalar in, scalar out."""
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dimension:
            raise DomainError("point has the wrong dimension")
        bad = ~self.contains(X)
        if np.any(bad):
            raise DomainError(f"point {X[np.argmax(bad)].tolist()} lies outside the domain")
        if self.kind != "bowl":
            d = np.maximum(self.signed_margin(X), 0.0)
        else:
            d = np.array([self._bowl_dist(p) for p in X])
        return float(d[0]) if single else d

    def _bowl_dist(self, p) -> float:
        r = float(np.linalg.norm(p[:-1]))
        z = float(p[-1])
        R, s = self.radius, self.s
        base = max(z, 0.0)
        # nearest point of the curved part lies in the meridian half-plane through p
        rho = np.linspace(0.0, R, 257)
        g = (rho - r) ** 2 + (self.profile(rho) - z) ** 2
        k = int(np.argmin(g))
        lo, hi = rho[max(k - 1, 0)], rho[min(k + 1, len(rho) - 1)]
        # optimise the offset from r: the bounded method's tolerance is relative to |x|
        res = minimize_scalar(
            lambda o: o * o + (float(self.profile(r + o)) - z) ** 2,
            bounds=(lo - r, hi - r),
            method="bounded",
            options={"xatol": 1e-15},
        )
        curved = float(np.sqrt(max(min(res.fun, g[k]), 0.0)))
        del s
        return min(base, curved)

    # ------------------------------------------------------------------ probes
    def normal_probe(self, facet_id: int, J: int, d0: float, anchor=None, max_fraction: float = 1.0) -> NormalProbe:
        """Dyadic probe ``anchor + d0 2^-j nu`` (j = 0..J) along the inward normal of a facet."""
        f = self.facet(facet_id)
        if J < 0:
            raise GeometryError("J must be nonnegative")
        if not d0 > 0:
            raise GeometryError("d0 must be positive")
        if d0 > max_fraction * f.inradius:
            raise GeometryError(f"d0={d0} exceeds {max_fraction} x facet inradius {f.inradius}")
        a = f.center.copy() if anchor is None else np.asarray(anchor, dtype=float)
        if abs(f.normal @ a - f.offset) > 1e-10 * max(1.0, self.diameter):
            raise GeometryError("anchor does not lie on the facet hyperplane")
        nu = f.inward_normal.copy()
        d = d0 * 2.0 ** -np.arange(J + 1)
        P = a[None, :] + d[:, None] * nu[None, :]
        inside = self.contains(P, strict=True)
        if not np.all(inside):
            j = int(np.argmin(inside))
            raise GeometryError(f"probe point j={j} at distance {d[j]} leaves the domain")
        return NormalProbe(facet_id, _frozen(a), _frozen(nu), _frozen(d))

    def frame_at(self, z) -> RigidFrame:
        """Rigid motion putting the boundary point nearest to ``z`` at the origin with
        ``z`` on the positive last axis, as used for the comparison functions."""
        z = np.asarray(z, dtype=float)
        n = self.dimension
        d = self.dist_to_boundary(z)
        if self.kind in ("polygon", "box"):
            margins = np.array([f.offset - f.normal @ z for f in self.facets])
            nu = -self.facets[int(np.argmin(margins))].normal
        elif self.kind == "ball":
            v = z - self.center
            nv = np.linalg.norm(v)
            nu = -v / nv if nv > 0 else -np.eye(n)[-1]
        else:
            if d >= z[-1] - 1e-15:
                nu = np.eye(n)[-1]
            else:
                eps = 1e-7 * max(d, 1e-6)
                grad = np.array([(self.dist_to_boundary(z + eps * e) - self.dist_to_boundary(z - eps * e)) / (2 * eps) for e in np.eye(n)])
                nu = grad / np.linalg.norm(grad)
        origin = z - d * nu
        return RigidFrame(_frozen(origin), _frozen(frame_rotation(nu)))

    # ----------------------------------------------------------------- JSON
    def to_dict(self) -> dict:
        out = {"schema_version": DOMAIN_SCHEMA_VERSION, "dimension": self.dimension, "kind": self.kind}
        if self.kind in ("polygon", "box"):
            out["vertices"] = self.vertices.tolist()
        elif self.kind == "ball":
            out["center"] = self.center.tolist()
            out["radius"] = self.radius
        else:
            out["profile"] = {"s": self.s, "radius": self.radius}
        out["flat_facet_id"] = self.flat_facet_id
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ConvexDomain":
        ver = d.get("schema_version", DOMAIN_SCHEMA_VERSION)
        if ver != DOMAIN_SCHEMA_VERSION:
            raise DomainError(f"unsupported domain schema version {ver}")
        try:
            kind = d["kind"]
            n = int(d["dimension"])
        except KeyError as exc:
            raise DomainError(f"domain description lacks field {exc}") from None
        flat = d.get("flat_facet_id")
        if kind in ("polygon", "box"):
            return cls(n, kind, vertices=d["vertices"], flat_facet_id=flat)
        if kind in ("ball", "disk"):
            return cls(n, "ball", center=d.get("center"), radius=float(d["radius"]), flat_facet_id=flat)
        if kind == "bowl":
            prof = d.get("profile", {})
            return cls(n, "bowl", s=float(prof["s"]), radius=float(prof.get("radius", 1.0)), flat_facet_id=flat)
        raise DomainError(f"unknown domain kind {kind!r}")

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ConvexDomain":
        return cls.from_dict(json.loads(Path(path).read_text()))


def frame_rotation(nu) -> np.ndarray:
    """Rotation matrix whose last row is the unit vector ``nu``."""
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    n = len(nu)
    M = np.column_stack([nu, np.eye(n)])
    Q, _ = np.linalg.qr(M)
    Q = Q[:, :n]
    Q[:, 0] *= np.sign(Q[:, 0] @ nu)
    R = np.vstack([Q[:, 1:].T, Q[:, 0]])
    if np.linalg.det(R) < 0:
        R[0] *= -1
    return R


def dist_to_boundary(domain: ConvexDomain, x):
    return domain.dist_to_boundary(x)


def normal_probe(domain: ConvexDomain, facet_id: int, J: int, d0: float, **kw) -> NormalProbe:
    return domain.normal_probe(facet_id, J, d0, **kw)


# ---------------------------------------------------------------------------
# brute-force Monge-Ampere measure of piecewise-linear convex functions
# ---------------------------------------------------------------------------

BRUTE_FORCE_LIMIT = 4000


def _hull_boundary_mask(X) -> np.ndarray:
    H = ConvexHull(X)
    scale = max(1.0, float(np.ptp(X, axis=0).max()))
    s = X @ H.equations[:, :-1].T + H.equations[:, -1]
    return np.max(s, axis=1) >= -1e-12 * scale


def _clip_polygon(P, a, b):
    """Clip polygon ``P`` (k x 2) to the half-plane ``a . p <= b``."""
    if len(P) == 0:
        return P
    s = P @ a - b
    out = []
    k = len(P)
    for i in range(k):
        cur, nxt = P[i], P[(i + 1) % k]
        sc, sn = s[i], s[(i + 1) % k]
        if sc <= 0:
            out.append(cur)
        if (sc < 0 < sn) or (sn < 0 < sc):
            t = sc / (sc - sn)
            out.append(cur + t * (nxt - cur))
    return np.array(out).reshape(-1, 2)


def _shoelace(P) -> float:
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _cell_volume(A, b, interior: bool, slack: float) -> float:
    """Volume of ``{p : A p <= b + slack}``; raises if the set is empty."""
    n = A.shape[1]
    bb = b + slack
    if not interior:
        res = linprog(np.zeros(n), A_ub=A, b_ub=bb, bounds=[(None, None)] * n, method="highs")
        if res.status == 2:
            raise ConvexityError("node value lies above the lower convex hull")
        return float("inf")
    if n == 2:
        hull = ConvexHull(A)
        rho = float(np.min(-hull.equations[:, -1]))
        B = 2.0 * (float(np.max(np.abs(bb))) / rho + 1.0)
        box = np.array([[-B, -B], [B, -B], [B, B], [-B, B]])
        # exact constraints for the area; the relaxed ones only decide emptiness
        for rhs in (b, bb):
            P = box
            for a, c in zip(A, rhs):
                P = _clip_polygon(P, a, c)
                if len(P) == 0:
                    break
            if len(P):
                return _shoelace(P) if rhs is b else 0.0
        raise ConvexityError("node value lies above the lower convex hull")
    norms = np.linalg.norm(A, axis=1)
    res = linprog(
        np.r_[np.zeros(n), -1.0],
        A_ub=np.column_stack([A, norms]),
        b_ub=bb,
        bounds=[(None, None)] * n + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        raise ConvexityError("could not locate the subgradient cell")
    r = -res.fun
    if r < 0:
        raise ConvexityError("node value lies above the lower convex hull")
    if r <= 10 * slack / max(norms.min(), 1e-300):
        return 0.0
    hs = HalfspaceIntersection(np.column_stack([A, -bb]), res.x[:n])
    return float(ConvexHull(hs.intersections).volume)


def subgradient_cell_volumes(points, values, nodes=None, limit: int = BRUTE_FORCE_LIMIT) -> np.ndarray:
    """Per-node Lebesgue measure of the subdifferential of the lower convex envelope.

    Nodes on the boundary of the convex hull of ``points`` have unbounded cells and
    get ``inf``. Convexity of the data is checked for every node.
    """
    X = np.asarray(points, dtype=float)
    f = np.asarray(values, dtype=float)
    m, n = X.shape
    if m > limit:
        raise ParameterError(f"{m} nodes exceed the brute-force limit {limit}")
    if f.shape != (m,):
        raise ParameterError("one value per node is required")
    onb = _hull_boundary_mask(X)
    slack = 1e-12 * (1.0 + float(np.max(np.abs(f))))
    check = np.arange(m)
    want = set(range(m)) if nodes is None else set(int(i) for i in nodes)
    out = np.zeros(m)
    for i in check:
        A = np.delete(X - X[i], i, axis=0)
        b = np.delete(f - f[i], i)
        v = _cell_volume(A, b, not onb[i], slack)
        out[i] = v if i in want else 0.0
    if nodes is not None:
        return out[np.asarray(sorted(want), dtype=int)]
    return out


def subgradient_measure(points, values, E=None, limit: int = BRUTE_FORCE_LIMIT) -> float:
    """Monge-Ampere mass ``|du(E)|`` of the piecewise-linear convex function with the given
    node values. ``E`` is an index list or boolean mask (default: every node)."""
    X = np.asarray(points, dtype=float)
    if E is None:
        idx = np.arange(len(X))
    else:
        E = np.asarray(E)
        idx = np.nonzero(E)[0] if E.dtype == bool else E.astype(int).ravel()
    vols = subgradient_cell_volumes(X, values, nodes=idx, limit=limit)
    return float(np.sum(vols))

"""Right-hand sides, boundary data and solver settings."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..errors import ConvexityError, DomainError, ParameterError
from ..geometry import ConvexDomain

RHS_KINDS = ("constant", "distpow", "upow", "measure")


@dataclass(frozen=True)
class RhsSpec:
    """Right-hand side of ``det D^2 u = mu``.

    ``constant``: ``m``; ``distpow``: ``m dist^gamma``; ``upow``: ``|u|^q`` with floor
    ``eps`` (``None`` means the solver's schedule); ``measure``: Lebesgue measure plus
    atoms ``c_k delta_{q_k}``.
    """

    kind: str
    m: float = 1.0
    gamma: float = 0.0
    q: float = 0.0
    eps: float | None = None
    gas: tuple = ()

    def __post_init__(self):
        if self.kind not in RHS_KINDS:
            raise ParameterError(f"unknown rhs kind {self.kind!r}")
        if self.m <= 0:
            raise ParameterError("m must be positive")
        if self.gamma < 0:
            raise ParameterError("gamma must be nonnegative")
        if self.eps is not None and self.eps <= 0:
            raise ParameterError("eps must be positive")
        gas = tuple((tuple(float(t) for t in p), float(c)) for p, c in self.gas)
        if any(c <= 0 for _, c in gas):
            raise ParameterError("gas point masses must be positive")
        if self.kind == "measure" and not gas:
            pass
        object.__setattr__(self, "gas", gas)

    @classmethod
    def constant(cls, m=1.0):
        return cls("constant", m=float(m))

    @classmethod
    def dist_power(cls, m, gamma):
        return cls("distpow", m=float(m), gamma=float(gamma))

    @classmethod
    def solution_power(cls, q, eps=None):
        return cls("upow", q=float(q), eps=eps)

    @classmethod
    def measure(cls, gas=()):
        return cls("measure", gas=tuple(gas))

    def density(self, dist):
        """Absolutely continuous part at nodes with boundary distance ``dist``."""
        dist = np.asarray(dist, dtype=float)
        if self.kind == "constant":
            return np.full(dist.shape, self.m)
        if self.kind == "distpow":
            return self.m * dist ** self.gamma
        if self.kind == "measure":
            return np.ones(dist.shape)
        raise ParameterError("|u|^q has no fixed density")

    def check_domain(self, domain: ConvexDomain):
        n = domain.dimension
        if self.kind == "upow" and not self.q < n:
            raise ParameterError("solution-power rhs needs q < n")
        for p, _ in self.gas:
            if len(p) != n or not domain.contains(np.array(p), strict=True)[0]:
                raise DomainError(f"gas point {p} is not strictly inside the domain")

    def to_string(self) -> str:
        if self.kind == "constant":
            return f"const:{self.m:g}"
        if self.kind == "distpow":
            return f"distpow:{self.m:g},{self.gamma:g}"
        if self.kind == "upow":
            return f"upow:{self.q:g}" + (f",{self.eps:g}" if self.eps else "")
        pts = ",".join("(" + ",".join(f"{t:g}" for t in p) + f",{c:g})" for p, c in self.gas)
        return f"measure:gas=[{pts}]"

    @classmethod
    def parse(cls, text: str) -> "RhsSpec":
        """Parse ``const:m``, ``distpow:m,gamma``, ``upow:q[,eps]`` or
        ``measure:gas=[(x,y,c),...]``."""
        head, _, body = text.strip().partition(":")
        head = head.strip().lower()
        try:
            if head in ("const", "constant"):
                return cls.constant(float(body or 1.0))
            if head == "distpow":
                m, g = (float(t) for t in body.split(","))
                return cls.dist_power(m, g)
            if head == "upow":
                parts = [float(t) for t in body.split(",")]
                return cls.solution_power(parts[0], parts[1] if len(parts) > 1 else None)
            if head == "measure":
                mt = re.fullmatch(r"\s*gas\s*=\s*(\[.*\])\s*", body)
                if mt is None:
                    raise ValueError("expected gas=[...]")
                triples = ast.literal_eval(mt.group(1))
                return cls.measure([(tuple(t[:-1]), t[-1]) for t in triples])
        except (ValueError, SyntaxError, TypeError) as exc:
            raise ParameterError(f"cannot parse rhs {text!r}: {exc}") from None
        raise ParameterError(f"unknown rhs {text!r}")


BACKENDS = {"geometric": "geometric", "geo": "geometric", "wide-stencil": "wide-stencil", "fd": "wide-stencil"}


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``stencil_width`` bounds the sup-norm of the integer stencil directions. Widths
    of 1 are accepted for grids of dimension >= 3, where width 2 already needs
    dozens of orthogonal frames.
    """

    backend: str = "geometric"
    h: float = 0.02
    mass_tol: float = 1e-10
    max_iter: int = 300
    damping: float = 0.5
    eps_scale: float = 0.1
    stencil_width: int = 2
    weight_bound: float = 1e6
    picard_tol: float = 1e-9
    residual_tol: float = 1e-5
    fold_symmetry: bool = True

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}")
        object.__setattr__(self, "backend", BACKENDS[self.backend])
        if not self.h > 0:
            raise ParameterError("h must be positive")
        if not 0 < self.damping <= 1:
            raise ParameterError("damping must lie in (0, 1]")
        if self.stencil_width < 1:
            raise ParameterError("stencil width must be at least 1")
        if self.weight_bound <= 1:
            raise ParameterError("weight bound must exceed 1")

    def eps_floor(self, n: int, q: float) -> float:
        """Floor for ``|u|`` in ``|u|^q``: ``eps_scale * h^(2/(n-q))``."""
        return self.eps_scale * self.h ** (2.0 / (n - q))


@dataclass(frozen=True)
class BoundaryData:
    """Piecewise-affine Dirichlet data.

    ``zero``; ``affine`` (``a . x + c``, any domain); or ``piecewise`` on a planar
    polygon, given by values at boundary breakpoints (listed counter-clockwise and
    including every corner) and interpolated linearly in arclength between them.
    """

    kind: str = "zero"
    breakpoints: np.ndarray | None = None
    values: np.ndarray | None = None
    slope: np.ndarray | None = None
    intercept: float = 0.0
    _domain: ConvexDomain | None = field(default=None, repr=False)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def affine(cls, slope, intercept=0.0):
        return cls("affine", slope=np.asarray(slope, dtype=float), intercept=float(intercept))

    @classmethod
    def piecewise(cls, domain: ConvexDomain, breakpoints, values):
        if domain.dimension != 2 or domain.kind not in ("polygon", "box"):
            raise DomainError("piecewise boundary data needs a planar polygon")
        P = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if len(P) != len(v) or len(P) < 3:
            raise ParameterError("one value per breakpoint (at least three) is required")
        if np.any(np.abs(domain.signed_margin(P)) > 1e-10):
            raise DomainError("breakpoints must lie on the boundary")
        bd = cls("piecewise", breakpoints=P, values=v, _domain=domain)
        s = bd._arclength(P)
        corners = _polygon_vertices(domain)
        sc = bd._arclength(corners)
        for c in sc:
            if np.min(np.abs(((s - c) + bd._perimeter / 2) % bd._perimeter - bd._perimeter / 2)) > 1e-10:
                raise ParameterError("breakpoints must include every corner")
        return bd

    @classmethod
    def from_vertex_values(cls, domain: ConvexDomain, values):
        return cls.piecewise(domain, _polygon_vertices(domain), values)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def _perimeter(self) -> float:
        V = _polygon_vertices(self._domain)
        return float(np.sum(np.linalg.norm(np.roll(V, -1, 0) - V, axis=1)))

    def _arclength(self, X):
        V = _polygon_vertices(self._domain)
        E = np.roll(V, -1, 0) - V
        L = np.linalg.norm(E, axis=1)
        cum = np.r_[0.0, np.cumsum(L)[:-1]]
        X = np.atleast_2d(X)
        # distance of each point to each edge segment
        t = np.clip(np.einsum("mkj,kj->mk", X[:, None, :] - V[None], E) / L ** 2, 0, 1)
        proj = V[None] + t[..., None] * E[None]
        d = np.linalg.norm(X[:, None, :] - proj, axis=2)
        k = np.argmin(d, axis=1)
        return cum[k] + t[np.arange(len(X)), k] * L[k]

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "zero":
            return np.zeros(len(X))
        if self.kind == "affine":
            return X @ self.slope + self.intercept
        s = self._arclength(X)
        sb = self._arclength(self.breakpoints)
        o = np.argsort(sb)
        return np.interp(s, sb[o], self.values[o], period=self._perimeter)

    def affine_minorant(self, Xb):
        """Affine function below the data at the boundary nodes ``Xb`` (least-squares fit
        shifted down). Returns ``(slope, intercept)``."""
        Xb = np.atleast_2d(Xb)
        g = self(Xb)
        if self.kind == "zero":
            return np.zeros(Xb.shape[1]), 0.0
        if self.kind == "affine":
            return self.slope.copy(), self.intercept
        M = np.column_stack([Xb, np.ones(len(Xb))])
        coef, *_ = np.linalg.lstsq(M, g, rcond=None)
        shift = float(np.max(M @ coef - g))
        return coef[:-1], float(coef[-1] - shift)

    def validate(self, Xb):
        """Raise ``ConvexityError`` unless the data at ``Xb`` is the restriction of a
        convex function, i.e. every boundary node admits a supporting plane."""
        if self.kind in ("zero", "affine"):
            return
        Xb = np.atleast_2d(Xb)
        g = self(Xb)
        tol = 1e-10 * (1.0 + np.max(np.abs(g)))
        for i in range(len(Xb)):
            A = np.delete(Xb - Xb[i], i, axis=0)
            b = np.delete(g - g[i], i) + tol
            res = linprog(np.zeros(2), A_ub=A, b_ub=b, bounds=[(None, None)] * 2, method="highs")
            if res.status == 2:
                raise ConvexityError(f"boundary data is not convex-compatible near {Xb[i].tolist()}")

    def quasi_frozen_points(self) -> np.ndarray:
        """Breakpoints off the corners where the data has a kink."""
        if self.kind != "piecewise":
            return np.zeros((0, 2))
        V = _polygon_vertices(self._domain)
        out = []
        sb = self._arclength(self.breakpoints)
        o = np.argsort(sb)
        P, v, s = self.breakpoints[o], self.values[o], sb[o]
        per = self._perimeter
        k = len(P)
        for i in range(k):
            if np.min(np.linalg.norm(V - P[i], axis=1)) < 1e-12:
                continue
            sl = (v[i] - v[i - 1]) / ((s[i] - s[i - 1]) % per)
            sr = (v[(i + 1) % k] - v[i]) / ((s[(i + 1) % k] - s[i]) % per)
            if abs(sl - sr) > 1e-12 * (1 + abs(sl) + abs(sr)):
                out.append(P[i])
        return np.array(out).reshape(-1, 2)

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "affine":
            return {"kind": "affine", "slope": self.slope.tolist(), "intercept": self.intercept}
        return {"kind": "piecewise", "breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict, domain: ConvexDomain) -> "BoundaryData":
        k = d.get("kind", "zero")
        if k == "zero":
            return cls.zero()
        if k == "affine":
            return cls.affine(d["slope"], d.get("intercept", 0.0))
        if k == "piecewise":
            return cls.piecewise(domain, d["breakpoints"], d["values"])
        raise ParameterError(f"unknown boundary data kind {k!r}")


def _polygon_vertices(domain: ConvexDomain) -> np.ndarray:
    if domain.kind == "polygon":
        return np.asarray(domain.vertices)
    if domain.kind == "box" and domain.dimension == 2:
        (x0, y0), (x1, y1) = domain.vertices
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    raise DomainError("domain has no polygonal boundary")

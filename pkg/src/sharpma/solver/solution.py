"""Container for discrete solutions and their CSV serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..errors import DomainError, ParameterError
from ..geometry import ConvexDomain

SOLUTION_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Nodal values of a discrete convex solution.

    ``masses`` holds the discrete Monge-Ampère mass of each node (zero on the
    boundary) and ``targets`` the prescribed mass it should match. Geometric
    solutions carry the lower-hull ``planes`` (rows ``(slope, intercept)``); grid
    solutions carry ``grid_shape`` with nodes listed in C order.
    """

    points: np.ndarray
    values: np.ndarray
    masses: np.ndarray
    targets: np.ndarray
    is_boundary: np.ndarray
    domain: ConvexDomain
    backend: str
    h: float
    rhs: str
    diagnostics: dict = field(default_factory=dict)
    grid_shape: tuple | None = None
    planes: np.ndarray | None = None

    def __post_init__(self):
        for name in ("points", "values", "masses", "targets", "is_boundary"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return ~self.is_boundary

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def dist_to_boundary(self) -> np.ndarray:
        d = np.zeros(len(self.points))
        m = self.interior
        if m.any():
            d[m] = self.domain.dist_to_boundary(self.points[m])
        return d

    def evaluate(self, X) -> np.ndarray:
        """Interpolate the discrete solution: piecewise linear on the lower hull for
        the geometric backend, multilinear on the grid otherwise."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(self.domain.contains(X)):
            raise DomainError("evaluation point outside the domain")
        if self.planes is not None:
            n = self.dimension
            return np.max(X @ self.planes[:, :n].T + self.planes[:, n], axis=1)
        if self.grid_shape is None:
            raise ParameterError("solution has no interpolation structure")
        axes = [np.unique(self.points[:, k]) for k in range(self.dimension)]
        interp = RegularGridInterpolator(axes, self.values.reshape(self.grid_shape))
        return interp(X)

    def __call__(self, X):
        out = self.evaluate(X)
        return out[0] if np.ndim(X) == 1 else out

    def to_csv(self, path) -> Path:
        """Write nodes as CSV (coordinates, value, local mass, dist_to_boundary) and a
        ``.meta.json`` sidecar with the domain, solver and diagnostics."""
        path = Path(path)
        n = self.dimension
        dist = self.dist_to_boundary()
        coords = [f"x{k + 1}" for k in range(n)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(coords + ["value", "mass", "dist_to_boundary", "boundary"])
            for p, v, m, d, b in zip(self.points, self.values, self.masses, dist, self.is_boundary):
                w.writerow([repr(float(t)) for t in p] + [repr(float(v)), repr(float(m)), repr(float(d)), int(b)])
        meta = {
            "schema_version": SOLUTION_SCHEMA_VERSION,
            "domain": self.domain.to_dict(),
            "backend": self.backend,
            "h": self.h,
            "rhs": self.rhs,
            "grid_shape": [int(s) for s in self.grid_shape] if self.grid_shape else None,
            "diagnostics": _jsonable(self.diagnostics),
        }
        if self.planes is not None:
            meta["planes"] = self.planes.tolist()
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path, domain: ConvexDomain | None = None) -> "DiscreteSolution":
        """Read a solution CSV. The sidecar supplies the domain when present;
        otherwise ``domain`` must be given."""
        path = Path(path)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        n = sum(1 for c in header if c.startswith("x"))
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        if meta and meta.get("schema_version") != SOLUTION_SCHEMA_VERSION:
            raise ParameterError("unsupported solution schema version")
        if domain is None:
            if "domain" not in meta:
                raise ParameterError("solution has no sidecar; pass the domain explicitly")
            domain = ConvexDomain.from_dict(meta["domain"])
        bnd = body[:, n + 3].astype(bool) if body.shape[1] > n + 3 else body[:, n + 2] == 0
        planes = np.array(meta["planes"]) if meta.get("planes") else None
        gs = tuple(meta["grid_shape"]) if meta.get("grid_shape") else None
        return cls(
            points=body[:, :n],
            values=body[:, n],
            masses=body[:, n + 1],
            targets=np.full(len(body), np.nan),
            is_boundary=bnd,
            domain=domain,
            backend=meta.get("backend", "unknown"),
            h=float(meta.get("h", np.nan)),
            rhs=meta.get("rhs", ""),
            diagnostics=meta.get("diagnostics", {}),
            grid_shape=gs,
            planes=planes,
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj

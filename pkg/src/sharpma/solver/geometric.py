"""Planar geometric backend: per-node subgradient cells of the lower convex hull.

For nodal values ``u`` the discrete Monge-Ampère mass of an interior node is the
area of the subgradient cell of the lower convex envelope. In two dimensions it is

    A_i = 1/2 sum_j L_ij (u_j - u_i),   L_ij = |g_f - g_f'| / |x_i - x_j|,

summed over hull edges ``ij`` with adjacent faces ``f, f'`` of gradients ``g``.
The map ``u -> A`` is solved for prescribed masses by damped Newton whose line
search keeps every mass bounded away from zero, which keeps the iterate convex.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, Delaunay

from ..errors import ConvergenceError, DomainError
from ..geometry import ConvexDomain
from .solution import DiscreteSolution
from .spec import BoundaryData, RhsSpec, SolverConfig

_LIFT_JITTER = 1e-9


def _jitter(m: int) -> np.ndarray:
    """Deterministic per-node offsets in [0, 1) used to break lifted degeneracies."""
    i = np.arange(m, dtype=np.uint64)
    return ((i * np.uint64(2654435761) + np.uint64(12345)) % np.uint64(2**32)).astype(float) / 2.0**32


def node_set(domain: ConvexDomain, h: float):
    """Grid nodes with spacing ``h`` well inside the domain plus boundary nodes.

    Returns ``(X, is_boundary)``. Polygon corners are always nodes and every edge
    is split into pieces no longer than ``h``.
    """
    if domain.dimension != 2:
        raise DomainError("the geometric backend is planar")
    lo, hi = domain.bounds
    if domain.kind == "ball":
        c, R = domain.center, domain.radius
        g = np.arange(-R, R + h / 2, h)
        G = np.array(np.meshgrid(g, g, indexing="ij")).reshape(2, -1).T
        Xi = c + G[np.linalg.norm(G, axis=1) < R - 0.3 * h]
        M = int(np.ceil(2 * np.pi * R / h))
        th = 2 * np.pi * np.arange(M) / M
        Xb = c + R * np.column_stack([np.cos(th), np.sin(th)])
    elif domain.kind in ("polygon", "box"):
        if domain.kind == "box":
            (x0, y0), (x1, y1) = domain.vertices
            V = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        else:
            V = np.asarray(domain.vertices)
        gx = lo[0] + h * np.arange(int(np.floor((hi[0] - lo[0]) / h + 1e-9)) + 1)
        gy = lo[1] + h * np.arange(int(np.floor((hi[1] - lo[1]) / h + 1e-9)) + 1)
        G = np.array(np.meshgrid(gx, gy, indexing="ij")).reshape(2, -1).T
        Xi = G[domain.signed_margin(G) > 0.3 * h]
        parts = []
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            k = int(np.ceil(np.linalg.norm(b - a) / h - 1e-9))
            t = np.arange(k)[:, None] / k
            parts.append(a + t * (b - a))
        Xb = np.vstack(parts)
    else:
        raise DomainError(f"the geometric backend does not mesh {domain.kind} domains")
    X = np.vstack([Xi, Xb])
    return X, np.r_[np.zeros(len(Xi), bool), np.ones(len(Xb), bool)]


def lumped_areas(X) -> np.ndarray:
    """One third of the Delaunay star area of every node."""
    T = Delaunay(X).simplices
    a, b, c = T.T
    area = 0.5 * np.abs((X[b, 0] - X[a, 0]) * (X[c, 1] - X[a, 1]) - (X[b, 1] - X[a, 1]) * (X[c, 0] - X[a, 0]))
    return np.bincount(T.ravel(), np.repeat(area / 3.0, 3), len(X))


class LowerHull:
    """Lower convex hull of lifted nodes with face gradients and edge weights."""

    def __init__(self, X, u, jitter_scale):
        P = np.column_stack([X, u + jitter_scale * _jitter(len(u))])
        H = ConvexHull(P)
        F = H.simplices[H.equations[:, 2] < -1e-12]
        a, b, c = F.T
        E1, E2 = X[b] - X[a], X[c] - X[a]
        det = E1[:, 0] * E2[:, 1] - E1[:, 1] * E2[:, 0]
        # drop slivers spanned by collinear boundary nodes
        flat = np.abs(det) > 1e-12 * np.ptp(X, axis=0).max() ** 2
        F, E1, E2, det = F[flat], E1[flat], E2[flat], det[flat]
        a, b, c = F.T
        r1, r2 = u[b] - u[a], u[c] - u[a]
        g = np.column_stack([(r1 * E2[:, 1] - r2 * E1[:, 1]) / det, (E1[:, 0] * r2 - E2[:, 0] * r1) / det])
        self.faces, self.grad = F, g
        self.intercept = u[a] - np.sum(g * X[a], axis=1)

        m = len(F)
        e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
        fid = np.tile(np.arange(m), 3)
        key = e[:, 0] * len(u) + e[:, 1]
        o = np.argsort(key, kind="stable")
        key, e, fid = key[o], e[o], fid[o]
        shared = np.nonzero(key[1:] == key[:-1])[0]
        i, j = e[shared].T
        f1, f2 = fid[shared], fid[shared + 1]
        self.i, self.j = i, j
        self.L = np.linalg.norm(g[f1] - g[f2], axis=1) / np.linalg.norm(X[i] - X[j], axis=1)

    def masses(self, u) -> np.ndarray:
        i, j, L = self.i, self.j, self.L
        m = len(u)
        return 0.5 * (np.bincount(i, L * (u[j] - u[i]), m) + np.bincount(j, L * (u[i] - u[j]), m))

    def jacobian(self, m: int, keep) -> sp.csr_matrix:
        i, j, L = self.i, self.j, self.L
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([L, L, -L, -L])
        J = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
        return J[keep][:, keep]

    @property
    def planes(self) -> np.ndarray:
        return np.column_stack([self.grad, self.intercept])


def snap_gas_points(X, is_boundary, gas):
    """Nearest interior node for each atom; returns ``(indices, snap_distances)``."""
    inner = np.nonzero(~is_boundary)[0]
    idx, dist = [], []
    for p, _ in gas:
        d = np.linalg.norm(X[inner] - np.asarray(p), axis=1)
        k = int(np.argmin(d))
        idx.append(int(inner[k]))
        dist.append(float(d[k]))
    return idx, dist


def newton_masses(X, bnd, u, target, config: SolverConfig, jitter=None):
    """Damped Newton on ``u -> masses`` over interior nodes, starting from a convex ``u``.

    Returns ``(u, hull, masses, history)``.
    """
    m = len(X)
    inner = np.nonzero(~bnd)[0]
    u = np.array(u, dtype=float)
    jit = _LIFT_JITTER * max(float(np.ptp(u)), 1e-12) if jitter is None else jitter
    hull = LowerHull(X, u, jit)
    A = hull.masses(u)
    floor = 0.5 * min(float(target[inner].min()), float(A[inner].min()))
    if not floor > 0:
        raise ConvergenceError("initial guess is not strictly convex at every interior node", [])
    history = []
    for it in range(config.max_iter):
        r = A[inner] - target[inner]
        res = float(np.max(np.abs(r)))
        history.append({"iteration": it, "residual": res})
        if res <= config.mass_tol:
            return u, hull, A, history
        du = spla.spsolve(hull.jacobian(m, inner).tocsc(), -r)
        nr = float(np.linalg.norm(r))
        tau = 1.0
        while True:
            un = u.copy()
            un[inner] += tau * du
            hn = LowerHull(X, un, jit)
            An = hn.masses(un)
            if An[inner].min() >= floor and np.linalg.norm(An[inner] - target[inner]) <= (1 - tau / 2) * nr:
                break
            tau *= 0.5
            if tau < 1e-10:
                raise ConvergenceError(f"line search failed at step {it} (residual {res:.3e})", history)
        u, hull, A = un, hn, An
    raise ConvergenceError(f"mass residual {res:.3e} after {config.max_iter} Newton steps", history)


def solve_geometric(domain, data: BoundaryData, rhs: RhsSpec, config: SolverConfig) -> DiscreteSolution:
    if rhs.kind == "upow":
        raise DomainError("solution-dependent right-hand sides go through solve_power_rhs")
    rhs.check_domain(domain)
    X, bnd = node_set(domain, config.h)
    m = len(X)
    data.validate(X[bnd])
    inner = np.nonzero(~bnd)[0]

    area = lumped_areas(X)
    dist = np.zeros(m)
    dist[inner] = domain.dist_to_boundary(X[inner])
    target = np.zeros(m)
    target[inner] = area[inner] * rhs.density(dist[inner])
    snap_idx, snap_dist = snap_gas_points(X, bnd, rhs.gas)
    for k, (_, c) in zip(snap_idx, rhs.gas):
        target[k] += c

    u = np.zeros(m)
    u[bnd] = data(X[bnd])
    slope, icpt = data.affine_minorant(X[bnd])
    c = X[bnd].mean(axis=0)
    R2 = float(np.max(np.sum((X[bnd] - c) ** 2, axis=1)))
    s = 0.5 * np.sqrt(float(np.mean(target[inner] / area[inner])))
    u[inner] = X[inner] @ slope + icpt + s * (np.sum((X[inner] - c) ** 2, axis=1) - R2)
    u, hull, A, history = newton_masses(X, bnd, u, target, config)
    masses = np.where(bnd, 0.0, A)
    return DiscreteSolution(
        points=X,
        values=u,
        masses=masses,
        targets=target,
        is_boundary=bnd,
        domain=domain,
        backend="geometric",
        h=float(config.h),
        rhs=rhs.to_string(),
        diagnostics={
            "iterations": len(history) - 1,
            "residual": history[-1]["residual"],
            "history": history,
            "nodes": m,
            "gas_nodes": snap_idx,
            "snap_distance": snap_dist,
        },
        planes=hull.planes,
    )

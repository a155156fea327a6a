"""Monotone wide-stencil finite differences on axis-aligned boxes.

The operator at a node is

    F[u] = min over orthogonal frames (v_1..v_n) of
           min { (1/n) sum_j b_j D_{v_j} u : prod b_j = 1, b_j in [1/K, K] },

which equals ``(det D^2 u)^{1/n}`` for smooth convex ``u`` once the frame set
resolves the Hessian eigenvectors. ``D_v`` is the second difference along the
integer direction ``v`` with the far point truncated at the boundary. The
discrete equation ``F[u] = f^{1/n}`` is solved by policy iteration: freeze the
minimizing frame and weights, solve the resulting linear M-matrix system, repeat.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..errors import ConvergenceError, DegeneracyError, DomainError, ParameterError
from ..geometry import ConvexDomain
from .linalg import solve_monotone
from .solution import DiscreteSolution
from .spec import BoundaryData, RhsSpec, SolverConfig


@lru_cache(maxsize=None)
def stencil_directions(n: int, W: int) -> tuple:
    """Primitive integer vectors with sup-norm <= W, one per line (first nonzero > 0)."""
    out = []
    for v in itertools.product(range(-W, W + 1), repeat=n):
        if not any(v) or math.gcd(*(abs(a) for a in v)) != 1:
            continue
        if next(a for a in v if a) < 0:
            continue
        out.append(v)
    return tuple(out)


@lru_cache(maxsize=None)
def orthogonal_frames(n: int, W: int) -> np.ndarray:
    """All unordered orthogonal n-tuples of stencil directions, as index rows."""
    V = np.array(stencil_directions(n, W))
    G = V @ V.T
    out = []

    def grow(cur, start):
        if len(cur) == n:
            out.append(cur)
            return
        for j in range(start, len(V)):
            if all(G[j, k] == 0 for k in cur):
                grow(cur + [j], j + 1)

    grow([], 0)
    return np.array(out, dtype=int)


def _policy_weights(Df: np.ndarray, L: float) -> np.ndarray:
    """Minimizing weights ``b = exp(y)``, ``sum y = 0``, ``|y| <= L`` for ``sum b_j D_j``.

    With all ``D_j > 0`` the minimizer is ``y_j = clip(mu - log D_j)``; ``mu`` is
    closed form when no clipping is active and found by bisection otherwise. Rows
    with a nonpositive difference put the largest weight on it.
    """
    M, n = Df.shape
    y = np.zeros((M, n))
    pos = Df > 0
    allpos = pos.all(axis=1)
    if allpos.any():
        lD = np.log(Df[allpos])
        y0 = lD.mean(axis=1, keepdims=True) - lD
        ok = np.all(np.abs(y0) <= L, axis=1)
        block = np.zeros_like(lD)
        block[ok] = y0[ok]
        if (~ok).any():
            lc = lD[~ok]
            lo = lc.min(axis=1) - L
            hi = lc.max(axis=1) + L
            for _ in range(100):
                mu = 0.5 * (lo + hi)
                s = np.clip(mu[:, None] - lc, -L, L).sum(axis=1)
                lo = np.where(s < 0, mu, lo)
                hi = np.where(s >= 0, mu, hi)
            block[~ok] = np.clip(0.5 * (lo + hi)[:, None] - lc, -L, L)
        y[allpos] = block
    bad = ~allpos
    if bad.any():
        yb = np.where(pos[bad], -L, L)
        y[bad] = np.clip(yb - yb.mean(axis=1, keepdims=True), -L, L)
    return np.exp(y)


class StencilGrid:
    """Uniform grid on a box with precomputed wide-stencil neighbour tables.

    With ``fold=True`` only the nodes in the lower orthant half of every axis are
    unknowns and neighbours beyond the mid-plane are reflected back. This is exact
    for data and right-hand sides symmetric under all coordinate reflections.
    """

    def __init__(self, domain: ConvexDomain, h: float, W: int, fold: bool = False, data: BoundaryData | None = None):
        if domain.kind != "box":
            raise DomainError("the wide-stencil backend works on axis-aligned boxes")
        n = domain.dimension
        if n == 2 and W < 2:
            raise ParameterError("planar wide stencils need width W >= 2")
        lo, hi = domain.vertices
        Ns = np.rint((hi - lo) / h).astype(int)
        if np.any(Ns < 4) or np.any(np.abs(Ns * h - (hi - lo)) > 1e-9 * (hi - lo)):
            raise ParameterError("box sides must be multiples of h with at least 4 cells")
        self.domain, self.h, self.W, self.fold, self.n = domain, float(h), int(W), bool(fold), n
        self.lo, self.Ns = lo.astype(float), Ns
        self.data = BoundaryData.zero() if data is None else data
        self.shape = tuple(Ns + 1)
        self.dirs = np.array(stencil_directions(n, W))
        self.frames = orthogonal_frames(n, W)

        full = np.indices(self.shape).reshape(n, -1).T
        interior = np.all((full > 0) & (full < Ns), axis=1)
        unknown = interior & (np.all(full <= Ns // 2, axis=1) if fold else True)
        I = full[unknown]
        nid = -np.ones(full.shape[0], dtype=int)
        nid[np.ravel_multi_index(I.T, self.shape)] = np.arange(len(I))
        self.I = I
        self.X = self.lo + h * I

        # map every grid node to its unknown (or -1 for boundary nodes)
        Jf = np.where(full > Ns // 2, Ns - full, full) if fold else full
        self.full_to_unknown = np.where(interior, nid[np.ravel_multi_index(Jf.T, self.shape)], -1)
        self.full_points = self.lo + h * full
        self.full_boundary = ~interior

        self.ops = []
        for v in self.dirs:
            side = []
            for s in (1, -1):
                sv = s * v
                t = np.ones(len(I))
                for k in range(n):
                    if sv[k] > 0:
                        t = np.minimum(t, (Ns[k] - I[:, k]) / sv[k])
                    elif sv[k] < 0:
                        t = np.minimum(t, -I[:, k] / sv[k])
                J = I + sv
                inside = np.all((J > 0) & (J < Ns), axis=1) & (t >= 1)
                if fold:
                    J = np.where(J > Ns // 2, Ns - J, J)
                nb = -np.ones(len(I), dtype=int)
                nb[inside] = nid[np.ravel_multi_index(np.clip(J, 0, Ns)[inside].T, self.shape)]
                t = np.where(inside, 1.0, t)
                bv = np.zeros(len(I))
                if not self.data.is_zero and (~inside).any():
                    bv[~inside] = self.data(self.X[~inside] + t[~inside, None] * sv * h)
                side.append((nb, t, bv))
            (nbp, tp, bvp), (nbm, tm, bvm) = side
            c = 2.0 / ((tp + tm) * (h * np.linalg.norm(v)) ** 2)
            self.ops.append((nbp, c / tp, bvp, nbm, c / tm, bvm))

    @property
    def size(self) -> int:
        return len(self.I)

    def second_differences(self, u) -> np.ndarray:
        D = np.empty((len(self.ops), len(u)))
        for k, (nbp, cp, bvp, nbm, cm, bvm) in enumerate(self.ops):
            up = np.where(nbp >= 0, u[np.maximum(nbp, 0)], bvp)
            um = np.where(nbm >= 0, u[np.maximum(nbm, 0)], bvm)
            D[k] = cp * (up - u) + cm * (um - u)
        return D

    def operator(self, u, L):
        """Return ``F[u]`` with the minimizing frame index and weights per node."""
        D = self.second_differences(u)
        n = self.n
        best = arg = B = None
        for fi, fr in enumerate(self.frames):
            Df = D[fr].T
            b = _policy_weights(Df, L)
            val = (b * Df).sum(axis=1) / n
            if best is None:
                best, arg, B = val, np.zeros(len(u), dtype=int), b
            else:
                m = val < best
                best[m], arg[m], B[m] = val[m], fi, b[m]
        return best, arg, B

    def linear_operator(self, arg, B):
        """Frozen-policy operator as ``(A, c)`` with ``F_policy[u] = A u + c``."""
        n, M = self.n, self.size
        ar = np.arange(M)
        fr = self.frames[arg]
        rows, cols, vals = [], [], []
        diag = np.zeros(M)
        const = np.zeros(M)
        for j in range(n):
            w = B[:, j] / n
            for k, (nbp, cp, bvp, nbm, cm, bvm) in enumerate(self.ops):
                m = fr[:, j] == k
                if not m.any():
                    continue
                diag[m] -= w[m] * (cp[m] + cm[m])
                for nb, c, bv in ((nbp, cp, bvp), (nbm, cm, bvm)):
                    inn = m & (nb >= 0)
                    rows.append(ar[inn])
                    cols.append(nb[inn])
                    vals.append(w[inn] * c[inn])
                    out = m & (nb < 0)
                    const[out] += w[out] * c[out] * bv[out]
        rows.append(ar)
        cols.append(ar)
        vals.append(diag)
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(M, M))
        return A, const

    def initial_guess(self, scale: float = 1.0) -> np.ndarray:
        c = self.lo + 0.5 * self.h * self.Ns
        R2 = float(np.sum((0.5 * self.h * self.Ns) ** 2))
        slope, icpt = self.data.affine_minorant(self.full_points[self.full_boundary])
        return self.X @ slope + icpt + scale * (np.sum((self.X - c) ** 2, axis=1) - R2)

    def unfold(self, u) -> np.ndarray:
        vals = np.empty(len(self.full_points))
        inn = self.full_to_unknown >= 0
        vals[inn] = u[self.full_to_unknown[inn]]
        vals[~inn] = self.data(self.full_points[~inn])
        return vals


def _node_density(grid: StencilGrid, rhs: RhsSpec) -> np.ndarray:
    """Per-unknown density ``f`` for fixed right-hand sides (atoms become ``c/h^n``)."""
    dist = grid.domain.dist_to_boundary(grid.X)
    f = rhs.density(dist)
    if rhs.kind == "measure":
        for p, c in rhs.gas:
            k = int(np.argmin(np.linalg.norm(grid.X - np.array(p), axis=1)))
            f[k] += c / grid.h ** grid.n
    return f


def _foldable(rhs: RhsSpec, data: BoundaryData) -> bool:
    return data.is_zero and rhs.kind != "measure"


def solve_wide_stencil(domain, data: BoundaryData, rhs: RhsSpec, config: SolverConfig, u0=None) -> DiscreteSolution:
    """Policy iteration for fixed densities; fused damped Picard for ``|u|^q``."""
    rhs.check_domain(domain)
    fold = config.fold_symmetry and _foldable(rhs, data)
    grid = StencilGrid(domain, config.h, config.stencil_width, fold=fold, data=data)
    n, L = grid.n, math.log(config.weight_bound)
    power = rhs.kind == "upow"
    if power:
        eps = rhs.eps if rhs.eps is not None else config.eps_floor(n, rhs.q)
        target = None
    else:
        f = _node_density(grid, rhs)
        target = f ** (1.0 / n)
    if u0 is None:
        u = grid.initial_guess()
    elif not isinstance(u0, DiscreteSolution) and len(u0) == grid.size:
        u = np.asarray(u0, dtype=float).copy()
    else:
        u = _restrict(grid, u0)
    history = []
    lam = config.damping if power else 1.0
    converged = False
    for it in range(config.max_iter):
        if power:
            target = np.maximum(np.abs(u), eps) ** (rhs.q / n)
        F, arg, B = grid.operator(u, L)
        res = float(np.max(np.abs(F - target)) / np.max(target))
        A, const = grid.linear_operator(arg, B)
        un = solve_monotone(A, target - const, x0=u)
        change = float(np.max(np.abs(un - u)))
        u = (1 - lam) * u + lam * un
        scale = float(np.max(np.abs(u))) or 1.0
        history.append({"iteration": it, "change": change, "residual": res})
        if power and np.max(np.abs(u)) < 10 * eps:
            raise DegeneracyError("iterates collapsed to the trivial solution", history)
        if change <= config.picard_tol * scale and res <= config.residual_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"wide-stencil iteration stalled after {config.max_iter} steps (residual {res:.3e})", history
        )
    if power:
        target = np.maximum(np.abs(u), eps) ** (rhs.q / n)
    F, _, _ = grid.operator(u, L)
    hn = grid.h ** n
    vals = grid.unfold(u)
    inn = grid.full_to_unknown >= 0
    masses = np.zeros(len(vals))
    targets = np.zeros(len(vals))
    masses[inn] = np.maximum(F, 0.0)[grid.full_to_unknown[inn]] ** n * hn
    targets[inn] = (target ** n)[grid.full_to_unknown[inn]] * hn
    diag = {
        "iterations": len(history),
        "residual": history[-1]["residual"],
        "history": history,
        "unknowns": grid.size,
        "folded": fold,
        "stencil_width": grid.W,
        "frames": int(len(grid.frames)),
    }
    if power:
        diag["eps"] = eps
    return DiscreteSolution(
        points=grid.full_points,
        values=vals,
        masses=masses,
        targets=targets,
        is_boundary=grid.full_boundary,
        domain=domain,
        backend="wide-stencil",
        h=grid.h,
        rhs=rhs.to_string(),
        diagnostics=diag,
        grid_shape=grid.shape,
    )


def _restrict(grid: StencilGrid, u0) -> np.ndarray:
    """Accept a full-grid vector or a DiscreteSolution on the same grid as a start."""
    if isinstance(u0, DiscreteSolution):
        u0 = u0.values
    u0 = np.asarray(u0, dtype=float)
    if len(u0) != len(grid.full_points):
        raise ParameterError("initial guess does not match the grid")
    out = np.empty(grid.size)
    inn = grid.full_to_unknown >= 0
    out[grid.full_to_unknown[inn]] = u0[inn]
    return out

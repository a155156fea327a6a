"""Public entry points of the solver."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConvergenceError, DegeneracyError, ParameterError
from ..geometry import ConvexDomain
from .geometric import lumped_areas, newton_masses, solve_geometric
from .solution import DiscreteSolution
from .spec import BoundaryData, RhsSpec, SolverConfig
from .wide_stencil import solve_wide_stencil


def solve_dirichlet(
    domain: ConvexDomain,
    boundary_data: BoundaryData | None = None,
    rhs: RhsSpec | None = None,
    config: SolverConfig | None = None,
) -> DiscreteSolution:
    """Discrete Aleksandrov solution of ``det D^2 u = mu``, ``u = g`` on the boundary."""
    data = BoundaryData.zero() if boundary_data is None else boundary_data
    rhs = RhsSpec.constant(1.0) if rhs is None else rhs
    config = SolverConfig() if config is None else config
    if rhs.kind == "upow":
        raise ParameterError("use solve_power_rhs for |u|^q right-hand sides")
    if config.backend == "geometric":
        return solve_geometric(domain, data, rhs, config)
    return solve_wide_stencil(domain, data, rhs, config)


def solve_power_rhs(domain: ConvexDomain, q: float, config: SolverConfig | None = None, eps: float | None = None) -> DiscreteSolution:
    """Nontrivial solution of ``det D^2 u = |u|^q`` with zero boundary data.

    Damped Picard iteration started from the ``Constant(1)`` solution, with
    ``|u|`` floored at ``eps`` (default ``eps_scale * h^(2/(n-q))``).
    """
    config = SolverConfig() if config is None else config
    n = domain.dimension
    rhs = RhsSpec.solution_power(q, eps)
    rhs.check_domain(domain)
    base = solve_dirichlet(domain, BoundaryData.zero(), RhsSpec.constant(1.0), config)
    if q == 0:
        return base
    if config.backend == "wide-stencil":
        return solve_wide_stencil(domain, BoundaryData.zero(), rhs, config, u0=base)
    return _geometric_picard(base, rhs, config)


def _geometric_picard(base: DiscreteSolution, rhs: RhsSpec, config: SolverConfig) -> DiscreteSolution:
    X, bnd = base.points, base.is_boundary
    n = X.shape[1]
    eps = rhs.eps if rhs.eps is not None else config.eps_floor(n, rhs.q)
    area = lumped_areas(X)
    inner = ~bnd
    u = np.array(base.values)
    lam = config.damping
    history = []
    for it in range(config.max_iter):
        target = np.where(inner, area * np.maximum(np.abs(u), eps) ** rhs.q, 0.0)
        un, hull, A, inner_hist = newton_masses(X, bnd, u, target, config)
        change = float(np.max(np.abs(un - u)))
        u = (1 - lam) * u + lam * un
        history.append({"iteration": it, "change": change, "newton_steps": len(inner_hist) - 1})
        if np.max(np.abs(u)) < 10 * eps:
            raise DegeneracyError("iterates collapsed to the trivial solution", history)
        if change <= config.picard_tol * float(np.max(np.abs(u))):
            break
    else:
        raise ConvergenceError(f"Picard iteration did not settle in {config.max_iter} steps", history)
    # final mass solve at the fixed point so that masses and hull match u exactly
    target = np.where(inner, area * np.maximum(np.abs(u), eps) ** rhs.q, 0.0)
    u, hull, A, inner_hist = newton_masses(X, bnd, u, target, config)
    diag = dict(base.diagnostics)
    diag.update(iterations=len(history), residual=inner_hist[-1]["residual"], history=history, eps=eps)
    return DiscreteSolution(
        points=X,
        values=u,
        masses=np.where(bnd, 0.0, A),
        targets=target,
        is_boundary=bnd,
        domain=base.domain,
        backend=base.backend,
        h=base.h,
        rhs=rhs.to_string(),
        diagnostics=diag,
        planes=hull.planes,
    )


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    min_gap: float
    worst_point: list
    boundary_ordered: bool
    masses_ordered: bool
    tolerance: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def discrete_comparison_check(u1: DiscreteSolution, u2: DiscreteSolution, tol: float = 1e-10) -> ComparisonReport:
    """Check ``u1 >= u2`` at every node when ``u1 >= u2`` on the boundary and ``u1`` carries
    no more mass than ``u2`` at every node."""
    if u1.points.shape != u2.points.shape or not np.array_equal(u1.points, u2.points):
        raise ParameterError("solutions live on different node sets")
    b = u1.is_boundary
    scale = 1.0 + max(float(np.max(np.abs(u1.values))), float(np.max(np.abs(u2.values))))
    bnd_ok = bool(np.all(u1.values[b] >= u2.values[b] - tol * scale))
    mscale = 1.0 + float(np.max(np.abs(u2.targets)))
    mass_ok = bool(np.all(u1.targets <= u2.targets + 1e-12 * mscale))
    gap = u1.values - u2.values
    k = int(np.argmin(gap))
    return ComparisonReport(
        passed=bool(bnd_ok and mass_ok and gap[k] >= -tol * scale),
        min_gap=float(gap[k]),
        worst_point=u1.points[k].tolist(),
        boundary_ordered=bnd_ok,
        masses_ordered=mass_ok,
        tolerance=tol,
    )

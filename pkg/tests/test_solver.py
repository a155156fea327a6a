import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sharpma.errors import ConvergenceError, ConvexityError, DomainError, ParameterError
from sharpma.geometry import ConvexDomain
from sharpma.solver import (
    BoundaryData,
    DiscreteSolution,
    RhsSpec,
    SolverConfig,
    discrete_comparison_check,
    solve_dirichlet,
    solve_power_rhs,
)
from sharpma.solver.geometric import lumped_areas, node_set
from sharpma.solver.linalg import solve_monotone
from sharpma.solver.wide_stencil import StencilGrid, _policy_weights, orthogonal_frames, stencil_directions

SQ = ConvexDomain.unit_square()


# -------------------------------------------------------------- specs


@pytest.mark.parametrize(
    "text,kind",
    [("const:2", "constant"), ("distpow:1.5,0.5", "distpow"), ("upow:-1", "upow"), ("measure:gas=[(0.5,0.5,0.5)]", "measure")],
)
def test_rhs_parse_roundtrip(text, kind):
    r = RhsSpec.parse(text)
    assert r.kind == kind
    assert RhsSpec.parse(r.to_string()) == r


@given(st.floats(0.01, 100), st.floats(0, 3))
def test_distpow_roundtrip_property(m, g):
    r = RhsSpec.dist_power(m, g)
    back = RhsSpec.parse(r.to_string())
    assert back.m == pytest.approx(m, rel=1e-5) and back.gamma == pytest.approx(g, rel=1e-5, abs=1e-6)


@pytest.mark.parametrize("bad", ["const:-1", "nope:1", "distpow:1", "measure:gas=[(0.5,0.5,-1)]", "upow:x"])
def test_rhs_parse_rejects(bad):
    with pytest.raises(ParameterError):
        RhsSpec.parse(bad)


def test_gas_outside_domain_rejected():
    with pytest.raises(DomainError):
        solve_dirichlet(SQ, None, RhsSpec.measure([((1.5, 0.5), 1.0)]), SolverConfig(h=0.25))


def test_power_rhs_needs_q_below_n():
    with pytest.raises(ParameterError):
        solve_power_rhs(SQ, 2.0, SolverConfig(h=0.25))


def test_config_validation():
    with pytest.raises(ParameterError):
        SolverConfig(backend="spectral")
    with pytest.raises(ParameterError):
        SolverConfig(h=-1)
    assert SolverConfig(backend="fd").backend == "wide-stencil"
    assert SolverConfig(h=0.01).eps_floor(2, -1) == pytest.approx(0.1 * 0.01 ** (2 / 3))


def test_upow_through_solve_dirichlet_rejected():
    with pytest.raises(ParameterError):
        solve_dirichlet(SQ, None, RhsSpec.solution_power(-1.0), SolverConfig(h=0.25))


# -------------------------------------------------------- boundary data


def test_piecewise_data_interpolates_in_arclength():
    corners = [[0, 0], [1, 0], [1, 1], [0, 1]]
    g = BoundaryData.piecewise(SQ, corners, [0.0, 1.0, 2.0, 1.0])
    np.testing.assert_allclose(g(np.array([[0.5, 0.0], [1.0, 0.5], [0.5, 1.0]])), [0.5, 1.5, 1.5])


def test_nonconvex_data_rejected():
    pts = [[0, 0], [0.5, 0], [1, 0], [1, 1], [0, 1]]
    g = BoundaryData.piecewise(SQ, pts, [0.0, 1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ConvexityError):
        solve_dirichlet(SQ, g, RhsSpec.constant(1.0), SolverConfig(h=0.125))


def test_boundary_data_dict_roundtrip():
    g = BoundaryData.from_vertex_values(SQ, [0.0, 0.2, 0.5, 0.1])
    back = BoundaryData.from_dict(g.to_dict(), SQ)
    X = np.array([[0.3, 0.0], [1.0, 0.7], [0.0, 0.4]])
    np.testing.assert_allclose(back(X), g(X))


# ----------------------------------------------------- geometric backend


def test_lumped_areas_sum_to_hull_area():
    X, _ = node_set(SQ, 0.1)
    assert lumped_areas(X).sum() == pytest.approx(1.0)


def test_disk_exact_solution_coarse():
    sol = solve_dirichlet(ConvexDomain.disk(), None, RhsSpec.constant(1.0), SolverConfig(h=0.1))
    exact = 0.5 * (np.sum(sol.points ** 2, axis=1) - 1)
    assert np.max(np.abs(sol.values - exact)) < 5e-3
    assert sol.evaluate([[0.0, 0.0]])[0] == pytest.approx(-0.5, abs=5e-3)


def test_masses_match_targets():
    sol = solve_dirichlet(SQ, None, RhsSpec.dist_power(2.0, 0.5), SolverConfig(h=1 / 16))
    inner = sol.interior
    np.testing.assert_allclose(sol.masses[inner], sol.targets[inner], atol=1e-9)
    assert sol.diagnostics["residual"] <= 1e-10


def test_gas_atom_mass_lands_on_one_node():
    sol = solve_dirichlet(SQ, None, RhsSpec.measure([((0.5, 0.5), 0.5)]), SolverConfig(h=1 / 16))
    k = sol.diagnostics["gas_nodes"][0]
    assert sol.diagnostics["snap_distance"][0] == pytest.approx(0.0, abs=1e-12)
    assert sol.masses[k] == pytest.approx(0.5 + lumped_areas(sol.points)[k], abs=1e-9)


def test_affine_data_shifts_geometric_solution():
    cfg = SolverConfig(h=1 / 16)
    u0 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    u1 = solve_dirichlet(SQ, BoundaryData.affine([0.3, -0.7], 0.2), RhsSpec.constant(1.0), cfg)
    np.testing.assert_allclose(u1.values, u0.values + u0.points @ [0.3, -0.7] + 0.2, atol=1e-8)


def test_geometric_solution_is_convex_max_of_planes():
    sol = solve_dirichlet(ConvexDomain.triangle(), None, RhsSpec.constant(1.0), SolverConfig(h=1 / 16))
    X = sol.points[sol.interior]
    np.testing.assert_allclose(sol.evaluate(X), sol.values[sol.interior], atol=1e-8)
    # midpoint convexity of the interpolant
    rng = np.random.default_rng(0)
    a, b = X[rng.integers(0, len(X), 200)], X[rng.integers(0, len(X), 200)]
    assert np.all(sol.evaluate(0.5 * (a + b)) <= 0.5 * (sol.evaluate(a) + sol.evaluate(b)) + 1e-12)


def test_newton_failure_reports_history():
    with pytest.raises(ConvergenceError) as exc:
        solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(h=1 / 16, max_iter=1))
    assert len(exc.value.history) == 1


def test_q_zero_equals_constant_solve():
    cfg = SolverConfig(h=1 / 16)
    a = solve_power_rhs(SQ, 0.0, cfg)
    b = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    np.testing.assert_array_equal(a.values, b.values)


def test_geometric_picard_negative_q():
    sol = solve_power_rhs(SQ, -1.0, SolverConfig(h=1 / 16))
    inner = sol.interior
    eps = sol.diagnostics["eps"]
    want = lumped_areas(sol.points)[inner] * np.maximum(np.abs(sol.values[inner]), eps) ** -1.0
    np.testing.assert_allclose(sol.masses[inner], want, rtol=1e-6)


# ------------------------------------------------------------ comparison


def test_comparison_constant_one_vs_two():
    cfg = SolverConfig(h=1 / 16)
    u1 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    u2 = solve_dirichlet(SQ, None, RhsSpec.constant(2.0), cfg)
    rep = discrete_comparison_check(u1, u2)
    assert rep.passed and rep.min_gap >= 0
    assert not discrete_comparison_check(u2, u1).passed
    assert discrete_comparison_check(u1, u1).to_dict()["pass"]


def test_comparison_mismatched_nodes():
    u1 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(h=1 / 8))
    u2 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(h=1 / 16))
    with pytest.raises(ParameterError):
        discrete_comparison_check(u1, u2)


def random_ordered_pair(seed):
    """Two right-hand sides with pointwise ordered densities and atoms (first <= second)."""
    rng = np.random.default_rng(seed)
    kind = rng.integers(0, 3)
    m1 = rng.uniform(0.2, 2.0)
    m2 = m1 * rng.uniform(1.0, 3.0)
    if kind == 0:
        return RhsSpec.constant(m1), RhsSpec.constant(m2)
    if kind == 1:
        g = rng.uniform(0, 2)
        # dist <= 1/2 on the square, so m d^g <= m
        return RhsSpec.dist_power(m1, g), (RhsSpec.dist_power(m2, g) if rng.random() < 0.5 else RhsSpec.constant(m2))
    k = rng.integers(1, 4)
    P = [tuple(rng.uniform(0.2, 0.8, 2)) for _ in range(k)]
    c1 = rng.uniform(0.05, 0.5, k)
    c2 = c1 * rng.uniform(1.0, 2.0, k)
    return RhsSpec.measure(zip(P, c1)), RhsSpec.measure(zip(P, c2))


@pytest.mark.parametrize("seed", range(25))
def test_comparison_monotone_random_pairs(seed):
    r1, r2 = random_ordered_pair(seed)
    cfg = SolverConfig(h=1 / 8)
    u1 = solve_dirichlet(SQ, None, r1, cfg)
    u2 = solve_dirichlet(SQ, None, r2, cfg)
    rep = discrete_comparison_check(u1, u2)
    assert rep.masses_ordered and rep.boundary_ordered and rep.passed, rep


# ------------------------------------------------------ wide-stencil backend


def test_stencil_direction_counts():
    assert len(stencil_directions(2, 1)) == 4
    assert len(stencil_directions(2, 2)) == 8
    assert len(stencil_directions(3, 1)) == 13
    assert len(orthogonal_frames(2, 2)) == 4
    V = np.array(stencil_directions(3, 2))
    for fr in orthogonal_frames(3, 2):
        G = V[fr] @ V[fr].T
        np.testing.assert_array_equal(G - np.diag(np.diag(G)), 0)


def test_planar_width_one_rejected():
    with pytest.raises(ParameterError):
        StencilGrid(SQ, 0.125, 1)


def test_grid_must_fit_box():
    with pytest.raises(ParameterError):
        StencilGrid(SQ, 0.3, 2)
    with pytest.raises(DomainError):
        StencilGrid(ConvexDomain.disk(), 0.1, 2)


@given(st.lists(st.floats(0.01, 100), min_size=3, max_size=3))
def test_policy_weights_minimize(D):
    D = np.array([D])
    b = _policy_weights(D, math.log(1e6))
    assert np.prod(b) == pytest.approx(1.0)
    # the AM-GM minimum of (1/n) sum b_j D_j under prod b = 1 is (prod D)^(1/n)
    assert (b * D).sum() / 3 == pytest.approx(np.prod(D) ** (1 / 3), rel=1e-10)


def test_policy_weights_respect_bounds():
    D = np.array([[1e-8, 1.0, 1e8]])
    L = math.log(10.0)
    b = _policy_weights(D, L)
    assert np.all(b <= 10 + 1e-12) and np.all(b >= 0.1 - 1e-12)
    assert np.prod(b) == pytest.approx(1.0)


def test_operator_exact_on_quadratics():
    g = StencilGrid(SQ, 1 / 16, 2)
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    u = 0.5 * np.einsum("ij,jk,ik->i", g.X, A, g.X)
    F, _, _ = g.operator(u, math.log(1e6))
    deep = np.all([(op[0] >= 0) & (op[3] >= 0) for op in g.ops], axis=0)
    # the frame (1,1),(1,-1) resolves this Hessian only approximately; the operator
    # is an upper bound for det^(1/2) that is exact for diagonal Hessians
    assert np.all(F[deep] >= math.sqrt(np.linalg.det(A)) - 1e-10)
    u = 0.5 * np.sum(g.X ** 2, axis=1) * 3.0
    F, _, _ = g.operator(u, math.log(1e6))
    np.testing.assert_allclose(F[deep], 3.0, rtol=1e-12)


def test_fd_fold_is_exact():
    cfg = SolverConfig(backend="fd", h=1 / 16, fold_symmetry=True)
    a = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    b = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(backend="fd", h=1 / 16, fold_symmetry=False))
    assert a.diagnostics["folded"] and not b.diagnostics["folded"]
    np.testing.assert_allclose(a.values, b.values, atol=1e-9)


def test_fd_affine_data_shift():
    cfg = SolverConfig(backend="fd", h=1 / 16)
    u0 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    u1 = solve_dirichlet(SQ, BoundaryData.affine([0.4, 0.1], -0.3), RhsSpec.constant(1.0), cfg)
    np.testing.assert_allclose(u1.values, u0.values + u0.points @ [0.4, 0.1] - 0.3, atol=1e-9)


def test_fd_and_geometric_agree_on_square():
    a = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(backend="fd", h=1 / 32))
    b = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(h=1 / 32))
    X = np.array([[0.5, 0.5], [0.25, 0.25], [0.5, 0.125]])
    np.testing.assert_allclose(a.evaluate(X), b.evaluate(X), atol=0.02)


def test_fd_comparison():
    cfg = SolverConfig(backend="fd", h=1 / 16)
    u1 = solve_dirichlet(SQ, None, RhsSpec.dist_power(1.0, 1.0), cfg)
    u2 = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), cfg)
    assert discrete_comparison_check(u1, u2).passed


def test_fd_three_dimensional_width_one():
    cube = ConvexDomain.unit_cube(3)
    sol = solve_dirichlet(cube, None, RhsSpec.constant(1.0), SolverConfig(backend="fd", h=1 / 8, stencil_width=1))
    assert sol.diagnostics["frames"] == 4
    assert sol.evaluate([[0.5, 0.5, 0.5]])[0] < 0


def test_fd_power_rhs_converges():
    sol = solve_power_rhs(SQ, -1.0, SolverConfig(backend="fd", h=1 / 16))
    assert sol.diagnostics["residual"] <= 1e-5
    assert np.all(sol.values[sol.interior] < 0)


# ------------------------------------------------------------ I/O and linalg


@pytest.mark.parametrize("backend", ["geometric", "fd"])
def test_solution_csv_roundtrip(tmp_path, backend):
    sol = solve_dirichlet(SQ, None, RhsSpec.constant(1.0), SolverConfig(backend=backend, h=1 / 8))
    path = sol.to_csv(tmp_path / "u.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert header[:5] == ["x1", "x2", "value", "mass", "dist_to_boundary"]
    back = DiscreteSolution.from_csv(path)
    np.testing.assert_allclose(back.values, sol.values)
    np.testing.assert_allclose(back.evaluate([[0.3, 0.4]]), sol.evaluate([[0.3, 0.4]]))
    assert back.rhs == sol.rhs and back.backend == sol.backend


def test_solve_monotone_small_system():
    n = 50
    A = -2 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    x = np.linspace(0, 1, n)
    import scipy.sparse as sp

    b = sp.csr_matrix(A) @ x
    np.testing.assert_allclose(solve_monotone(sp.csr_matrix(A), b), x, atol=1e-10)

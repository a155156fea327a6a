"""Acceptance suite: one test per criterion, each printed as a PASS/FAIL line in the
terminal summary (see ``conftest.py``). Details of every measured quantity are
attached as user properties so a failing line still says by how much it failed.
"""

import math
import time

import mpmath
import numpy as np
import pytest
from scipy import integrate

from sharpma import analysis as an
from sharpma.cli import DEFAULT_SUITE
from sharpma.closed_forms import (
    bootstrap_sequence,
    lobachevsky,
    make_family,
    pn_total_mass,
    sample_domain,
    surface_tension_T,
    verify_family_inequality,
)
from sharpma.experiments import bundled_config, run_experiment
from sharpma.geometry import ConvexDomain, subgradient_cell_volumes
from sharpma.solver import RhsSpec, SolverConfig, discrete_comparison_check, solve_dirichlet
from test_geometry import _convex_pl_values
from test_solver import random_ordered_pair

criterion = pytest.mark.criterion


def lob_quad(theta):
    mpmath.mp.dps = 30
    return float(-mpmath.quad(lambda u: mpmath.log(abs(2 * mpmath.sin(u))), [0, theta]))


def _experiment(name, tmp_path, record_property):
    rep = run_experiment(bundled_config(name), out_dir=tmp_path)
    assert rep["stage"] == "done", rep.get("error")
    fit = rep["fit"]
    for k, v in fit["coefficients"].items():
        record_property(k, round(v, 4))
    record_property("r2", round(fit["r2"], 5))
    return rep


# ---------------------------------------------------------------------------


@criterion(1, "lozenge surface tension: fd det = 1, boundary limit, value by quadrature")
def test_criterion_01_surface_tension(record_property):
    t0 = time.perf_counter()
    T = ConvexDomain.triangle()
    P = sample_domain(T, 2000, seed=0)
    P = P[T.dist_to_boundary(P) >= 0.1][:100]
    assert len(P) == 100
    err = max(abs(an.fd_hessian_det(surface_tension_T, p, 1e-3) - 1.0) for p in P)

    s = np.linspace(0, 1, 41)
    edges = np.vstack([np.column_stack([s, 0 * s]), np.column_stack([0 * s, s]), np.column_stack([s, 1 - s])])
    bnd = np.max(np.abs(surface_tension_T(edges, boundary_limit=True)[0]))
    near = np.max(np.abs(surface_tension_T(np.clip(edges, 1e-9, None) * (1 - 3e-9), boundary_limit=True)[0]))
    center = surface_tension_T([1 / 3, 1 / 3])[0]
    center_ref = -3 * lob_quad(math.pi / 3) / math.pi ** 2
    Q = P[:20]
    perms = [np.column_stack([Q[:, 1], Q[:, 0]]), np.column_stack([1 - Q.sum(1), Q[:, 0]]), np.column_stack([Q[:, 1], 1 - Q.sum(1)])]
    sym = max(np.max(np.abs(surface_tension_T(R)[0] - surface_tension_T(Q)[0])) for R in perms)
    secs = time.perf_counter() - t0

    record_property("max_det_error", f"{err:.2e}")
    record_property("center_error", f"{abs(center - center_ref):.1e}")
    record_property("seconds", round(secs, 2))
    assert bnd <= 1e-8 and near <= 1e-7
    assert abs(center - center_ref) <= 1e-8
    assert sym <= 1e-13
    assert secs < 5
    assert err <= 1e-4


@criterion(2, "Lobachevsky zeros, oddness and pi-periodicity")
def test_criterion_02_lobachevsky(record_property):
    rng = np.random.default_rng(0)
    th = rng.uniform(-20, 20, 1000)
    t0 = time.perf_counter()
    L = lobachevsky(th)
    odd = np.max(np.abs(lobachevsky(-th) + L))
    per = np.max(np.abs(lobachevsky(th + math.pi) - L))
    zeros = (lobachevsky(math.pi), lobachevsky(math.pi / 2))
    secs = time.perf_counter() - t0
    record_property("odd", f"{odd:.1e}")
    record_property("periodic", f"{per:.1e}")
    # the quadrature oracle vanishes at both points as well
    assert abs(lob_quad(math.pi)) <= 1e-12 and abs(lob_quad(math.pi / 2)) <= 1e-12
    assert max(map(abs, zeros)) <= 1e-10
    assert odd <= 1e-10 and per <= 1e-10
    assert secs < 1


@criterion(3, "barrier inequality suite at 1e5 samples")
def test_criterion_03_inequality_suite(record_property):
    t0 = time.perf_counter()
    reps = [verify_family_inequality(make_family(fam, **kw), sample_count=100_000) for fam, kw in DEFAULT_SUITE]
    secs = time.perf_counter() - t0
    bad = [(r.family, r.params) for r in reps if not r.passed]
    record_property("families", len(reps))
    record_property("worst", f"{max(r.max_violation for r in reps):.1e}")
    record_property("seconds", round(secs, 1))
    assert not bad, bad
    assert secs < 60


def _hp_fd_hessian(f, x, h, dps=50):
    """Central-difference Hessian of a closed form evaluated in ``dps``-digit arithmetic."""
    mpmath.mp.dps = dps
    n = len(x)
    x = [mpmath.mpf(float(t)) for t in x]
    h = mpmath.mpf(h)
    E = [[h if i == j else 0 for j in range(n)] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    pts = [x]
    for i in range(n):
        pts += [[a + e for a, e in zip(x, E[i])], [a - e for a, e in zip(x, E[i])]]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            pts.append([a + si * ei + sj * ej for a, ei, ej in zip(x, E[i], E[j])])
    v = f._raw(np.array(pts, dtype=object))[0]
    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = float((v[1 + 2 * i] - 2 * v[0] + v[2 + 2 * i]) / h ** 2)
    for k, (i, j) in enumerate(pairs):
        a, b, c, e = v[1 + 2 * n + 4 * k : 5 + 2 * n + 4 * k]
        H[i, j] = H[j, i] = float((a - b - c + e) / (4 * h * h))
    return H


def _relative_min_eig(H):
    ev = np.linalg.eigvalsh(H)
    return ev.min() / max(1.0, np.abs(ev).max())


@criterion(4, "non-convexity witnesses for p < 2, convexity at p = 2")
def test_criterion_04_nonconvexity_witnesses(record_property):
    for n in (2, 3):
        for p in (0.5, 1.0):
            f = make_family("NegPowerSuper", n=n, p=p)
            X = sample_domain(f.domain, 10_000, seed=0)
            d = f.domain.dist_to_boundary(X)
            # plain double-precision FD at well-resolved points is enough to find a witness
            ok = d >= 1e-2
            mins = np.array([_relative_min_eig(an.fd_hessian(f, x, 1e-4)) for x in X[ok][:2000]])
            k = int(np.argmin(mins))
            record_property(f"n{n}p{p}", f"{mins[k]:.3f}@r={np.linalg.norm(X[ok][k][:-1]):.2f}")
            assert mins[k] < -1e-3
        f = make_family("NegPowerSuper", n=n, p=2.0)
        X = sample_domain(f.domain, 10_000, seed=0)
        d = f.domain.dist_to_boundary(X)
        # the p = 2 Hessian is singular (degree-one homogeneity), and many samples sit
        # within 1e-9 of the rim, so the stencil is evaluated in 50-digit arithmetic
        worst = min(_relative_min_eig(_hp_fd_hessian(f, x, 1e-8 * dd)) for x, dd in zip(X, d))
        record_property(f"n{n}p2", f"{worst:.1e}")
        assert worst >= -1e-8


@criterion(5, "disk benchmark: error ratio and size at about 1e4 nodes")
def test_criterion_05_disk_benchmark(record_property):
    t0 = time.perf_counter()
    errs, sizes = [], []
    for h in (0.04, 0.02):
        sol = solve_dirichlet(ConvexDomain.disk(), None, RhsSpec.constant(1.0), SolverConfig(h=h))
        exact = 0.5 * (np.sum(sol.points ** 2, axis=1) - 1)
        errs.append(float(np.max(np.abs(sol.values - exact))))
        sizes.append(len(sol.points))
    secs = time.perf_counter() - t0
    record_property("errors", [f"{e:.2e}" for e in errs])
    record_property("nodes", sizes)
    record_property("seconds", round(secs, 1))
    assert errs[1] / errs[0] <= 0.7
    assert errs[1] <= 5e-3
    assert 5000 <= sizes[1] <= 20000
    assert secs < 120


@criterion(6, "triangle cross-validation against the surface tension")
def test_criterion_06_triangle(record_property):
    T = ConvexDomain.triangle()
    for h in (1 / 32, 1 / 64):
        sol = solve_dirichlet(T, None, RhsSpec.constant(1.0), SolverConfig(h=h))
        m = ~sol.is_boundary
        err = float(np.max(np.abs(sol.values[m] - surface_tension_T(sol.points[m])[0])))
        record_property(f"err_h{round(1 / h)}", f"{err:.2e}")
        assert err <= 10 * h


@criterion(7, "singular rate q = -1, n = 2: exponent 2/3")
def test_criterion_07_negative_q(tmp_path, record_property):
    t0 = time.perf_counter()
    rep = _experiment("neg-q-2d", tmp_path, record_property)
    assert time.perf_counter() - t0 <= 600
    assert abs(rep["fit"]["coefficients"]["beta"] - 2 / 3) <= 0.05


@criterion(8, "q = 0, n = 3 cube: exponent 2/3")
def test_criterion_08_cube(tmp_path, record_property):
    t0 = time.perf_counter()
    rep = _experiment("cube-q0-3d", tmp_path, record_property)
    assert time.perf_counter() - t0 <= 900
    assert abs(rep["fit"]["coefficients"]["beta"] - 2 / 3) <= 0.1


@criterion(9, "q = 1, n = 4: exponent inside the band (2/3 - tol, 1]")
def test_criterion_09_band(tmp_path, record_property):
    rep = _experiment("band-q1-4d", tmp_path, record_property)
    lo, hi = rep["oracle"]["band"]
    record_property("band", [round(lo, 4), hi])
    assert lo < rep["fit"]["coefficients"]["beta"] <= hi


@criterion(10, "surface tension: log-Lipschitz beats power, gradient slope 1/pi")
def test_criterion_10_log_rates(record_property):
    S, _ = an.value_probe(surface_tension_T, 0, 6, 0.1, anchor=[0.5, 0.0])
    cmp = an.compare_models(S)
    G, info = an.gradient_probe(surface_tension_T, 0, 6, 0.1, anchor=[0.5, 0.0])
    slope = an.fit_exponent(G, "gradlog", probe=info).slope
    record_property("improvement", round(cmp["improvement"], 3))
    record_property("slope*pi", round(slope * math.pi, 4))
    assert cmp["improvement"] >= 0.2
    assert abs(slope - 1 / math.pi) <= 0.1 / math.pi


@criterion(11, "gas dimer: both envelopes and gradient log fit")
def test_criterion_11_gas_dimer(tmp_path, record_property):
    rep = _experiment("gas-dimer-2d", tmp_path, record_property)
    env = rep["checks"]["envelopes"]
    record_property("lower_violation", f"{env['lower_max_violation']:.1e}")
    record_property("upper_violation", f"{env['upper_max_violation']:.1e}")
    assert env["pass"]
    assert rep["fit"]["r2"] >= 0.99
    assert rep["pass"]


@criterion(12, "property suites: comparison, superadditivity, Aleksandrov, mass, bootstrap")
def test_criterion_12_properties(record_property):
    sq = ConvexDomain.unit_square()
    cfg = SolverConfig(h=1 / 8)
    failures = []
    for seed in range(100):
        r1, r2 = random_ordered_pair(1000 + seed)
        rep = discrete_comparison_check(solve_dirichlet(sq, None, r1, cfg), solve_dirichlet(sq, None, r2, cfg))
        if not rep.passed:
            failures.append(("comparison", seed, rep.min_gap))

    for seed in range(200):
        rng = np.random.default_rng(seed)
        X = np.vstack([[0, 0], [1, 0], [0, 1], [1, 1], 0.1 + 0.8 * rng.random((8, 2))])
        f, g = _convex_pl_values(X, rng), _convex_pl_values(X, rng)
        inner = np.arange(4, len(X))
        mf, mg, mfg = (subgradient_cell_volumes(X, v, inner) for v in (f, g, f + g))
        if np.any(mfg < mf + mg - 1e-9 * (1 + mfg.max())):
            failures.append(("superadditivity", seed))

    ladders = {"square": (sq, (1 / 8, 1 / 16, 1 / 32, 1 / 64)), "disk": (ConvexDomain.disk(), (0.2, 0.1, 0.05, 0.025))}
    for name, (dom, hs) in ladders.items():
        consts = [an.aleksandrov_constant(solve_dirichlet(dom, None, RhsSpec.constant(1.0), SolverConfig(h=h))) for h in hs]
        record_property(f"aleksandrov_{name}", [round(c, 3) for c in consts])
        if max(consts[1:]) > consts[0]:
            failures.append(("aleksandrov", name, consts))

    for p in (0.5, 1.0, 1.5):
        f = make_family("PnWitness", n=2, p=p)
        prof = f.domain.profile
        val, _ = integrate.dblquad(
            lambda x2, x1: float(f.hessian_det([x1, x2])), -1, 1, 0, lambda x1: float(prof(abs(x1))), epsabs=1e-10, epsrel=1e-10
        )
        if abs(val - pn_total_mass(2, p)) > 1e-3:
            failures.append(("mass", p, val))

    for n in range(3, 10):
        for q in np.linspace(0.05, 0.95, 7) * (n - 2):
            a = bootstrap_sequence(n, q, 8)
            lim = 2 / (n - q)
            for k, ak in enumerate(a):
                if abs((ak - lim) - (q / n) ** k * (1 - lim)) > 1e-14:
                    failures.append(("bootstrap", n, q, k))
            if any(x <= y for x, y in zip(a, a[1:])):
                failures.append(("bootstrap-monotone", n, q))

    record_property("failures", len(failures))
    assert not failures, failures[:10]

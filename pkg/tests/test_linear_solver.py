import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_coeff
from kslab.errors import CompatibilityViolation, LengthMismatch
from kslab.grid import (GridSpec, ScalarField1D, Trajectory, diff_matrix,
                        diff_t_values, diff_x_values, field_from_callable,
                        trajectory_from_callable, trapz_qt, trapz_x)
from kslab.linear_solver import (BoundaryData, build_lifting, energy_monitor,
                                 operator_residual, solve_linear_full,
                                 solve_principal, solve_time_derived,
                                 zero_boundary_data)


def full_case_bd(case, grid):
    tt = grid.t
    ones = np.ones_like(tt)
    return BoundaryData(case["exact"](tt, 0.0) * ones,
                        case["exact"](tt, 1.0) * ones,
                        case["exact_x"](tt, 0.0) * ones,
                        case["exact_x"](tt, 1.0) * ones,
                        field_from_callable(lambda x: case["exact"](0.0, x), grid),
                        trajectory_from_callable(case["source"], grid))


# ---------------------------------------------------------------- lifting
def test_lifting_zero_data():
    g = GridSpec(16, 8, 1.0)
    psi = build_lifting(zero_boundary_data(g), g).psi
    assert np.all(psi.values == 0)


def test_lifting_p1_midpoint_value():
    # 2(0.125) - 3(0.25) + 1 = 0.5 at x = 1/2
    g = GridSpec(16, 8, 1.0)
    ones = np.ones(g.nt + 1)
    zeros = np.zeros(g.nt + 1)
    bd = BoundaryData(ones, zeros, zeros.copy(), zeros.copy(),
                      ScalarField1D(np.zeros(g.nx + 1), g),
                      Trajectory(np.zeros((g.nt + 1, g.nx + 1)), g))
    psi = build_lifting(bd, g).psi
    mid = np.where(np.isclose(g.x, 0.5))[0][0]
    assert np.allclose(psi.values[:, mid], 0.5)


def test_lifting_slope_cardinal():
    # oracle: analytic derivative of p3 = x^3 - 2x^2 + x at the endpoints
    g = GridSpec(16, 8, 1.0)
    ones = np.ones(g.nt + 1)
    zeros = np.zeros(g.nt + 1)
    bd = BoundaryData(zeros, zeros.copy(), ones, zeros.copy(),
                      ScalarField1D(np.zeros(g.nx + 1), g),
                      Trajectory(np.zeros((g.nt + 1, g.nx + 1)), g))
    psi = build_lifting(bd, g).psi.values
    x = g.x
    p3 = x ** 3 - 2 * x ** 2 + x
    assert np.abs(psi - np.outer(ones, p3)).max() < 1e-14
    # analytic traces: value 0 at both ends, slope 1 at 0 and 0 at 1
    assert np.abs(psi[:, 0]).max() < 1e-10
    assert np.abs(psi[:, -1]).max() < 1e-10


def test_lifting_length_mismatch():
    g = GridSpec(16, 8, 1.0)
    other = GridSpec(16, 16, 1.0)
    with pytest.raises(LengthMismatch):
        build_lifting(zero_boundary_data(other), g)


# ---------------------------------------------------------- principal solve
def test_principal_zero_solution():
    g = GridSpec(16, 16, 1.0)
    coeff = make_coeff(g)
    z = solve_principal(coeff, Trajectory(np.zeros((17, 17)), g),
                        ScalarField1D(np.zeros(17), g), g)
    assert np.all(z.values == 0)


def test_principal_rejects_incompatible_initial_profile():
    g = GridSpec(16, 16, 1.0)
    coeff = make_coeff(g)
    bad = field_from_callable(lambda x: 1 + x, g)
    with pytest.raises(CompatibilityViolation):
        solve_principal(coeff, Trajectory(np.zeros((17, 17)), g), bad, g)


def test_principal_manufactured_convergence(principal_case):
    errs = []
    for nx, nt in ((32, 64), (64, 128)):
        g = GridSpec(nx, nt, 2.0)
        coeff = make_coeff(g)
        f = trajectory_from_callable(principal_case["source"], g)
        z0 = field_from_callable(principal_case["z0"], g)
        z = solve_principal(coeff, f, z0, g)
        exact = trajectory_from_callable(principal_case["exact"], g)
        errs.append(np.abs(z.values - exact.values).max())
    assert np.log2(errs[0] / errs[1]) >= 1.7


def test_principal_energy_decay_stepwise():
    # midpoint form of the dissipation identity with a 1.9 safety factor
    g = GridSpec(64, 128, 1.0)
    coeff = make_coeff(g)
    z0 = field_from_callable(lambda x: 16 * (x * (1 - x)) ** 2, g)
    z = solve_principal(coeff, Trajectory(np.zeros((129, 65)), g), z0, g)
    I = np.array([trapz_x(z.values[n] ** 2, g) for n in range(g.nt + 1)])
    assert np.all(np.diff(I) <= 1e-14)
    zmid_xx = diff_x_values(0.5 * (z.values[1:] + z.values[:-1]), g, 2)
    for n in range(g.nt):
        s_mid = trapz_x(coeff.sigma.values * zmid_xx[n] ** 2, g)
        assert (I[n + 1] - I[n]) / g.dt + 1.9 * s_mid <= 1e-12


# ---------------------------------------------------------------- full solve
def test_full_zero_data():
    g = GridSpec(16, 16, 1.0)
    coeff = make_coeff(g, gamma=np.ones(17))
    z = solve_linear_full(coeff, zero_boundary_data(g), g)
    assert np.all(z.values == 0)


def test_full_reduces_to_principal(principal_case):
    g = GridSpec(32, 32, 1.0)
    coeff = make_coeff(g)
    f = trajectory_from_callable(principal_case["source"], g)
    z0 = field_from_callable(principal_case["z0"], g)
    z_p = solve_principal(coeff, f, z0, g)
    z_f = solve_linear_full(coeff, zero_boundary_data(g, y0=z0, g=f), g)
    scale = np.abs(z_p.values).max()
    assert np.abs(z_f.values - z_p.values).max() <= 1e-12 * max(scale, 1.0)


def test_full_manufactured_convergence_and_residual(full_linear_case):
    errs = []
    for nx, nt in ((64, 128), (128, 256)):
        g = GridSpec(nx, nt, 2.0)
        coeff = make_coeff(g, sigma=full_linear_case["sigma"](g.x),
                           gamma=np.ones(nx + 1))
        bd = full_case_bd(full_linear_case, g)
        z = solve_linear_full(coeff, bd, g, comp_tol=1.0)
        exact = trajectory_from_callable(full_linear_case["exact"], g)
        errs.append(np.abs(z.values - exact.values).max())
        max_rel, _ = operator_residual(z, coeff, bd.g)
        assert max_rel <= 1e-10
    assert np.log2(errs[0] / errs[1]) >= 1.7


def test_full_compatibility_gate(full_linear_case):
    # sin(pi x) profile: the discrete slope misses h3(0) at default comp_tol
    g = GridSpec(64, 64, 2.0)
    coeff = make_coeff(g, sigma=full_linear_case["sigma"](g.x),
                       gamma=np.ones(65))
    bd = full_case_bd(full_linear_case, g)
    with pytest.raises(CompatibilityViolation):
        solve_linear_full(coeff, bd, g)


def test_lifting_exactness_of_solution():
    # polynomial profile: discrete traces land exactly on the series
    g = GridSpec(48, 64, 2.0)
    coeff = make_coeff(g, sigma=1 + g.x / 2, gamma=np.ones(49))
    tt = g.t
    y0 = field_from_callable(lambda x: 1 + x + x ** 2, g)
    bd = BoundaryData(np.cos(tt), 3 * np.cos(tt), np.cos(tt), 3 * np.cos(tt),
                      y0, Trajectory(np.zeros((65, 49)), g))
    z = solve_linear_full(coeff, bd, g)
    D1 = diff_matrix(g, 1, "x")
    d0 = D1[0].toarray().ravel()
    d1 = D1[g.nx].toarray().ravel()
    assert np.abs(z.values[:, 0] - bd.h1).max() <= 1e-8
    assert np.abs(z.values[:, -1] - bd.h2).max() <= 1e-8
    assert np.abs(z.values @ d0 - bd.h3).max() <= 1e-8
    assert np.abs(z.values @ d1 - bd.h4).max() <= 1e-8


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_full_solver_linearity(seed, a, b):
    g = GridSpec(16, 8, 1.0)
    coeff = make_coeff(g, sigma=1 + g.x / 2, gamma=np.ones(17))
    rng = np.random.default_rng(seed)

    def random_bd():
        hs = [1e-2 * rng.normal(size=g.nt + 1) for _ in range(4)]
        y0 = 1e-2 * rng.normal(size=g.nx + 1)
        src = Trajectory(rng.normal(size=(g.nt + 1, g.nx + 1)), g)
        return hs, y0, src

    (h_a, y0_a, g_a), (h_b, y0_b, g_b) = random_bd(), random_bd()

    def solve(hs, y0, src):
        bd = BoundaryData(hs[0], hs[1], hs[2], hs[3], ScalarField1D(y0, g), src)
        return solve_linear_full(coeff, bd, g, comp_tol=np.inf)

    za = solve(h_a, y0_a, g_a)
    zb = solve(h_b, y0_b, g_b)
    zc = solve([a * u + b * v for u, v in zip(h_a, h_b)],
               a * y0_a + b * y0_b,
               Trajectory(a * g_a.values + b * g_b.values, g))
    combo = a * za.values + b * zb.values
    scale = max(np.abs(combo).max(), 1.0)
    assert np.abs(zc.values - combo).max() <= 1e-10 * scale


# --------------------------------------------------------- time-derived solve
def test_time_derived_zero():
    g = GridSpec(16, 16, 1.0)
    coeff = make_coeff(g)
    q = solve_time_derived(coeff, Trajectory(np.zeros((17, 17)), g),
                           ScalarField1D(np.zeros(17), g), g)
    assert np.all(q.values == 0)


def test_time_derived_initial_value_formula():
    # time-constant f with z0 = 0: q(0,.) = f(0,.) exactly
    g = GridSpec(32, 16, 1.0)
    coeff = make_coeff(g)
    f = trajectory_from_callable(lambda t, x: x ** 2 * (1 - x) ** 2 + 0 * t, g)
    q = solve_time_derived(coeff, f, ScalarField1D(np.zeros(33), g), g)
    assert np.abs(q.values[0] - f.values[0]).max() == 0.0


def test_time_derived_consistency(principal_case):
    errs = []
    for nt in (64, 128):
        g = GridSpec(64, nt, 2.0)
        coeff = make_coeff(g)
        f = trajectory_from_callable(principal_case["source"], g)
        z0 = field_from_callable(principal_case["z0"], g)
        q0 = field_from_callable(principal_case["q0"], g)
        z = solve_principal(coeff, f, z0, g)
        q = solve_time_derived(coeff, f, z0, g, q0=q0)
        dz = diff_t_values(z.values, g, 1)
        errs.append(np.sqrt(trapz_qt((q.values - dz) ** 2, g)))
    assert errs[0] / errs[1] >= 2.0 ** 0.9  # order >= ~0.9 per halving


# --------------------------------------------------------------- energy report
def test_energy_monitor_zero():
    g = GridSpec(16, 16, 1.0)
    coeff = make_coeff(g)
    zero = Trajectory(np.zeros((17, 17)), g)
    rep = energy_monitor(zero, zero, coeff)
    assert rep.q_f == 0 and rep.q_zxx == 0 and rep.int_z02 == 0
    assert rep.c_energy1 == 0 and not rep.violations


def test_energy_monitor_decay_constant():
    g = GridSpec(64, 128, 1.0)
    coeff = make_coeff(g)
    z0 = field_from_callable(lambda x: 16 * (x * (1 - x)) ** 2, g)
    zero_f = Trajectory(np.zeros((129, 65)), g)
    z = solve_principal(coeff, zero_f, z0, g)
    rep = energy_monitor(z, zero_f, coeff)
    assert rep.c_energy1 <= 1 + 1e-6


def test_energy_monitor_constant_stability(principal_case):
    values = []
    for nx, nt in ((64, 128), (128, 256)):
        g = GridSpec(nx, nt, 2.0)
        coeff = make_coeff(g)
        f = trajectory_from_callable(principal_case["source"], g)
        z0 = field_from_callable(principal_case["z0"], g)
        z = solve_principal(coeff, f, z0, g)
        values.append(energy_monitor(z, f, coeff).c_e)
    assert values[1] == pytest.approx(values[0], rel=0.2)


def test_coefficient_field_validates_sigma_floor():
    g = GridSpec(16, 16, 1.0)
    with pytest.raises(ValueError):
        make_coeff(g, sigma=np.linspace(-0.1, 1, 17), sigma0=0.5)

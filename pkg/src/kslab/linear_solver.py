"""Implicit solvers for the linear fourth-order parabolic systems.

The semi-discrete operator is

    A(t) z = D2 (sigma * D2 z) + gamma * D2 z + G1(t) * D1 z + G2(t) * z

with D1, D2 the grid module's 2nd-order derivative matrices, so the operator
and the discrete Sobolev norms share one discretization.  Time stepping is
the trapezoidal (Crank-Nicolson) one-step scheme

    (z^{n+1} - z^n)/dt + (A^{n+1} z^{n+1} + A^n z^n)/2 = (f^{n+1} + f^n)/2

on the interior equation slots; the four equation slots nearest the boundary
are replaced by the clamped constraints z = h1, h2 (identity rows) and
z_x = h3, h4 (one-sided first-derivative rows) at time t^{n+1}.  The one-step
matrix is banded (half-bandwidth 2); it is factorized once and reused across
steps whenever the operator is time-independent.

Inhomogeneous boundary data enters through the cubic lifting
psi(t,x) = sum_j p_j(x) h_j(t); the solver marches the remainder w with the
lifting's contribution subtracted from the right-hand side and returns
z = w + psi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from .errors import (CompatibilityViolation, LengthMismatch, SingularSystem)
from .grid import (GridSpec, ScalarField1D, Trajectory, diff_matrix,
                   diff_t_values, diff_x_values, discrete_norm,
                   require_same_grid, trapz_qt, trapz_x)

DEFAULT_COMP_TOL = 1e-8
DEFAULT_LIN_TOL = 1e-10


@dataclass(frozen=True)
class CoefficientField:
    """Diffusion sigma(x) >= sigma0 > 0, anti-diffusion gamma(x), and the
    optional time-dependent low-order coefficients G1, G2."""

    sigma: ScalarField1D
    gamma: ScalarField1D
    sigma0: float
    G1: Trajectory | None = None
    G2: Trajectory | None = None

    def __post_init__(self):
        require_same_grid(self.sigma, self.gamma)
        if not (self.sigma0 > 0):
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.sigma.values.min() < self.sigma0:
            raise ValueError(
                f"min(sigma)={self.sigma.values.min():g} violates the certified "
                f"lower bound sigma0={self.sigma0:g}")


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet/Neumann series h1..h4, initial profile y0 and source g."""

    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    h4: np.ndarray
    y0: ScalarField1D
    g: Trajectory

    def __post_init__(self):
        grid = self.y0.grid
        require_same_grid(self.y0, self.g)
        for name in ("h1", "h2", "h3", "h4"):
            h = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, h)
            if h.shape != (grid.nt + 1,):
                raise LengthMismatch(
                    f"{name} has length {h.shape}, grid wants {grid.nt + 1}")
            if not np.all(np.isfinite(h)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def grid(self) -> GridSpec:
        return self.y0.grid

    def check_compatibility(self, comp_tol: float = DEFAULT_COMP_TOL):
        """Corner compatibility of y0 with h_j(0), with y0' taken discretely."""
        y0p = diff_x_values(self.y0.values, self.grid, 1)
        gaps = {
            "y0(0)=h1(0)": abs(self.y0.values[0] - self.h1[0]),
            "y0(1)=h2(0)": abs(self.y0.values[-1] - self.h2[0]),
            "y0'(0)=h3(0)": abs(y0p[0] - self.h3[0]),
            "y0'(1)=h4(0)": abs(y0p[-1] - self.h4[0]),
        }
        bad = {k: v for k, v in gaps.items() if v > comp_tol}
        if bad:
            raise CompatibilityViolation(
                f"compatibility gaps exceed comp_tol={comp_tol:g}: {bad}")


def zero_boundary_data(grid: GridSpec, y0: ScalarField1D | None = None,
                       g: Trajectory | None = None) -> BoundaryData:
    """Homogeneous boundary series with optional initial profile and source."""
    z = np.zeros(grid.nt + 1)
    if y0 is None:
        y0 = ScalarField1D(np.zeros(grid.nx + 1), grid)
    if g is None:
        g = Trajectory(np.zeros((grid.nt + 1, grid.nx + 1)), grid)
    return BoundaryData(z, z.copy(), z.copy(), z.copy(), y0, g)


# cubic shape functions: value/slope cardinal basis on [0,1]
def _p1(x):
    return 2 * x ** 3 - 3 * x ** 2 + 1


def _p2(x):
    return -2 * x ** 3 + 3 * x ** 2


def _p3(x):
    return x ** 3 - 2 * x ** 2 + x


def _p4(x):
    return x ** 3 - x ** 2


@dataclass(frozen=True)
class LiftingField:
    """Cubic boundary lifting psi(t,x) = sum_j p_j(x) h_j(t)."""

    psi: Trajectory


def build_lifting(bd: BoundaryData, grid: GridSpec) -> LiftingField:
    """Interpolate the four boundary series with the cubic shape functions.

    At every time node the cubics reproduce the traces exactly in the
    analytic sense: psi(t,0)=h1, psi(t,1)=h2, psi_x(t,0)=h3, psi_x(t,1)=h4.
    """
    if bd.grid != grid:
        raise LengthMismatch("boundary data lives on a different grid")
    x = grid.x
    psi = (np.outer(bd.h1, _p1(x)) + np.outer(bd.h2, _p2(x))
           + np.outer(bd.h3, _p3(x)) + np.outer(bd.h4, _p4(x)))
    return LiftingField(Trajectory(psi, grid))


def operator_matrix(coeff: CoefficientField, grid: GridSpec,
                    n: int | None = None) -> sparse.csr_matrix:
    """Spatial operator A (optionally at time slot n for G1/G2 terms)."""
    D1 = diff_matrix(grid, 1, "x")
    D2 = diff_matrix(grid, 2, "x")
    A = D2 @ sparse.diags(coeff.sigma.values) @ D2 \
        + sparse.diags(coeff.gamma.values) @ D2
    if coeff.G1 is not None:
        A = A + sparse.diags(coeff.G1.values[n]) @ D1
    if coeff.G2 is not None:
        A = A + sparse.diags(coeff.G2.values[n])
    return A.tocsr()


def _one_step_matrix(A: sparse.csr_matrix, grid: GridSpec) -> sparse.csc_matrix:
    nx = grid.nx
    D1 = diff_matrix(grid, 1, "x")
    M = (sparse.identity(nx + 1) / grid.dt + 0.5 * A).tolil()
    M[0] = 0.0
    M[0, 0] = 1.0
    M[1] = D1[0].toarray().ravel()
    M[nx - 1] = D1[nx].toarray().ravel()
    M[nx] = 0.0
    M[nx, nx] = 1.0
    return M.tocsc()


def _march(coeff: CoefficientField, grid: GridSpec, fhat: np.ndarray,
           init: np.ndarray, targets, lin_tol: float,
           step_source: np.ndarray | None = None) -> np.ndarray:
    """CN march of the full operator.

    ``targets`` are the four constraint series (evaluated at t^{n+1});
    ``step_source``, when given, is an extra per-step right-hand side that is
    not averaged between the time levels (used for the lifting's step term).
    """
    nx, nt, dt = grid.nx, grid.nt, grid.dt
    interior = slice(2, nx - 1)
    g1, g3, g4, g2 = targets  # dirichlet0, neumann0, neumann1, dirichlet1
    time_dep = coeff.G1 is not None or coeff.G2 is not None

    z = np.empty((nt + 1, nx + 1))
    z[0] = init

    A_n = operator_matrix(coeff, grid, 0)
    if not time_dep:
        M = _one_step_matrix(A_n, grid)
        try:
            lu = splu(M)
        except RuntimeError as exc:
            raise SingularSystem(f"one-step factorization failed: {exc}") from exc
        m_norm = abs(M).sum(axis=1).max()

    for n in range(nt):
        A_np1 = operator_matrix(coeff, grid, n + 1) if time_dep else A_n
        if time_dep:
            M = _one_step_matrix(A_np1, grid)
            try:
                lu = splu(M)
            except RuntimeError as exc:
                raise SingularSystem(f"one-step factorization failed: {exc}") from exc
            m_norm = abs(M).sum(axis=1).max()

        rhs = np.empty(nx + 1)
        rhs[interior] = (z[n] / dt - 0.5 * (A_n @ z[n])
                         + 0.5 * (fhat[n + 1] + fhat[n]))[interior]
        if step_source is not None:
            rhs[interior] += step_source[n][interior]
        rhs[0], rhs[1] = g1[n + 1], g3[n + 1]
        rhs[nx - 1], rhs[nx] = g4[n + 1], g2[n + 1]

        znew = lu.solve(rhs)
        if not np.all(np.isfinite(znew)):
            raise SingularSystem("one-step solve produced non-finite values")
        res = np.abs(M @ znew - rhs).max()
        scale = m_norm * np.abs(znew).max() + np.abs(rhs).max()
        if res > lin_tol * max(scale, 1e-300):
            raise SingularSystem(
                f"step {n}: relative residual {res / scale:.2e} exceeds "
                f"lin_tol={lin_tol:g} (ill-conditioned one-step system)")
        z[n + 1] = znew
        A_n = A_np1
    return z


def _check_clamped(profile: np.ndarray, grid: GridSpec, comp_tol: float, what: str):
    p = diff_x_values(profile, grid, 1)
    gaps = (abs(profile[0]), abs(profile[-1]), abs(p[0]), abs(p[-1]))
    if max(gaps) > comp_tol:
        raise CompatibilityViolation(
            f"{what} violates homogeneous clamped conditions by {max(gaps):.2e} "
            f"(comp_tol={comp_tol:g})")


def solve_principal(coeff: CoefficientField, f: Trajectory, z0: ScalarField1D,
                    grid: GridSpec, comp_tol: float = DEFAULT_COMP_TOL,
                    lin_tol: float = DEFAULT_LIN_TOL) -> Trajectory:
    """Solve z_t + (sigma z_xx)_xx = f with homogeneous clamped boundary."""
    require_same_grid(f, z0)
    if f.grid != grid:
        raise LengthMismatch("f lives on a different grid")
    _check_clamped(z0.values, grid, comp_tol, "z0")
    principal = CoefficientField(
        coeff.sigma, ScalarField1D(np.zeros(grid.nx + 1), grid), coeff.sigma0)
    zeros = np.zeros(grid.nt + 1)
    z = _march(principal, grid, f.values, z0.values,
               (zeros, zeros, zeros, zeros), lin_tol)
    return Trajectory(z, grid)


def solve_linear_full(coeff: CoefficientField, bd: BoundaryData, grid: GridSpec,
                      comp_tol: float = DEFAULT_COMP_TOL,
                      lin_tol: float = DEFAULT_LIN_TOL) -> Trajectory:
    """Solve the full linear system with boundary data via the cubic lifting.

    The remainder w = z - psi is marched with right-hand side g - L(psi),
    where L(psi) is the same discrete operator applied to the lifting, so the
    returned z satisfies the discrete scheme to solver precision.  The
    Neumann constraint rows for w absorb the O(dx^2) gap between the analytic
    cubic slope and the one-sided stencil, which keeps the discrete traces of
    z exactly on h1..h4.
    """
    if bd.grid != grid:
        raise LengthMismatch("boundary data lives on a different grid")
    bd.check_compatibility(comp_tol)
    psi = build_lifting(bd, grid).psi.values

    D1 = diff_matrix(grid, 1, "x")
    d_left = np.asarray(D1[0].todense()).ravel()
    d_right = np.asarray(D1[grid.nx].todense()).ravel()

    time_dep = coeff.G1 is not None or coeff.G2 is not None
    A_rows = np.empty_like(psi)
    if time_dep:
        for n in range(grid.nt + 1):
            A_rows[n] = operator_matrix(coeff, grid, n) @ psi[n]
    else:
        A0 = operator_matrix(coeff, grid, None)
        A_rows = (A0 @ psi.T).T

    # CN right-hand side for w: g - A psi averaged, minus the per-step
    # difference quotient (psi^{n+1}-psi^n)/dt
    fhat = bd.g.values - A_rows
    psi_step = -(psi[1:] - psi[:-1]) / grid.dt

    zeros = np.zeros(grid.nt + 1)
    neum0 = bd.h3 - psi @ d_left
    neum1 = bd.h4 - psi @ d_right
    w0 = bd.y0.values - psi[0]
    w = _march(coeff, grid, fhat, w0, (zeros, neum0, neum1, zeros), lin_tol,
               step_source=psi_step)
    return Trajectory(w + psi, grid)


def solve_time_derived(coeff: CoefficientField, f: Trajectory, z0: ScalarField1D,
                       grid: GridSpec, q0: ScalarField1D | None = None,
                       comp_tol: float = DEFAULT_COMP_TOL,
                       lin_tol: float = DEFAULT_LIN_TOL) -> Trajectory:
    """Solve the time-derived principal system for q = z_t.

    q satisfies q_t + (sigma q_xx)_xx = f_t with q(0,x) = f(0,x) -
    (sigma z0'')''.  The initial profile is formed with diff_x unless an
    analytic q0 is supplied; f_t uses 2nd-order time differences.
    """
    require_same_grid(f, z0)
    if q0 is None:
        z0xx = diff_x_values(z0.values, grid, 2)
        q0 = ScalarField1D(
            f.values[0] - diff_x_values(coeff.sigma.values * z0xx, grid, 2), grid)
    ft = Trajectory(diff_t_values(f.values, grid, 1), grid)
    return solve_principal(coeff, ft, q0, grid, comp_tol=comp_tol, lin_tol=lin_tol)


def operator_residual(z: Trajectory, coeff: CoefficientField, fhat: Trajectory):
    """Residual of the CN scheme on the interior slots for a given trajectory.

    Returns (max relative one-step residual in the backward-error sense,
    absolute L2Q norm of the interior residual field).
    """
    require_same_grid(z, fhat)
    grid = z.grid
    nx, dt = grid.nx, grid.dt
    interior = slice(2, nx - 1)
    time_dep = coeff.G1 is not None or coeff.G2 is not None
    A_n = operator_matrix(coeff, grid, 0)
    if not time_dep:
        M = _one_step_matrix(A_n, grid)
        m_norm = abs(M).sum(axis=1).max()
    res_field = np.zeros_like(z.values)
    max_rel = 0.0
    for n in range(grid.nt):
        A_np1 = operator_matrix(coeff, grid, n + 1) if time_dep else A_n
        if time_dep:
            M = _one_step_matrix(A_np1, grid)
            m_norm = abs(M).sum(axis=1).max()
        r = ((z.values[n + 1] - z.values[n]) / dt
             + 0.5 * (A_np1 @ z.values[n + 1] + A_n @ z.values[n])
             - 0.5 * (fhat.values[n + 1] + fhat.values[n]))[interior]
        res_field[n + 1, interior] = r
        scale = m_norm * np.abs(z.values[n + 1]).max() + np.abs(
            0.5 * (fhat.values[n + 1] + fhat.values[n])).max() + 1e-300
        max_rel = max(max_rel, np.abs(r).max() / scale)
        A_n = A_np1
    l2 = float(np.sqrt(trapz_qt(res_field ** 2, grid)))
    return max_rel, l2


@dataclass
class EnergyReport:
    """Discrete energy functionals of a solve and their empirical constants."""

    int_z2: np.ndarray            # per time node: int |z|^2 dx
    int_sigma_zxx2: np.ndarray    # per time node: int sigma |z_xx|^2 dx
    q_f: float                    # iint |f|^2
    q_zxx: float                  # iint |z_xx|^2
    int_z02: float                # int |z0|^2
    int_z0xx2: float              # int |z0''|^2
    c_energy1: float
    c_energy2: float
    c_e: float
    violations: list = field(default_factory=list)


def energy_monitor(z: Trajectory, f: Trajectory, coeff: CoefficientField,
                   cap: float = 1e8) -> EnergyReport:
    """Empirical constants for the a-priori energy estimates of the solve.

    c_energy1 bounds sup_t int|z|^2, c_energy2 bounds iint|z_xx|^2 (both
    against iint|f|^2 + int|z0|^2); c_e bounds the discrete Y2 norm against
    iint|f|^2 + int|z0''|^2.  A constant above ``cap`` is flagged.
    """
    require_same_grid(z, f)
    grid = z.grid
    zxx = diff_x_values(z.values, grid, 2)
    int_z2 = np.array([trapz_x(z.values[n] ** 2, grid) for n in range(grid.nt + 1)])
    int_szxx2 = np.array([trapz_x(coeff.sigma.values * zxx[n] ** 2, grid)
                          for n in range(grid.nt + 1)])
    q_f = trapz_qt(f.values ** 2, grid)
    q_zxx = trapz_qt(zxx ** 2, grid)
    z0 = z.values[0]
    int_z02 = trapz_x(z0 ** 2, grid)
    int_z0xx2 = trapz_x(diff_x_values(z0, grid, 2) ** 2, grid)

    def ratio(lhs, rhs):
        if lhs == 0.0:
            return 0.0
        return lhs / rhs if rhs > 0 else np.inf

    den1 = q_f + int_z02
    c1 = ratio(float(int_z2.max()), den1)
    c2 = ratio(q_zxx, den1)
    h2_sq = np.array([discrete_norm(z.row(n), "H2x") ** 2 for n in range(grid.nt + 1)])
    h4_sq = np.array([discrete_norm(z.row(n), "H4x") ** 2 for n in range(grid.nt + 1)])
    wt = np.full(grid.nt + 1, grid.dt)
    wt[0] = wt[-1] = 0.5 * grid.dt
    y2_sq = float(h2_sq.max() + wt @ h4_sq)
    ce = ratio(y2_sq, q_f + int_z0xx2)

    report = EnergyReport(int_z2, int_szxx2, q_f, q_zxx, int_z02, int_z0xx2,
                          c1, c2, ce)
    for name, c in (("energy1", c1), ("energy2", c2), ("e", ce)):
        if c > cap:
            report.violations.append(name)
    return report

"""Fixed-point solver for the full nonlinear K-S system.

The nonlinearity y y_x is lagged: each sweep solves the linear system with
source g - v v_x evaluated on the previous iterate, which is exactly the
contraction map whose fixed point defines the solution.  The sweep history
(update norms and contraction ratios) is part of the result, because the
contraction behavior itself is a test target: ratios approach a limit
proportional to the data size, and the iteration is expected to break down
once the data leaves the small-data regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, ZeroDenominator
from .grid import (GridSpec, Trajectory, diff_t_values, diff_x_values,
                   discrete_norm)
from .linear_solver import (BoundaryData, CoefficientField, DEFAULT_COMP_TOL,
                            DEFAULT_LIN_TOL, operator_residual,
                            solve_linear_full)


@dataclass(frozen=True)
class NonlinearSolveConfig:
    max_picard: int = 50
    picard_tol: float = 1e-10
    epsilon_report: bool = False
    comp_tol: float = DEFAULT_COMP_TOL
    lin_tol: float = DEFAULT_LIN_TOL

    def __post_init__(self):
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")
        if not (self.picard_tol > 0):
            raise ValueError("picard_tol must be positive")


@dataclass
class PicardReport:
    iterations: int
    update_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    residual_rel: float = 0.0
    residual_l2: float = 0.0
    converged: bool = False
    smallness: dict | None = None


def _lagged_source(bd: BoundaryData, v: np.ndarray, grid: GridSpec) -> BoundaryData:
    vvx = v * diff_x_values(v, grid, 1)
    if not np.all(np.isfinite(vvx)):
        raise NoConvergence("fixed-point iterate overflowed")
    return BoundaryData(bd.h1, bd.h2, bd.h3, bd.h4, bd.y0,
                        Trajectory(bd.g.values - vvx, grid))


def _smallness(bd: BoundaryData, grid: GridSpec) -> dict:
    """Discrete surrogates for the small-data hypothesis norms."""
    out = {"y0_H4x": discrete_norm(bd.y0, "H4x")}
    g_t = diff_t_values(bd.g.values, grid, 1)
    g_sq = sum(discrete_norm(bd.g.row(n), "H4x") ** 2 * grid.dt
               for n in range(grid.nt + 1))
    out["g_F"] = float(np.sqrt(g_sq + discrete_norm(
        Trajectory(g_t, grid), "L2Q") ** 2))
    for name in ("h1", "h2", "h3", "h4"):
        h = getattr(bd, name)
        hp = diff_t_values(h, grid, 1)
        hpp = diff_t_values(h, grid, 2)
        out[f"{name}_H2t"] = float(np.sqrt(
            discrete_norm(h, "L2t", grid) ** 2
            + discrete_norm(hp, "L2t", grid) ** 2
            + discrete_norm(hpp, "L2t", grid) ** 2))
    return out


def solve_ks(coeff: CoefficientField, bd: BoundaryData,
             cfg: NonlinearSolveConfig, grid: GridSpec,
             nonlinearity: bool = True) -> tuple[Trajectory, PicardReport]:
    """Iterate v -> solution of the linear system with source g - v v_x.

    Starts from the linear solve with the nonlinearity off and stops when the
    relative update falls below picard_tol.  Raises NoConvergence when the
    budget is exhausted or the ratios sit at or above 1 for three consecutive
    sweeps (data outside the small-data regime); the partial report rides on
    the exception.
    """
    report = PicardReport(iterations=0)
    if cfg.epsilon_report:
        report.smallness = _smallness(bd, grid)

    v = solve_linear_full(coeff, bd, grid, cfg.comp_tol, cfg.lin_tol)
    if not nonlinearity:
        report.converged = True
        rel, l2 = operator_residual(v, coeff, bd.g)
        report.residual_rel, report.residual_l2 = rel, l2
        return v, report

    # relative updates below this are linear-solver roundoff; a sweep that
    # stops contracting down there has converged to the achievable floor and
    # its update ratio measures noise, so it is not recorded
    floor_rel = 1e-8
    try:
        prev_update = None
        for k in range(1, cfg.max_picard + 1):
            bd_k = _lagged_source(bd, v.values, grid)
            v_new = solve_linear_full(coeff, bd_k, grid, cfg.comp_tol, cfg.lin_tol)
            update = discrete_norm(
                Trajectory(v_new.values - v.values, grid), "L2Q")
            if not np.isfinite(update):
                raise NoConvergence("fixed-point update is not finite")
            report.iterations = k
            report.update_norms.append(update)
            v = v_new
            vnorm = discrete_norm(v, "L2Q")
            rel = update / vnorm if vnorm > 0 else 0.0
            ratio = (update / prev_update
                     if prev_update is not None and prev_update > 0 else None)
            if update == 0.0 or rel <= cfg.picard_tol:
                if ratio is not None:
                    report.ratios.append(ratio)
                report.converged = True
                break
            if ratio is not None and ratio >= 0.5 and rel <= floor_rel:
                report.converged = True
                break
            if ratio is not None:
                report.ratios.append(ratio)
            if len(report.ratios) >= 3 and all(
                    r >= 1.0 for r in report.ratios[-3:]):
                raise NoConvergence(
                    f"contraction ratios {report.ratios[-3:]} stay at or above "
                    f"1 (data too large for the small-data regime)")
            prev_update = update
        if not report.converged:
            raise NoConvergence(
                f"no convergence in {cfg.max_picard} sweeps "
                f"(last update {report.update_norms[-1]:.3e})")
    except NoConvergence as exc:
        exc.report = report
        raise

    fhat = Trajectory(bd.g.values - v.values * diff_x_values(v.values, grid, 1),
                      grid)
    rel, l2 = operator_residual(v, coeff, fhat)
    report.residual_rel, report.residual_l2 = rel, l2
    return v, report


def contraction_probe(coeff: CoefficientField, bd: BoundaryData, grid: GridSpec,
                      v: Trajectory, w: Trajectory,
                      comp_tol: float = DEFAULT_COMP_TOL,
                      lin_tol: float = DEFAULT_LIN_TOL) -> float:
    """Discrete contraction ratio |Lambda(v) - Lambda(w)| / |v - w| in L2(Q)."""
    den = discrete_norm(Trajectory(v.values - w.values, grid), "L2Q")
    if den == 0.0:
        raise ZeroDenominator("contraction probe needs v != w")
    lv = solve_linear_full(coeff, _lagged_source(bd, v.values, grid), grid,
                           comp_tol, lin_tol)
    lw = solve_linear_full(coeff, _lagged_source(bd, w.values, grid), grid,
                           comp_tol, lin_tol)
    num = discrete_norm(Trajectory(lv.values - lw.values, grid), "L2Q")
    return num / den

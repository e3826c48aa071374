"""Hundsdorfer-Verwer ADI time stepping.

One step from U (at tau) to the next level:

    Y0  = U  + dt F(U)
    Y1  = Y0 + phi dt (F1(Y1) - F1(U))
    Y2  = Y1 + phi dt (F2(Y2) - F2(U))
    Z0  = Y0 + psi dt (F(Y2) - F(U))
    Z1  = Z0 + phi dt (F1(Z1) - F1(Y2))
    Z2  = Z1 + phi dt (F2(Z2) - F2(Y2))

Explicit stages use the wide stencils, implicit ones the compact schemes.
An implicit stage W = V + phi dt (Fk(W) - Fk(R)) is solved for the increment
D = W - V from

    (B - phi dt A) D = phi dt A (V - R),

which is the compact relation A (W - R) = B (W - V) / (phi dt) rearranged.
Every stage value approximates the new time level, so all stages carry the
Dirichlet data at tau + dt on the x-boundaries, and the y-boundary rows are
refreshed by five-point extrapolation from the interior after each stage.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import banded
from .grid import GridField, TimeGrid, UniformGrid
from .model import NodalCoefficients
from .operators import (
    CompactRows,
    ExplicitOperator,
    assemble_compact_x,
    assemble_compact_y,
    dirichlet_x,
    extrapolate_y_boundary,
    nodal_coefficients,
)

log = logging.getLogger(__name__)


class InstabilityError(FloatingPointError):
    def __init__(self, stage, step=None):
        where = f" in step {step}" if step is not None else ""
        super().__init__(f"non-finite values after stage {stage}{where}")
        self.stage = stage
        self.step = step


@dataclass(frozen=True)
class AdiParams:
    phi: float = 0.5
    psi: float = 0.5

    def __post_init__(self):
        if not 0 < self.phi <= 1:
            raise ValueError(f"phi={self.phi} must lie in (0, 1]")
        if not 0 < self.psi <= 1:
            raise ValueError(f"psi={self.psi} must lie in (0, 1]")


def _implicit_matrix(rows: CompactRows, theta: float, n_rows: int, n: int):
    """B - theta A as a batch of tridiagonal matrices of size n.

    x-rows give one matrix per row (batch n_rows); y-rows give a single
    matrix since the coefficients do not vary along x.
    """
    m = rows.b - theta * rows.a
    if rows.axis == "x":
        lo, mid, hi = (np.repeat(m[k][:, None], n, axis=1) for k in range(3))
        return banded.TridiagonalMatrix.from_triples(lo, mid, hi)
    return banded.TridiagonalMatrix.from_triples(m[0], m[1], m[2])


@dataclass
class _Factors:
    dt: float
    x: banded.TridiagonalLU
    y: banded.TridiagonalLU


@dataclass
class PreparedSolver:
    grid: UniformGrid
    coeffs: NodalCoefficients
    adi: AdiParams
    timegrid: TimeGrid
    rows_x: CompactRows
    rows_y: CompactRows
    F: ExplicitOperator
    factors: dict = field(default_factory=dict)
    factorizations: int = 0

    @property
    def r(self) -> float:
        return self.coeffs.r

    def factors_for(self, dt: float) -> _Factors:
        f = self.factors.get(dt)
        if f is None:
            theta = self.adi.phi * dt
            M, N = self.grid.shape
            lux = banded.factor(_implicit_matrix(self.rows_x, theta, N - 2, M - 2))
            luy = banded.factor(_implicit_matrix(self.rows_y, theta, M - 2, N - 2))
            self.factorizations += 2
            if lux.pivot_fallback or luy.pivot_fallback:
                log.warning("pivot fallback used for dt=%g on %dx%d grid", dt, M, N)
            f = self.factors[dt] = _Factors(dt, lux, luy)
        return f


def prepare(grid: UniformGrid, model, adi: AdiParams | None = None,
            timegrid: TimeGrid | None = None, corner: str = "edge") -> PreparedSolver:
    """Assemble operators and factor both implicit systems for the regular step."""
    adi = adi or AdiParams()
    coeffs = nodal_coefficients(grid, model)
    if timegrid is None:
        timegrid = TimeGrid((grid.domain.T,))
    solver = PreparedSolver(
        grid=grid,
        coeffs=coeffs,
        adi=adi,
        timegrid=timegrid,
        rows_x=assemble_compact_x(grid, coeffs),
        rows_y=assemble_compact_y(grid, coeffs),
        F=ExplicitOperator(grid, coeffs, corner=corner),
    )
    if timegrid.P:
        solver.factors_for(timegrid.dt)
    return solver


def set_boundaries(u: np.ndarray, tau: float, grid: UniformGrid, r: float) -> np.ndarray:
    """Extrapolate the y-boundary rows, then impose the x-Dirichlet columns."""
    extrapolate_y_boundary(u, out=u)
    left, right = dirichlet_x(tau, grid, r)
    u[0, :] = left
    u[-1, :] = right
    return u


def _check(u, stage, step):
    if not np.all(np.isfinite(u)):
        raise InstabilityError(stage, step)


def _x_stage(solver, f: _Factors, V, R, tau_new, step, name):
    """W = V + phi dt (F1(W) - F1(R))."""
    theta = solver.adi.phi * f.dt
    rhs = theta * solver.rows_x.apply_a(V - R)          # (M-2, N-2)
    D = banded.solve(f.x, np.ascontiguousarray(rhs.T), overwrite=True)
    W = V.copy()
    W[1:-1, 1:-1] += D.T
    set_boundaries(W, tau_new, solver.grid, solver.r)
    _check(W, name, step)
    return W


def _y_stage(solver, f: _Factors, V, R, tau_new, step, name):
    """W = V + phi dt (F2(W) - F2(R)).

    The y-boundary rows of W are taken from V while solving and refreshed
    by extrapolation afterwards.
    """
    theta = solver.adi.phi * f.dt
    rhs = theta * solver.rows_y.apply_a(V - R)          # (M-2, N-2)
    D = banded.solve(f.y, np.ascontiguousarray(rhs.T), overwrite=True)   # (N-2, M-2)
    W = V.copy()
    W[1:-1, 1:-1] += D.T
    set_boundaries(W, tau_new, solver.grid, solver.r)
    _check(W, name, step)
    return W


def hv_step(solver: PreparedSolver, u_prev, tau_prev: float, dt: float | None = None,
            step: int | None = None) -> GridField:
    """Advance one step of size ``dt`` (default: the solver's regular step)."""
    U = u_prev.values if isinstance(u_prev, GridField) else np.asarray(u_prev, dtype=float)
    dt = solver.timegrid.dt if dt is None else dt
    f = solver.factors_for(dt)
    tau_new = tau_prev + dt
    grid, F, psi = solver.grid, solver.F, solver.adi.psi

    FU = F(U)
    Y0 = U.copy()
    Y0[1:-1, 1:-1] += dt * FU
    set_boundaries(Y0, tau_new, grid, solver.r)
    _check(Y0, "Y0", step)

    Y1 = _x_stage(solver, f, Y0, U, tau_new, step, "Y1")
    Y2 = _y_stage(solver, f, Y1, U, tau_new, step, "Y2")

    Z0 = Y0.copy()
    Z0[1:-1, 1:-1] += psi * dt * (F(Y2) - FU)
    set_boundaries(Z0, tau_new, grid, solver.r)
    _check(Z0, "Z0", step)

    Z1 = _x_stage(solver, f, Z0, Y2, tau_new, step, "Z1")
    Z2 = _y_stage(solver, f, Z1, Y2, tau_new, step, "Z2")
    return GridField(grid, Z2, check=False)


def initial_field(grid: UniformGrid, values, r: float = 0.0) -> GridField:
    """Wrap initial data and set its boundaries for tau = 0."""
    u = np.array(values, dtype=float)
    set_boundaries(u, 0.0, grid, r)
    return GridField(grid, u)


def solve_to_maturity(solver: PreparedSolver, u0, trace=None) -> GridField:
    """March ``u0`` through every step of the solver's time grid.

    ``trace``, if given, is a path or text stream receiving one CSV line
    per step: step, tau, max-norm, wall seconds.
    """
    u = u0 if isinstance(u0, GridField) else GridField(solver.grid, u0)
    tau = 0.0
    writer, fh = _trace_writer(trace)
    start = time.perf_counter()
    try:
        for k, dt in enumerate(solver.timegrid.steps, start=1):
            u = hv_step(solver, u, tau, dt, step=k)
            tau += dt
            if writer:
                writer.writerow([k, repr(tau), repr(float(np.abs(u.values).max())),
                                 f"{time.perf_counter() - start:.6f}"])
    finally:
        if fh is not None and fh is not trace:
            fh.close()
    return u


def _trace_writer(trace):
    if trace is None:
        return None, None
    fh = trace if hasattr(trace, "write") else open(trace, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["step", "tau", "max_norm", "seconds"])
    return w, fh

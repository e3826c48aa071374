"""Spatial operators of the high-order ADI scheme.

Implicit stages use fourth-order compact (three-point) schemes for the
one-dimensional problems

    u_xx + c1 u_x = c2 g,        u_yy + c1(y) u_y = c2(y) g,

where g stands for F1(u) resp. F2(u). Explicit stages use the classical
five-point fourth-order central differences on a 5x5 stencil, with ghost
values outside the domain filled by polynomial extrapolation.

Compact rows are kept *row-scaled*: every row is multiplied by the diffusion
coefficient of that row (1/c2). Scaling a row does not change the discrete
equations, but it keeps the scheme well defined when the diffusion vanishes
(e.g. the zero model used in tests). :meth:`CompactRows.unscaled` gives the
textbook form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import UniformGrid
from .model import ModelParams, NodalCoefficients


class StencilWeights:
    # offsets -2..2
    D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
    D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
    # five-point extrapolation to the node one step outside
    EXTRAP = np.array([5.0, -10.0, 10.0, -5.0, 1.0])


def nodal_coefficients(grid: UniformGrid, model) -> NodalCoefficients:
    if isinstance(model, NodalCoefficients):
        if model.y.shape != grid.y.shape or not np.array_equal(model.y, grid.y):
            raise ValueError("coefficients were sampled on a different y-grid")
        return model
    if isinstance(model, ModelParams):
        return NodalCoefficients.from_params(grid.y, model)
    raise TypeError(f"expected ModelParams or NodalCoefficients, got {type(model).__name__}")


def _ratio(num, den):
    """num/den with 0/0 read as 0 (no convection without diffusion)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


@dataclass(frozen=True)
class CompactRows:
    """Three-point compact scheme rows: sum_k a[k] u_{m+k-1} = sum_k b[k] g_{m+k-1}.

    ``a`` and ``b`` have shape (3, R) for R rows; ``scale`` holds the
    factor each row was multiplied by.
    """

    a: np.ndarray
    b: np.ndarray
    scale: np.ndarray
    axis: str

    def unscaled(self):
        if np.any(self.scale == 0):
            raise ZeroDivisionError("row with vanishing diffusion has no unscaled form")
        return self.a / self.scale, self.b / self.scale

    def apply_a(self, u):
        return _apply3(self.a, u, self.axis)

    def apply_b(self, g):
        return _apply3(self.b, g, self.axis)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "a_m1", "a_0", "a_p1", "b_m1", "b_0", "b_p1"])
            for r in range(self.a.shape[1]):
                w.writerow([r + 1, *(repr(float(v)) for v in self.a[:, r]),
                            *(repr(float(v)) for v in self.b[:, r])])


def _apply3(coef, u, axis):
    """Apply rows to the interior of a full (M, N) array.

    x-rows: one coefficient triple per interior j, acting along i.
    y-rows: one triple per interior j, acting along j, same for every i.
    Returns the (M-2, N-2) interior result.
    """
    u = np.asarray(u, dtype=float)
    if axis == "x":
        c = coef[:, None, :]
        return (c[0] * u[:-2, 1:-1] + c[1] * u[1:-1, 1:-1] + c[2] * u[2:, 1:-1])
    c = coef[:, None, :]
    return (c[0] * u[1:-1, :-2] + c[1] * u[1:-1, 1:-1] + c[2] * u[1:-1, 2:])


def assemble_compact_x(grid: UniformGrid, model) -> CompactRows:
    """Row-scaled compact scheme for F1 on each interior row j = 1..N-2."""
    co = nodal_coefficients(grid, model)
    a = co.a_xx[1:-1]
    b = co.b_x[1:-1]
    h = grid.dx
    c1 = _ratio(b, a)
    bc = b * c1
    A = np.array([a / h**2 - b / (2 * h) + bc / 12,
                  -2 * a / h**2 - bc / 6,
                  a / h**2 + b / (2 * h) + bc / 12])
    B = np.array([1 / 12 - c1 * h / 24,
                  np.full_like(a, 10 / 12),
                  1 / 12 + c1 * h / 24])
    return CompactRows(A, B, a.copy(), "x")


def assemble_compact_y(grid: UniformGrid, model) -> CompactRows:
    """Row-scaled compact scheme for F2 with y-dependent coefficients.

    u_yyy and u_yyyy in the truncation error of the central differences are
    replaced using the once and twice differentiated equation, with the
    products c2*g differenced by the discrete product rule.
    """
    co = nodal_coefficients(grid, model)
    h = grid.dy
    a = co.a_yy[1:-1]
    b = co.b_y[1:-1]
    c1 = _ratio(b, a)
    s1 = a * co.c1y_d1[1:-1]          # a c1'
    s2 = a * co.c1y_d2[1:-1]          # a c1''
    # P u_yy + Q u_y with the second-order corrections folded in
    P = a + h**2 * (2 * s1 + b * c1) / 12
    Q = b + h**2 * (s2 + b * co.c1y_d1[1:-1]) / 12
    A = np.array([P / h**2 - Q / (2 * h), -2 * P / h**2, P / h**2 + Q / (2 * h)])

    # a_j * c2_{j+-1} = a_j / a_{j+-1}; equal to 1 when both vanish
    rp = _ratio_or_one(a, co.a_yy[2:])
    rm = _ratio_or_one(a, co.a_yy[:-2])
    d2c2 = (rp - 2 + rm) / h**2        # a_j * delta^2 c2
    d0c2 = (rp - rm) / (2 * h)         # a_j * delta_0 c2
    B = np.array([1 / 12 - h * d0c2 / 12 - c1 * h / 24,
                  10 / 12 + h**2 * d2c2 / 12 + c1 * h**2 * d0c2 / 12,
                  1 / 12 + h * d0c2 / 12 + c1 * h / 24])
    return CompactRows(A, B, a.copy(), "y")


def _ratio_or_one(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.ones(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def boundary_vector(rows: CompactRows, M: int, w_lo, w_hi, g_lo, g_hi) -> np.ndarray:
    """Dirichlet contributions of the x-sweep, shape (M-2, N-2).

    With w and g known on the boundary columns i = 0 and M-1, the interior
    equations of A w = B g read A_int w_int = B_int g_int + d.
    """
    if rows.axis != "x":
        raise ValueError("boundary vector is defined for x-rows only")
    a, b = rows.a, rows.b
    R = a.shape[1]
    w_lo, w_hi, g_lo, g_hi = (np.broadcast_to(np.asarray(v, dtype=float), (R,))
                              for v in (w_lo, w_hi, g_lo, g_hi))
    d = np.zeros((M - 2, R))
    d[0] += b[0] * g_lo - a[0] * w_lo
    d[-1] += b[2] * g_hi - a[2] * w_hi
    return d


def dirichlet_x(tau: float, grid: UniformGrid, r: float):
    """Boundary values at x = L1 and x = K1 (all j)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    left = np.full(grid.N, 1.0 - np.exp(r * tau + grid.domain.L1))
    right = np.zeros(grid.N)
    return left, right


CORNER_MODES = ("edge", "diagonal")


def extrapolate_ghosts(u, corner: str = "edge") -> np.ndarray:
    """Pad an (M, N) array with one layer of extrapolated ghost nodes.

    Edge ghosts use five-point extrapolation normal to their edge. Corner
    ghosts either continue an already filled ghost row along x ("edge") or
    extrapolate along the grid diagonal ("diagonal"). Both are exact for
    quartics; the diagonal variant makes the explicit operator unstable on
    strongly stretched grids (dx >> dy), so "edge" is the default.
    """
    if corner not in CORNER_MODES:
        raise ValueError(f"corner mode must be one of {CORNER_MODES}, got {corner!r}")
    u = np.asarray(u, dtype=float)
    M, N = u.shape
    if M < 6 or N < 6:
        raise ValueError(f"ghost extrapolation needs at least 6 nodes per axis, got {M}x{N}")
    w = StencilWeights.EXTRAP
    P = np.empty((M + 2, N + 2))
    P[1:-1, 1:-1] = u
    P[0, 1:-1] = w @ u[:5]
    P[-1, 1:-1] = w @ u[-1:-6:-1]
    P[1:-1, 0] = u[:, :5] @ w
    P[1:-1, -1] = u[:, -1:-6:-1] @ w
    if corner == "edge":
        P[0, 0] = w @ P[1:6, 0]
        P[0, -1] = w @ P[1:6, -1]
        P[-1, 0] = w @ P[-2:-7:-1, 0]
        P[-1, -1] = w @ P[-2:-7:-1, -1]
    else:
        k = np.arange(5)
        P[0, 0] = w @ u[k, k]
        P[0, -1] = w @ u[k, N - 1 - k]
        P[-1, 0] = w @ u[M - 1 - k, k]
        P[-1, -1] = w @ u[M - 1 - k, N - 1 - k]
    return P


def extrapolate_y_boundary(u, out=None) -> np.ndarray:
    """Overwrite rows j = 0 and N-1 from the five nearest interior rows."""
    u = np.asarray(u, dtype=float)
    if u.shape[1] < 6:
        raise ValueError("y-boundary extrapolation needs N >= 6")
    if out is None:
        out = u.copy()
    w = StencilWeights.EXTRAP
    out[:, 0] = u[:, 1:6] @ w
    out[:, -1] = u[:, -2:-7:-1] @ w
    return out


class ExplicitOperator:
    """F = F0 + F1 + F2 by fourth-order central differences on a 5x5 stencil.

    Coefficients are frozen at construction; ``__call__`` returns F(u) on
    the inner nodes as an (M-2, N-2) array.
    """

    def __init__(self, grid: UniformGrid, model, parts=("0", "1", "2"), corner: str = "edge"):
        co = nodal_coefficients(grid, model)
        if corner not in CORNER_MODES:
            raise ValueError(f"corner mode must be one of {CORNER_MODES}, got {corner!r}")
        self.grid = grid
        self.parts = tuple(parts)
        self.corner = corner
        s = slice(1, -1)
        self.axx = co.a_xx[s] / (12 * grid.dx**2)
        self.bx = co.b_x[s] / (12 * grid.dx)
        self.ayy = co.a_yy[s] / (12 * grid.dy**2)
        self.by = co.b_y[s] / (12 * grid.dy)
        self.axy = co.a_xy[s] / (144 * grid.dx * grid.dy)
        self.zero = co.is_zero

    def __call__(self, u) -> np.ndarray:
        M, N = self.grid.shape
        if self.zero:
            return np.zeros((M - 2, N - 2))
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("explicit operator applied to non-finite values")
        P = extrapolate_ghosts(u, self.corner)

        def sh(di, dj):
            return P[2 + di:M + di, 2 + dj:N + dj]

        c = sh(0, 0)
        out = np.zeros((M - 2, N - 2))
        if "1" in self.parts:
            m1, p1, m2, p2 = sh(-1, 0), sh(1, 0), sh(-2, 0), sh(2, 0)
            out += self.axx * (16 * (m1 + p1) - (m2 + p2) - 30 * c)
            out += self.bx * (8 * (p1 - m1) + (m2 - p2))
        if "2" in self.parts:
            m1, p1, m2, p2 = sh(0, -1), sh(0, 1), sh(0, -2), sh(0, 2)
            out += self.ayy * (16 * (m1 + p1) - (m2 + p2) - 30 * c)
            out += self.by * (8 * (p1 - m1) + (m2 - p2))
        if "0" in self.parts:
            dy = [8 * (sh(a, 1) - sh(a, -1)) + (sh(a, -2) - sh(a, 2)) for a in (-2, -1, 1, 2)]
            mixed = 8 * (dy[2] - dy[1]) + (dy[0] - dy[3])
            out += self.axy * mixed
        return out


def apply_explicit_F(u, grid: UniformGrid, model, parts=("0", "1", "2"),
                     corner: str = "edge") -> np.ndarray:
    """F(u) on the inner nodes; see :class:`ExplicitOperator`."""
    return ExplicitOperator(grid, model, parts, corner)(u)

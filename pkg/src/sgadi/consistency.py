"""Manufactured-solution consistency checks for the discrete operators."""

from __future__ import annotations

import numpy as np

from .grid import Domain, LevelIndex, TimeGrid, grid_from_level
from .model import ModelParams, NodalCoefficients, reference_params
from .operators import ExplicitOperator, assemble_compact_x, assemble_compact_y
from .smoothing import smooth_initial
from .stepper import AdiParams, initial_field, prepare, solve_to_maturity


def slope(deltas, residuals) -> float:
    """Least-squares slope of log(residual) against log(delta)."""
    return float(np.polyfit(np.log(deltas), np.log(residuals), 1)[0])


def compact_x_residual(level: int, params: ModelParams | None = None, domain: Domain = Domain(),
                       y_level: int = 4):
    """Max unscaled residual A u - B g of the x-scheme for u = sin x, g = F1(u)."""
    params = params or reference_params()
    g = grid_from_level(domain, LevelIndex(level, y_level))
    co = NodalCoefficients.from_params(g.y, params)
    rows = assemble_compact_x(g, co)
    x = g.x[:, None]
    u = np.sin(x) + 0 * g.y[None, :]
    gv = co.a_xx[None, :] * -np.sin(x) + co.b_x[None, :] * np.cos(x) + 0 * g.y[None, :]
    res = rows.apply_a(u) - rows.apply_b(gv)
    return g.dx, float(np.max(np.abs(res / rows.scale[None, :])))


def compact_y_residual(level: int, params: ModelParams | None = None, domain: Domain = Domain(),
                       x_level: int = 3):
    """Same for the y-scheme with u = cos y and the model's variable coefficients."""
    params = params or reference_params()
    g = grid_from_level(domain, LevelIndex(x_level, level))
    co = NodalCoefficients.from_params(g.y, params)
    rows = assemble_compact_y(g, co)
    y = g.y[None, :]
    u = np.cos(y) + 0 * g.x[:, None]
    gv = co.a_yy[None, :] * -np.cos(y) + co.b_y[None, :] * -np.sin(y) + 0 * g.x[:, None]
    res = rows.apply_a(u) - rows.apply_b(gv)
    return g.dy, float(np.max(np.abs(res / rows.scale[None, :])))


def explicit_error(level: int, params: ModelParams | None = None, domain: Domain = Domain(),
                   margin: int = 2):
    """Max error of the wide-stencil F on u = sin(x) cos(y) + x y**2.

    Only nodes whose 5x5 stencil stays inside the grid are compared; the
    ghost ring is one order lower by construction (O(h**5) values divided
    by h**2).
    """
    params = params or reference_params()
    g = grid_from_level(domain, LevelIndex(level, level))
    co = NodalCoefficients.from_params(g.y, params)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    u = np.sin(X) * np.cos(Y) + X * Y**2
    ux = np.cos(X) * np.cos(Y) + Y**2
    uy = -np.sin(X) * np.sin(Y) + 2 * X * Y
    uxx = -np.sin(X) * np.cos(Y)
    uyy = -np.sin(X) * np.cos(Y) + 2 * X
    uxy = -np.cos(X) * np.sin(Y) + 2 * Y
    exact = co.a_xx * uxx + co.a_yy * uyy + co.a_xy * uxy + co.b_x * ux + co.b_y * uy
    F = ExplicitOperator(g, co)(u)
    k = margin - 1
    err = np.abs(F - exact[1:-1, 1:-1])
    if k > 0:
        err = err[k:-k, k:-k]
    return max(g.dx, g.dy), float(err.max())


def temporal_errors(level: int = 7, steps=(10, 20, 40, 80, 160), params: ModelParams | None = None,
                    domain: Domain = Domain(), h: float = 0.5):
    """Differences of successive dt-halvings on a fixed grid with smooth data.

    The initial data is the payoff smoothed with a wide kernel (h = 0.5),
    which is smooth at the resolution of every grid used.
    """
    params = params or reference_params()
    g = grid_from_level(domain, LevelIndex(level, level))
    u0 = smooth_initial(g, h=h).field.values
    sols = []
    for P in steps:
        s = prepare(g, params, AdiParams(), TimeGrid((domain.T / P,) * P))
        sols.append(solve_to_maturity(s, initial_field(g, u0, params.r)).values)
    return [float(np.abs(a - b).max()) for a, b in zip(sols, sols[1:])]


def run_checks():
    """Quick versions of the operator and time-order checks: (name, value, passed)."""
    out = []
    d, r = zip(*(compact_x_residual(l) for l in range(5, 10)))
    s = slope(d, r)
    out.append(("compact x-scheme residual order", round(s, 3), 3.7 <= s <= 4.3))
    d, r = zip(*(compact_y_residual(l) for l in range(8, 13)))
    s = slope(d, r)
    out.append(("compact y-scheme residual order", round(s, 3), 3.7 <= s <= 4.3))
    d, r = zip(*(explicit_error(l) for l in range(4, 9)))
    s = slope(d, r)
    out.append(("explicit operator order", round(s, 3), 3.7 <= s <= 4.3))
    e = temporal_errors(level=5, steps=(10, 20, 40, 80))
    o = float(np.mean(np.log2(np.array(e[:-1]) / np.array(e[1:]))))
    out.append(("temporal order", round(o, 3), abs(o - 2.0) <= 0.3))
    return out

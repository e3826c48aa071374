"""Fourth-order payoff smoothing.

The kernel Phi4 is only known through its Fourier transform

    Phi4_hat(w) = (sin(w/2) / (w/2))**4 * (1 + 2/3 sin(w/2)**2),

so it is tabulated by numerical inversion of the (even) transform. The
kernel is supported on [-3, 3] and has unit mass and vanishing first three
moments, so smoothing with step h perturbs smooth data by O(h**4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import GridField, UniformGrid
from .model import payoff

SUPPORT = 3.0


def phi4_hat(w):
    w = np.asarray(w, dtype=float)
    half = w / 2
    sinc = np.sinc(half / np.pi)          # sin(w/2) / (w/2)
    return sinc**4 * (1 + 2 / 3 * np.sin(half) ** 2)


def _inverse_transform(x, cutoff=1e-12, nodes=24):
    """Phi4(x) = 1/pi int_0^inf Phi4_hat(w) cos(w x) dw.

    The integrand is split into panels between consecutive zeros 2 pi k of
    Phi4_hat and each panel gets Gauss-Legendre; the tail is dropped once
    the envelope (16 * 5/3) / w**4 falls below ``cutoff``.
    """
    w_max = (16 * 5 / 3 / cutoff) ** 0.25
    panels = math.ceil(w_max / (2 * math.pi))
    t, wt = np.polynomial.legendre.leggauss(nodes)
    lo = 2 * math.pi * np.arange(panels)
    w = (lo[:, None] + math.pi * (t[None, :] + 1)).ravel()
    weights = np.tile(math.pi * wt, panels)
    fw = weights * phi4_hat(w)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for s in range(0, x.size, 256):
        chunk = x[s:s + 256]
        out[s:s + 256] = np.cos(np.outer(chunk, w)) @ fw / math.pi
    return out


@dataclass(frozen=True)
class SmoothingKernel:
    """Phi4 tabulated on a uniform grid over [-3, 3]."""

    nodes: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._spline(x)
        return np.where(np.abs(x) <= SUPPORT, out, 0.0)

    @property
    def _spline(self):
        sp = self.__dict__.get("_sp")
        if sp is None:
            sp = CubicSpline(self.nodes, self.values, bc_type="clamped")
            object.__setattr__(self, "_sp", sp)
        return sp

    def mass(self) -> float:
        return float(self._spline.integrate(-SUPPORT, SUPPORT))


def kernel_build(resolution: int = 3073) -> SmoothingKernel:
    """Tabulate Phi4 on ``resolution`` points (rounded up to 6k + 1 so that
    the integers, where Phi4 has its breakpoints, are table nodes)."""
    if resolution < 1024:
        raise ValueError("kernel table needs at least 1024 points")
    resolution = 6 * math.ceil((resolution - 1) / 6) + 1
    nodes = np.linspace(-SUPPORT, SUPPORT, resolution)
    half = nodes[resolution // 2:]
    vals = _inverse_transform(half)
    values = np.concatenate([vals[:0:-1], vals])
    if not np.all(np.isfinite(values)):
        raise ArithmeticError("kernel quadrature produced non-finite values")
    # the transform vanishes outside the support; pin the end values
    values[0] = values[-1] = 0.0
    return SmoothingKernel(nodes, values)


@lru_cache(maxsize=4)
def default_kernel(resolution: int = 3073) -> SmoothingKernel:
    return kernel_build(resolution)


def smooth_1d(f, x, h: float, kernel: SmoothingKernel | None = None,
              kinks=(0.0,), points: int = 6) -> np.ndarray:
    """int_{-3}^{3} Phi4(s) f(x - h s) ds at each x.

    Composite Gauss-Legendre with ``points`` nodes on every kernel-table
    cell; a cell containing a kink of ``f`` is split there.
    """
    if not h > 0:
        raise ValueError("smoothing step h must be positive")
    kernel = kernel or default_kernel()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t, wt = np.polynomial.legendre.leggauss(points)
    edges = kernel.nodes
    out = np.empty_like(x)
    base_s, base_w = _panel_nodes(edges, t, wt)
    base_k = kernel(base_s)
    for n, xn in enumerate(x):
        breaks = [(xn - k) / h for k in kinks if abs(xn - k) < SUPPORT * h]
        if breaks:
            cuts = np.union1d(edges, np.clip(breaks, -SUPPORT, SUPPORT))
            s, w = _panel_nodes(cuts, t, wt)
            ks = kernel(s)
        else:
            s, w, ks = base_s, base_w, base_k
        out[n] = np.dot(w * ks, f(xn - h * s))
    return out


def _panel_nodes(edges, t, wt):
    lo, hi = edges[:-1], edges[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    mid, rad = (lo + hi) / 2, (hi - lo) / 2
    s = (mid[:, None] + rad[:, None] * t[None, :]).ravel()
    w = (rad[:, None] * wt[None, :]).ravel()
    return s, w


def smooth_payoff(x, h: float, kernel: SmoothingKernel | None = None) -> np.ndarray:
    """Smoothed put payoff; the kink of max(1 - e^x, 0) sits at x = 0."""
    return smooth_1d(payoff, x, h, kernel, kinks=(0.0,))


@dataclass(frozen=True)
class SmoothedInitialCondition:
    h: float
    field: GridField


def smooth_initial(grid: UniformGrid, h: float | None = None,
                   kernel: SmoothingKernel | None = None) -> SmoothedInitialCondition:
    """Smoothed initial data on ``grid``; h defaults to the grid's dx.

    The payoff does not depend on y and the kernel has unit mass, so the
    y-convolution is the identity and only the x-convolution is computed.
    """
    h = grid.dx if h is None else h
    ux = smooth_payoff(grid.x, h, kernel)
    values = np.repeat(ux[:, None], grid.N, axis=1)
    return SmoothedInitialCondition(h, GridField(grid, values))


def smooth_2d(f, x: float, y: float, h: float, kernel: SmoothingKernel | None = None,
              points: int = 6, x_kinks=(0.0,)) -> float:
    """Full tensor-product smoothing of f(x, y) at one point (reference path)."""
    kernel = kernel or default_kernel()
    t, wt = np.polynomial.legendre.leggauss(points)
    cuts = kernel.nodes
    bx = [(x - k) / h for k in x_kinks if abs(x - k) < SUPPORT * h]
    sx, wx = _panel_nodes(np.union1d(cuts, np.clip(bx, -SUPPORT, SUPPORT)) if bx else cuts, t, wt)
    sy, wy = _panel_nodes(cuts, t, wt)
    kx = wx * kernel(sx)
    ky = wy * kernel(sy)
    vals = f(x - h * sx[:, None], y - h * sy[None, :])
    return float(kx @ np.broadcast_to(vals, (sx.size, sy.size)) @ ky)

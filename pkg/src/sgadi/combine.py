"""Sparse grid combination technique.

    u_n^s = sum_{|l|_1 = n+1} u_l  -  sum_{|l|_1 = n} u_l

over anisotropic full grids, dropping the strongly distorted ones
(l_i < exclusion_min). Sub-solutions are brought to a common evaluation grid
by tensor-product cubic Lagrange interpolation and summed in a fixed order.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Domain, GridField, LevelIndex, UniformGrid, grid_from_level, timegrid_for

log = logging.getLogger(__name__)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class CombinationPlan:
    n: int
    exclusion_min: int
    plus: tuple
    minus: tuple

    @property
    def terms(self):
        """(level, sign) pairs in ascending level order."""
        signed = [(l, +1) for l in self.plus] + [(l, -1) for l in self.minus]
        return sorted(signed, key=lambda t: (t[0].l1, t[0].l2))

    @property
    def weight_sum(self) -> int:
        return len(self.plus) - len(self.minus)

    @property
    def levels(self):
        return [l for l, _ in self.terms]

    @property
    def finest_level(self) -> int:
        return max(max(l.l1, l.l2) for l in self.levels)

    def node_count(self) -> int:
        return sum((2**l.l1 + 1) * (2**l.l2 + 1) for l in self.levels)

    def to_csv(self, path_or_buf, domain: Domain = Domain(), c: float = 5.0):
        rows = [["l1", "l2", "sign", "M", "N", "dt", "nodes"]]
        for l, sign in self.terms:
            g = grid_from_level(domain, l)
            dt = level_timegrid(l, domain.T, c).dt
            rows.append([l.l1, l.l2, sign, g.M, g.N, repr(dt), g.nodes])
        if hasattr(path_or_buf, "write"):
            csv.writer(path_or_buf).writerows(rows)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)


def plan(n: int, exclusion_min: int = 3) -> CombinationPlan:
    lo = exclusion_min
    plus = tuple(LevelIndex(l1, n + 1 - l1) for l1 in range(lo, n + 2 - lo))
    minus = tuple(LevelIndex(l1, n - l1) for l1 in range(lo, n + 1 - lo))
    if not plus or not minus:
        raise PlanError(
            f"combination level n={n} leaves an empty {'plus' if not plus else 'minus'}-set "
            f"with levels >= {lo}; the smallest admissible n is {2 * lo}")
    p = CombinationPlan(n, exclusion_min, plus, minus)
    assert p.weight_sum == 1
    return p


def level_timegrid(level, T: float, c: float = 5.0):
    """Time steps for a sub-grid: c * Delta**2 with Delta its finer relative width."""
    return timegrid_for(2.0 ** -max(level), T, c)


def default_evaluation_level(n: int, cap: int = 8) -> int:
    return max(3, min(n - 2, cap))


def lagrange_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Dense (len(targets), len(nodes)) cubic Lagrange interpolation matrix.

    Each target uses the four nodes around it, shifted inwards at the ends.
    """
    nodes = np.asarray(nodes, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = nodes.size
    if n < 4:
        raise ValueError("cubic interpolation needs at least 4 nodes per axis")
    h = (nodes[-1] - nodes[0]) / (n - 1)
    span = (nodes[-1] - nodes[0])
    tol = 1e-12 * max(abs(span), 1.0)
    if np.any(targets < nodes[0] - tol) or np.any(targets > nodes[-1] + tol):
        raise ValueError("interpolation target outside the source grid")
    s = (targets - nodes[0]) / h
    k = np.clip(np.floor(s).astype(int) - 1, 0, n - 4)
    W = np.zeros((targets.size, n))
    rows = np.arange(targets.size)
    local = s - k                                  # position in stencil units, nodes at 0..3
    exact = np.isclose(s, np.round(s), rtol=0, atol=1e-12)
    for a in range(4):
        w = np.ones_like(local)
        for b in range(4):
            if b != a:
                w *= (local - b) / (a - b)
        W[rows, k + a] = w
    # nodal data is copied, not recomputed
    hit = np.flatnonzero(exact)
    W[hit] = 0.0
    W[hit, np.round(s[hit]).astype(int)] = 1.0
    return W


def interpolate(sub: GridField, target: UniformGrid) -> GridField:
    Wx = lagrange_matrix(sub.grid.x, target.x)
    Wy = lagrange_matrix(sub.grid.y, target.y)
    return GridField(target, Wx @ sub.values @ Wy.T)


def interpolate_points(field: GridField, x, y) -> np.ndarray:
    """Cubic interpolation of a field at scattered points (x[k], y[k])."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    Wx = lagrange_matrix(field.grid.x, x)
    Wy = lagrange_matrix(field.grid.y, y)
    return np.einsum("ki,ij,kj->k", Wx, field.values, Wy)


def combine_solutions(p: CombinationPlan, solutions: dict, target: UniformGrid) -> GridField:
    """Signed sum of interpolated sub-solutions in ascending level order."""
    total = np.zeros(target.shape)
    for level, sign in p.terms:
        total += sign * interpolate(solutions[level], target).values
    return GridField(target, total)


def combine(n: int, solve: Callable[[LevelIndex], GridField], target: UniformGrid,
            exclusion_min: int = 3, workers: int = 1) -> GridField:
    """Solve every retained level with ``solve`` and combine on ``target``.

    Sub-solves are independent and may run on ``workers`` threads; the
    reduction order is fixed, so the result does not depend on scheduling.
    """
    p = plan(n, exclusion_min)
    solutions = solve_levels(p, solve, workers)
    return combine_solutions(p, solutions, target)


def solve_levels(p: CombinationPlan, solve, workers: int = 1) -> dict:
    def run(level):
        try:
            return solve(level)
        except Exception as exc:
            raise RuntimeError(f"sub-solve failed on level ({level.l1}, {level.l2}): {exc}") from exc

    levels = p.levels
    if workers <= 1:
        return {l: run(l) for l in levels}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return dict(zip(levels, pool.map(run, levels)))

"""Tridiagonal LU (Thomas) factorization and substitution kernels.

Factorizations are batched: a stack of B matrices of size n is stored as
arrays of shape (B, n). The substitution kernels are compiled with numba
since they run inside the time loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, row, batch=None):
        where = f"row {row}" if batch is None else f"row {row} of system {batch}"
        super().__init__(f"zero pivot at {where}; tridiagonal matrix is singular")
        self.row = row
        self.batch = batch


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Diagonals of one matrix, or of a batch when the arrays are 2-D.

    ``lower[k]`` is entry (k+1, k), ``upper[k]`` is entry (k, k+1).
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag)
        lo, up = np.asarray(self.lower), np.asarray(self.upper)
        n = d.shape[-1]
        if n < 1:
            raise ValueError("empty matrix")
        if lo.shape[-1] != n - 1 or up.shape[-1] != n - 1:
            raise ValueError(f"off-diagonals must have length {n - 1}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("non-finite matrix entries")

    @property
    def n(self) -> int:
        return np.shape(self.diag)[-1]

    @property
    def batched(self) -> bool:
        return np.ndim(self.diag) == 2

    @classmethod
    def from_triples(cls, a_minus, a_zero, a_plus):
        """From per-row stencil coefficients (entry (k, k-1), (k, k), (k, k+1))."""
        a_minus, a_zero, a_plus = (np.asarray(a, dtype=float) for a in (a_minus, a_zero, a_plus))
        return cls(a_minus[..., 1:].copy(), a_zero.copy(), a_plus[..., :-1].copy())

    def todense(self) -> np.ndarray:
        if self.batched:
            return np.stack([TridiagonalMatrix(lo, d, up).todense()
                             for lo, d, up in zip(self.lower, self.diag, self.upper)])
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """m @ x; for a single matrix x may carry extra trailing columns."""
        x = np.asarray(x, dtype=float)
        if self.batched:
            y = self.diag * x
            y[:, 1:] += self.lower * x[:, :-1]
            y[:, :-1] += self.upper * x[:, 1:]
            return y
        d, lo, up = self.diag, self.lower, self.upper
        if x.ndim == 2:
            d, lo, up = d[:, None], lo[:, None], up[:, None]
        y = d * x
        y[1:] += lo * x[:-1]
        y[:-1] += up * x[1:]
        return y

    def norm(self) -> np.ndarray:
        """Largest absolute entry (per batch member)."""
        parts = [np.abs(self.diag).max(axis=-1)]
        if self.n > 1:
            parts += [np.abs(self.lower).max(axis=-1), np.abs(self.upper).max(axis=-1)]
        return np.max(parts, axis=0)


@dataclass(frozen=True)
class TridiagonalLU:
    """Doolittle factors: L has unit diagonal and subdiagonal ``mult``,
    U has diagonal ``pivots`` and superdiagonal ``upper``.

    Batch members whose Thomas elimination hit a tiny pivot are re-factored
    densely with partial pivoting; those live in ``dense``.
    """

    mult: np.ndarray
    pivots: np.ndarray
    upper: np.ndarray
    dense: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.pivots.shape[-1]

    @property
    def batched(self) -> bool:
        return self.pivots.ndim == 2

    @property
    def pivot_fallback(self) -> bool:
        return bool(self.dense)


def factor(m: TridiagonalMatrix) -> TridiagonalLU:
    batched = m.batched
    lo = np.atleast_2d(np.asarray(m.lower, dtype=float))
    d = np.atleast_2d(np.asarray(m.diag, dtype=float))
    up = np.atleast_2d(np.asarray(m.upper, dtype=float))
    B, n = d.shape
    lo = lo.reshape(B, n - 1)
    up = up.reshape(B, n - 1)
    scale = np.atleast_1d(m.norm()).reshape(B)
    tiny = PIVOT_RTOL * np.where(scale > 0, scale, 1.0)

    mult = np.zeros((B, max(n - 1, 0)))
    piv = np.empty((B, n))
    piv[:, 0] = d[:, 0]
    bad = np.full(B, -1)
    _mark(bad, piv[:, 0], tiny, 0)
    for k in range(1, n):
        with np.errstate(divide="ignore", invalid="ignore"):
            mult[:, k - 1] = lo[:, k - 1] / piv[:, k - 1]
        piv[:, k] = d[:, k] - mult[:, k - 1] * up[:, k - 1]
        _mark(bad, piv[:, k], tiny, k)

    dense = {}
    for b in np.flatnonzero(bad >= 0):
        log.warning("Thomas elimination hit a small pivot at row %d (system %d); "
                    "falling back to dense LU with partial pivoting", bad[b], b)
        dm = TridiagonalMatrix(lo[b], d[b], up[b]).todense()
        lu, ipiv = scipy.linalg.lu_factor(dm, check_finite=False)
        small = np.flatnonzero(np.abs(np.diag(lu)) <= tiny[b])
        if small.size:
            raise SingularMatrixError(int(small[0]), int(b) if batched else None)
        dense[int(b)] = (lu, ipiv)

    if not batched:
        return TridiagonalLU(mult[0], piv[0], up[0].copy(), dense)
    return TridiagonalLU(mult, piv, up.copy(), dense)


def _mark(bad, pivots, tiny, k):
    fresh = (bad < 0) & ~(np.abs(pivots) > tiny)
    bad[fresh] = k


@numba.njit(cache=True, nogil=True)
def _solve_columns(mult, piv, up, x):
    # one matrix, x has shape (n, K); overwritten with the solution
    n, K = x.shape
    for k in range(1, n):
        m = mult[k - 1]
        for c in range(K):
            x[k, c] -= m * x[k - 1, c]
    for c in range(K):
        x[n - 1, c] /= piv[n - 1]
    for k in range(n - 2, -1, -1):
        u = up[k]
        p = piv[k]
        for c in range(K):
            x[k, c] = (x[k, c] - u * x[k + 1, c]) / p


@numba.njit(cache=True, nogil=True)
def _solve_batch(mult, piv, up, x):
    # B matrices, x has shape (B, n); overwritten with the solutions
    B, n = x.shape
    for b in range(B):
        for k in range(1, n):
            x[b, k] -= mult[b, k - 1] * x[b, k - 1]
        x[b, n - 1] /= piv[b, n - 1]
        for k in range(n - 2, -1, -1):
            x[b, k] = (x[b, k] - up[b, k] * x[b, k + 1]) / piv[b, k]


def solve(lu: TridiagonalLU, rhs, overwrite: bool = False) -> np.ndarray:
    """Solve m x = rhs.

    For a single factorization ``rhs`` has shape (n,) or (n, K); for a batch
    of B factorizations it has shape (B, n).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = lu.n
    if lu.batched:
        if rhs.shape != lu.pivots.shape:
            raise ValueError(f"rhs shape {rhs.shape} does not match batch {lu.pivots.shape}")
        fallback = {b: scipy.linalg.lu_solve(f, rhs[b], check_finite=False)
                    for b, f in lu.dense.items()}
        x = rhs if overwrite and rhs.flags.c_contiguous else np.array(rhs, order="C")
        _solve_batch(lu.mult, lu.pivots, lu.upper, x)
        for b, xb in fallback.items():
            x[b] = xb
        return x
    if rhs.shape[0] != n or rhs.ndim > 2:
        raise ValueError(f"rhs shape {rhs.shape} does not match system size {n}")
    if lu.dense:
        return scipy.linalg.lu_solve(lu.dense[0], rhs, check_finite=False)
    x = rhs if overwrite and rhs.flags.c_contiguous else np.array(rhs, order="C")
    _solve_columns(lu.mult, lu.pivots, lu.upper, x.reshape(n, -1))
    return x

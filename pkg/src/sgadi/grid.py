"""Computational domain, level-indexed uniform meshes and grid fields."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_LEVEL = 20
BINARY_MAGIC = b"VGF1"
_HEADER = struct.Struct("<4sII4d")


@dataclass(frozen=True)
class Domain:
    L1: float = -5.0
    K1: float = 1.5
    L2: float = 0.05
    K2: float = 2.5
    T: float = 1.0

    def __post_init__(self):
        if not self.L1 < self.K1:
            raise ValueError(f"need L1 < K1, got {self.L1}, {self.K1}")
        if not 0 < self.L2 < self.K2:
            raise ValueError(f"need 0 < L2 < K2, got {self.L2}, {self.K2}")
        if not self.T > 0:
            raise ValueError(f"need T > 0, got {self.T}")


@dataclass(frozen=True, order=True)
class LevelIndex:
    l1: int
    l2: int

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError(f"levels must be >= 0, got ({self.l1}, {self.l2})")

    def __iter__(self):
        return iter((self.l1, self.l2))


@dataclass(frozen=True)
class UniformGrid:
    """M x N node grid over a domain; node (i, j) sits at (x[i], y[j]).

    Storage is 0-based, so ``x[0] = L1`` is the node written x_1 in 1-based
    notation.
    """

    domain: Domain
    M: int
    N: int

    def __post_init__(self):
        if self.M < 2 or self.N < 2:
            raise ValueError(f"grid needs at least 2 nodes per axis, got {self.M}x{self.N}")

    @property
    def dx(self) -> float:
        return (self.domain.K1 - self.domain.L1) / (self.M - 1)

    @property
    def dy(self) -> float:
        return (self.domain.K2 - self.domain.L2) / (self.N - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.domain.L1 + np.arange(self.M) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return self.domain.L2 + np.arange(self.N) * self.dy

    @property
    def shape(self):
        return (self.M, self.N)

    @property
    def nodes(self) -> int:
        return self.M * self.N

    @property
    def aspect_ratio(self) -> float:
        return self.dx / self.dy


def grid_from_level(domain: Domain, level) -> UniformGrid:
    l1, l2 = level
    if max(l1, l2) > MAX_LEVEL:
        raise ValueError(f"level {tuple(level)} exceeds maximum {MAX_LEVEL}")
    if min(l1, l2) < 0:
        raise ValueError("levels must be >= 0")
    return UniformGrid(domain, 2**l1 + 1, 2**l2 + 1)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform steps of size ``dt``; the last one may be shorter."""

    steps: tuple

    @property
    def P(self) -> int:
        return len(self.steps)

    @property
    def dt(self) -> float:
        return self.steps[0] if self.steps else 0.0

    @property
    def T(self) -> float:
        return math.fsum(self.steps)

    def times(self) -> np.ndarray:
        """tau at the start of each step and at the end: length P + 1."""
        return np.concatenate([[0.0], np.cumsum(self.steps)])


def timegrid_for(delta: float, T: float, c: float = 5.0) -> TimeGrid:
    """Steps of size c*delta**2 covering [0, T], final step shortened."""
    if not (delta > 0 and c > 0 and T > 0):
        raise ValueError("delta, T and c must be positive")
    dt = c * delta**2
    ratio = T / dt
    P = max(1, round(ratio)) if math.isclose(ratio, round(ratio), rel_tol=1e-12) else math.ceil(ratio)
    if P == 1:
        return TimeGrid((T,))
    last = T - (P - 1) * dt
    return TimeGrid((dt,) * (P - 1) + (last,))


def eval_region_mask(grid: UniformGrid, strike_ratio=(0.5, 2.0), y_range=(0.05, 1.0),
                     tol: float = 1e-12) -> np.ndarray:
    """Boolean (M, N) mask of nodes with S in [0.5 E, 2 E] and y in [0.05, 1].

    The S-range is strike-relative, so it only depends on the ratios.
    """
    xlo, xhi = math.log(strike_ratio[0]), math.log(strike_ratio[1])
    ylo, yhi = y_range
    mx = (grid.x >= xlo - tol) & (grid.x <= xhi + tol)
    my = (grid.y >= ylo - tol) & (grid.y <= yhi + tol)
    mask = mx[:, None] & my[None, :]
    if not mask.any():
        raise ValueError(f"evaluation region contains no node of the {grid.M}x{grid.N} grid")
    return mask


class NonFiniteError(FloatingPointError):
    pass


class GridField:
    """Values of u on the nodes of a grid, ``values[i, j] = u(x_i, y_j)``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: UniformGrid, values, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        if check and not np.all(np.isfinite(values)):
            raise NonFiniteError("grid field contains non-finite values")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: UniformGrid, f) -> "GridField":
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        return cls(grid, np.broadcast_to(f(X, Y), grid.shape).copy())

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy(), check=False)

    def __getitem__(self, idx):
        return self.values[idx]

    # -- serialization ---------------------------------------------------

    def to_csv(self, path_or_buf, fmt: str = "%.17g"):
        g = self.grid
        buf = io.StringIO()
        buf.write("x\\y," + ",".join(fmt % y for y in g.y) + "\n")
        for i, x in enumerate(g.x):
            buf.write(fmt % x + "," + ",".join(fmt % v for v in self.values[i]) + "\n")
        _write(path_or_buf, buf.getvalue(), text=True)

    @classmethod
    def from_csv(cls, path, T: float = 1.0) -> "GridField":
        with open(path) as fh:
            header = fh.readline().rstrip("\n").split(",")[1:]
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        y = np.array(header, dtype=float)
        x = data[:, 0]
        grid = UniformGrid(Domain(x[0], x[-1], y[0], y[-1], T), len(x), len(y))
        return cls(grid, data[:, 1:])

    def to_bytes(self) -> bytes:
        """Little-endian dump: magic, uint32 M, uint32 N, float64 L1 K1 L2 K2,
        then M*N float64 values with j varying fastest."""
        g = self.grid
        d = g.domain
        head = _HEADER.pack(BINARY_MAGIC, g.M, g.N, d.L1, d.K1, d.L2, d.K2)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, T: float = 1.0) -> "GridField":
        magic, M, N, L1, K1, L2, K2 = _HEADER.unpack_from(blob)
        if magic != BINARY_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if values.size != M * N:
            raise ValueError(f"expected {M * N} values, found {values.size}")
        grid = UniformGrid(Domain(L1, K1, L2, K2, T), M, N)
        return cls(grid, values.reshape(M, N).astype(float))

    def save(self, path):
        _write(path, self.to_bytes(), text=False)

    @classmethod
    def load(cls, path, T: float = 1.0) -> "GridField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), T)


def _write(target, payload, text: bool):
    if hasattr(target, "write"):
        target.write(payload)
        return
    with open(target, "w" if text else "wb") as fh:
        fh.write(payload)

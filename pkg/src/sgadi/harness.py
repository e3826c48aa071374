"""Error metrics, reference solutions, convergence studies and a Heston oracle."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__
from .combine import combine, default_evaluation_level, interpolate_points, plan
from .grid import Domain, GridField, LevelIndex, UniformGrid, eval_region_mask, grid_from_level, timegrid_for
from .model import ModelParams, NodalCoefficients, OptionSpec, payoff, reference_params, transform, untransform_price
from .smoothing import smooth_initial
from .stepper import AdiParams, initial_field, prepare, solve_to_maturity

log = logging.getLogger(__name__)

CACHE_ENV = "SGADI_CACHE_DIR"


# ---------------------------------------------------------------- region

@dataclass(frozen=True)
class ErrorRegion:
    """Error window in market coordinates: S / E in ``strike_ratio`` and the
    variance sigma in ``sigma``. The y-range is sigma / v clipped to the domain."""

    strike_ratio: tuple = (0.5, 2.0)
    sigma: tuple = (0.05, 1.0)

    def y_range(self, v: float, domain: Domain) -> tuple:
        lo = max(self.sigma[0] / v, domain.L2)
        hi = min(self.sigma[1] / v, domain.K2)
        if lo > hi:
            raise ValueError(f"variance window {self.sigma} does not meet the domain y-range")
        return lo, hi

    def mask(self, grid: UniformGrid, v: float) -> np.ndarray:
        return eval_region_mask(grid, self.strike_ratio, self.y_range(v, grid.domain))


def region_max_error(a: GridField, ref, mask: np.ndarray | None = None, *,
                     v: float | None = None, region: ErrorRegion = ErrorRegion()) -> float:
    """max |a - ref| over the masked nodes of ``a``'s grid.

    ``ref`` may be a GridField on another grid (or a ReferenceSolution); it
    is then evaluated at a's nodes by cubic interpolation, which copies
    coinciding nodes exactly.
    """
    ref_field = ref.field if isinstance(ref, ReferenceSolution) else ref
    if mask is None:
        if v is None:
            raise ValueError("need either a mask or the model's v to build the region")
        mask = region.mask(a.grid, v)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.grid.shape:
        raise ValueError(f"mask shape {mask.shape} does not match grid {a.grid.shape}")
    if not mask.any():
        raise ValueError("empty error mask")
    ii, jj = np.nonzero(mask)
    if ref_field.grid == a.grid:
        rv = ref_field.values[ii, jj]
    else:
        rv = interpolate_points(ref_field, a.grid.x[ii], a.grid.y[jj])
    return float(np.max(np.abs(a.values[ii, jj] - rv)))


def estimate_order(errors) -> np.ndarray:
    """Orders log2(e[k-1] / e[k]) between successive refinements."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two errors to estimate an order")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive")
    return np.log2(e[:-1] / e[1:])


# ---------------------------------------------------------------- solves

@dataclass(frozen=True)
class SolveSettings:
    """Everything that fixes a discrete solution besides the grid."""

    params: ModelParams = field(default_factory=reference_params)
    domain: Domain = field(default_factory=Domain)
    adi: AdiParams = field(default_factory=AdiParams)
    c: float = 5.0
    smoothing: bool = True
    corner: str = "edge"
    zero_model: bool = False

    def coefficients(self, grid: UniformGrid) -> NodalCoefficients:
        if self.zero_model:
            return NodalCoefficients.zero(grid.y, self.params.r)
        return NodalCoefficients.from_params(grid.y, self.params)

    def describe(self) -> dict:
        p, d = self.params, self.domain
        return {
            "params": repr((p.kappa, p.theta, p.v, p.rho, p.r, p.alpha, p.beta, p.lambda0,
                            p.kind.name, p.nonlinear_drift)),
            "domain": repr((d.L1, d.K1, d.L2, d.K2, d.T)),
            "adi": repr((self.adi.phi, self.adi.psi)),
            "dt_rule": f"dt = {self.c!r} * (2**-max(l))**2",
            "smoothing": "h = dx" if self.smoothing else "off",
            "corner": self.corner,
            "zero_model": str(self.zero_model),
        }


def solve_level(level, settings: SolveSettings = SolveSettings(), trace=None) -> GridField:
    """Full-grid solution on the grid of ``level`` (a LevelIndex or an int n)."""
    if isinstance(level, int):
        level = LevelIndex(level, level)
    level = LevelIndex(*level)
    g = grid_from_level(settings.domain, level)
    tg = timegrid_for(2.0 ** -max(level), settings.domain.T, settings.c)
    solver = prepare(g, settings.coefficients(g), settings.adi, tg, settings.corner)
    if settings.smoothing:
        u0 = smooth_initial(g).field.values
    else:
        u0 = np.repeat(payoff(g.x)[:, None], g.N, axis=1)
    return solve_to_maturity(solver, initial_field(g, u0, settings.params.r), trace=trace)


def solve_sparse(n: int, settings: SolveSettings = SolveSettings(), eval_level: int | None = None,
                 exclusion_min: int = 3, workers: int = 1) -> GridField:
    lv = default_evaluation_level(n) if eval_level is None else eval_level
    target = grid_from_level(settings.domain, LevelIndex(lv, lv))
    return combine(n, lambda l: solve_level(l, settings), target, exclusion_min, workers)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def price_at(field: GridField, S: float, sigma: float, spec: OptionSpec, params: ModelParams) -> float:
    """Option value in currency at (S, sigma) and t = 0, read off the tau = T field."""
    x, y, tau = transform(S, sigma, 0.0, spec, params)
    g = field.grid
    if not (g.x[0] <= x <= g.x[-1] and g.y[0] <= y <= g.y[-1]):
        raise ValueError(f"(S={S}, sigma={sigma}) lies outside the computational domain")
    u = float(interpolate_points(field, x, y)[0])
    return float(untransform_price(u, tau, spec, params.r))


# ---------------------------------------------------------------- reference

@dataclass(frozen=True)
class ReferenceSolution:
    field: GridField
    provenance: dict

    @property
    def key(self) -> str:
        return provenance_key(self.provenance)


def reference_provenance(level: int, settings: SolveSettings) -> dict:
    prov = {"level": f"({level}, {level})", **settings.describe(), "code": __version__}
    return prov


def provenance_key(prov: dict) -> str:
    text = "\n".join(f"{k}={prov[k]}" for k in sorted(prov))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cache_dir(path=None) -> Path:
    if path is None:
        path = os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "sgadi"
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _atomic_write(path: Path, payload: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_sidecar(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def save_reference(ref: ReferenceSolution, directory=None) -> Path:
    d = cache_dir(directory)
    stem = d / f"reference-{ref.key}"
    side = "".join(f"{k} = {ref.provenance[k]}\n" for k in sorted(ref.provenance))
    _atomic_write(stem.with_suffix(".vgf"), ref.field.to_bytes())
    _atomic_write(stem.with_suffix(".txt"), side.encode())
    return stem.with_suffix(".vgf")


def load_reference(level: int, settings: SolveSettings, directory=None) -> ReferenceSolution | None:
    prov = {k: str(v) for k, v in reference_provenance(level, settings).items()}
    stem = cache_dir(directory) / f"reference-{provenance_key(prov)}"
    blob, side = stem.with_suffix(".vgf"), stem.with_suffix(".txt")
    if not (blob.exists() and side.exists()):
        return None
    if _read_sidecar(side) != prov:
        log.warning("provenance mismatch in %s; ignoring cached reference", side)
        return None
    return ReferenceSolution(GridField.from_bytes(blob.read_bytes(), settings.domain.T), prov)


def get_reference(level: int = 8, settings: SolveSettings = SolveSettings(), directory=None,
                  rebuild: bool = False) -> ReferenceSolution:
    """Cached reference solution on the (level, level) grid, built on a miss."""
    if not rebuild:
        hit = load_reference(level, settings, directory)
        if hit is not None:
            return hit
    log.info("building level-%d reference solution", level)
    prov = {k: str(v) for k, v in reference_provenance(level, settings).items()}
    ref = ReferenceSolution(solve_level(level, settings), prov)
    save_reference(ref, directory)
    return ref


# ---------------------------------------------------------------- study

@dataclass(frozen=True)
class StudyRow:
    method: str
    n: int
    nodes: int
    error: float
    seconds: float
    order: float | None = None


@dataclass(frozen=True)
class StudyConfig:
    settings: SolveSettings = field(default_factory=SolveSettings)
    full_levels: tuple = (3, 4, 5, 6, 7)
    sparse_levels: tuple = (6, 7, 8, 9, 10)
    reference_level: int = 8
    region: ErrorRegion = field(default_factory=ErrorRegion)
    exclusion_min: int = 3
    workers: int = 1
    cache: str | None = None


def run_study(cfg: StudyConfig, out_dir=None, reference: ReferenceSolution | None = None) -> list:
    """Full-grid and sparse-grid error/runtime rows against the reference.

    Timings cover assembly and stepping of each solve, not the reference.
    """
    s = cfg.settings
    if max(cfg.full_levels, default=0) >= cfg.reference_level:
        raise ValueError("full-grid levels must stay below the reference level")
    ref = reference or get_reference(cfg.reference_level, s, cfg.cache)
    v = s.params.v
    rows = []
    for method, levels in (("full", cfg.full_levels), ("sparse", cfg.sparse_levels)):
        errs = []
        for n in levels:
            if method == "full":
                u, sec = timed(solve_level, n, s)
                nodes = u.grid.nodes
            else:
                u, sec = timed(solve_sparse, n, s, None, cfg.exclusion_min, cfg.workers)
                nodes = plan(n, cfg.exclusion_min).node_count()
            err = region_max_error(u, ref, v=v, region=cfg.region)
            order = float(estimate_order([errs[-1], err])[0]) if errs else None
            errs.append(err)
            rows.append(StudyRow(method, n, nodes, err, sec, order))
            log.info("%s n=%d nodes=%d error=%.3e seconds=%.2f", method, n, nodes, err, sec)
    if out_dir is not None:
        write_study(rows, out_dir)
    return rows


def write_study(rows, out_dir):
    """study.csv (method, n, nodes, error, seconds) and orders.csv (error vs mesh width)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n", "nodes", "error", "seconds"])
        for r in rows:
            w.writerow([r.method, r.n, r.nodes, repr(r.error), f"{r.seconds:.6f}"])
    with open(out / "orders.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n", "delta", "error", "order"])
        for r in rows:
            w.writerow([r.method, r.n, repr(2.0 ** -r.n), repr(r.error),
                        "" if r.order is None else repr(r.order)])
    return out / "study.csv", out / "orders.csv"


# ---------------------------------------------------------------- oracle

def heston_analytic_price(spot: float, sigma: float, spec: OptionSpec, params: ModelParams,
                          epsabs: float = 1e-8) -> float:
    """European put under Heston dynamics from the characteristic function.

    Uses the rotation-free form of the characteristic function (no branch
    jumps of the complex logarithm) and put-call parity. ``sigma`` is the
    spot variance.
    """
    if not (params.alpha == 0 and params.beta == 0.5 and not params.nonlinear_drift):
        raise ValueError("the closed-form oracle needs (alpha, beta) = (0, 0.5) with linear drift")
    if spot <= 0 or sigma < 0:
        raise ValueError("spot must be positive and variance non-negative")
    if spec.kind != "put":
        raise ValueError("only puts are supported")
    K, T, r = spec.strike, spec.maturity, params.r
    kappa, theta, xi, rho, lam = params.kappa, params.theta, params.v, params.rho, params.lambda0
    lnS, lnK = math.log(spot), math.log(K)

    def cf(phi, j):
        u, b = (0.5, kappa + lam - rho * xi) if j == 1 else (-0.5, kappa + lam)
        iphi = 1j * phi
        beta_ = b - rho * xi * iphi
        d = np.sqrt(beta_**2 - xi**2 * (2 * u * iphi - phi**2))
        g = (beta_ - d) / (beta_ + d)
        e = np.exp(-d * T)
        C = r * iphi * T + kappa * theta / xi**2 * ((beta_ - d) * T - 2 * np.log((1 - g * e) / (1 - g)))
        D = (beta_ - d) / xi**2 * (1 - e) / (1 - g * e)
        return np.exp(C + D * sigma + iphi * lnS)

    def prob(j):
        def f(phi):
            phi = max(phi, 1e-14)
            return (np.exp(-1j * phi * lnK) * cf(phi, j) / (1j * phi)).real
        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=epsabs, epsrel=0.0, limit=1000)
        return 0.5 + val / math.pi

    call = spot * prob(1) - K * math.exp(-r * T) * prob(2)
    return call - spot + K * math.exp(-r * T)

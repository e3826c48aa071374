"""Stochastic volatility model family, option data and the transformed PDE.

The variance follows

    dsigma = kappa * sigma**alpha * (theta - sigma) dt + v * sigma**beta dW

and after the substitution x = ln(S/E), y = sigma/v, tau = T - t,
u = exp(r tau) V / E the pricing equation becomes

    u_tau = a_xx u_xx + a_yy u_yy + a_xy u_xy + b_x u_x + b_y u_y

with coefficients depending on y only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class ModelKind(enum.Enum):
    SQR = "sqr"
    VAR = "var"
    THREE_HALVES = "3/2"
    SQRN = "sqrn"
    VARN = "varn"
    THREE_HALVES_N = "3/2n"
    CUSTOM = "custom"


# Aliases accepted by ModelKind.parse.
_KIND_ALIASES = {
    "heston": ModelKind.SQR,
    "sqr": ModelKind.SQR,
    "garch": ModelKind.VAR,
    "var": ModelKind.VAR,
    "3/2": ModelKind.THREE_HALVES,
    "threehalves": ModelKind.THREE_HALVES,
    "sqrn": ModelKind.SQRN,
    "varn": ModelKind.VARN,
    "3/2n": ModelKind.THREE_HALVES_N,
    "3/2-n": ModelKind.THREE_HALVES_N,
    "threehalvesn": ModelKind.THREE_HALVES_N,
    "custom": ModelKind.CUSTOM,
}

# (alpha, beta) for the named kinds; the N variants carry the nonlinear drift
# kappa*sigma*(theta - sigma), i.e. alpha = 1.
KIND_EXPONENTS = {
    ModelKind.SQR: (0.0, 0.5),
    ModelKind.VAR: (0.0, 1.0),
    ModelKind.THREE_HALVES: (0.0, 1.5),
    ModelKind.SQRN: (1.0, 0.5),
    ModelKind.VARN: (1.0, 1.0),
    ModelKind.THREE_HALVES_N: (1.0, 1.5),
}


def parse_kind(name: str) -> ModelKind:
    try:
        return _KIND_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown model kind {name!r}; expected one of {sorted(_KIND_ALIASES)}"
        ) from None


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the variance process and the money market.

    ``nonlinear_drift`` selects the drift ``kappa*sigma*(theta - sigma)`` of
    the "N" models. It is stored as a flag but resolved into ``alpha = 1``
    by :meth:`from_kind`, so the coefficient code only ever reads ``alpha``.
    """

    kappa: float
    theta: float
    v: float
    rho: float
    r: float
    alpha: float
    beta: float
    lambda0: float = 0.0
    kind: ModelKind = ModelKind.CUSTOM
    nonlinear_drift: bool = False

    def __post_init__(self):
        checks = [
            ("kappa", self.kappa >= 0, ">= 0"),
            ("theta", self.theta >= 0, ">= 0"),
            ("v", self.v > 0, "> 0"),
            ("rho", -1.0 <= self.rho <= 1.0, "in [-1, 1]"),
            ("r", self.r >= 0, ">= 0"),
            ("alpha", self.alpha >= 0, ">= 0"),
            ("beta", self.beta >= 0, ">= 0"),
        ]
        for name, ok, expected in checks:
            value = getattr(self, name)
            if not (ok and math.isfinite(value)):
                raise ValueError(f"{name}={value!r} out of range; expected {expected}")
        if self.nonlinear_drift and self.alpha != 1.0:
            raise ValueError("nonlinear_drift requires alpha == 1")

    @classmethod
    def from_kind(cls, kind: ModelKind | str, *, kappa, theta, v, rho, r,
                  lambda0=0.0, alpha=None, beta=None) -> "ModelParams":
        if isinstance(kind, str):
            kind = parse_kind(kind)
        if kind is ModelKind.CUSTOM:
            if alpha is None or beta is None:
                raise ValueError("custom model kind needs alpha and beta")
            return cls(kappa, theta, v, rho, r, alpha, beta, lambda0, kind)
        a, b = KIND_EXPONENTS[kind]
        if (alpha is not None and alpha != a) or (beta is not None and beta != b):
            raise ValueError(f"{kind.name} fixes (alpha, beta) = ({a}, {b})")
        nonlinear = kind in (ModelKind.SQRN, ModelKind.VARN, ModelKind.THREE_HALVES_N)
        return cls(kappa, theta, v, rho, r, a, b, lambda0, kind, nonlinear)

    def variance_drift(self, sigma):
        """Risk-neutral drift of the variance (market price of risk included)."""
        sigma = np.asarray(sigma, dtype=float)
        return self.kappa * sigma**self.alpha * (self.theta - sigma) - self.lambda0 * sigma

    def variance_diffusion(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return self.v * sigma**self.beta


def reference_params(**overrides) -> ModelParams:
    """The parameter set of the reference experiment, (alpha, beta) = (0.5, 0.5)."""
    values = dict(kappa=2.0, theta=0.1, v=0.1, rho=-0.5, r=0.05, alpha=0.5, beta=0.5)
    values.update(overrides)
    return ModelParams(**values)


@dataclass(frozen=True)
class OptionSpec:
    strike: float = 100.0
    maturity: float = 1.0
    kind: str = "put"

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike={self.strike!r} must be > 0")
        if not self.maturity > 0:
            raise ValueError(f"maturity={self.maturity!r} must be > 0")
        if self.kind != "put":
            raise ValueError(f"option kind {self.kind!r} not supported (only 'put')")


def transform(S, sigma, t, spec: OptionSpec, params: ModelParams):
    """Map market coordinates (S, sigma, t) to (x, y, tau)."""
    S = np.asarray(S, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(S <= 0):
        raise ValueError("S must be positive")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > spec.maturity):
        raise ValueError("t must lie in [0, T]")
    x = np.log(S / spec.strike)
    y = sigma / params.v
    tau = spec.maturity - t
    return _scalar(x), _scalar(y), _scalar(tau)


def untransform(x, y, tau, spec: OptionSpec, params: ModelParams):
    """Inverse of :func:`transform`."""
    S = spec.strike * np.exp(np.asarray(x, dtype=float))
    sigma = params.v * np.asarray(y, dtype=float)
    t = spec.maturity - np.asarray(tau, dtype=float)
    return _scalar(S), _scalar(sigma), _scalar(t)


def untransform_price(u, tau, spec: OptionSpec, r: float):
    """V = E exp(-r tau) u."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    return _scalar(spec.strike * np.exp(-r * tau) * np.asarray(u, dtype=float))


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _check_y(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ValueError("y must be positive (the diffusion degenerates at y = 0)")
    return y


@dataclass(frozen=True)
class CoefficientSet:
    a_xx: np.ndarray
    a_yy: np.ndarray
    a_xy: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray


def pde_coefficients(y, params: ModelParams) -> CoefficientSet:
    y = _check_y(y)
    p = params
    vy = p.v * y
    return CoefficientSet(
        a_xx=vy / 2,
        a_yy=vy ** (2 * p.beta) / 2,
        a_xy=p.rho * vy ** (p.beta + 0.5),
        b_x=p.r - vy / 2,
        b_y=p.kappa * vy**p.alpha * (p.theta - vy) / p.v - p.lambda0 * y,
    )


def implicit_ode_coefficients_x(y, params: ModelParams):
    """(c1, c2) of u_xx + c1 u_x = c2 g, where g stands for the x-operator."""
    y = _check_y(y)
    vy = params.v * y
    return 2 * params.r / vy - 1, 2 / vy


def implicit_ode_coefficients_y(y, params: ModelParams):
    """(c1, c1', c1'', c2) of u_yy + c1(y) u_y = c2(y) g.

    c1 is a sum of monomials in y,

        c1 = k1 y**p - k2 y**(p+1) - k3 y**q,   p = alpha - 2 beta, q = 1 - 2 beta,

    so both derivatives are exact power-rule expressions.
    """
    y = _check_y(y)
    P = params
    p = P.alpha - 2 * P.beta
    q = 1 - 2 * P.beta
    vp = P.v**p
    k1 = 2 * P.kappa * P.theta * vp / P.v
    k2 = 2 * P.kappa * vp
    k3 = 2 * P.lambda0 * P.v ** (-2 * P.beta)
    terms = ((k1, p), (-k2, p + 1), (-k3, q))
    c1 = sum(k * y**e for k, e in terms)
    d1 = sum(k * e * y ** (e - 1) for k, e in terms)
    d2 = sum(k * e * (e - 1) * y ** (e - 2) for k, e in terms)
    c2 = 2 / (P.v * y) ** (2 * P.beta)
    return c1, d1, d2, c2


def payoff(x):
    """Put payoff in transformed variables, max(1 - e^x, 0)."""
    return np.maximum(1.0 - np.exp(np.asarray(x, dtype=float)), 0.0)


@dataclass(frozen=True)
class NodalCoefficients:
    """PDE coefficients sampled on the y-nodes of a grid.

    Everything the discrete operators need lives here, so a solver can be
    driven either by a :class:`ModelParams` or by synthetic coefficients
    (:meth:`zero` gives the degenerate model u_tau = 0).
    ``c1y_d1``/``c1y_d2`` are y-derivatives of b_yy/a_yy.
    """

    y: np.ndarray
    a_xx: np.ndarray
    a_yy: np.ndarray
    a_xy: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    c1y_d1: np.ndarray
    c1y_d2: np.ndarray
    r: float = 0.0
    label: str = field(default="", compare=False)

    @classmethod
    def from_params(cls, y, params: ModelParams) -> "NodalCoefficients":
        y = np.asarray(y, dtype=float)
        c = pde_coefficients(y, params)
        _, d1, d2, _ = implicit_ode_coefficients_y(y, params)
        return cls(y, c.a_xx, c.a_yy, c.a_xy, c.b_x, c.b_y, d1, d2, params.r, "params")

    @classmethod
    def zero(cls, y, r: float = 0.0) -> "NodalCoefficients":
        y = np.asarray(y, dtype=float)
        z = np.zeros_like(y)
        return cls(y, z, z, z, z, z, z, z, r, "zero")

    @property
    def is_zero(self) -> bool:
        return self.label == "zero"

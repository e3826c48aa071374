import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgadi.model import (
    KIND_EXPONENTS,
    ModelKind,
    ModelParams,
    NodalCoefficients,
    OptionSpec,
    implicit_ode_coefficients_x,
    implicit_ode_coefficients_y,
    parse_kind,
    payoff,
    pde_coefficients,
    reference_params,
    transform,
    untransform,
    untransform_price,
)

SPEC = OptionSpec(100.0, 1.0)
P = reference_params()


def test_transform_examples():
    assert transform(100, 0.1, 0, SPEC, P) == (0.0, 1.0, 1.0)
    x, y, tau = transform(50, 0.1, 0, SPEC, P)
    assert x == pytest.approx(-0.693147, abs=1e-6) and y == 1.0 and tau == 1.0
    assert transform(100, 0.05, 1, SPEC, P) == (0.0, 0.5, 0.0)


@pytest.mark.parametrize("S, sigma, t", [(0, 0.1, 0), (-1, 0.1, 0), (100, 0, 0), (100, -0.1, 0),
                                         (100, 0.1, -0.5), (100, 0.1, 2.0)])
def test_transform_rejects(S, sigma, t):
    with pytest.raises(ValueError):
        transform(S, sigma, t, SPEC, P)


@given(st.floats(1e-3, 1e4), st.floats(1e-4, 5.0), st.floats(0.0, 1.0))
def test_transform_round_trip(S, sigma, t):
    back = untransform(*transform(S, sigma, t, SPEC, P), SPEC, P)
    assert back[0] == pytest.approx(S, rel=1e-14)
    assert back[1] == pytest.approx(sigma, rel=1e-14)
    assert back[2] == pytest.approx(t, rel=1e-14, abs=1e-15)


def test_untransform_price_examples():
    assert untransform_price(1.0, 0.0, SPEC, 0.05) == 100.0
    assert untransform_price(0.0, 1.0, SPEC, 0.05) == 0.0
    assert untransform_price(1.0, 1.0, SPEC, 0.05) == pytest.approx(95.1229, abs=1e-4)
    with pytest.raises(ValueError):
        untransform_price(1.0, -0.1, SPEC, 0.05)


def test_pde_coefficients_examples():
    c = pde_coefficients(1.0, P)
    for got, want in zip((c.a_xx, c.a_yy, c.a_xy, c.b_x, c.b_y), (0.05, 0.05, -0.05, 0.0, 0.0)):
        assert got == pytest.approx(want, abs=1e-15)
    c = pde_coefficients(0.5, P)
    for got, want in zip((c.a_xx, c.a_yy, c.a_xy, c.b_x), (0.025, 0.025, -0.025, 0.025)):
        assert got == pytest.approx(want, abs=1e-15)
    assert c.b_y == pytest.approx(2 * 0.05**0.5 * 0.05 / 0.1, rel=1e-14)
    assert c.b_y == pytest.approx(0.2236, abs=1e-4)
    y = np.linspace(0.05, 2.5, 11)
    assert np.all(pde_coefficients(y, reference_params(rho=0.0)).a_xy == 0)


def test_market_price_of_risk_term():
    y = np.linspace(0.1, 2, 7)
    base = pde_coefficients(y, P).b_y
    shifted = pde_coefficients(y, reference_params(lambda0=0.3)).b_y
    np.testing.assert_allclose(base - shifted, 0.3 * y, rtol=1e-13)


@pytest.mark.parametrize("y", [0.0, -1.0, np.nan])
def test_coefficients_reject_degenerate_y(y):
    for fn in (pde_coefficients, implicit_ode_coefficients_x, implicit_ode_coefficients_y):
        with pytest.raises(ValueError):
            fn(y, P)


def test_implicit_x_examples():
    assert implicit_ode_coefficients_x(1.0, P) == pytest.approx((0.0, 20.0), abs=1e-14)
    assert implicit_ode_coefficients_x(2.0, P) == pytest.approx((-0.5, 10.0), abs=1e-14)
    c1, _ = implicit_ode_coefficients_x(np.linspace(0.1, 2, 5), reference_params(r=0.0))
    np.testing.assert_array_equal(c1, -1.0)


def test_implicit_y_examples():
    c1, _, _, c2 = implicit_ode_coefficients_y(1.0, P)
    assert c1 == pytest.approx(0.0, abs=1e-14)
    assert c2 == pytest.approx(20.0, rel=1e-14)
    # alpha = 2 beta: c1 is linear in y with slope -2 kappa
    p = reference_params(alpha=1.0, beta=0.5)
    _, d1, d2, _ = implicit_ode_coefficients_y(np.linspace(0.1, 2, 9), p)
    np.testing.assert_allclose(d1, -2 * p.kappa, rtol=1e-14)
    np.testing.assert_allclose(d2, 0.0, atol=1e-13)


params_st = st.builds(
    ModelParams,
    kappa=st.floats(0, 5), theta=st.floats(0, 1), v=st.floats(0.05, 1), rho=st.floats(-1, 1),
    r=st.floats(0, 0.2), alpha=st.floats(0, 2), beta=st.floats(0, 2), lambda0=st.floats(-1, 1),
)


@settings(max_examples=60)
@given(params_st)
def test_coefficient_families_agree(p):
    y = np.random.default_rng(0).uniform(0.05, 2.5, 100)
    c = pde_coefficients(y, p)
    c1x, c2x = implicit_ode_coefficients_x(y, p)
    c1y, _, _, c2y = implicit_ode_coefficients_y(y, p)
    np.testing.assert_allclose(c.a_xx * c1x, c.b_x, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(c.a_xx * c2x, 1.0, rtol=1e-13)
    np.testing.assert_allclose(c.a_yy * c1y, c.b_y, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(c.a_yy * c2y, 1.0, rtol=1e-13)
    assert np.all(c.a_xx > 0) and np.all(c.a_yy > 0)


@settings(max_examples=40)
@given(params_st, st.floats(0.2, 2.4))
def test_c1_derivatives_match_finite_differences(p, y):
    h = 1e-5
    f = lambda t: implicit_ode_coefficients_y(t, p)[0]
    _, d1, d2, _ = implicit_ode_coefficients_y(y, p)
    fd1 = (f(y + h) - f(y - h)) / (2 * h)
    fd1b = (f(y + 2 * h) - f(y)) / (2 * h)
    fd1a = (f(y) - f(y - 2 * h)) / (2 * h)
    fd2 = (fd1b - fd1a) / (2 * h)
    scale1 = max(abs(d1), max(abs(f(y)), 1.0) * 1e-3)
    assert abs(fd1 - d1) <= 1e-6 * scale1
    scale2 = max(abs(d2), max(abs(f(y)), 1.0))
    assert abs(fd2 - d2) <= 1e-4 * scale2


def test_payoff_examples():
    assert payoff(0.0) == 0.0
    assert payoff(-0.693147) == pytest.approx(0.5, abs=1e-6)
    assert payoff(1.0) == 0.0


@pytest.mark.parametrize("kind, sde_alpha, sde_beta, nonlinear", [
    ("heston", 0.0, 0.5, False), ("garch", 0.0, 1.0, False), ("3/2", 0.0, 1.5, False),
    ("sqrn", 1.0, 0.5, True), ("varn", 1.0, 1.0, True), ("3/2n", 1.0, 1.5, True),
])
def test_named_kinds_reproduce_sdes(kind, sde_alpha, sde_beta, nonlinear):
    p = ModelParams.from_kind(kind, kappa=2, theta=0.1, v=0.3, rho=-0.5, r=0.05)
    assert (p.alpha, p.beta, p.nonlinear_drift) == (sde_alpha, sde_beta, nonlinear)
    s = np.linspace(0.01, 2, 17)
    drift = 2 * s * (0.1 - s) if nonlinear else 2 * (0.1 - s)
    np.testing.assert_allclose(p.variance_drift(s), drift, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(p.variance_diffusion(s), 0.3 * s**sde_beta, rtol=1e-14)
    assert KIND_EXPONENTS[parse_kind(kind)] == (sde_alpha, sde_beta)


def test_named_kind_conflicting_exponent():
    with pytest.raises(ValueError, match="fixes"):
        ModelParams.from_kind(ModelKind.SQR, kappa=2, theta=0.1, v=0.1, rho=0, r=0, beta=1.0)
    with pytest.raises(ValueError):
        parse_kind("ornstein")


@pytest.mark.parametrize("field, value", [("kappa", -1), ("theta", -0.1), ("v", 0), ("rho", 1.5),
                                          ("rho", -1.01), ("r", -0.01), ("alpha", -1), ("beta", math.nan)])
def test_params_invariants(field, value):
    with pytest.raises(ValueError, match=field):
        reference_params(**{field: value})


def test_option_spec_invariants():
    with pytest.raises(ValueError):
        OptionSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        OptionSpec(100.0, 0.0)
    with pytest.raises(ValueError):
        OptionSpec(100.0, 1.0, "call")


def test_nodal_coefficients():
    y = np.linspace(0.05, 2.5, 9)
    co = NodalCoefficients.from_params(y, P)
    assert co.r == P.r and not co.is_zero
    np.testing.assert_array_equal(co.a_xx, pde_coefficients(y, P).a_xx)
    z = NodalCoefficients.zero(y, 0.05)
    assert z.is_zero and np.all(z.a_yy == 0)

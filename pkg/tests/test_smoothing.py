import math

import numpy as np
import pytest
from scipy.interpolate import BSpline

from sgadi.grid import Domain, grid_from_level
from sgadi.model import payoff
from sgadi.smoothing import (
    SUPPORT,
    default_kernel,
    kernel_build,
    phi4_hat,
    smooth_1d,
    smooth_2d,
    smooth_initial,
    smooth_payoff,
)


@pytest.fixture(scope="module")
def kernel():
    return default_kernel()


def bspline_phi4(x):
    """Independent closed form: 4/3 M4(x) - 1/6 (M4(x - 1) + M4(x + 1)),
    M4 the centred cubic B-spline (its transform is sinc(w/2)**4)."""
    m4 = BSpline.basis_element([-2, -1, 0, 1, 2], extrapolate=False)

    def M(t):
        return np.nan_to_num(m4(t))

    return 4 / 3 * M(x) - (M(x - 1) + M(x + 1)) / 6


def test_transform_value_at_pi():
    assert phi4_hat(np.pi) == pytest.approx((2 / np.pi) ** 4 * 5 / 3, abs=1e-6)
    assert phi4_hat(np.pi) == pytest.approx(0.273760, abs=1e-6)
    assert phi4_hat(0.0) == 1.0


def test_kernel_mass_even_support(kernel):
    assert kernel.mass() == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(kernel.values, kernel.values[::-1], rtol=0, atol=1e-12)
    assert kernel(np.array([-3.5, 3.01, 10.0])).tolist() == [0.0, 0.0, 0.0]
    assert abs(kernel.values[0]) <= 1e-8 and abs(kernel.values[-1]) <= 1e-8
    assert kernel.nodes[0] == -SUPPORT and kernel.nodes[-1] == SUPPORT


def test_kernel_matches_bspline_form(kernel):
    np.testing.assert_allclose(kernel.values, bspline_phi4(kernel.nodes), atol=1e-9)
    x = np.linspace(-3.2, 3.2, 1001)
    np.testing.assert_allclose(kernel(x), bspline_phi4(x), atol=1e-8)


def test_kernel_moments(kernel):
    s = np.linspace(-3, 3, 60001)
    w = kernel(s)
    for k in (1, 2, 3):
        assert abs(np.trapezoid(w * s**k, s)) < 1e-7


def test_kernel_resolution_floor():
    with pytest.raises(ValueError):
        kernel_build(512)
    k = kernel_build(1024)
    assert (len(k.nodes) - 1) % 6 == 0


def test_smoothing_preserves_constants_and_lines():
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(smooth_1d(lambda t: 3.0 + 0 * t, x, 0.1), 3.0, rtol=1e-10)
    far = np.array([-1.5, -0.8, 0.9, 1.4])
    lin = lambda t: 2.0 * t - 1.0
    np.testing.assert_allclose(smooth_1d(lin, far, 0.2, kinks=()), lin(far), atol=1e-8)
    with pytest.raises(ValueError):
        smooth_1d(lin, far, 0.0)


def test_payoff_far_from_kink():
    h = 0.02
    x = np.array([-2.0, -0.5, -0.07, 0.07, 0.5, 1.0])
    np.testing.assert_allclose(smooth_payoff(x, h), payoff(x), rtol=0, atol=1e-8)
    # e^x is not a cubic, so away from the kink the defect is O(h**4)
    e = [abs(smooth_payoff(-0.5, h) - payoff(-0.5))[0] for h in (0.04, 0.02)]
    assert 3.7 < math.log2(e[0] / e[1]) < 4.3


def test_kink_error_is_first_order():
    vals = [smooth_payoff(0.0, 0.01 / 2**k)[0] for k in range(4)]
    ratios = np.array(vals[:-1]) / np.array(vals[1:])
    assert np.all(np.abs(ratios - 2.0) <= 0.2)


def test_convergence_to_payoff():
    pts = np.array([-0.02, 0.0, 0.013])
    errs = [np.abs(smooth_payoff(pts, h) - payoff(pts)).max() for h in (0.04, 0.02, 0.01, 0.005)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_initial_condition_reduces_to_1d():
    g = grid_from_level(Domain(), (5, 3))
    ic = smooth_initial(g)
    assert ic.h == g.dx
    v = ic.field.values
    assert np.all(v == v[:, :1])
    f = lambda x, y: payoff(x) + 0 * y
    for i in (10, 15, 18, 22, 25):
        j = 4
        assert smooth_2d(f, g.x[i], g.y[j], ic.h) == pytest.approx(v[i, j], abs=1e-13)


def test_default_kernel_is_cached():
    assert default_kernel() is default_kernel()
    assert math.isclose(default_kernel().step, 6 / (len(default_kernel().nodes) - 1))

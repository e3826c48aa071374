import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from sgadi import harness
from sgadi.grid import Domain, GridField, grid_from_level
from sgadi.model import ModelParams, OptionSpec, reference_params
from sgadi.smoothing import smooth_initial
from sgadi.harness import (
    ErrorRegion,
    ReferenceSolution,
    SolveSettings,
    StudyConfig,
    estimate_order,
    get_reference,
    heston_analytic_price,
    load_reference,
    price_at,
    region_max_error,
    run_study,
    save_reference,
    solve_level,
)

D = Domain()
SPEC = OptionSpec()
HESTON = ModelParams.from_kind("heston", kappa=2.0, theta=0.1, v=0.1, rho=-0.5, r=0.05)


def smooth_field(level=(5, 5)):
    return GridField.from_function(grid_from_level(D, level), lambda x, y: np.sin(x) * np.cos(y))


# ---------------------------------------------------------------- metrics

def test_region_error_examples():
    a = smooth_field()
    assert region_max_error(a, a, v=0.1) == 0.0
    b = GridField(a.grid, a.values + 1e-3)
    assert region_max_error(b, a, v=0.1) == pytest.approx(1e-3, rel=1e-12)


def test_region_error_interpolates_reference():
    f = lambda x, y: x**3 - x * y**2 + 2.0
    a = GridField.from_function(grid_from_level(D, (4, 4)), f)
    ref = GridField.from_function(grid_from_level(D, (6, 6)), f)
    assert region_max_error(a, ref, v=0.1) < 1e-12


def test_region_error_preconditions():
    a = smooth_field()
    with pytest.raises(ValueError, match="empty"):
        region_max_error(a, a, np.zeros(a.grid.shape, bool))
    with pytest.raises(ValueError, match="shape"):
        region_max_error(a, a, np.ones((3, 3), bool))
    with pytest.raises(ValueError, match="v"):
        region_max_error(a, a)


def test_error_region_readings():
    r = ErrorRegion()
    assert r.y_range(0.1, D) == (0.5, 2.5)
    # the window of the y-reading, written as a variance window
    assert ErrorRegion(sigma=(0.005, 0.1)).y_range(0.1, D) == pytest.approx((0.05, 1.0))
    with pytest.raises(ValueError):
        ErrorRegion(sigma=(3.0, 4.0)).y_range(0.1, D)


def test_estimate_order_examples():
    assert estimate_order([1.6e-3, 1e-4])[0] == pytest.approx(4.0)
    assert estimate_order([0.3, 0.3])[0] == 0.0
    with pytest.raises(ValueError):
        estimate_order([1e-3])
    with pytest.raises(ValueError):
        estimate_order([1e-3, 0.0])
    with pytest.raises(ValueError):
        estimate_order([1e-3, -1e-4])


@given(st.lists(st.floats(1e-12, 1.0), min_size=2, max_size=6), st.floats(1e-6, 1e6))
def test_estimate_order_scale_invariant(errs, k):
    np.testing.assert_allclose(estimate_order(errs), estimate_order([k * e for e in errs]),
                               rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------- solves

def test_zero_model_keeps_initial_data():
    s = SolveSettings(zero_model=True)
    u = solve_level(5, s)
    u0 = smooth_initial(u.grid).field
    assert region_max_error(u, u0, v=s.params.v) == 0.0


def test_price_at():
    u = smooth_field((4, 4))
    x, y = u.grid.x[7], u.grid.y[3]
    S, sigma = SPEC.strike * math.exp(x), 0.1 * y
    want = SPEC.strike * math.exp(-0.05) * u.values[7, 3]
    assert price_at(u, S, sigma, SPEC, reference_params()) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError, match="outside"):
        price_at(u, 1000.0, 0.1, SPEC, reference_params())


def test_settings_description_is_stable():
    a, b = SolveSettings().describe(), SolveSettings().describe()
    assert a == b
    assert set(a) == {"params", "domain", "adi", "dt_rule", "smoothing", "corner", "zero_model"}
    assert SolveSettings(smoothing=False).describe()["smoothing"] == "off"


# ---------------------------------------------------------------- reference cache

def test_reference_cache_round_trip(tmp_path, monkeypatch):
    calls = []
    real = harness.solve_level
    monkeypatch.setattr(harness, "solve_level", lambda *a, **k: calls.append(a) or real(*a, **k))
    s = SolveSettings()
    ref = get_reference(4, s, tmp_path)
    assert len(calls) == 1
    again = get_reference(4, s, tmp_path)
    assert len(calls) == 1
    assert again.field.to_bytes() == ref.field.to_bytes()
    assert again.provenance == ref.provenance and again.key == ref.key
    blob = (tmp_path / f"reference-{ref.key}.vgf").read_bytes()
    side = (tmp_path / f"reference-{ref.key}.txt").read_bytes()
    save_reference(again, tmp_path)
    assert (tmp_path / f"reference-{ref.key}.vgf").read_bytes() == blob
    assert (tmp_path / f"reference-{ref.key}.txt").read_bytes() == side
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(
        [f"reference-{ref.key}.vgf", f"reference-{ref.key}.txt"])
    assert b"level = (4, 4)" in side and b"dt_rule" in side


def test_reference_provenance_must_match(tmp_path):
    s = SolveSettings()
    ref = get_reference(4, s, tmp_path)
    assert load_reference(4, SolveSettings(params=reference_params(rho=0.0)), tmp_path) is None
    side = tmp_path / f"reference-{ref.key}.txt"
    side.write_text(side.read_text().replace("corner = edge", "corner = diagonal"))
    assert load_reference(4, s, tmp_path) is None


def test_cache_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.CACHE_ENV, str(tmp_path / "c"))
    assert harness.cache_dir() == tmp_path / "c" and (tmp_path / "c").is_dir()


# ---------------------------------------------------------------- study

def test_study_is_deterministic(tmp_path):
    cfg = StudyConfig(full_levels=(3, 4), sparse_levels=(6, 7), reference_level=5, cache=str(tmp_path))
    a = run_study(cfg, out_dir=tmp_path / "a")
    b = run_study(cfg, out_dir=tmp_path / "b")
    assert [(r.method, r.n, r.nodes, r.error) for r in a] == [(r.method, r.n, r.nodes, r.error) for r in b]
    assert a[0].order is None and a[1].order is not None
    with open(tmp_path / "a" / "study.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "n", "nodes", "error", "seconds"]
    assert [r[:2] for r in rows[1:]] == [["full", "3"], ["full", "4"], ["sparse", "6"], ["sparse", "7"]]
    strip = lambda p: [r[:4] for r in csv.reader(open(p))]
    assert strip(tmp_path / "a" / "study.csv") == strip(tmp_path / "b" / "study.csv")
    assert (tmp_path / "a" / "orders.csv").read_text() == (tmp_path / "b" / "orders.csv").read_text()
    assert a[0].error > a[1].error and a[2].error > a[3].error


def test_study_rejects_levels_at_reference():
    with pytest.raises(ValueError):
        run_study(StudyConfig(full_levels=(3, 5), reference_level=5))


# ---------------------------------------------------------------- oracle

def bs_put(S, K, T, r, vol):
    d1 = (math.log(S / K) + (r + vol**2 / 2) * T) / (vol * math.sqrt(T))
    d2 = d1 - vol * math.sqrt(T)
    return K * math.exp(-r * T) * norm.cdf(-d2) - S * norm.cdf(-d1)


def test_heston_reduces_to_black_scholes():
    # no vol of vol and variance at its mean: constant variance theta
    p = ModelParams.from_kind("heston", kappa=2.0, theta=0.04, v=1e-4, rho=0.0, r=0.05)
    for S in (80.0, 100.0, 125.0):
        assert heston_analytic_price(S, 0.04, SPEC, p) == pytest.approx(bs_put(S, 100, 1, 0.05, 0.2), abs=1e-5)


def test_heston_properties():
    assert heston_analytic_price(5000.0, 0.1, SPEC, HESTON) < 1e-6
    for S in (40.0, 70.0, 100.0, 130.0):
        floor = max(SPEC.strike * math.exp(-HESTON.r) - S, 0.0)
        assert heston_analytic_price(S, 0.1, SPEC, HESTON) >= floor - 1e-9
    prices = [heston_analytic_price(S, 0.1, SPEC, HESTON) for S in (80.0, 90.0, 100.0, 110.0)]
    assert all(a > b for a, b in zip(prices, prices[1:]))


def test_heston_rejects_other_models():
    with pytest.raises(ValueError):
        heston_analytic_price(100.0, 0.1, SPEC, reference_params())
    sqrn = ModelParams.from_kind("sqrn", kappa=2.0, theta=0.1, v=0.1, rho=-0.5, r=0.05)
    with pytest.raises(ValueError):
        heston_analytic_price(100.0, 0.1, SPEC, sqrn)


def test_reference_solution_key_depends_on_provenance():
    f = smooth_field((3, 3))
    a = ReferenceSolution(f, {"level": "(3, 3)"})
    b = ReferenceSolution(f, {"level": "(4, 4)"})
    assert a.key != b.key and len(a.key) == 16

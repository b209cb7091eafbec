import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varriesz.fields import ExponentField, ScalarField, make_grid, sample_field
from varriesz.spaces import (check_s_range, luxemburg_norm, modular, normalize,
                             poincare_target_exponent, riesz_order_from_s, sharp_exponent)

G = make_grid(2, 32, (0.0, 1.0))


def const(v, grid=G):
    return ExponentField.constant(grid, v)


def half_exponent(left, right, grid=G):
    return ExponentField.from_values(grid, np.where(grid.centers[0] < 0.5, left, right))


def field(v, grid=G):
    return ScalarField(grid, np.broadcast_to(v, grid.shape), None)


# ---------------------------------------------------------------- modular

def test_modular_examples():
    assert modular(field(0.0), const(3.0)) == 0.0
    assert modular(field(1.0), half_exponent(1.5, 5.0)) == pytest.approx(1.0, rel=1e-14)
    assert modular(field(2.0), const(2.0)) == pytest.approx(4.0, rel=1e-14)


# ------------------------------------------------------------------ norms

def test_norm_examples():
    assert luxemburg_norm(field(0.0), const(2.0)).value == 0.0
    assert luxemburg_norm(field(3.0), const(2.0)).value == pytest.approx(3.0, rel=1e-12)
    assert luxemburg_norm(field(1.0), half_exponent(2.0, 4.0)).value == pytest.approx(1.0, rel=1e-12)


def test_half_indicator_two_exponents():
    f = ScalarField(G, np.where(G.centers[0] < 0.5, 1.0, 0.0), None)
    val = luxemburg_norm(f, half_exponent(2.0, 4.0)).value
    assert abs(val - 1 / math.sqrt(2)) <= 1e-9
    # oracle: dense scan of lambda for rho(f/lambda) = 1
    lam = np.linspace(0.70, 0.72, 200_001)
    rho = 0.5 * lam ** -2.0
    assert abs(lam[np.argmin(np.abs(rho - 1))] - val) <= 2e-7


def test_constant_exponent_agreement():
    gen = np.random.default_rng(7)
    for k in range(50):
        p = float(gen.uniform(1.0, 6.0))
        f = sample_field(G, "random_smooth", seed=int(gen.integers(1 << 30)),
                         amplitude=float(gen.uniform(0.1, 10)))
        expected = modular(f, const(p)) ** (1 / p)
        assert luxemburg_norm(f, const(p)).value == pytest.approx(expected, rel=1e-10)


def test_norm_rejects_p_below_one():
    with pytest.raises(ValueError):
        luxemburg_norm(field(1.0), const(0.5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3))
def test_homogeneity(seed, c):
    f = sample_field(G, "random_smooth", seed=seed)
    p = ExponentField.from_values(G, 1.2 + G.centers[0] + 0.5 * G.centers[1])
    a = luxemburg_norm(f, p).value
    b = luxemburg_norm(f.scaled(c), p).value
    assert b == pytest.approx(abs(c) * a, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(1e-3, 1e3))
def test_unit_ball(seed, amp):
    f = sample_field(G, "random_smooth", seed=seed, amplitude=amp)
    p = ExponentField.from_values(G, 1.0 + 2.0 * G.centers[1])
    nrm = luxemburg_norm(f, p).value
    assert 1 - 1e-8 <= modular(f.scaled(1 / nrm), p) <= 1 + 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), shrink=st.floats(0, 1))
def test_monotonicity(seed, shrink):
    g = sample_field(G, "random_smooth", seed=seed)
    gen = np.random.default_rng(seed)
    f = ScalarField(G, g.values * gen.uniform(0, 1, G.shape) * shrink, None)
    p = ExponentField.from_values(G, 1.5 + G.centers[0])
    assert luxemburg_norm(f, p).value <= luxemburg_norm(g, p).value + 1e-12


# -------------------------------------------------------------- exponents

def test_sharp_exponent_examples():
    assert np.allclose(sharp_exponent(const(4 / 3), const(1.0)).base.masked, 4.0, rtol=1e-14)
    assert np.allclose(sharp_exponent(const(1.0), const(1.0)).base.masked, 2.0, rtol=1e-14)
    p = ExponentField.from_values(G, 1.1 + G.centers[0])
    assert np.array_equal(sharp_exponent(p, const(0.0)).base.masked, p.base.masked)
    with pytest.raises(ValueError):
        sharp_exponent(const(2.0), const(1.0))


def test_riesz_order_from_s():
    assert np.allclose(riesz_order_from_s(const(1.0)).base.masked, 1.0)
    assert np.allclose(riesz_order_from_s(const(1.5)).base.masked, 0.5)


def test_check_s_range():
    check_s_range(const(1.4))
    for bad in (0.9, 2.0, 2.5):
        with pytest.raises(ValueError):
            check_s_range(const(bad))


def test_poincare_target_exponent_examples():
    assert np.allclose(poincare_target_exponent(const(1.5), 1.0).base.masked, 4 / 3, rtol=1e-14)
    assert np.allclose(poincare_target_exponent(const(1.0), 1.0).base.masked, 2.0, rtol=1e-14)
    assert np.allclose(poincare_target_exponent(const(1.0), 1.2).base.masked, 3.0, rtol=1e-14)
    with pytest.raises(ValueError):
        poincare_target_exponent(const(1.0), 2.0)
    with pytest.raises(ValueError):
        poincare_target_exponent(const(1.0), 0.5)


# -------------------------------------------------------------- normalize

def test_normalize_examples():
    f = field(3.0)
    p = const(2.0)
    assert np.array_equal(normalize(f, p, 3.0).values, f.values)
    assert np.allclose(normalize(f, p, 1.0).values, 1.0, rtol=1e-12)
    target = 1 / (2 * (1 + 1.0))
    g = sample_field(G, "gaussian", center=(0.5, 0.5), width=0.1)
    assert luxemburg_norm(normalize(g, p, target), p).value == pytest.approx(0.25, rel=1e-9)
    with pytest.raises(ValueError):
        normalize(field(0.0), p, 1.0)

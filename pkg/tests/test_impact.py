import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from impacthedge import (
    DomainError,
    ImpactSpec,
    PathError,
    ResilienceSpec,
    block_trade_proceeds,
    effective_coords,
    impact_step,
    liq_wealth,
    mathfrak_F,
    proceeds_along_path,
)

SPECS = [ImpactSpec.arctan(0.1), ImpactSpec.arctan(0.6), ImpactSpec.exponential(1.0), ImpactSpec.exponential(0.05)]
finite = dict(allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("spec", SPECS, ids=str)
@pytest.mark.parametrize("y", [-15.0, -2.0, -0.3, 0.0, 0.7, 4.0, 12.0])
def test_F_matches_quadrature(spec, y):
    if spec.is_exponential and abs(spec.param * y) > 10:
        pytest.skip("outside the sensible range")
    ref, _ = quad(lambda x: float(spec.f(x)), 0.0, y, epsabs=1e-13, epsrel=1e-13)
    assert float(spec.F(y)) == pytest.approx(ref, rel=1e-11, abs=1e-12)


def test_exponential_closed_forms():
    spec = ImpactSpec.exponential(0.7)
    y = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(spec.f(y), np.exp(0.7 * y))
    np.testing.assert_allclose(spec.F(y), (np.exp(0.7 * y) - 1) / 0.7, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(spec.lam_of(y), 0.7)


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_lambda_is_log_derivative(spec):
    y = np.linspace(-5, 5, 21)
    e = 1e-6
    fd = (np.log(spec.f(y + e)) - np.log(spec.f(y - e))) / (2 * e)
    np.testing.assert_allclose(spec.lam_of(y), fd, rtol=1e-7, atol=1e-9)
    fd2 = (spec.lam_of(y + e) - spec.lam_of(y - e)) / (2 * e)
    np.testing.assert_allclose(spec.dlam(y), fd2, rtol=1e-5, atol=1e-9)


def test_arctan_parameter_range():
    with pytest.raises(ValueError):
        ImpactSpec.arctan(2 / math.pi)
    with pytest.raises(ValueError):
        ImpactSpec.exponential(-1.0)
    lo, hi = ImpactSpec.arctan(0.1).f_bounds
    assert lo == pytest.approx(1 - 0.05 * math.pi) and hi == pytest.approx(1 + 0.05 * math.pi)


def test_exponential_F_inv_domain():
    spec = ImpactSpec.exponential(2.0)
    with pytest.raises(DomainError):
        spec.F_inv(-0.5)
    with pytest.raises(DomainError):
        spec.rel_F_increment_inv(0.0, -0.6)


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from(SPECS),
    st.floats(-8, 8, **finite),
    st.floats(-5, 5, **finite),
)
def test_rel_F_increment_inverse(spec, y, a):
    u = spec.rel_F_increment(y, a)
    back = spec.rel_F_increment_inv(y, u)
    assert float(back) == pytest.approx(a, abs=1e-9 * max(1.0, abs(a)))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(SPECS), st.floats(-6, 6, **finite), st.floats(-4, 4, **finite))
def test_rel_f_increment_matches_definition(spec, y, a):
    ref = (float(spec.f(y + a)) - float(spec.f(y))) / float(spec.f(y))
    assert float(spec.rel_f_increment(y, a)) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_block_trade_is_integral_of_price():
    spec = ImpactSpec.arctan(0.3)
    s_bar, y, delta = 40.0, 0.4, 1.7
    ref, _ = quad(lambda x: 40.0 * float(spec.f(x)), y, y + delta, epsabs=1e-12)
    assert float(block_trade_proceeds(spec, s_bar, y, 0.0, delta)) == pytest.approx(-ref, rel=1e-12)
    # selling brings cash in
    assert float(block_trade_proceeds(spec, s_bar, y, 0.0, -delta)) > 0


def test_block_trade_with_permanent_component():
    spec = ImpactSpec.exponential(0.5, eta=1.0)
    s_bar, y, theta, delta = 30.0, 0.2, 0.5, 0.8
    base = spec.eta * theta + y
    ref, _ = quad(lambda x: s_bar * float(spec.f(x)), base, base + 2 * delta)
    assert float(block_trade_proceeds(spec, s_bar, y, theta, delta)) == pytest.approx(-ref / 2, rel=1e-12)


def test_effective_coords_and_liq_wealth_invariant_under_block_trades():
    rng = np.random.default_rng(3)
    for spec in SPECS:
        s_bar = rng.uniform(20, 80, 50)
        y = rng.uniform(-3, 3, 50)
        th = rng.uniform(-2, 2, 50)
        d = rng.uniform(-2, 2, 50)
        cash = rng.uniform(-10, 10, 50)
        s_pre, s_post = s_bar * spec.f(y), s_bar * spec.f(y + d)
        e0 = effective_coords(spec, s_pre, y, th)
        e1 = effective_coords(spec, s_post, y + d, th + d)
        np.testing.assert_allclose(e0[0], e1[0], rtol=1e-12)
        np.testing.assert_allclose(e0[1], e1[1], atol=1e-12)
        v0 = liq_wealth(spec, cash, s_bar, y, th)
        v1 = liq_wealth(spec, cash + block_trade_proceeds(spec, s_bar, y, th, d), s_bar, y + d, th + d)
        np.testing.assert_allclose(v0, v1, rtol=1e-11, atol=1e-10)


def test_effective_coords_rejects_nonpositive_price():
    with pytest.raises(ValueError):
        effective_coords(SPECS[0], 0.0, 0.0, 1.0)


def test_mathfrak_F_vanishes_at_zero_holding_and_not_elsewhere():
    spec, h = ImpactSpec.arctan(0.1), ResilienceSpec.linear(1.0)
    assert float(mathfrak_F(spec, h, 50.0, 2.0, 0.0)) == 0.0
    assert abs(float(mathfrak_F(spec, h, 50.0, 2.0, 1.0))) > 1e-4


def test_impact_step():
    h = ResilienceSpec.linear(2.0)
    assert float(impact_step(h, 1.0, 0.5, 0.0)) == 1.5
    assert float(impact_step(h, 1.0, 0.0, 0.1)) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        impact_step(h, 1.0, 0.0, -0.1)


def test_proceeds_along_path_block_then_hold():
    spec, h = ImpactSpec.arctan(0.2), ResilienceSpec.zero()
    # buy one share in a block and hold with frozen unaffected price: only the block costs
    total = proceeds_along_path(spec, h, [0, 0, 1], [0, 1, 1], [50, 50, 50])
    assert total == pytest.approx(float(block_trade_proceeds(spec, 50, 0.0, 0.0, 1.0)), rel=1e-12)
    with pytest.raises(PathError):
        proceeds_along_path(spec, h, [0, 1, 0.5], [0, 1, 1], [50, 50, 50])

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import q_mp
from qra import BathParams, RegimeWarning, correlation_exponent, kappa, spectral_density


def test_kappa_values():
    # [TRIVIAL] pi*T
    assert kappa(BathParams()) == pytest.approx(0.6283185307179586, rel=1e-15)
    assert kappa(BathParams(temperature=1 / math.pi)) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("kw", [dict(temperature=0.0), dict(alpha=0.0), dict(omega_c=-1.0)])
def test_invalid_params_rejected(kw):
    with pytest.raises(ValueError):
        BathParams(**kw)


def test_regime_warnings():
    with pytest.warns(RegimeWarning):
        BathParams(alpha=0.4)
    with pytest.warns(RegimeWarning):
        BathParams(temperature=2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        BathParams()


def test_exponent_at_zero():
    # [TRIVIAL]
    assert correlation_exponent(0.0, BathParams()) == (0.0, 0.0)


def test_exponent_examples():
    qr, qi = correlation_exponent(0.1, BathParams())
    # [DERIVED] 1.4*arctan(1)
    assert qi == pytest.approx(1.4 * math.atan(1.0), rel=1e-14)
    qr, _ = correlation_exponent(1.0, BathParams())
    # [DERIVED] mpmath evaluation of the closed form: 3.3215...
    assert qr == pytest.approx(q_mp(1.0)[0], rel=1e-13)
    assert qr == pytest.approx(3.3215, abs=5e-5)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        correlation_exponent(-1.0, BathParams())


@given(st.floats(0.0, 2000.0), st.floats(0.55, 1.5), st.floats(0.01, 1.0))
def test_exponent_matches_mpmath(t, alpha, temp):
    # [DERIVED] arbitrary-precision oracle, including the large-kappa*t branch
    b = BathParams(alpha=alpha, temperature=temp)
    qr, qi = correlation_exponent(t, b)
    er, ei = q_mp(t, alpha, 10.0, temp)
    assert qr == pytest.approx(er, rel=1e-12, abs=1e-14)
    assert qi == pytest.approx(ei, rel=1e-13, abs=1e-15)


def test_huge_times_finite():
    qr, qi = correlation_exponent(np.array([1e3, 1e5, 1e7]), BathParams())
    assert np.all(np.isfinite(qr)) and np.all(np.isfinite(qi))
    assert qr[-1] == pytest.approx(q_mp(1e7)[0], rel=1e-12)


def test_monotone_and_bounded():
    b = BathParams()
    t = np.linspace(0, 200, 20001)
    qr, qi = correlation_exponent(t, b)
    assert np.all(np.diff(qr) >= 0)
    assert np.all((qi >= 0) & (qi < b.alpha * math.pi))
    assert correlation_exponent(1e9, b)[1] == pytest.approx(b.alpha * math.pi, rel=1e-9)


def test_asymptotic_slope():
    # [DERIVED] dQ'/dt -> 2 alpha kappa = 0.8796
    b = BathParams()
    slope_target = 2 * b.alpha * b.kappa
    assert slope_target == pytest.approx(0.8796, abs=1e-4)
    for t in (20 / b.kappa, 50.0, 300.0, 1000.0):
        h = 1e-3
        slope = (correlation_exponent(t + h, b)[0] - correlation_exponent(t - h, b)[0]) / (2 * h)
        assert abs(slope - slope_target) / slope_target < 1e-3


def test_small_time_continuity():
    qr, _ = correlation_exponent(1e-8, BathParams())
    assert abs(qr) < 1e-6


def test_spectral_density():
    b = BathParams()
    assert spectral_density(0.0, b) == 0.0
    # [TRIVIAL] 14/e at the cutoff
    assert spectral_density(10.0, b) == pytest.approx(14 / math.e, rel=1e-14)
    w = np.linspace(0, 50, 50001)
    assert w[np.argmax(spectral_density(w, b))] == pytest.approx(10.0, abs=1e-3)
    with pytest.raises(ValueError):
        spectral_density(-1.0, b)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qra import BathParams, a_nu, crossing_from_scan, crossing_rate_approx, crossing_rate_exact, mfpt_analytic, mfpt_limits, scan_mfpt
from qra.analysis import (
    COMBINED,
    DRIVE_BIAS,
    DRIVE_TUNNELING,
    NOISE_RATE,
    RootNotFoundError,
    ScanError,
    frozen_bias_rate,
    log_grid,
)

A0_QUOTED, ATILDE_QUOTED = 1.985e-2, 2.102e-2
BATH = BathParams()


def test_limits_examples():
    # [DERIVED] closed-form limits evaluated with the quoted coefficient
    st0, hr0, ad0 = mfpt_limits(0.0)
    assert st0 == hr0 == pytest.approx(ad0, rel=1e-14)
    assert st0 == pytest.approx(1 / A0_QUOTED, rel=5e-3)
    st3, hr3, ad3 = mfpt_limits(0.3)
    assert st3 == hr3
    assert ad3 == pytest.approx(66.31, rel=5e-3)
    assert mfpt_limits(0.2)[2] == pytest.approx(56.85, rel=5e-3)
    with pytest.raises(ValueError):
        mfpt_limits(1.0)


def test_adiabatic_formula():
    a0 = a_nu(0.0, BATH)
    for d in (0.1, 0.3, 0.6):
        assert mfpt_limits(d)[2] == pytest.approx((1 + d * d) / (1 - d * d) ** 2 / a0, rel=1e-13)


def test_crossing_approx_examples():
    # [DERIVED] leading-order formula with the quoted coefficients
    lead = lambda d: A0_QUOTED**2 / ATILDE_QUOTED + A0_QUOTED + ATILDE_QUOTED - d * d * ATILDE_QUOTED
    assert lead(0.2) == pytest.approx(0.05878, abs=1e-5)
    assert lead(0.0) == pytest.approx(0.05962, abs=1e-5)
    assert crossing_rate_approx(0.2) == pytest.approx(0.0588, abs=5e-4)
    assert crossing_rate_approx(0.0) == pytest.approx(0.05962, abs=5e-4)


def test_crossing_exact_residual():
    nu = crossing_rate_exact(0.2)
    assert nu == pytest.approx(0.059, abs=1e-3)
    assert mfpt_analytic(nu, 0.2, BATH) == pytest.approx(mfpt_limits(0.2)[0], rel=1e-6)


@pytest.mark.parametrize("d", [0.1, 0.2, 0.3, 0.4])
def test_crossing_approx_agrees(d):
    # [PAPER] close agreement between exact and approximate crossing
    assert abs(crossing_rate_exact(d) / crossing_rate_approx(d) - 1) < 0.05


def test_crossing_small_amplitude_and_weak_dependence():
    # root persists as the amplitude shrinks, near the amplitude-free leading term
    lead = crossing_rate_approx(0.0)
    assert crossing_rate_exact(1e-3) == pytest.approx(lead, rel=0.05)
    n1, n4 = crossing_rate_exact(0.1), crossing_rate_exact(0.4)
    assert abs(n4 - n1) / n1 < 0.1


def test_crossing_errors():
    with pytest.raises(RootNotFoundError):
        crossing_rate_exact(0.2, bracket=(0.2, 1.0))
    with pytest.raises(ValueError):
        crossing_rate_exact(0.0)


def test_crossing_decreases_with_coupling():
    # [PAPER] stronger coupling, lower crossing
    vals = [crossing_rate_exact(0.2, BathParams(alpha=a)) for a in (0.6, 0.7, 0.8)]
    assert vals[0] > vals[1] > vals[2]


def test_log_grid():
    g = log_grid(1e-4, 1e3, 8)
    assert g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1e3)
    assert np.all(np.diff(g) > 0)
    with pytest.raises(ValueError):
        log_grid(1.0, 0.1, 5)


@pytest.fixture(scope="module")
def noise_scan():
    return scan_mfpt(NOISE_RATE, log_grid(1e-4, 1e3, 57), noise_amplitude=0.3)


def test_noise_scan_shape(noise_scan):
    # [PAPER] saturation, interior minimum, return to static
    r = noise_scan
    static, adiabatic = r.references["static"], r.references["adiabatic"]
    assert r.ok.all() and np.all(r.mfpt > 0)
    assert r.mfpt.min() < static - 0.05 * static
    assert adiabatic > static + 0.05 * static
    assert abs(r.mfpt[0] / adiabatic - 1) < 0.02
    assert abs(r.mfpt[-1] / static - 1) < 0.02
    assert 0 < r.argmin() < len(r.grid) - 1
    assert r.references["high_rate"] == static


def test_noise_scan_numeric_matches(noise_scan):
    grid = noise_scan.grid[::8]
    num = scan_mfpt(NOISE_RATE, grid, noise_amplitude=0.3, numeric=True)
    assert np.allclose(num.mfpt, noise_scan.mfpt[::8], rtol=5e-3)


def test_crossing_from_scan(noise_scan):
    nu = crossing_from_scan(noise_scan)
    assert nu == pytest.approx(crossing_rate_exact(0.3), rel=0.02)


def test_drive_scan_references_and_order():
    grid = log_grid(0.01, 10.0, 8)
    r = scan_mfpt(DRIVE_TUNNELING, grid, drive_amplitude=0.2, n_phases=16)
    assert r.ok.all()
    a0 = a_nu(0.0, BATH)
    assert r.references["adiabatic"] == pytest.approx((1 - 0.04) ** -1.5 / a0, rel=1e-12)
    assert r.mfpt.min() < r.references["static"]
    assert r.diagnostics[0]["normalization_defect"] < 1e-4


def test_bias_scan_adiabatic_reference():
    grid = log_grid(1e-3, 1.0, 3)
    r = scan_mfpt(DRIVE_BIAS, grid, bias_amplitude=0.3, n_phases=16)
    phases = 2 * np.pi * np.arange(16) / 16
    ref = np.mean(1 / frozen_bias_rate(0.3 * np.cos(phases)))
    assert r.references["adiabatic"] == pytest.approx(ref, rel=1e-10)
    # slow drive approaches the frozen-bias average
    assert r.mfpt[0] == pytest.approx(ref, rel=0.02)


def test_frozen_bias_detailed_balance():
    # [DERIVED] W(eps)/W(-eps) = exp(eps/T) in the scaling limit; finite cutoff costs a few percent
    eps = np.array([0.05, 0.1, 0.3])
    ratio = frozen_bias_rate(eps) / frozen_bias_rate(-eps)
    assert np.allclose(ratio, np.exp(eps / BATH.temperature), rtol=0.03)
    assert frozen_bias_rate(0.0) == pytest.approx(a_nu(0.0, BATH), rel=1e-12)


@given(st.lists(st.floats(1e-4, 1e3), min_size=2, max_size=6, unique=True))
def test_scan_independent_of_order(values):
    grid = np.sort(values)
    r = scan_mfpt(NOISE_RATE, grid, noise_amplitude=0.2)
    rev = [scan_mfpt(NOISE_RATE, [x], noise_amplitude=0.2).mfpt[0] for x in grid[::-1]]
    assert np.array_equal(r.mfpt, np.array(rev[::-1]))


def test_scan_rejects_unsorted():
    with pytest.raises(ValueError):
        scan_mfpt(NOISE_RATE, [1.0, 0.1], noise_amplitude=0.2)


def test_scan_failure_threshold(monkeypatch):
    import qra.analysis as an

    real = an.mfpt_analytic

    def flaky(nu, *args, **kw):
        if nu > 30:
            raise ArithmeticError("injected")
        return real(nu, *args, **kw)

    monkeypatch.setattr(an, "mfpt_analytic", flaky)
    grid = log_grid(1e-2, 60.0, 10)
    ok = scan_mfpt(NOISE_RATE, grid, noise_amplitude=0.2)  # one of ten fails: tolerated
    assert ok.failures[0][0] == 9 and np.isnan(ok.mfpt[9]) and ok.ok[:9].all()
    with pytest.raises(ScanError) as info:
        scan_mfpt(NOISE_RATE, log_grid(1e-2, 1e3, 10), noise_amplitude=0.2)
    assert len(info.value.result.failures) == 3


def test_combined_sweep_runs():
    r = scan_mfpt(COMBINED, [1.0, 100.0], noise_amplitude=0.2, bias_amplitude=0.3, bias_frequency=10.0, n_phases=4)
    noise = [mfpt_analytic(x, 0.2, BATH) for x in r.grid]
    assert np.allclose(r.mfpt, noise, rtol=0.02)

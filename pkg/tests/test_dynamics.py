import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import argrelmax

from oracles import biexp
from qra import (
    BACKWARD,
    IMPROVED,
    BathParams,
    DichotomousTunneling,
    DrivingSetup,
    IncompleteAbsorptionError,
    PeriodicBias,
    PeriodicTunneling,
    RateFunction,
    a_nu,
    analytic_survival_dichotomous,
    asymptotic_populations,
    fpt_moment,
    fpt_pdf,
    mfpt_analytic,
    phase_averaged_pdf,
    residence_time_pdf,
    solve_survival,
    solve_survival_noise_averaged,
)
from qra.analysis import DRIVE_TUNNELING, log_grid, scan_mfpt
from qra.dynamics import UnnormalizedPdfError, biexponential_pdf, static_rates
from qra.rates import ConstantRate

BATH = BathParams()
A0 = a_nu(0.0, BATH)


def noise_rates(delta, nu, mode="stationary"):
    mod = DichotomousTunneling(delta, nu)
    return [RateFunction(mod, component=i, mode=mode) for i in (0, 1)]


def check_trace(trace):
    assert trace.p[0] == 1.0
    assert np.all(trace.p >= 0) and np.all(trace.p <= 1)
    assert np.all(np.diff(trace.p) <= 1e-9)
    assert trace.p_end < trace.survival_floor
    if trace.y is not None:
        assert trace.y[0] == 0.0
        assert np.all(np.abs(trace.y) <= trace.p + 1e-12)
    t = np.linspace(0, trace.t_end, 5001)
    assert np.min(trace.flux(t)) >= -1e-12


# -- survival ----------------------------------------------------------------

def test_constant_rate_survival():
    # [DERIVED] exponential with the rate a_0; P_L(1/a_0) = e^-1
    tr = solve_survival(RateFunction())
    check_trace(tr)
    assert tr.survival(1 / A0) == pytest.approx(math.exp(-1), abs=1e-6)
    # [PAPER] 1/a_0 with the quoted four-digit coefficient is 50.38
    assert abs(1 / A0 / 50.378 - 1) < 5e-3


def test_zero_rate_never_absorbs():
    with pytest.raises(IncompleteAbsorptionError) as info:
        solve_survival(0.0, t_cap=1e3)
    assert info.value.residual == pytest.approx(1.0)


def test_periodic_drive_multipeak():
    # [PAPER] qualitative: several maxima of g in the first two periods
    tr = solve_survival(RateFunction(PeriodicTunneling(0.3, 0.1)))
    check_trace(tr)
    tp = 2 * math.pi / 0.1
    t = np.linspace(0, 2 * tp, 4001)
    assert len(argrelmax(tr.flux(t))[0]) >= 2


def test_noise_averaged_decouples():
    # [TRIVIAL] without noise the pair reduces to the static equation
    w0, w1 = noise_rates(0.0, 0.3)
    tr = solve_survival_noise_averaged(w0, w1, 0.3)
    ref = solve_survival(RateFunction())
    t = np.linspace(0, 800, 101)
    assert np.max(np.abs(tr.survival(t) - ref.survival(t))) < 1e-7
    assert np.max(np.abs(tr.state(t)[1])) == 0.0


def test_noise_averaged_vs_analytic():
    # [DERIVED] closed-form bi-exponential
    tr = solve_survival_noise_averaged(*noise_rates(0.3, 0.3), 0.3)
    check_trace(tr)
    w0, w1 = static_rates(0.3, 0.3, BATH)
    t = np.linspace(0, tr.t_end, 2001)
    assert np.max(np.abs(tr.survival(t) - biexp(0.3, w0, w1, t))) < 1e-6
    p, comp = analytic_survival_dichotomous(0.3, 0.3, BATH, t)
    assert np.max(np.abs(tr.state(t)[1] - comp.correlation(t))) < 1e-6


def test_noise_averaged_fast_switching():
    # [PAPER] fast noise recovers the static MFPT
    tr = solve_survival_noise_averaged(*noise_rates(0.3, 1e3), 1e3)
    assert abs(fpt_pdf(tr).mfpt * A0 - 1) < 0.02


def test_noise_averaged_rate_mismatch():
    with pytest.raises(ValueError):
        solve_survival_noise_averaged(*noise_rates(0.3, 0.3), 0.5)


@given(st.floats(0.01, 100.0), st.floats(0.0, 0.4))
def test_analytic_equals_ode(nu, delta):
    # [DERIVED] the bi-exponential solves the coupled pair exactly
    tr = solve_survival_noise_averaged(*noise_rates(delta, nu), nu)
    t = np.linspace(0, tr.t_end, 1001)
    p, _ = analytic_survival_dichotomous(nu, delta, BATH, t)
    assert np.max(np.abs(p - tr.survival(t))) < 1e-6


# -- closed forms ---------------------------------------------------------------

def test_analytic_single_exponential():
    # [PAPER] no noise: single exponential
    t = np.linspace(0, 300, 31)
    p, comp = analytic_survival_dichotomous(0.5, 0.0, BATH, t)
    assert np.allclose(p, np.exp(-A0 * t), rtol=1e-12)
    assert comp.c2 == pytest.approx(0.0, abs=1e-15)


@given(st.floats(1e-4, 1e3), st.floats(0.0, 0.9))
def test_analytic_identities(nu, delta):
    comp = analytic_survival_dichotomous(nu, delta, BATH)
    assert comp.survival(0.0) == pytest.approx(1.0, abs=1e-14)
    assert comp.c1 + comp.c2 == pytest.approx(1.0, abs=1e-14)
    # [PAPER] MFPT formula equals sum C_i / gamma_i
    assert comp.mfpt == pytest.approx(mfpt_analytic(nu, delta, BATH), rel=1e-10)


def test_analytic_domain():
    with pytest.raises(ValueError):
        analytic_survival_dichotomous(0.3, 1.0, BATH)
    with pytest.raises(ValueError):
        mfpt_analytic(0.3, 1.2, BATH)


def test_mfpt_analytic_examples():
    # [PAPER]/[DERIVED] static value and the two limits
    assert mfpt_analytic(0.7, 0.0, BATH) == pytest.approx(1 / A0, rel=1e-12)
    assert mfpt_analytic(1e-8, 0.3, BATH) == pytest.approx(1.09 / 0.8281 / A0, rel=1e-6)
    assert 1.09 / 0.8281 / 1.985e-2 == pytest.approx(66.31, abs=0.01)
    assert abs(mfpt_analytic(1e3, 0.3, BATH) * A0 - 1) < 0.02


# -- densities and moments ---------------------------------------------------

def test_constant_rate_pdf_and_moments():
    # [DERIVED] exponential distribution moments
    pdf = fpt_pdf(solve_survival(RateFunction()))
    assert pdf.g[0] == pytest.approx(A0, rel=1e-9)
    assert pdf.normalization_defect < 1e-8
    assert fpt_moment(pdf, 1) == pytest.approx(1 / A0, rel=1e-8)
    assert fpt_moment(pdf, 2) == pytest.approx(2 / A0**2, rel=1e-8)
    assert np.allclose(pdf.density(pdf.t), A0 * np.exp(-A0 * pdf.t), rtol=1e-7, atol=1e-14)


@given(st.floats(1e-3, 10.0))
def test_rate_doubling_halves_mfpt(w):
    # [TRIVIAL] time rescaling
    t1 = fpt_moment(fpt_pdf(solve_survival(w)), 1)
    t1d = fpt_moment(fpt_pdf(solve_survival(2 * w)), 1)
    assert t1 == pytest.approx(1 / w, rel=1e-8)
    assert t1d == pytest.approx(t1 / 2, rel=1e-8)


@pytest.mark.parametrize("tun,bias", [
    (PeriodicTunneling(0.3, 0.1), None),
    (None, PeriodicBias(0.3, 0.1, 0.7)),
    (DichotomousTunneling(0.2, 1e3), PeriodicBias(0.3, 10.0)),
])
def test_periodic_moments_match_panels(tun, bias):
    # period-by-period moments through the monodromy powers equal a sweep over all panels
    from qra.dynamics import _panel_integrals

    kw = {k: v for k, v in (("tunneling", tun), ("bias", bias)) if v is not None}
    setup = DrivingSetup(**kw)
    trace = setup.solve(setup.prepared_rates())
    assert trace.moment_integrals is not None
    fast = trace.moment_integrals((0, 1, 2))
    slow = _panel_integrals(trace.flux, trace.t, (0, 1, 2))
    for k in (0, 1, 2):
        assert fast[k] == pytest.approx(slow[k], rel=1e-12)


def test_improved_pdf_starts_at_zero():
    # [PAPER] improved rates vanish at t = 0, hence g(0) = 0
    pdf = fpt_pdf(solve_survival(RateFunction(mode=IMPROVED)))
    assert pdf.g[0] == 0.0
    assert pdf.normalization_defect < 1e-4


def _late_pdfs(tun, bias):
    s = fpt_pdf(solve_survival(RateFunction(tun, bias)))
    i = fpt_pdf(solve_survival(RateFunction(tun, bias, mode=IMPROVED)))
    t = np.linspace(2 * RateFunction().tau_max, 600, 500)
    return s, i, t


LATE_CASES = [(PeriodicTunneling(0.0, 1.0), PeriodicBias(0.0, 1.0)),
              (PeriodicTunneling(0.3, 0.1), PeriodicBias(0.0, 0.1))]


@pytest.mark.parametrize("tun,bias", LATE_CASES)
def test_improved_vs_stationary_late(tun, bias):
    # once the rates coincide the two densities differ only by the constant
    # factor exp(int_0^tau_max (W - W_improved)) carried by the survival
    s, i, t = _late_pdfs(tun, bias)
    ratio = i.density(t) / s.density(t)
    tm = RateFunction().tau_max
    early = np.linspace(0, tm, 4001)
    w_s = RateFunction(tun, bias)(early)
    w_i = RateFunction(tun, bias, mode=IMPROVED)(early)
    expected = math.exp(np.trapezoid(w_s - w_i, early))
    assert np.max(np.abs(ratio - expected)) < 1e-4
    assert np.ptp(ratio) < 1e-6


@pytest.mark.xfail(strict=True, reason="late pdfs differ by a constant factor of about 2%, not 1e-6; see ledger")
@pytest.mark.parametrize("tun,bias", LATE_CASES[:1])
def test_improved_vs_stationary_late_pointwise(tun, bias):
    s, i, t = _late_pdfs(tun, bias)
    assert np.max(np.abs(s.density(t) - i.density(t))) < 1e-6


def test_biexponential_pdf():
    # [TRIVIAL] term-wise integration
    comp = analytic_survival_dichotomous(0.3, 0.3, BATH)
    pdf = biexponential_pdf(comp)
    t = np.linspace(0, 200, 11)
    assert np.allclose(pdf.density(t), comp.c1 * comp.gamma1 * np.exp(-comp.gamma1 * t)
                       + comp.c2 * comp.gamma2 * np.exp(-comp.gamma2 * t), rtol=1e-13)
    assert pdf.normalization_defect < 1e-8
    assert fpt_moment(pdf, 1) == pytest.approx(mfpt_analytic(0.3, 0.3, BATH), rel=1e-6)


@given(st.floats(1e-3, 1e2), st.floats(0.0, 0.6))
def test_moment_consistency(nu, delta):
    comp = analytic_survival_dichotomous(nu, delta, BATH)
    assert fpt_moment(biexponential_pdf(comp), 1) == pytest.approx(mfpt_analytic(nu, delta, BATH), rel=1e-6)


def test_moment_errors():
    pdf = fpt_pdf(solve_survival(RateFunction()))
    with pytest.raises(ValueError):
        fpt_moment(pdf, 0)
    pdf.normalization = 0.99
    with pytest.raises(UnnormalizedPdfError):
        fpt_moment(pdf, 1)


def test_incomplete_trace_rejected():
    tr = solve_survival(RateFunction(), t_end=10.0)
    with pytest.raises(IncompleteAbsorptionError):
        fpt_pdf(tr)


# -- phase averaging ---------------------------------------------------------

def test_phase_average_without_drive():
    setup = DrivingSetup()
    with pytest.warns(UserWarning):
        avg, phases, pdfs = phase_averaged_pdf(setup)
    assert avg.mfpt == pytest.approx(1 / A0, rel=1e-8)


def test_phase_average_normalized():
    avg, phases, pdfs = phase_averaged_pdf(DrivingSetup(PeriodicTunneling(0.3, 0.1)), n_phases=40)
    assert len(pdfs) == 40 and np.allclose(phases, 2 * np.pi * np.arange(40) / 40)
    assert avg.normalization_defect < 1e-4
    assert avg.mfpt == pytest.approx(np.mean([p.mfpt for p in pdfs]), rel=1e-12)
    assert np.min(avg.g) >= -1e-12
    assert np.trapezoid(avg.g, avg.t) == pytest.approx(1.0, abs=1e-3)


def test_phase_average_zero_amplitude_is_static():
    avg, _, _ = phase_averaged_pdf(DrivingSetup(PeriodicTunneling(0.0, 0.5)), n_phases=8)
    assert avg.mfpt == pytest.approx(1 / A0, rel=1e-7)


@pytest.mark.slow
def test_phase_average_argmin_stability():
    grid = log_grid(0.01, 10.0, 13)
    mins = [scan_mfpt(DRIVE_TUNNELING, grid, drive_amplitude=0.2, n_phases=n).argmin() for n in (40, 80)]
    assert abs(mins[0] - mins[1]) <= 1


# -- cyclostationary populations and residence times -------------------------

def test_populations_constant():
    # [TRIVIAL] stationary two-state solution
    sym = asymptotic_populations(ConstantRate(0.02), ConstantRate(0.02), 10.0)
    assert np.allclose(sym.p_r, 0.5, atol=1e-8)
    asym = asymptotic_populations(ConstantRate(0.03), ConstantRate(0.01), 10.0)
    assert np.allclose(asym.p_r, 0.75, atol=1e-8)


def test_populations_periodic_symmetric():
    # [DERIVED] forward = backward at every instant
    tun = PeriodicTunneling(0.3, 0.1)
    pop = asymptotic_populations(RateFunction(tun), RateFunction(tun, direction=BACKWARD), 2 * math.pi / 0.1)
    assert np.max(np.abs(pop.p_r - 0.5)) < 1e-8


def test_populations_periodic_bias_bounded():
    bias = PeriodicBias(0.3, 0.1)
    pop = asymptotic_populations(RateFunction(bias=bias), RateFunction(bias=bias, direction=BACKWARD),
                                 2 * math.pi / 0.1)
    assert np.all((pop.p_r > 0) & (pop.p_r < 1))
    assert pop(pop.period + 1.0) == pytest.approx(pop(1.0), abs=1e-12)


def test_residence_constant_rates():
    # [TRIVIAL] zero amplitude: every entrance time gives the same exponential
    r = residence_time_pdf(DrivingSetup(PeriodicTunneling(0.0, 0.1)), n_entrance=16)
    t = np.linspace(0, 500, 51)
    assert np.allclose(r.density(t), A0 * np.exp(-A0 * t), rtol=1e-6)


@pytest.fixture(scope="module")
def driven_residence():
    return residence_time_pdf(DrivingSetup(PeriodicTunneling(0.3, 0.1)), n_entrance=128, workers=4)


def test_residence_driven(driven_residence):
    r = driven_residence
    assert abs(np.trapezoid(r.g, r.t) - 1) < 1e-3
    assert r.normalization_defect < 1e-3
    assert np.min(r.g) >= -1e-12
    # [DERIVED] renewal identity with P_R = 1/2: mean residence = 1/<W->
    back = RateFunction(PeriodicTunneling(0.3, 0.1), direction=BACKWARD)
    tp = 2 * math.pi / 0.1
    s = np.linspace(0, tp, 256, endpoint=False)
    assert r.mfpt == pytest.approx(1 / np.mean(back(s)), rel=1e-6)
    # escape hazard -d ln r/dt is modulated with the drive period
    t = np.linspace(0, 400, 8001)
    hazard = -np.gradient(np.log(r.density(t)), t)
    peaks = t[argrelmax(hazard)[0]]
    assert len(peaks) >= 2
    assert np.all(np.abs(np.diff(peaks) - tp) < 0.15 * tp)


@pytest.mark.xfail(strict=True, reason="r(t) is monotone with periodic shoulders at these parameters; see ledger")
def test_residence_driven_local_maxima(driven_residence):
    t = np.linspace(0, 400, 8001)
    assert len(argrelmax(driven_residence.density(t))[0]) >= 2


def test_residence_rejects_noise_and_warns_bias():
    with pytest.raises(TypeError):
        residence_time_pdf(DrivingSetup(DichotomousTunneling(0.3, 0.3)))
    with pytest.warns(UserWarning):
        residence_time_pdf(DrivingSetup(bias=PeriodicBias(0.1, 1.0)), n_entrance=4)

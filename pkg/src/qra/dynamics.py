"""First-passage dynamics with the right state absorbing.

The survival probability ``P_L`` of the left state obeys
``dP_L/dt = -W(t) P_L`` for deterministic driving, and the coupled pair::

    d<P_L>/dt = -W_0 <P_L> - W_1 y
    dy/dt     = -W_1 <P_L> - (W_0 + nu) y

after averaging over telegraph noise on the tunneling element. The
first-passage-time density is ``g = -dP_L/dt``.

Rates with a drive period shorter than the absorption time are integrated
over a single period; the solution at later times follows exactly from the
one-period propagator (Floquet tiling), so every trace reaches the survival
floor at the cost of one period.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .bath import BathParams
from .modulation import (
    DELTA0,
    BiasModulation,
    DichotomousTunneling,
    PeriodicBias,
    PeriodicTunneling,
    StaticTunneling,
    TunnelingModulation,
    ZeroBias,
    drive_frequency,
)
from .quadrature import QuadratureConfig
from .rates import (
    BACKWARD,
    FORWARD,
    IMPROVED,
    STATIONARY,
    ConstantRate,
    PeriodicRate,
    RateFunction,
    a_nu,
    build_periodic_cache,
)

__all__ = [
    "IncompleteAbsorptionError",
    "UnnormalizedPdfError",
    "ConvergenceError",
    "SurvivalTrace",
    "FptPdf",
    "BiExponential",
    "DrivingSetup",
    "AsymptoticPopulation",
    "prepare_rate",
    "solve_survival",
    "solve_survival_noise_averaged",
    "analytic_survival_dichotomous",
    "biexponential_pdf",
    "fpt_pdf",
    "fpt_moment",
    "mfpt_analytic",
    "static_rates",
    "phase_averaged_pdf",
    "asymptotic_populations",
    "residence_time_pdf",
]

SURVIVAL_FLOOR = 1e-10
# stop slightly below the floor so the trace ends strictly under it
FLOOR_MARGIN = 0.99
ODE_RTOL = 1e-8
ODE_ATOL = 1e-12
NORMALIZATION_TOL = 1e-4
STIFF_RATIO = 1e3

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class IncompleteAbsorptionError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class UnnormalizedPdfError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# rate preparation


class ImprovedRate:
    """Improved-mode rate: direct quadrature up to the kernel memory time,
    the (cached) stationary rate afterwards, where both agree to ``tail_cut``."""

    def __init__(self, rate: RateFunction, samples_per_period: int = 512):
        self.rate = rate
        self.switch = rate.tau_max
        self.late = prepare_rate(rate.stationary(), samples_per_period)
        self.period = None
        self.frequency = rate.frequency

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return float(self.rate(t_arr)) if t_arr < self.switch else float(self.late(t_arr))
        out = np.asarray(self.late(t_arr), dtype=float).copy()
        early = t_arr < self.switch
        if early.any():
            out[early] = self.rate(t_arr[early])
        return out

    def with_phase(self, phase):
        return ImprovedRate(self.rate.with_phase(phase), self.late_samples)

    @property
    def late_samples(self):
        return getattr(self.late, "samples_per_period", 512) or 512


def prepare_rate(rate, samples_per_period: int = 512):
    """Turn a :class:`RateFunction` into a fast evaluator.

    Constant rates are evaluated once, periodic stationary rates are replaced
    by their Fourier cache, improved-mode rates switch to the stationary
    cache after the kernel memory time. Other callables pass through.
    """
    if isinstance(rate, RateFunction):
        if rate.mode == IMPROVED:
            return ImprovedRate(rate, samples_per_period)
        return build_periodic_cache(rate, samples_per_period)
    if isinstance(rate, (int, float)):
        return ConstantRate(float(rate))
    return rate


def _period_of(*rates) -> Optional[float]:
    periods = {getattr(r, "period", None) for r in rates}
    periods.discard(None)
    if not periods:
        return None
    if len(periods) > 1:
        if max(periods) - min(periods) > 1e-12 * max(periods):
            return None
    return max(periods)


# ---------------------------------------------------------------------------
# traces and densities


@dataclass
class SurvivalTrace:
    """Survival probability on the solver grid plus dense evaluators.

    ``state(t)`` returns ``P_L`` (and ``y`` for noise-averaged runs) at any
    ``0 <= t <= t_end``; ``flux(t)`` is ``-dP_L/dt`` evaluated from the
    right-hand side of the survival equation.
    """

    t: np.ndarray
    p: np.ndarray
    y: Optional[np.ndarray]
    t_end: float
    state: Callable = field(repr=False)
    flux: Callable = field(repr=False)
    tail_rate: float = 0.0
    period: Optional[float] = None
    rtol: float = ODE_RTOL
    atol: float = ODE_ATOL
    survival_floor: float = SURVIVAL_FLOOR
    n_steps: int = 0
    # periodic traces: orders -> {n: int_0^t_end t^n flux dt}, without the panel sweep
    moment_integrals: Optional[Callable] = field(default=None, repr=False)

    @property
    def p_end(self) -> float:
        return float(self.p[-1])

    def survival(self, t):
        s = self.state(np.atleast_1d(np.asarray(t, dtype=float)))
        return s[0] if np.ndim(t) else float(s[0][0])


@dataclass
class FptPdf:
    """First-passage-time density.

    ``t`` and ``g`` sample the density for output. ``density`` evaluates it
    anywhere in ``[0, t_end]``; ``edges`` are panel boundaries on which the
    density is smooth, used for moments and normalization. ``moments[n]`` is
    the n-th moment including the exponential tail beyond ``t_end``.
    """

    t: np.ndarray
    g: np.ndarray
    t_end: float
    p_end: float
    tail_rate: float
    density: Optional[Callable] = field(default=None, repr=False)
    edges: Optional[np.ndarray] = field(default=None, repr=False)
    normalization: float = 1.0
    moments: dict = field(default_factory=dict)
    components: Optional[list] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    survival: Optional[Callable] = field(default=None, repr=False)

    def remaining(self, t):
        """Survival probability ``1 - int_0^t g``, exponential beyond ``t_end``."""
        t = np.asarray(t, dtype=float)
        inside = np.minimum(t, self.t_end)
        out = np.asarray(self.survival(inside), dtype=float)
        beyond = t > self.t_end
        if np.any(beyond):
            out = np.where(beyond, self.p_end * np.exp(-self.tail_rate * (t - self.t_end)), out)
        return out

    @property
    def normalization_defect(self) -> float:
        return abs(1.0 - self.normalization)

    @property
    def mfpt(self) -> float:
        return fpt_moment(self, 1)


def _panel_integrals(density, edges, orders: Sequence[int]):
    """``int t^n g(t) dt`` over the panels for each order, by 8-point Gauss-Legendre."""
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    out = {n: 0.0 for n in orders}
    chunk = 50_000
    for s in range(0, a.size, chunk):
        x = mid[s:s + chunk, None] + half[s:s + chunk, None] * _GL_X[None, :]
        gx = np.asarray(density(x.ravel())).reshape(x.shape)
        w = half[s:s + chunk, None] * _GL_W[None, :]
        for n in orders:
            out[n] += math.fsum((w * gx * x**n).ravel())
    return out


def _tail_moment(order, t_end, p_end, lam):
    # int_T^inf t^n lam P(T) exp(-lam (t - T)) dt
    if p_end == 0.0:
        return 0.0
    if lam <= 0:
        return math.inf
    total = 0.0
    for k in range(order + 1):
        total += math.factorial(order) / math.factorial(order - k) * t_end ** (order - k) / lam**k
    return p_end * total


def _make_pdf(t, g, t_end, p_end, tail_rate, density, edges, survival=None, orders=(0, 1, 2), integrator=None):
    integrals = (integrator or (lambda o: _panel_integrals(density, edges, o)))(orders)
    moments = {n: integrals[n] + _tail_moment(n, t_end, p_end, tail_rate) for n in orders if n >= 1}
    return FptPdf(
        t=t,
        g=g,
        t_end=t_end,
        p_end=p_end,
        tail_rate=tail_rate,
        density=density,
        edges=edges,
        normalization=integrals[0],
        moments=moments,
        survival=survival,
    )


def fpt_pdf(trace: SurvivalTrace) -> FptPdf:
    """First-passage-time density ``g = -dP_L/dt`` of a complete trace."""
    if not trace.p_end < trace.survival_floor:
        raise IncompleteAbsorptionError("trace did not reach the survival floor", trace.p_end)
    edges = trace.t
    g = trace.flux(edges)
    return _make_pdf(edges, g, trace.t_end, trace.p_end, trace.tail_rate, trace.flux, edges,
                     lambda t: trace.state(np.atleast_1d(t))[0], integrator=trace.moment_integrals)


def fpt_moment(pdf: FptPdf, order: int) -> float:
    """n-th moment of the first-passage time; ``order=1`` gives the MFPT."""
    if int(order) != order or order < 1:
        raise ValueError("moment order must be an integer >= 1")
    order = int(order)
    if pdf.normalization_defect > NORMALIZATION_TOL:
        raise UnnormalizedPdfError(f"pdf normalization defect {pdf.normalization_defect:.2e} exceeds 1e-4")
    if order not in pdf.moments:
        if pdf.components is not None:
            vals = [fpt_moment(c, order) for c in pdf.components]
            pdf.moments[order] = float(np.dot(pdf.weights, vals))
        else:
            integ = _panel_integrals(pdf.density, pdf.edges, (order,))[order]
            pdf.moments[order] = integ + _tail_moment(order, pdf.t_end, pdf.p_end, pdf.tail_rate)
    return pdf.moments[order]


# ---------------------------------------------------------------------------
# survival solvers


def _rhs_factory(rates, nu):
    if len(rates) == 1:
        (w,) = rates

        def rhs(t, x):
            return -w(t) * x

        def flux(t, x):
            return w(t) * x[0]

    else:
        w0, w1 = rates

        def rhs(t, x):
            a, b = w0(t), w1(t)
            # x is (P, y) or the stacked columns of the fundamental matrix
            out = np.empty_like(x)
            out[0::2] = -a * x[0::2] - b * x[1::2]
            out[1::2] = -b * x[0::2] - (a + nu) * x[1::2]
            return out

        def flux(t, x):
            return w0(t) * x[0] + w1(t) * x[1]

    return rhs, flux


def _solve_linear(rates, nu, rtol, atol, survival_floor, t_cap, t_end=None):
    m = len(rates)
    x0 = np.zeros(m)
    x0[0] = 1.0
    rhs, flux_x = _rhs_factory(rates, nu)
    period = _period_of(*rates)
    if period is not None and period < t_cap:
        return _solve_tiled(rates, nu, rhs, flux_x, period, x0, rtol, atol, survival_floor, t_end, t_cap)

    def hit_floor(t, x):
        return x[0] - FLOOR_MARGIN * survival_floor

    hit_floor.terminal = True
    hit_floor.direction = -1
    horizon = t_cap if t_end is None else t_end
    method = "DOP853"
    if m == 2:
        # telegraph switching much faster than tunneling makes the pair stiff
        slow = max(float(rates[0](0.0)), 1e-300)
        if nu > STIFF_RATIO * slow:
            method = "Radau"
    sol = solve_ivp(
        rhs, (0.0, horizon), x0, method=method, rtol=rtol, atol=atol, dense_output=True,
        events=None if t_end is not None else hit_floor,
    )
    if not sol.success:
        raise RuntimeError(f"ODE solver failed: {sol.message}")
    t_stop = float(sol.t[-1])
    residual = float(sol.y[0, -1])
    if t_end is None and residual >= survival_floor:
        raise IncompleteAbsorptionError(
            f"survival {residual:.3e} above floor at t_cap={t_cap:g}", residual
        )
    dense = sol.sol

    def state(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, t_stop)
        return dense(t)

    def flux(t):
        t = np.asarray(t, dtype=float)
        return _vector_flux(rates, state(t), t)

    tail = _local_decay_rate(rates, nu, t_stop)
    grid = sol.t
    x = sol.y
    return SurvivalTrace(
        t=grid, p=x[0], y=x[1] if m == 2 else None, t_end=t_stop, state=state, flux=flux,
        tail_rate=tail, period=None, rtol=rtol, atol=atol, survival_floor=survival_floor,
        n_steps=grid.size - 1,
    )


def _vector_flux(rates, x, t):
    if len(rates) == 1:
        return np.asarray(rates[0](t)) * x[0]
    return np.asarray(rates[0](t)) * x[0] + np.asarray(rates[1](t)) * x[1]


def _local_decay_rate(rates, nu, t):
    if len(rates) == 1:
        return float(rates[0](t))
    a, b = float(rates[0](t)), float(rates[1](t))
    # slowest eigenvalue of [[a, b], [b, a + nu]]
    return a + 0.5 * nu - 0.5 * math.sqrt(nu * nu + 4 * b * b)


def _solve_tiled(rates, nu, rhs, flux_x, period, x0, rtol, atol, survival_floor, t_end, t_cap):
    m = x0.size
    eye = np.eye(m).ravel(order="F")  # columns stacked: [col0, col1]
    method, extra = "DOP853", {}
    if m == 2 and nu > STIFF_RATIO * max(float(rates[0](0.0)), 1e-300):
        method = "Radau"

        def jac(t, x):
            a, b = float(rates[0](t)), float(rates[1](t))
            block = np.array([[-a, -b], [-b, -(a + nu)]])
            return np.kron(np.eye(m), block)

        extra["jac"] = jac
    sol = solve_ivp(
        rhs, (0.0, period), eye, method=method, **extra, rtol=rtol, atol=atol * 1e-2,
        dense_output=True, max_step=period / 4,
    )
    if not sol.success:
        raise RuntimeError(f"ODE solver failed: {sol.message}")
    monodromy = sol.y[:, -1].reshape((m, m), order="F")
    rho = float(np.max(np.abs(np.linalg.eigvals(monodromy))))
    if not rho < 1.0:
        raise IncompleteAbsorptionError("no decay over one drive period", 1.0)
    tail = -math.log(rho) / period
    base_t = sol.t

    def prop(s):
        return sol.sol(s).reshape((m, m) + np.shape(s), order="F")

    # powers M^n x0 until P drops below the floor at a period boundary
    max_periods = int(math.ceil((t_cap if t_end is None else t_end) / period)) + 1
    vecs = [x0]
    while (t_end is not None or vecs[-1][0] >= FLOOR_MARGIN * survival_floor) and len(vecs) <= max_periods:
        vecs.append(monodromy @ vecs[-1])
    if t_end is None and (vecs[-1][0] >= FLOOR_MARGIN * survival_floor or (len(vecs) - 2) * period > t_cap):
        raise IncompleteAbsorptionError(
            f"survival above floor at t_cap={t_cap:g}", float(vecs[-1][0]))
    vecs = np.array(vecs)

    def state(t):
        t = np.asarray(t, dtype=float)
        n = np.minimum(np.floor(t / period).astype(int), len(vecs) - 1)
        s = t - n * period
        phi = prop(s)
        return np.einsum("ij...,...j->i...", phi, vecs[n])

    # locate t_end inside the last period
    n_last = len(vecs) - 2
    if t_end is None:
        f = lambda s: state(n_last * period + s)[0] - FLOOR_MARGIN * survival_floor
        s_star = brentq(f, 0.0, period, xtol=1e-12 * period, rtol=1e-12)
        t_stop = n_last * period + s_star
    else:
        t_stop = float(t_end)

    def flux(t):
        t = np.asarray(t, dtype=float)
        return _vector_flux(rates, state(t), t)

    def moment_integrals(orders):
        # full periods: int_{nT}^{(n+1)T} t^k f = sum_q C(k,q) (nT)^(k-q) B_q . v_n,
        # with B_q[j] = int_0^T s^q (flux of column j of the propagator) ds
        a, b = base_t[:-1], base_t[1:]
        half = 0.5 * (b - a)
        x = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
        w = (half[:, None] * _GL_W[None, :]).ravel()
        s = x.ravel()
        phi = prop(s)
        cols = np.array([_vector_flux(rates, phi[:, j], s) for j in range(m)])
        kmax = max(orders)
        basis = np.array([[math.fsum(w * s**q * cols[j]) for j in range(m)] for q in range(kmax + 1)])
        n_full = min(int(t_stop // period), len(vecs))
        starts = np.arange(n_full) * period
        proj = vecs[:n_full] @ basis.T
        last = n_full * period
        edges = np.concatenate([last + base_t[last + base_t < t_stop], [t_stop]])
        partial = _panel_integrals(flux, edges, orders) if edges.size > 1 else {k: 0.0 for k in orders}
        out = {}
        for k in orders:
            terms = sum(math.comb(k, q) * starts ** (k - q) * proj[:, q] for q in range(k + 1))
            out[k] = math.fsum(np.atleast_1d(terms)) + partial[k]
        return out

    n_periods = int(np.floor(t_stop / period))
    starts = np.arange(n_periods + 1) * period
    grid = (starts[:, None] + base_t[None, :-1]).ravel()
    grid = np.concatenate([grid[grid < t_stop], [t_stop]])
    x = state(grid)
    return SurvivalTrace(
        t=grid, p=x[0], y=x[1] if m == 2 else None, t_end=t_stop, state=state, flux=flux,
        tail_rate=tail, period=period, rtol=rtol, atol=atol, survival_floor=survival_floor,
        n_steps=base_t.size - 1, moment_integrals=moment_integrals,
    )


def solve_survival(
    rate,
    survival_floor: float = SURVIVAL_FLOOR,
    t_cap: float = 1e6,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
    samples_per_period: int = 512,
    t_end: Optional[float] = None,
) -> SurvivalTrace:
    """Integrate ``dP_L/dt = -W(t) P_L`` from ``P_L(0) = 1`` until ``P_L < survival_floor``.

    ``rate`` may be a :class:`RateFunction` (prepared automatically), a
    prepared rate, any callable of time, or a number. Pass ``t_end`` to stop
    at a fixed time instead of the floor.
    """
    w = prepare_rate(rate, samples_per_period)
    return _solve_linear([w], 0.0, rtol, atol, survival_floor, t_cap, t_end)


def solve_survival_noise_averaged(
    w0,
    w1,
    nu: float,
    survival_floor: float = SURVIVAL_FLOOR,
    t_cap: float = 1e6,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
    samples_per_period: int = 512,
    t_end: Optional[float] = None,
) -> SurvivalTrace:
    """Noise-averaged survival ``<P_L>`` coupled to ``y = <eta P_L>``; ``y(0) = 0``."""
    for w in (w0, w1):
        if isinstance(w, RateFunction) and isinstance(w.tunneling, DichotomousTunneling):
            if not math.isclose(w.tunneling.rate, nu):
                raise ValueError("component rates were built for a different Poisson rate")
    r0 = prepare_rate(w0, samples_per_period)
    r1 = prepare_rate(w1, samples_per_period)
    return _solve_linear([r0, r1], nu, rtol, atol, survival_floor, t_cap, t_end)


# ---------------------------------------------------------------------------
# telegraph noise without bias: closed forms


def static_rates(nu: float, delta_amp: float, bath: BathParams, cfg: QuadratureConfig = QuadratureConfig()):
    """Time-independent component rates ``(W_0, W_1)`` for zero bias."""
    a0 = a_nu(0.0, bath, cfg)
    an = a_nu(nu, bath, cfg)
    return DELTA0**2 * a0 + delta_amp**2 * an, DELTA0 * delta_amp * (a0 + an)


@dataclass(frozen=True)
class BiExponential:
    """``<P_L>(t) = c1 exp(-gamma1 t) + c2 exp(-gamma2 t)``."""

    c1: float
    c2: float
    gamma1: float
    gamma2: float
    d: float
    w0: float
    w1: float
    nu: float

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c1 * np.exp(-self.gamma1 * t) + self.c2 * np.exp(-self.gamma2 * t)
        return float(out) if out.ndim == 0 else out

    def density(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c1 * self.gamma1 * np.exp(-self.gamma1 * t) + self.c2 * self.gamma2 * np.exp(-self.gamma2 * t)
        return float(out) if out.ndim == 0 else out

    def correlation(self, t):
        """``y(t) = <eta P_L>`` from the first survival equation."""
        if self.w1 == 0:
            return 0.0 * np.asarray(t, dtype=float)
        return (self.density(t) - self.w0 * self.survival(t)) / self.w1

    @property
    def mfpt(self) -> float:
        return self.c1 / self.gamma1 + self.c2 / self.gamma2


def _biexponential(nu, w0, w1) -> BiExponential:
    d = math.sqrt(nu * nu + 4.0 * w1 * w1)
    if d == 0.0:
        return BiExponential(1.0, 0.0, w0, w0, 0.0, w0, w1, nu)
    return BiExponential(
        c1=(d + nu) / (2 * d),
        c2=(d - nu) / (2 * d),
        gamma1=(2 * w0 + nu - d) / 2,
        gamma2=(2 * w0 + nu + d) / 2,
        d=d,
        w0=w0,
        w1=w1,
        nu=nu,
    )


def _check_amplitude(delta_amp):
    if not 0 <= delta_amp < DELTA0:
        raise ValueError(f"noise amplitude must lie in [0, 1), got {delta_amp}")


def analytic_survival_dichotomous(nu, delta_amp, bath: BathParams, t=None, cfg=QuadratureConfig()):
    """Closed-form noise-averaged survival for zero bias.

    Returns ``(P_L(t), components)``; with ``t=None`` only the
    :class:`BiExponential` components are returned.
    """
    _check_amplitude(delta_amp)
    if not nu >= 0:
        raise ValueError("nu must be non-negative")
    w0, w1 = static_rates(nu, delta_amp, bath, cfg)
    comp = _biexponential(nu, w0, w1)
    if t is None:
        return comp
    return comp.survival(t), comp


def mfpt_analytic(nu, delta_amp, bath: BathParams, cfg=QuadratureConfig()) -> float:
    """MFPT ``(W_0 + nu)/(W_0^2 + nu W_0 - W_1^2)`` for zero bias."""
    _check_amplitude(delta_amp)
    w0, w1 = static_rates(nu, delta_amp, bath, cfg)
    den = w0 * w0 + nu * w0 - w1 * w1
    if not den > 0:
        raise ValueError("non-positive MFPT denominator: noise amplitude too close to Delta_0")
    return (w0 + nu) / den


def biexponential_pdf(comp: BiExponential, survival_floor: float = SURVIVAL_FLOOR, n_grid: int = 2000) -> FptPdf:
    """FptPdf of the closed-form bi-exponential survival."""
    slow = min(comp.gamma1, comp.gamma2) if comp.c2 > 0 else comp.gamma1
    t_end = brentq(lambda s: comp.survival(s) - FLOOR_MARGIN * survival_floor, 0.0, 2 * math.log(1 / survival_floor) / slow + 1)
    edges = np.unique(np.concatenate([
        np.linspace(0.0, t_end, n_grid),
        np.geomspace(1e-3, t_end, 200) if t_end > 1e-3 else [],
    ]))
    return _make_pdf(edges, comp.density(edges), t_end, comp.survival(t_end), slow, comp.density, edges,
                     comp.survival)


# ---------------------------------------------------------------------------
# driving setups and phase averaging


@dataclass(frozen=True)
class DrivingSetup:
    """One driving configuration: tunneling modulation, bias and bath."""

    tunneling: TunnelingModulation = StaticTunneling()
    bias: BiasModulation = ZeroBias()
    bath: BathParams = BathParams()
    mode: str = STATIONARY
    cfg: QuadratureConfig = QuadratureConfig()
    samples_per_period: int = 512

    @property
    def noisy(self) -> bool:
        return isinstance(self.tunneling, DichotomousTunneling)

    @property
    def frequency(self) -> Optional[float]:
        return drive_frequency(self.tunneling, self.bias)

    @property
    def period(self) -> Optional[float]:
        w = self.frequency
        return None if w is None else 2 * math.pi / w

    def rate(self, direction=FORWARD, component=None) -> RateFunction:
        return RateFunction(self.tunneling, self.bias, self.bath, direction, self.mode, self.cfg, component)

    def prepared_rates(self, direction=FORWARD):
        """Fast evaluators: ``[W]`` or ``[W_0, W_1]`` for noisy setups."""
        if self.noisy:
            return [prepare_rate(self.rate(direction, i), self.samples_per_period) for i in (0, 1)]
        return [prepare_rate(self.rate(direction), self.samples_per_period)]

    def solve(self, rates=None, **kwargs) -> SurvivalTrace:
        rates = self.prepared_rates() if rates is None else rates
        if self.noisy:
            return solve_survival_noise_averaged(rates[0], rates[1], self.tunneling.rate, **kwargs)
        return solve_survival(rates[0], **kwargs)


def _phase_shift(rates, phase):
    return [r.with_phase(phase) for r in rates]


def _average_pdf(components: List[FptPdf], weights, with_grid=True, max_points=20000) -> FptPdf:
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    t_end = max(c.t_end for c in components)

    def density(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for w, c in zip(weights, components):
            inside = t <= c.t_end
            out[inside] += w * c.density(t[inside])
        return out

    if with_grid:
        grid = np.unique(np.concatenate([c.t for c in components]))
        if grid.size > max_points:
            idx = np.linspace(0, grid.size - 1, max_points).round().astype(int)
            grid = grid[np.unique(idx)]
        g = density(grid)
    else:
        grid = np.array([0.0, t_end])
        g = density(grid)
    norm = float(np.dot(weights, [c.normalization for c in components]))
    moments = {n: float(np.dot(weights, [c.moments[n] for c in components])) for n in components[0].moments}
    return FptPdf(
        t=grid,
        g=g,
        t_end=t_end,
        p_end=float(np.dot(weights, [c.p_end for c in components])),
        tail_rate=min(c.tail_rate for c in components),
        density=density,
        edges=None,
        normalization=norm,
        moments=moments,
        components=components,
        weights=weights,
        survival=lambda t: sum(w * c.remaining(t) for w, c in zip(weights, components)),
    )


def phase_averaged_pdf(setup: DrivingSetup, n_phases: int = 40, workers: int = 1, with_grid: bool = True, **solve_kw):
    """Average the first-passage density over uniformly spaced initial phases.

    Returns ``(averaged_pdf, phases, per_phase_pdfs)``.
    """
    if setup.frequency is None:
        warnings.warn("setup has no periodic component; phase average is the static pdf", stacklevel=2)
        pdf = fpt_pdf(setup.solve(**solve_kw))
        return _average_pdf([pdf], [1.0], with_grid), np.zeros(1), [pdf]
    phases = 2 * math.pi * np.arange(n_phases) / n_phases
    base = setup.prepared_rates()

    def one(phi):
        try:
            return fpt_pdf(setup.solve(_phase_shift(base, phi), **solve_kw))
        except Exception as exc:
            raise type(exc)(f"{exc} (phase phi={phi:.6f})") if not isinstance(exc, IncompleteAbsorptionError) \
                else IncompleteAbsorptionError(f"{exc} (phase phi={phi:.6f})", exc.residual)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            pdfs = list(pool.map(one, phases))
    else:
        pdfs = [one(phi) for phi in phases]
    return _average_pdf(pdfs, np.ones(n_phases), with_grid), phases, pdfs


# ---------------------------------------------------------------------------
# cyclostationary populations and residence times


@dataclass
class AsymptoticPopulation:
    """Periodic asymptotic population ``P_R(s)`` of the reflecting two-state chain."""

    s: np.ndarray
    p_r: np.ndarray
    period: float
    periods_iterated: int
    evaluate: Callable = field(repr=False)

    def __call__(self, s):
        return self.evaluate(np.mod(np.asarray(s, dtype=float), self.period))


def asymptotic_populations(
    forward,
    backward,
    period: float,
    tol: float = 1e-8,
    period_cap: int = 100_000,
    n_samples: int = 256,
    rtol: float = 1e-10,
    atol: float = 1e-13,
) -> AsymptoticPopulation:
    """Cyclostationary right-state population of ``dP_R/dt = W+ P_L - W- P_R``.

    Starting from ``P_L = 1`` the equation is propagated period by period
    until the sup-norm change between consecutive periods drops below
    ``tol``. The one-period propagation is affine in the initial value, so it
    is computed once from two solutions and then iterated.
    """
    wp = prepare_rate(forward)
    wm = prepare_rate(backward)

    def rhs(t, x):
        a, b = wp(t), wm(t)
        # x[0]: particular solution from P_R(0)=0; x[1]: homogeneous from 1
        return np.array([a * (1.0 - x[0]) - b * x[0], -(a + b) * x[1]])

    sol = solve_ivp(rhs, (0.0, period), [0.0, 1.0], method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, max_step=period / 8)
    if not sol.success:
        raise RuntimeError(f"ODE solver failed: {sol.message}")
    s = np.linspace(0.0, period, n_samples, endpoint=False)
    uv = sol.sol(s)
    u_end, v_end = sol.y[0, -1], sol.y[1, -1]
    v_sup = float(np.max(np.abs(uv[1])))
    p0 = 0.0
    for n in range(1, period_cap + 1):
        p_next = u_end + v_end * p0
        change = abs(p_next - p0) * v_sup
        p0 = p_next
        if change < tol:
            break
    else:
        raise ConvergenceError(f"asymptotic populations did not converge in {period_cap} periods")

    def evaluate(x):
        w = sol.sol(x)
        return w[0] + w[1] * p0

    return AsymptoticPopulation(s=s, p_r=evaluate(s), period=period, periods_iterated=n, evaluate=evaluate)


def residence_time_pdf(
    setup: DrivingSetup,
    t_grid=None,
    n_entrance: int = 128,
    workers: int = 1,
    **solve_kw,
) -> FptPdf:
    """Residence-time density in the left state under cyclostationary re-entry.

    Entrance times ``s`` over one period are weighted by
    ``W-(s) P_R(s)``; each contributes the first-passage density of a particle
    entering the left state at ``s`` with the drive keeping its absolute phase.
    The returned pdf carries the conditional pdfs in ``components``.
    """
    if setup.noisy:
        raise TypeError("residence times are defined for deterministic periodic driving")
    if setup.period is None:
        raise ValueError("residence-time pdf needs a periodic drive")
    if isinstance(setup.bias, PeriodicBias) and setup.bias.amplitude > 0:
        warnings.warn("residence-time pdf with a driven bias is an extrapolation of the zero-bias setup",
                      stacklevel=2)
    st = DrivingSetup(setup.tunneling, setup.bias, setup.bath, STATIONARY, setup.cfg, setup.samples_per_period)
    period = st.period
    omega = st.frequency
    phi0 = _drive_phase(st)
    wp = st.prepared_rates(FORWARD)[0]
    wm = st.prepared_rates(BACKWARD)[0]
    pop = asymptotic_populations(wp, wm, period)
    s = np.arange(n_entrance) * period / n_entrance
    weights = np.asarray(wm(s)) * pop(s)

    def one(sk):
        return fpt_pdf(solve_survival(wp.with_phase(phi0 + omega * sk), **solve_kw))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            pdfs = list(pool.map(one, s))
    else:
        pdfs = [one(sk) for sk in s]
    avg = _average_pdf(pdfs, weights, with_grid=t_grid is None)
    if t_grid is not None:
        t_grid = np.asarray(t_grid, dtype=float)
        avg.t = t_grid
        avg.g = avg.density(t_grid)
    return avg


def _drive_phase(setup: DrivingSetup) -> float:
    for m in (setup.tunneling, setup.bias):
        if isinstance(m, (PeriodicTunneling, PeriodicBias)):
            return m.phase
    return 0.0

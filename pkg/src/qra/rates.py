"""NIBA transition rates of the driven incoherent two-state system.

Deterministic rates (static or periodic tunneling, any bias)::

    W(t) = Delta(t)/2 int_0^U dtau Delta(t - tau) exp(-Q'(tau)) cos[Q''(tau) -+ zeta(t, t - tau)]

with the upper sign for the forward (left to right) rate. Telegraph-noise
component rates replace ``Delta(t)Delta(t - tau)`` by ``S_0(tau)`` or
``S_1(tau)``. The upper limit ``U`` is infinity (truncated at ``tau_max``) in
the stationary mode and ``t`` in the improved mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bath import BathParams, bath_kernel
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
    tunneling_value,
    with_phase,
    zeta,
)
from .quadrature import QuadratureConfig, QuadratureError, integrate, kernel_breakpoints, tau_max

__all__ = [
    "FORWARD",
    "BACKWARD",
    "STATIONARY",
    "IMPROVED",
    "NumericalRegimeError",
    "a_nu",
    "RateFunction",
    "PeriodicRate",
    "ConstantRate",
    "transition_rate",
    "noise_component_rate",
    "build_periodic_cache",
]

FORWARD, BACKWARD = "forward", "backward"
STATIONARY, IMPROVED = "stationary", "improved"


class NumericalRegimeError(ArithmeticError):
    """A rate came out clearly negative: the parameters leave the valid regime."""


def a_nu(nu: float, bath: BathParams, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Static coefficient ``a_nu = 1/2 int_0^inf exp(-nu tau - Q'(tau)) cos Q''(tau) dtau``."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    upper = tau_max(bath, nu, cfg.tail_cut)

    def f(tau):
        env, phase = bath_kernel(tau, bath)
        return 0.5 * np.exp(-nu * tau) * env * np.cos(phase)

    value, _ = integrate(f, 0.0, upper, cfg.abs_tol, cfg.rel_tol, breakpoints=kernel_breakpoints(upper, bath))
    return value


def _direction_sign(direction: str) -> float:
    if direction == FORWARD:
        return 1.0
    if direction == BACKWARD:
        return -1.0
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


@dataclass(frozen=True)
class RateFunction:
    """Time-dependent forward or backward rate for one driving configuration.

    ``component`` selects the kind of rate: ``None`` for the rate of a
    deterministic tunneling modulation, ``0`` or ``1`` for the telegraph-noise
    component rates entering the noise-averaged survival equations.
    Instances are callable on scalars or arrays of times.
    """

    tunneling: TunnelingModulation = StaticTunneling()
    bias: BiasModulation = ZeroBias()
    bath: BathParams = BathParams()
    direction: str = FORWARD
    mode: str = STATIONARY
    cfg: QuadratureConfig = QuadratureConfig()
    component: Optional[int] = None
    clamped: list = field(default_factory=lambda: [0], compare=False, repr=False)
    _memo: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        _direction_sign(self.direction)
        if self.mode not in (STATIONARY, IMPROVED):
            raise ValueError(f"mode must be 'stationary' or 'improved', got {self.mode!r}")
        if self.component is None:
            if isinstance(self.tunneling, DichotomousTunneling):
                raise TypeError("dichotomous tunneling needs component rates (component=0 or 1)")
        elif self.component in (0, 1):
            if not isinstance(self.tunneling, DichotomousTunneling):
                raise TypeError("component rates require dichotomous tunneling")
        else:
            raise ValueError("component must be None, 0 or 1")
        drive_frequency(self.tunneling, self.bias)

    # -- properties ---------------------------------------------------------
    @property
    def frequency(self) -> Optional[float]:
        return drive_frequency(self.tunneling, self.bias)

    @property
    def period(self) -> Optional[float]:
        w = self.frequency
        return None if w is None else 2.0 * np.pi / w

    @property
    def tau_max(self) -> float:
        if "tau_max" not in self._memo:
            self._memo["tau_max"] = tau_max(self.bath, 0.0, self.cfg.tail_cut)
        return self._memo["tau_max"]

    @property
    def is_constant(self) -> bool:
        return self.mode == STATIONARY and self.frequency is None

    @property
    def negative_clamps(self) -> int:
        return self.clamped[0]

    def with_phase(self, phase: float) -> "RateFunction":
        return replace(
            self,
            tunneling=with_phase(self.tunneling, phase),
            bias=with_phase(self.bias, phase),
            clamped=[0],
            _memo={},
        )

    def stationary(self) -> "RateFunction":
        return replace(self, mode=STATIONARY, clamped=[0], _memo={})

    # -- evaluation ---------------------------------------------------------
    def __call__(self, t):
        values, _ = self.evaluate(t)
        return values

    def evaluate(self, t):
        """Rate values and quadrature error estimates at time(s) ``t >= 0``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < 0):
            raise ValueError("rates are defined for t >= 0")
        if self.is_constant:
            if "constant" not in self._memo:
                self._memo["constant"] = self._integrate(np.zeros(1), self.tau_max)
            v, e = self._memo["constant"]
            values, errors = np.full(t_arr.shape, v[0]), np.full(t_arr.shape, e[0])
        else:
            values = np.empty_like(t_arr)
            errors = np.empty_like(t_arr)
            late = t_arr >= self.tau_max if self.mode == IMPROVED else np.ones(t_arr.shape, bool)
            if late.any():
                values[late], errors[late] = self._integrate(t_arr[late], self.tau_max)
            for i in np.flatnonzero(~late):
                v, e = self._integrate(t_arr[i:i + 1], t_arr[i])
                values[i], errors[i] = v[0], e[0]
        values = self._check_sign(values)
        if np.ndim(t) == 0:
            return float(values[0]), float(errors[0])
        return values, errors

    def _check_sign(self, values):
        if self.component == 1:
            return values
        neg = values < 0
        if neg.any():
            if np.any(values < -self.cfg.abs_tol):
                raise NumericalRegimeError(
                    f"rate evaluated to {values.min():.3e} < 0 beyond tolerance; "
                    "parameters are outside the incoherent-rate regime"
                )
            self.clamped[0] += int(neg.sum())
            values = np.where(neg, 0.0, values)
        return values

    def _integrate(self, times, upper):
        if upper <= 0:
            return np.zeros(times.shape), np.zeros(times.shape)
        sign = _direction_sign(self.direction)
        bath, bias, tun = self.bath, self.bias, self.tunneling
        if self.component is None:
            delta_now = tunneling_value(times, tun)
        max_panel = None
        if isinstance(bias, PeriodicBias):
            max_panel = np.pi / bias.frequency
        if isinstance(tun, PeriodicTunneling):
            cap = np.pi / tun.frequency
            max_panel = cap if max_panel is None else min(max_panel, cap)

        def integrand(tau):
            env, q2 = bath_kernel(tau, bath)
            tau_c = tau[:, None]
            past = times[None, :] - tau_c
            if isinstance(bias, ZeroBias):
                phase = np.broadcast_to(q2[:, None], past.shape)
            else:
                phase = q2[:, None] - sign * zeta(np.broadcast_to(times[None, :], past.shape), past, bias)
            if self.component is None:
                weight = 0.5 * delta_now[None, :] * tunneling_value(past, tun)
            else:
                d, nu = tun.amplitude, tun.rate
                decay = np.exp(-nu * tau_c)
                if self.component == 0:
                    weight = 0.5 * (DELTA0**2 + d * d * decay)
                else:
                    weight = 0.5 * DELTA0 * d * (1.0 + decay)
                weight = np.broadcast_to(weight, past.shape)
            return weight * env[:, None] * np.cos(phase)

        value, err = integrate(
            integrand,
            0.0,
            upper,
            self.cfg.abs_tol,
            self.cfg.rel_tol,
            breakpoints=kernel_breakpoints(upper, bath),
            max_panel=max_panel,
        )
        return np.atleast_1d(value), np.atleast_1d(err)


def transition_rate(
    t,
    direction: str = FORWARD,
    mode: str = STATIONARY,
    mod: TunnelingModulation = StaticTunneling(),
    bias: BiasModulation = ZeroBias(),
    bath: BathParams = BathParams(),
    cfg: QuadratureConfig = QuadratureConfig(),
):
    """Forward/backward rate for deterministic tunneling modulation at time(s) ``t``."""
    if isinstance(mod, DichotomousTunneling):
        raise TypeError("use noise_component_rate for dichotomous tunneling")
    return RateFunction(mod, bias, bath, direction, mode, cfg)(t)


def noise_component_rate(
    t,
    index: int,
    mode: str = STATIONARY,
    mod: Optional[DichotomousTunneling] = None,
    bias: BiasModulation = ZeroBias(),
    bath: BathParams = BathParams(),
    cfg: QuadratureConfig = QuadratureConfig(),
    direction: str = FORWARD,
):
    """Telegraph-noise component rate ``W_index(t)`` (index 0 or 1)."""
    if not isinstance(mod, DichotomousTunneling):
        raise TypeError("noise component rates need a DichotomousTunneling modulation")
    return RateFunction(mod, bias, bath, direction, mode, cfg, component=index)(t)


@dataclass(frozen=True)
class ConstantRate:
    """Time-independent rate; ``period`` is None."""

    value: float
    period = None
    frequency = None

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        return self.value if t_arr.ndim == 0 else np.full(t_arr.shape, self.value)

    @property
    def mean(self) -> float:
        return self.value

    def with_phase(self, phase: float) -> "ConstantRate":
        return self

    def integral(self, t0, t1):
        return self.value * (np.asarray(t1, dtype=float) - np.asarray(t0, dtype=float))


@dataclass(frozen=True)
class PeriodicRate:
    """Periodic rate stored as a truncated Fourier series in the drive phase.

    ``value(t) = sum_k c_k exp(i k (frequency*t + shift))``; shifting the
    phase of the drive only changes ``shift``, so one cache serves every
    initial phase.
    """

    coefficients: np.ndarray
    frequency: float
    base_phase: float = 0.0
    shift: float = 0.0
    samples_per_period: int = 0
    max_probe_error: float = 0.0

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.frequency

    @property
    def mean(self) -> float:
        return float(self.coefficients[0].real)

    def with_phase(self, phase: float) -> "PeriodicRate":
        return replace(self, shift=phase - self.base_phase)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        theta = self.frequency * t_arr + self.shift
        c = self.coefficients
        k = np.arange(1, c.size)
        if t_arr.ndim == 0:
            val = c[0].real + 2.0 * np.dot(c[1:], np.exp(1j * k * theta)).real
            return float(val)
        ph = np.exp(1j * np.multiply.outer(theta, k))
        return c[0].real + 2.0 * (ph @ c[1:]).real

    def integral(self, t0, t1):
        """Exact ``int_{t0}^{t1} value(t) dt``."""
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        c = self.coefficients
        k = np.arange(1, c.size)
        out = c[0].real * (t1 - t0)
        if k.size:
            th0 = self.frequency * t0 + self.shift
            th1 = self.frequency * t1 + self.shift
            e = np.exp(1j * np.multiply.outer(th1, k)) - np.exp(1j * np.multiply.outer(th0, k))
            out = out + 2.0 * (e @ (c[1:] / (1j * k * self.frequency))).real
        return float(out) if np.ndim(out) == 0 else out


def build_periodic_cache(rate: RateFunction, samples_per_period: int = 512, n_probes: int = 8):
    """Replace a periodic stationary rate by its interpolating Fourier series.

    Constant (undriven) rates are returned as :class:`ConstantRate`. The
    interpolant is checked against direct quadrature at off-grid probes and
    the largest relative deviation is stored in ``max_probe_error``.
    """
    if not isinstance(rate, RateFunction):
        raise TypeError("build_periodic_cache expects a RateFunction")
    if rate.mode != STATIONARY:
        raise ValueError("improved-mode rates are not periodic; use the stationary mode")
    if rate.is_constant:
        return ConstantRate(float(rate(0.0)))
    omega = rate.frequency
    n = int(samples_per_period)
    if n < 8:
        raise ValueError("need at least 8 samples per period")
    # theta = omega*t + base_phase; sample the phase-0 copy on a uniform theta grid
    base = _base_phase(rate)
    times = np.arange(n) * (2.0 * np.pi / n) / omega
    samples = rate.with_phase(0.0)(times)
    c = np.fft.rfft(samples) / n
    if n % 2 == 0:
        c = c[:-1]  # drop the Nyquist term; it is below tolerance for resolved rates
    # coefficients below 1e-3*abs_tol are quadrature noise
    keep = np.flatnonzero(np.abs(c) > max(1e-15 * abs(c[0]), 1e-3 * rate.cfg.abs_tol))
    c = c[: keep.max() + 1] if keep.size else c[:1]
    cache = PeriodicRate(np.asarray(c, dtype=complex), omega, base_phase=0.0, samples_per_period=n)

    probe_t = (np.linspace(0, n, n_probes, endpoint=False).astype(int) + 0.5) * (2.0 * np.pi / n) / omega
    direct = rate.with_phase(0.0)(probe_t)
    err = float(np.max(np.abs(cache(probe_t) - direct) / np.maximum(np.abs(direct), rate.cfg.abs_tol)))
    cache = replace(cache, max_probe_error=err, base_phase=0.0)
    return cache.with_phase(base) if base else cache


def _base_phase(rate: RateFunction) -> float:
    for m in (rate.tunneling, rate.bias):
        if isinstance(m, (PeriodicTunneling, PeriodicBias)):
            return m.phase
    return 0.0


__all__ += ["QuadratureError"]

"""MFPT sweeps, limiting values and crossing points of resonant activation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .bath import BathParams, bath_kernel
from .dynamics import (
    DrivingSetup,
    fpt_pdf,
    mfpt_analytic,
    phase_averaged_pdf,
)
from .modulation import (
    DELTA0,
    DichotomousTunneling,
    PeriodicBias,
    PeriodicTunneling,
    StaticTunneling,
    ZeroBias,
)
from .quadrature import QuadratureConfig, integrate, kernel_breakpoints, tau_max
from .rates import STATIONARY, a_nu

__all__ = [
    "NOISE_RATE",
    "DRIVE_TUNNELING",
    "DRIVE_BIAS",
    "COMBINED",
    "SWEEPS",
    "APPROX_NU",
    "ScanError",
    "RootNotFoundError",
    "ScanResult",
    "mfpt_limits",
    "crossing_rate_exact",
    "crossing_rate_approx",
    "frozen_bias_rate",
    "scan_mfpt",
    "crossing_from_scan",
    "log_grid",
]

NOISE_RATE = "noise_rate"
DRIVE_TUNNELING = "drive_frequency_tunneling"
DRIVE_BIAS = "drive_frequency_bias"
COMBINED = "combined"
SWEEPS = (NOISE_RATE, DRIVE_TUNNELING, DRIVE_BIAS, COMBINED)

# Poisson rate at which a_nu is frozen in the approximate crossing formula;
# kept fixed when the coupling strength changes.
APPROX_NU = 0.06

FAILURE_FRACTION = 0.10


class ScanError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class RootNotFoundError(ValueError):
    pass


@dataclass
class ScanResult:
    """MFPT as a function of one sweep variable.

    ``references`` holds horizontal reference lines (``static``,
    ``adiabatic``, ``high_rate`` or ``high_frequency``) that do not depend on
    the sweep variable. ``diagnostics`` has one dict per grid point;
    ``failures`` lists ``(index, message)`` for points that raised.
    """

    variable: str
    grid: np.ndarray
    mfpt: np.ndarray
    references: Dict[str, float]
    diagnostics: List[dict] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)
    sweep: str = NOISE_RATE
    settings: dict = field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.mfpt)

    def argmin(self) -> int:
        return int(np.nanargmin(self.mfpt))


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` log-spaced points from ``lo`` to ``hi`` inclusive."""
    if not 0 < lo < hi:
        raise ValueError("log grid needs 0 < lo < hi")
    return np.geomspace(lo, hi, n)


def _check_amplitude(delta_amp):
    if not 0 <= delta_amp < DELTA0:
        raise ValueError(f"noise amplitude must lie in [0, 1), got {delta_amp}")


def mfpt_limits(delta_amp: float, bath: BathParams = BathParams(), cfg: QuadratureConfig = QuadratureConfig()):
    """Static, high-rate and adiabatic MFPT for telegraph noise of amplitude ``delta_amp``.

    Returns
    -------
    static, high_rate, adiabatic : float
        ``1/(Delta_0^2 a_0)`` twice (fast noise restores the average
        configuration) and ``(Delta_0^2 + Delta^2)/(a_0 (Delta_0^2 - Delta^2)^2)``.
    """
    _check_amplitude(delta_amp)
    a0 = a_nu(0.0, bath, cfg)
    static = 1.0 / (DELTA0**2 * a0)
    d2 = delta_amp**2
    adiabatic = (DELTA0**2 + d2) / (a0 * (DELTA0**2 - d2) ** 2)
    return static, static, adiabatic


def crossing_rate_exact(
    delta_amp: float,
    bath: BathParams = BathParams(),
    bracket: Tuple[float, float] = (1e-3, 1.0),
    cfg: QuadratureConfig = QuadratureConfig(),
    rel_width: float = 1e-6,
) -> float:
    """Poisson rate where the analytic MFPT crosses the static value (nonadiabatic branch)."""
    if not 0 < delta_amp < DELTA0:
        raise ValueError("crossing rate needs 0 < delta_amp < 1")
    static = 1.0 / (DELTA0**2 * a_nu(0.0, bath, cfg))

    def f(nu):
        return mfpt_analytic(nu, delta_amp, bath, cfg) - static

    lo, hi = bracket
    f_lo, f_hi = f(lo), f(hi)
    if not f_lo * f_hi < 0:
        raise RootNotFoundError(f"no sign change of t1 - static on [{lo:g}, {hi:g}]")
    return brentq(f, lo, hi, xtol=1e-15, rtol=rel_width)


def crossing_rate_approx(delta_amp: float, bath: BathParams = BathParams(), cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Leading-order crossing rate with ``a_nu`` frozen at ``nu = 0.06``."""
    _check_amplitude(delta_amp)
    a0 = a_nu(0.0, bath, cfg)
    at = a_nu(APPROX_NU, bath, cfg)
    return DELTA0**2 * (a0 * a0 / at + a0 + at) - delta_amp**2 * at


def frozen_bias_rate(eps, bath: BathParams = BathParams(), cfg: QuadratureConfig = QuadratureConfig(), tunneling: float = DELTA0):
    """Forward rate for a constant bias ``eps`` (vectorized over ``eps``)."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    upper = tau_max(bath, 0.0, cfg.tail_cut)
    max_panel = math.pi / max(np.max(np.abs(eps)), 1e-12)

    def f(tau):
        env, q2 = bath_kernel(tau, bath)
        return 0.5 * tunneling**2 * env[:, None] * np.cos(q2[:, None] - eps[None, :] * tau[:, None])

    value, _ = integrate(f, 0.0, upper, cfg.abs_tol, cfg.rel_tol,
                         breakpoints=kernel_breakpoints(upper, bath), max_panel=min(max_panel, upper))
    return np.atleast_1d(value)


def _references(sweep, bath, cfg, noise_amplitude, drive_amplitude, bias_amplitude, n_phases):
    static = 1.0 / (DELTA0**2 * a_nu(0.0, bath, cfg))
    refs = {"static": static}
    if sweep == NOISE_RATE:
        _, high, adiabatic = mfpt_limits(noise_amplitude, bath, cfg)
        refs.update(high_rate=high, adiabatic=adiabatic)
    elif sweep == DRIVE_TUNNELING:
        # phase mean of 1/((1 + A cos phi)^2 a_0)
        refs.update(high_frequency=static, adiabatic=static / (1.0 - drive_amplitude**2) ** 1.5)
    elif sweep == DRIVE_BIAS and noise_amplitude == 0:
        phases = 2 * math.pi * np.arange(n_phases) / n_phases
        w = frozen_bias_rate(bias_amplitude * np.cos(phases), bath, cfg)
        refs.update(high_frequency=static, adiabatic=float(np.mean(1.0 / w)))
    return refs


def _setup_for(sweep, x, bath, cfg, mode, noise_amplitude, noise_rate, drive_amplitude, bias_amplitude,
               bias_frequency):
    if sweep in (NOISE_RATE, COMBINED):
        tun = DichotomousTunneling(noise_amplitude, x)
        bias = PeriodicBias(bias_amplitude, bias_frequency) if bias_amplitude > 0 else ZeroBias()
    elif sweep == DRIVE_TUNNELING:
        tun = PeriodicTunneling(drive_amplitude, x)
        bias = ZeroBias()
    else:
        tun = DichotomousTunneling(noise_amplitude, noise_rate) if noise_amplitude > 0 else StaticTunneling()
        bias = PeriodicBias(bias_amplitude, x)
    return DrivingSetup(tun, bias, bath, mode, cfg)


def scan_mfpt(
    sweep: str,
    grid: Sequence[float],
    *,
    bath: BathParams = BathParams(),
    noise_amplitude: float = 0.0,
    noise_rate: Optional[float] = None,
    drive_amplitude: float = 0.0,
    bias_amplitude: float = 0.0,
    bias_frequency: Optional[float] = None,
    n_phases: int = 40,
    mode: str = STATIONARY,
    cfg: QuadratureConfig = QuadratureConfig(),
    numeric: bool = False,
    workers: int = 1,
) -> ScanResult:
    """MFPT versus noise rate or driving frequency.

    Parameters
    ----------
    sweep : str
        ``"noise_rate"`` (telegraph noise on the tunneling element, optional
        periodic bias), ``"drive_frequency_tunneling"``,
        ``"drive_frequency_bias"`` (optionally with telegraph noise at fixed
        ``noise_rate``) or ``"combined"`` (noise-rate sweep under a periodic
        bias, which must be given).
    grid : sequence of float
        Strictly increasing sweep values.
    numeric : bool
        Force the ODE path even where the closed-form MFPT applies.
    workers : int
        Number of threads evaluating grid points concurrently.

    Points that fail are stored as NaN and listed in ``failures``; more
    than 10% failures raises :class:`ScanError` carrying the partial result.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; choose from {SWEEPS}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ValueError("sweep grid must be positive and strictly increasing")
    if sweep == COMBINED and not bias_amplitude > 0:
        raise ValueError("combined sweep needs a periodic bias (bias_amplitude > 0)")
    if bias_amplitude > 0 and sweep in (NOISE_RATE, COMBINED) and bias_frequency is None:
        raise ValueError("periodic bias needs bias_frequency")
    if sweep == DRIVE_BIAS and noise_amplitude > 0 and noise_rate is None:
        raise ValueError("noisy bias sweep needs noise_rate")

    refs = _references(sweep, bath, cfg, noise_amplitude, drive_amplitude, bias_amplitude, n_phases)
    analytic = sweep == NOISE_RATE and bias_amplitude == 0 and not numeric and mode == STATIONARY

    def point(x):
        if analytic:
            return mfpt_analytic(x, noise_amplitude, bath, cfg), {"method": "analytic"}
        setup = _setup_for(sweep, x, bath, cfg, mode, noise_amplitude, noise_rate, drive_amplitude,
                           bias_amplitude, bias_frequency)
        if setup.frequency is None:
            pdf = fpt_pdf(setup.solve())
            diag = {"method": "ode", "n_phases": 1}
        else:
            pdf, _, parts = phase_averaged_pdf(setup, n_phases, with_grid=False)
            diag = {"method": "ode-phase-average", "n_phases": n_phases,
                    "max_phase_defect": max(p.normalization_defect for p in parts)}
        diag["normalization_defect"] = pdf.normalization_defect
        return pdf.mfpt, diag

    def guarded(i):
        try:
            return point(grid[i]) + (None,)
        except Exception as exc:  # recorded per point
            return math.nan, {"method": "failed"}, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(guarded, range(grid.size)))
    else:
        outcomes = [guarded(i) for i in range(grid.size)]

    mfpt = np.array([o[0] for o in outcomes], dtype=float)
    diagnostics = [o[1] for o in outcomes]
    failures = [(i, o[2]) for i, o in enumerate(outcomes) if o[2] is not None]
    variable = "nu" if sweep in (NOISE_RATE, COMBINED) else ("omega_d" if sweep == DRIVE_TUNNELING else "omega_eps")
    result = ScanResult(
        variable=variable, grid=grid, mfpt=mfpt, references=refs, diagnostics=diagnostics,
        failures=failures, sweep=sweep,
        settings=dict(alpha=bath.alpha, omega_c=bath.omega_c, temperature=bath.temperature,
                      noise_amplitude=noise_amplitude, noise_rate=noise_rate, drive_amplitude=drive_amplitude,
                      bias_amplitude=bias_amplitude, bias_frequency=bias_frequency, n_phases=n_phases,
                      mode=mode, numeric=bool(numeric or not analytic)),
    )
    if len(failures) > FAILURE_FRACTION * grid.size:
        raise ScanError(f"{len(failures)} of {grid.size} scan points failed; first: {failures[0][1]}", result)
    return result


def crossing_from_scan(result: ScanResult, level: Optional[float] = None) -> float:
    """First downward crossing of ``level`` (default: the static line) by a scanned MFPT curve.

    The crossing is bracketed by a sign change on the grid and refined by
    root-finding on a monotone cubic interpolant in ``log(x)``.
    """
    level = result.references["static"] if level is None else level
    ok = result.ok
    x = np.log(result.grid[ok])
    diff = result.mfpt[ok] - level
    idx = np.flatnonzero((diff[:-1] > 0) & (diff[1:] <= 0))
    if idx.size == 0:
        raise RootNotFoundError("scan never drops below the reference level")
    i = int(idx[0])
    if diff[i + 1] == 0:
        return float(np.exp(x[i + 1]))
    interp = PchipInterpolator(x, diff)
    root = brentq(lambda s: float(interp(s)), x[i], x[i + 1], xtol=1e-12)
    return float(np.exp(root))

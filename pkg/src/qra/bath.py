"""Ohmic heat bath in the scaling limit.

All quantities are dimensionless: frequencies in units of the bare tunneling
frequency, times in its inverse, temperature in units of hbar*Delta_0/k_B.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BathParams",
    "RegimeWarning",
    "kappa",
    "correlation_exponent",
    "spectral_density",
    "bath_kernel",
    "log_sinhc",
]


class RegimeWarning(UserWarning):
    """Parameters lie outside the regime where the rate theory is justified."""


@dataclass(frozen=True)
class BathParams:
    """Ohmic bath: coupling ``alpha``, cutoff ``omega_c`` and ``temperature``."""

    alpha: float = 0.7
    omega_c: float = 10.0
    temperature: float = 0.2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.alpha <= 0.5:
            warnings.warn(
                f"alpha={self.alpha} <= 0.5: dynamics is not in the incoherent regime",
                RegimeWarning,
                stacklevel=3,
            )
        if self.temperature > 0.1 * self.omega_c:
            warnings.warn(
                f"T={self.temperature} is not small compared to omega_c={self.omega_c}; "
                "the scaling-limit bath exponent is inaccurate",
                RegimeWarning,
                stacklevel=3,
            )

    @property
    def kappa(self) -> float:
        return kappa(self)


def kappa(params: BathParams) -> float:
    """Thermal frequency pi*T."""
    return np.pi * params.temperature


def log_sinhc(x):
    """Return ``log(sinh(x)/x)`` for ``x >= 0`` without overflow or 0/0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-4
    large = x > 350.0
    mid = ~(small | large)
    xs = x[small]
    out[small] = xs * xs / 6.0 - xs**4 / 180.0
    xm = x[mid]
    out[mid] = np.log(np.sinh(xm) / xm)
    xl = x[large]
    out[large] = xl - np.log(2.0) - np.log(xl) + np.log1p(-np.exp(-2.0 * xl))
    return out


def correlation_exponent(t, params: BathParams):
    """Real and imaginary parts of the bath correlation exponent Q(t).

    Parameters
    ----------
    t : float or array_like
        Non-negative time(s).
    params : BathParams

    Returns
    -------
    q_real, q_imag : float or ndarray
        ``2 alpha ln[sqrt(1 + wc^2 t^2) sinh(kappa t)/(kappa t)]`` and
        ``2 alpha arctan(wc t)``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("correlation exponent is defined for t >= 0 only")
    a, wc = params.alpha, params.omega_c
    q_real = a * np.log1p((wc * t_arr) ** 2) + 2.0 * a * log_sinhc(kappa(params) * t_arr)
    q_imag = 2.0 * a * np.arctan(wc * t_arr)
    if t_arr.ndim == 0:
        return float(q_real), float(q_imag)
    return q_real, q_imag


def spectral_density(omega, params: BathParams):
    """Ohmic spectral density ``2 alpha omega exp(-omega/omega_c)``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    out = 2.0 * params.alpha * w * np.exp(-w / params.omega_c)
    return float(out) if out.ndim == 0 else out


def bath_kernel(tau, params: BathParams):
    """Envelope ``exp(-Q'(tau))`` and phase ``Q''(tau)`` of the rate integrands."""
    q_real, q_imag = correlation_exponent(np.asarray(tau, dtype=float), params)
    return np.exp(-np.asarray(q_real)), np.asarray(q_imag)

"""Modulations of the tunneling element Delta(t) and of the bias epsilon(t).

The bare tunneling element is the unit of frequency, so ``Delta_0 = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

__all__ = [
    "DELTA0",
    "StaticTunneling",
    "PeriodicTunneling",
    "DichotomousTunneling",
    "ZeroBias",
    "PeriodicBias",
    "TunnelingModulation",
    "BiasModulation",
    "zeta",
    "tunneling_value",
    "noise_autocorrelation",
    "with_phase",
    "drive_frequency",
]

DELTA0 = 1.0


@dataclass(frozen=True)
class StaticTunneling:
    pass


@dataclass(frozen=True)
class PeriodicTunneling:
    """``Delta(t) = 1 + amplitude*cos(frequency*t + phase)``."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not 0 <= self.amplitude < DELTA0:
            raise ValueError(f"periodic amplitude must lie in [0, 1), got {self.amplitude}")
        if not self.frequency > 0:
            raise ValueError(f"drive frequency must be positive, got {self.frequency}")


@dataclass(frozen=True)
class DichotomousTunneling:
    """``Delta(t) = 1 + amplitude*eta(t)`` with telegraph noise switching at ``rate``."""

    amplitude: float
    rate: float

    def __post_init__(self):
        # the adiabatic MFPT diverges when the amplitude reaches Delta_0
        if not 0 <= self.amplitude < DELTA0:
            raise ValueError(f"noise amplitude must lie in [0, 1), got {self.amplitude}")
        if not self.rate > 0:
            raise ValueError(f"Poisson rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class ZeroBias:
    pass


@dataclass(frozen=True)
class PeriodicBias:
    """``epsilon(t) = amplitude*cos(frequency*t + phase)``."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError(f"bias amplitude must be non-negative, got {self.amplitude}")
        if not self.frequency > 0:
            raise ValueError(f"bias frequency must be positive, got {self.frequency}")


TunnelingModulation = Union[StaticTunneling, PeriodicTunneling, DichotomousTunneling]
BiasModulation = Union[ZeroBias, PeriodicBias]


def zeta(t, t_prime, bias: BiasModulation):
    """Accumulated bias phase ``int_{t'}^{t} epsilon(s) ds`` in closed form."""
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    if np.any(t < t_prime):
        raise ValueError("zeta(t, t') requires t >= t'")
    if isinstance(bias, ZeroBias):
        out = np.zeros(np.broadcast(t, t_prime).shape)
    elif isinstance(bias, PeriodicBias):
        w, phi = bias.frequency, bias.phase
        out = (bias.amplitude / w) * (np.sin(w * t + phi) - np.sin(w * t_prime + phi))
    else:
        raise TypeError(f"unknown bias modulation {bias!r}")
    return float(out) if np.ndim(out) == 0 else out


def tunneling_value(t, mod: TunnelingModulation, noise_state: Optional[int] = None):
    """Instantaneous tunneling element Delta(t).

    A noise state (+1 or -1) must be given for dichotomous modulation and
    omitted otherwise.
    """
    if isinstance(mod, DichotomousTunneling):
        if noise_state not in (1, -1):
            raise TypeError("dichotomous tunneling needs noise_state = +1 or -1")
        out = np.full(np.shape(t), DELTA0 + mod.amplitude * noise_state)
        return float(out) if out.ndim == 0 else out
    if noise_state is not None:
        raise TypeError(f"noise_state is meaningless for {type(mod).__name__}")
    t = np.asarray(t, dtype=float)
    if isinstance(mod, StaticTunneling):
        out = np.full(t.shape, DELTA0)
    elif isinstance(mod, PeriodicTunneling):
        out = DELTA0 + mod.amplitude * np.cos(mod.frequency * t + mod.phase)
    else:
        raise TypeError(f"unknown tunneling modulation {mod!r}")
    return float(out) if out.ndim == 0 else out


def noise_autocorrelation(lag, mod: TunnelingModulation):
    """Correlation ``<xi(t) xi(t+lag)> = amplitude^2 exp(-rate*lag)`` of the noise."""
    if not isinstance(mod, DichotomousTunneling):
        raise TypeError("noise autocorrelation needs dichotomous tunneling")
    lag = np.asarray(lag, dtype=float)
    if np.any(lag < 0):
        raise ValueError("lag must be non-negative")
    out = mod.amplitude**2 * np.exp(-mod.rate * lag)
    return float(out) if out.ndim == 0 else out


def with_phase(mod, phase: float):
    """Copy of a periodic modulation with its initial phase replaced."""
    if isinstance(mod, (PeriodicTunneling, PeriodicBias)):
        return replace(mod, phase=phase)
    return mod


def drive_frequency(tunneling: TunnelingModulation, bias: BiasModulation) -> Optional[float]:
    """Angular frequency of the deterministic driving, or None if undriven.

    Raises if both the tunneling element and the bias are driven at
    different frequencies, since the rates are then not periodic.
    """
    freqs = {m.frequency for m in (tunneling, bias) if isinstance(m, (PeriodicTunneling, PeriodicBias))}
    if not freqs:
        return None
    if len(freqs) > 1:
        raise ValueError("tunneling and bias drives with different frequencies are not supported")
    return freqs.pop()

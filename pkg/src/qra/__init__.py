"""Resonant activation in the strongly damped, driven two-state system.

Incoherent tunneling rates for an Ohmic bath, first-passage statistics with
an absorbing state under periodic driving and telegraph noise, MFPT sweeps
and a Monte Carlo check of the noise averaging.
"""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bath import BathParams, RegimeWarning, correlation_exponent, kappa, spectral_density
from .modulation import (
    DELTA0,
    DichotomousTunneling,
    PeriodicBias,
    PeriodicTunneling,
    StaticTunneling,
    ZeroBias,
    noise_autocorrelation,
    tunneling_value,
    zeta,
)
from .quadrature import QuadratureConfig, QuadratureError
from .rates import (
    BACKWARD,
    FORWARD,
    IMPROVED,
    STATIONARY,
    NumericalRegimeError,
    RateFunction,
    a_nu,
    build_periodic_cache,
    noise_component_rate,
    transition_rate,
)
from .dynamics import (
    DrivingSetup,
    FptPdf,
    IncompleteAbsorptionError,
    SurvivalTrace,
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
from .analysis import (
    ScanResult,
    crossing_from_scan,
    crossing_rate_approx,
    crossing_rate_exact,
    mfpt_limits,
    scan_mfpt,
)
from .mc_oracle import NoisePath, mc_survival, path_rate, sample_noise_path

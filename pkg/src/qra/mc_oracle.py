"""Monte Carlo over telegraph-noise realizations of the tunneling element.

Each realization ``eta(t)`` gives a deterministic forward rate
``W(t) = Delta(t)/2 int_0^tau_max dtau Delta(t - tau) K(tau)`` and a survival
probability ``exp(-int_0^t W)``. Averaging over realizations gives an
independent estimate of ``<P_L>`` and ``y = <eta P_L>`` to set against the
noise-averaged equations.

Without bias the rate integral is linear in the piecewise-constant
``Delta``, so ``int_0^t W`` is assembled exactly from the tabulated first and
second antiderivatives of the kernel. With a periodic bias both integrals are
done by adaptive quadrature, which is far slower.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .bath import BathParams, bath_kernel
from .modulation import (
    DELTA0,
    BiasModulation,
    DichotomousTunneling,
    PeriodicBias,
    ZeroBias,
    zeta,
)
from .quadrature import QuadratureConfig, integrate, kernel_breakpoints, tau_max

__all__ = [
    "NoisePath",
    "KernelTables",
    "MCResult",
    "InsufficientHistoryError",
    "sample_noise_path",
    "path_rate",
    "path_exponent",
    "mc_survival",
]


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class NoisePath:
    """One telegraph-noise realization on ``[-t_hist, t_end]``.

    ``switches`` are the ordered switching times; ``eta0`` is the state at
    ``-t_hist``.
    """

    switches: np.ndarray
    eta0: int
    t_hist: float
    t_end: float
    seed: Optional[int] = None
    index: int = 0

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        n = np.searchsorted(self.switches, t, side="right")
        out = self.eta0 * (1 - 2 * (n % 2))
        return int(out) if out.ndim == 0 else out

    def switch_count(self, t0: float, t1: float) -> int:
        s = self.switches
        return int(np.count_nonzero((s > t0) & (s <= t1)))


def _path_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_noise_path(nu: float, t_hist: float, t_end: float, seed: int, index: int = 0) -> NoisePath:
    """Draw a telegraph path whose correlation decays as ``exp(-nu*|t - t'|)``.

    A symmetric two-state process with that correlation flips at rate
    ``nu/2``; this is the convention of the noise-averaged survival
    equations, where ``nu`` is the decay rate of ``y = <eta P_L>``.

    The stream depends only on ``(seed, index)``, so paths can be generated
    in any order or in parallel. The initial state is +1 or -1 with equal
    probability (the stationary distribution).
    """
    if not nu > 0:
        raise ValueError("Poisson rate must be positive")
    if t_hist < 0:
        raise ValueError("t_hist must be non-negative")
    rng = _path_rng(seed, index)
    eta0 = 1 if rng.random() < 0.5 else -1
    flip = 0.5 * nu
    span = t_end + t_hist
    times = []
    t = -t_hist
    # draw gaps in blocks sized to the expected count
    block = max(16, int(flip * span * 1.2) + 8)
    while True:
        gaps = rng.exponential(1.0 / flip, size=block)
        cum = t + np.cumsum(gaps)
        keep = cum[cum <= t_end]
        times.append(keep)
        if keep.size < block:
            break
        t = cum[-1]
    switches = np.concatenate(times) if times else np.empty(0)
    return NoisePath(switches, eta0, float(t_hist), float(t_end), seed, index)


# ---------------------------------------------------------------------------
# exact exponent for zero bias


class KernelTables:
    """Antiderivatives ``F(x) = int_0^x K`` and ``G(x) = int_0^x F`` of the bath kernel.

    Values at the nodes come from panel-wise Gauss-Legendre sums; between
    nodes they are interpolated by cubic Hermite splines whose derivative
    data are exact (``K`` and ``F``).
    """

    def __init__(self, bath: BathParams, cfg: QuadratureConfig = QuadratureConfig(), h: float = 2e-3):
        self.bath = bath
        self.tau_max = tau_max(bath, 0.0, cfg.tail_cut)
        n = int(math.ceil(self.tau_max / h))
        x = np.linspace(0.0, self.tau_max, n + 1)
        gx, gw = np.polynomial.legendre.leggauss(10)
        a, b = x[:-1], x[1:]
        half, mid = 0.5 * (b - a), 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * gx[None, :]
        k = self.kernel(nodes)
        w = half[:, None] * gw[None, :]
        f_panel = (w * k).sum(axis=1)
        m_panel = (w * k * nodes).sum(axis=1)
        F = np.concatenate([[0.0], np.cumsum(f_panel)])
        M1 = np.concatenate([[0.0], np.cumsum(m_panel)])
        G = x * F - M1
        self.x = x
        self._F = CubicHermiteSpline(x, F, self.kernel(x))
        self._G = CubicHermiteSpline(x, G, F)
        self.F_total = float(F[-1])
        self.G_total = float(G[-1])

    def kernel(self, tau):
        env, q2 = bath_kernel(tau, self.bath)
        return env * np.cos(q2)

    def F(self, x):
        return self._F(np.clip(x, 0.0, self.tau_max))

    def H(self, x):
        """``int_0^x F(clip(u, 0, tau_max)) du`` for any real ``x``."""
        x = np.asarray(x, dtype=float)
        inside = self._G(np.clip(x, 0.0, self.tau_max))
        beyond = self.G_total + self.F_total * (x - self.tau_max)
        return np.where(x <= 0.0, 0.0, np.where(x <= self.tau_max, inside, beyond))


@lru_cache(maxsize=8)
def _tables(bath: BathParams, cfg: QuadratureConfig) -> KernelTables:
    return KernelTables(bath, cfg)


def path_exponent(times, path: NoisePath, mod: DichotomousTunneling, tables: KernelTables):
    """Exact ``int_0^t W(s) ds`` at each of ``times`` for zero bias."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if path.t_hist < tables.tau_max * (1 - 1e-12):
        raise InsufficientHistoryError("path history shorter than the kernel memory time")
    s = path.switches
    d0, d = DELTA0, mod.amplitude
    etas = path.eta0 * (1 - 2 * (np.arange(s.size + 1) % 2))
    jumps = np.diff(etas).astype(float)
    inner = s[(s > 0) & (s < times.max())]
    edges = np.unique(np.concatenate([[0.0], inner, times]))
    a, b = edges[:-1], edges[1:]
    if a.size == 0:
        return np.zeros(times.shape)
    seg_eta = etas[np.searchsorted(s, 0.5 * (a + b), side="right")]
    # int_a^b J(u) du with J(u) = int_0^tau_max Delta(u - tau) K(tau) dtau
    base = (d0 + d * path.eta0) * tables.F_total * (b - a)
    if s.size:
        hb = tables.H(b[:, None] - s[None, :])
        ha = tables.H(a[:, None] - s[None, :])
        base = base + d * ((hb - ha) @ jumps)
    increments = 0.5 * (d0 + d * seg_eta) * base
    cum = np.concatenate([[0.0], np.cumsum(increments)])
    return cum[np.searchsorted(edges, times)]


# ---------------------------------------------------------------------------
# generic per-path rate


def path_rate(t: float, path: NoisePath, mod: DichotomousTunneling, bias: BiasModulation = ZeroBias(),
              bath: BathParams = BathParams(), cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Forward rate of a single noise realization at time ``t``.

    The tau-quadrature is split at every switching time so each panel sees a
    smooth integrand.
    """
    upper = tau_max(bath, 0.0, cfg.tail_cut)
    if t - upper < -path.t_hist * (1 + 1e-12) - 1e-12:
        raise InsufficientHistoryError(f"path does not cover [t - tau_max, t] at t={t:g}")
    if t > path.t_end:
        raise ValueError("t beyond the end of the noise path")
    d0, d = DELTA0, mod.amplitude
    s = path.switches
    lags = t - s[(s < t) & (s > t - upper)]
    delta_now = d0 + d * path.eta(t)
    max_panel = math.pi / bias.frequency if isinstance(bias, PeriodicBias) else None

    def f(tau):
        env, q2 = bath_kernel(tau, bath)
        past = t - tau
        if isinstance(bias, ZeroBias):
            phase = q2
        else:
            phase = q2 - zeta(np.full_like(tau, t), past, bias)
        return 0.5 * delta_now * (d0 + d * path.eta(past)) * env * np.cos(phase)

    bps = sorted(set(kernel_breakpoints(upper, bath)) | set(lags.tolist()))
    value, _ = integrate(f, 0.0, upper, cfg.abs_tol, cfg.rel_tol, breakpoints=bps, max_panel=max_panel)
    return value


def _quadrature_exponent(times, path, mod, bias, bath, cfg):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    s = path.switches
    w = np.vectorize(lambda u: path_rate(float(u), path, mod, bias, bath, cfg))
    edges = np.unique(np.concatenate([[0.0], s[(s > 0) & (s < times.max())], times]))
    incr = np.empty(edges.size - 1)
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        max_panel = None if not isinstance(bias, PeriodicBias) else math.pi / bias.frequency
        incr[i], _ = integrate(w, lo, hi, 1e-9, 1e-7, max_panel=max_panel)
    cum = np.concatenate([[0.0], np.cumsum(incr)])
    return cum[np.searchsorted(edges, times)]


# ---------------------------------------------------------------------------
# ensemble


@dataclass
class MCResult:
    """Ensemble estimates on the probe ``times``; stderr uses the sample standard deviation."""

    times: np.ndarray
    p_mean: np.ndarray
    p_stderr: np.ndarray
    y_mean: np.ndarray
    y_stderr: np.ndarray
    n_paths: int
    seed: int
    method: str


def _mean_and_stderr(samples: np.ndarray):
    n = samples.shape[0]
    mean = np.array([math.fsum(col) / n for col in samples.T])
    if n < 2:
        return mean, np.zeros_like(mean)
    dev = samples - mean[None, :]
    var = np.array([math.fsum(col) for col in (dev * dev).T]) / (n - 1)
    return mean, np.sqrt(var / n)


def mc_survival(
    mod: DichotomousTunneling,
    times: Sequence[float],
    n_paths: int = 5000,
    seed: int = 0,
    bias: BiasModulation = ZeroBias(),
    bath: BathParams = BathParams(),
    cfg: QuadratureConfig = QuadratureConfig(),
    workers: int = 1,
    method: str = "auto",
) -> MCResult:
    """Monte Carlo estimate of ``<P_L>(t)`` and ``<eta(t) P_L(t)>``.

    Parameters
    ----------
    mod : DichotomousTunneling
        Noise amplitude and Poisson rate.
    times : sequence of float
        Probe times, all positive.
    method : {"auto", "exact", "quadrature"}
        ``"exact"`` uses the kernel tables (zero bias only); ``"quadrature"``
        integrates every path rate numerically. ``"auto"`` picks the former
        whenever possible.

    Any per-path failure aborts the run.
    """
    if not isinstance(mod, DichotomousTunneling):
        raise TypeError("Monte Carlo oracle needs dichotomous tunneling")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times <= 0):
        raise ValueError("probe times must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if method == "auto":
        method = "exact" if isinstance(bias, ZeroBias) else "quadrature"
    if method == "exact" and not isinstance(bias, ZeroBias):
        raise ValueError("exact exponent requires zero bias")
    if method not in ("exact", "quadrature"):
        raise ValueError(f"unknown method {method!r}")

    t_hist = tau_max(bath, 0.0, cfg.tail_cut)
    t_end = float(times.max())
    tables = _tables(bath, cfg) if method == "exact" else None

    def run(index):
        path = sample_noise_path(mod.rate, t_hist, t_end, seed, index)
        if method == "exact":
            lam = path_exponent(times, path, mod, tables)
        else:
            lam = _quadrature_exponent(times, path, mod, bias, bath, cfg)
        p = np.exp(-lam)
        return p, path.eta(times) * p

    def chunk(lo, hi):
        return [run(i) for i in range(lo, hi)]

    bounds = np.linspace(0, n_paths, max(1, min(workers, n_paths)) + 1).astype(int)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: chunk(*b), zip(bounds[:-1], bounds[1:])))
    else:
        parts = [chunk(0, n_paths)]
    rows = [r for part in parts for r in part]
    p = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    p_mean, p_err = _mean_and_stderr(p)
    y_mean, y_err = _mean_and_stderr(y)
    return MCResult(times, p_mean, p_err, y_mean, y_err, n_paths, seed, method)

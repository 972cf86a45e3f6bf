"""Adaptive Gauss-Kronrod quadrature for vector-valued integrands and the
certified truncation of the semi-infinite rate integrals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bath import BathParams, correlation_exponent

__all__ = ["QuadratureConfig", "QuadratureError", "integrate", "tau_max", "kernel_breakpoints"]


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances of the rate integrals.

    ``tail_cut`` bounds the integrand envelope at the truncation point that
    replaces the infinite upper limit.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    tail_cut: float = 1e-12

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "tail_cut"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


class QuadratureError(ArithmeticError):
    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
_XK = np.array([
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144845693013,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.zeros(15)
_WG[1::2] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
]


def integrate(f, a, b, abs_tol=1e-10, rel_tol=1e-8, breakpoints=(), max_panel=None, max_panels=50_000):
    """Integrate ``f`` over ``[a, b]`` by adaptive G7-K15 subdivision.

    Parameters
    ----------
    f : callable
        Maps a 1-D array of abscissae of length n to an array of shape
        ``(n,)`` or ``(n, m)``; the latter integrates m functions at once
        with a shared panel refinement.
    a, b : float
        Finite integration limits, ``a <= b``.
    abs_tol, rel_tol : float
        A panel is accepted once its error estimate is below its share
        (by length) of ``max(abs_tol, rel_tol*|I|)`` for every component.
    breakpoints : sequence of float
        Points inside ``(a, b)`` where the integrand may be non-smooth.
    max_panel : float, optional
        Upper bound on the initial panel width.

    Returns
    -------
    value, error : float or ndarray
    """
    a, b = float(a), float(b)
    if b < a:
        raise ValueError("integrate requires a <= b")
    if b == a:
        probe = np.asarray(f(np.array([a])))
        zero = np.zeros(probe.shape[1:])
        return (0.0, 0.0) if zero.ndim == 0 else (zero, zero.copy())

    edges = np.unique(np.concatenate([[a, b], [p for p in breakpoints if a < p < b]]))
    if max_panel is not None:
        refined = [edges[0]]
        for lo, hi in zip(edges[:-1], edges[1:]):
            n = max(1, int(np.ceil((hi - lo) / max_panel)))
            refined.extend(np.linspace(lo, hi, n + 1)[1:])
        edges = np.asarray(refined)
    lo, hi = edges[:-1], edges[1:]

    total = None
    total_err = None
    length = b - a
    n_done = 0
    while lo.size:
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        x = mid[:, None] + half[:, None] * _XK[None, :]
        fx = np.asarray(f(x.ravel()), dtype=float)
        fx = fx.reshape(x.shape + fx.shape[1:])
        trailing = (1,) * (fx.ndim - 2)
        scale = half.reshape((-1,) + trailing)
        kron = np.einsum("ij...,j->i...", fx, _WK) * scale
        gauss = np.einsum("ij...,j->i...", fx, _WG) * scale
        err = np.abs(kron - gauss)
        if not np.all(np.isfinite(kron)):
            raise QuadratureError("non-finite integrand values")

        running = kron.sum(axis=0) + (0.0 if total is None else total)
        tol = np.maximum(abs_tol, rel_tol * np.abs(running))
        share = ((hi - lo) / length).reshape((-1,) + trailing)
        ok = err <= tol * share
        if err.ndim > 1:
            ok = ok.all(axis=tuple(range(1, err.ndim)))
        # panels at floating-point resolution cannot be refined further
        ok |= half <= 1e-13 * max(1.0, abs(mid).max())

        acc_val = kron[ok].sum(axis=0)
        acc_err = err[ok].sum(axis=0)
        total = acc_val if total is None else total + acc_val
        total_err = acc_err if total_err is None else total_err + acc_err

        n_done += lo.size
        bad = ~ok
        if n_done > max_panels and bad.any():
            est = total + kron[bad].sum(axis=0)
            raise QuadratureError(
                "adaptive quadrature did not converge",
                estimate=est,
                error=total_err + err[bad].sum(axis=0),
            )
        lo_b, hi_b = lo[bad], hi[bad]
        mid_b = 0.5 * (lo_b + hi_b)
        lo = np.concatenate([lo_b, mid_b])
        hi = np.concatenate([mid_b, hi_b])

    if np.ndim(total) == 0:
        return float(total), float(total_err)
    return total, total_err


def tau_max(bath: BathParams, nu: float = 0.0, tail_cut: float = 1e-12) -> float:
    """Truncation time where ``exp(-nu*tau - Q'(tau))`` falls to ``tail_cut``."""
    target = -np.log(tail_cut)

    def g(tau):
        return correlation_exponent(tau, bath)[0] + nu * tau - target

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise QuadratureError("integrand envelope does not decay")
    return brentq(g, 0.0, hi, xtol=1e-12, rtol=1e-12)


def kernel_breakpoints(upper: float, bath: BathParams):
    """Geometric panel edges resolving the short-time scale 1/omega_c."""
    pts = []
    x = 0.25 / bath.omega_c
    while x < upper:
        pts.append(x)
        x *= 2.0
    return pts

"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerical core: the bath exponent is
evaluated with mpmath, rate integrals with a brute-force composite Simpson
rule on a very fine uniform grid.
"""
import math

import mpmath as mp
import numpy as np

ALPHA, OMEGA_C, TEMP = 0.7, 10.0, 0.2


def q_mp(t, alpha=ALPHA, omega_c=OMEGA_C, temp=TEMP, dps=40):
    """(Q', Q'') at time t in arbitrary precision."""
    with mp.workdps(dps):
        t = mp.mpf(t)
        k = mp.pi * mp.mpf(temp)
        sinhc = mp.mpf(1) if t == 0 else mp.sinh(k * t) / (k * t)
        qr = 2 * alpha * mp.log(mp.sqrt(1 + (omega_c * t) ** 2) * sinhc)
        qi = 2 * alpha * mp.atan(omega_c * t)
        return float(qr), float(qi)


def _kernel(tau, alpha, omega_c, temp):
    k = math.pi * temp
    x = k * tau
    with np.errstate(invalid="ignore", divide="ignore"):
        sinhc = np.where(x > 0, np.sinh(x) / np.where(x > 0, x, 1.0), 1.0)
    env = (1 + (omega_c * tau) ** 2) ** (-alpha) * sinhc ** (-2 * alpha)
    return env, 2 * alpha * np.arctan(omega_c * tau)


def simpson(y, h):
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def a_nu_bruteforce(nu, alpha=ALPHA, omega_c=OMEGA_C, temp=TEMP, upper=60.0, n=2_000_000):
    """0.5 * int_0^upper exp(-nu tau) K(tau) cos Q''(tau) by fine Simpson."""
    tau = np.linspace(0.0, upper, n + 1)
    env, ph = _kernel(tau, alpha, omega_c, temp)
    return 0.5 * simpson(np.exp(-nu * tau) * env * np.cos(ph), upper / n)


def periodic_rate_bruteforce(t, drive=(0.0, 1.0, 0.0), bias=(0.0, 1.0, 0.0), sign=-1.0,
                             alpha=ALPHA, omega_c=OMEGA_C, temp=TEMP, upper=60.0, n=600_000):
    """Stationary rate with Delta(t) = 1 + A cos(W t + p) and eps(t) = B cos(V t + q).

    ``sign=-1`` is the forward rate cos(Q'' - zeta), ``+1`` the backward one.
    """
    a, w, p = drive
    b, v, q = bias
    tau = np.linspace(0.0, upper, n + 1)
    env, ph = _kernel(tau, alpha, omega_c, temp)
    delta = lambda s: 1.0 + a * np.cos(w * s + p)
    zeta = (b / v) * (np.sin(v * t + q) - np.sin(v * (t - tau) + q)) if b else 0.0
    f = delta(t - tau) * env * np.cos(ph + sign * zeta)
    return 0.5 * delta(t) * simpson(f, upper / n)


def biexp(nu, w0, w1, t):
    d = math.sqrt(nu * nu + 4 * w1 * w1)
    c1, c2 = (d + nu) / (2 * d), (d - nu) / (2 * d)
    g1, g2 = (2 * w0 + nu - d) / 2, (2 * w0 + nu + d) / 2
    return c1 * np.exp(-g1 * t) + c2 * np.exp(-g2 * t)


def a_nu_mp(nu, alpha=ALPHA, omega_c=OMEGA_C, temp=TEMP, dps=25):
    """Arbitrary-precision a_nu; preferred when exp(-nu tau) is too sharp for a grid."""
    with mp.workdps(dps):
        k = mp.pi * mp.mpf(temp)

        def f(t):
            if t == 0:
                return mp.mpf(0.5)
            env = (1 + (omega_c * t) ** 2) ** (-alpha) * (mp.sinh(k * t) / (k * t)) ** (-2 * alpha)
            return 0.5 * mp.e ** (-nu * t) * env * mp.cos(2 * alpha * mp.atan(omega_c * t))

        scale = 1 / max(nu, 1.0)
        pts = [0] + [scale * 10**j for j in range(-1, 4)] + [80]
        return float(mp.quad(f, sorted(set(min(p, 80) for p in pts))))

"""Fitting (c, Gamma) with E(tau) + D(tau) <= Gamma exp(c tau) on sampled series."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

GAMMA_FLOOR = 1e-30
STABILITY_BAND = 0.2


@dataclass(frozen=True)
class Certificate:
    c_fit: float
    gamma: float
    gamma_fit: float
    passed: bool


def _envelope(times: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Tightest exponential envelope in log space.

    Minimizes log(Gamma) + c T/2 subject to log(Gamma) + c tau_i >= log(y_i),
    c >= 0.  The objective is convex and piecewise linear in c, so bisection
    on the sign of its slope finds the minimum.
    """
    pos = y > 0
    if not np.any(pos):
        return 0.0, 0.0
    tau, ly = times[pos], np.log(y[pos])
    half = 0.5 * (times[-1] - times[0])

    def active_slope(c):
        i = np.argmax(ly - c * tau)
        return half - tau[i]

    hi = 1.0
    while active_slope(hi) < 0 and hi < 1e6:
        hi *= 2.0
    lo = 0.0
    if active_slope(lo) >= 0:
        hi = lo
    for _ in range(200):
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if active_slope(mid) < 0:
            lo = mid
        else:
            hi = mid
    c = hi
    return float(np.exp(np.max(ly - c * tau))), float(c)


def gronwall_certificate(entropy: Sequence[float], defect: Sequence[float], epsilon: float,
                         times: Optional[Sequence[float]] = None,
                         initial_mismatch: float = 0.0) -> Certificate:
    """Smallest c with y <= Gamma + c int_0^tau y for y = E + D.

    Gamma comes from the exponential envelope of y; by Groenwall the integral
    form implies y <= Gamma exp(c tau).  ``gamma_fit`` is the part of Gamma
    above the initial mismatch, per unit epsilon.  ``passed`` here only says
    the fit is finite; stability across a sweep is judged by
    :func:`certificates_stable`.
    """
    e = np.asarray(entropy, dtype=float)
    d = np.asarray(defect, dtype=float)
    if e.shape != d.shape:
        raise ValueError("entropy and defect series differ in length")
    t = np.linspace(0.0, 1.0, e.size) if times is None else np.asarray(times, dtype=float)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(d)) and np.all(np.isfinite(t))):
        raise ValueError("series contain NaN or inf")
    y = np.maximum(e + d, 0.0)
    if not np.any(y > 0):
        return Certificate(0.0, 0.0, 0.0, True)
    gamma, _ = _envelope(t, y)
    integral = cumulative_trapezoid(y, t, initial=0.0)
    excess = y - gamma
    need = excess > 1e-12 * gamma  # log/exp round trip in the envelope costs a few ulp
    if not np.any(need):
        c_fit = 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            c_fit = float(np.max(np.where(need, excess / np.where(integral > 0, integral, 0.0), 0.0)))
    base = max(initial_mismatch, GAMMA_FLOOR)
    gamma_fit = (gamma - base) / epsilon if epsilon > 0 else 0.0
    return Certificate(c_fit, gamma, gamma_fit, bool(np.isfinite(c_fit)))


def certificates_stable(certs: Sequence[Certificate], band: float = STABILITY_BAND) -> bool:
    """True when some center c* has every c_fit in [(1 - band) c*, (1 + band) c*]."""
    c = np.array([x.c_fit for x in certs])
    if c.size == 0 or not np.all(np.isfinite(c)):
        return False
    lo, hi = float(c.min()), float(c.max())
    if hi == 0.0:
        return True
    return hi * (1.0 - band) <= lo * (1.0 + band)

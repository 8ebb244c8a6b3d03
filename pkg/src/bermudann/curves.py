"""Nelson-Siegel interest-rate curves, discount factors and par swap rates.

The zero rate is built from the three classic basis functions

    R(t) = beta0 * G0(t) + beta1 * G1(t) + beta2 * G2(t),
    G0 = 1,  G1 = (1 - exp(-t/tau)) / (t/tau),  G2 = G1 - exp(-t/tau),

and discount factors follow the zero-rate convention D(t) = exp(-R(t) * t).
The instantaneous forward curve implied by this reading is
beta0 + beta1*exp(-t/tau) + beta2*(t/tau)*exp(-t/tau), whose average over
[0, t] is exactly R(t), so the two standard presentations coincide.

All functions accept floats, numpy arrays or :mod:`bermudann.fm` Jets in the
parameter slots, which is how exact derivative labels are produced elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fm
from .errors import InvalidParameterError, InvalidScheduleError

# below this value of t/tau the exact G1, G2 expressions hit 0/0 cancellation;
# a 3-term series keeps full precision
_SERIES_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class NelsonSiegelParams:
    """Curve parameters: level ``beta0``, slope ``beta1``, curvature ``beta2``
    and hump location ``tau`` (years, strictly positive)."""

    beta0: object
    beta1: object
    beta2: object
    tau: object

    def __post_init__(self):
        vals = [fm.val(f) for f in (self.beta0, self.beta1, self.beta2, self.tau)]
        for v in vals:
            if not np.all(np.isfinite(v)):
                raise InvalidParameterError("Nelson-Siegel parameters must be finite")
        if not np.all(vals[3] > 0.0):
            raise InvalidParameterError("tau must be strictly positive")


def _basis(tau, t):
    """G1(t), G2(t) with the analytic t -> 0 limits (G1 -> 1, G2 -> 0)."""
    u = t / tau
    small = fm.val(u) < _SERIES_THRESHOLD
    # guard the exact branch against 0/0 before selecting; where() keeps the
    # series values on the small side
    u_safe = fm.where(small, 1.0, u)
    e = fm.exp(-u_safe)
    g1_exact = -fm.expm1(-u_safe) / u_safe
    g1 = fm.where(small, 1.0 - u / 2.0 + u * u / 6.0, g1_exact)
    g2 = fm.where(small, u / 2.0 - u * u / 3.0 + u * u * u / 8.0, g1_exact - e)
    return g1, g2


def ns_rate(params: NelsonSiegelParams, t):
    """Continuously compounded zero rate R(t); at t = 0 returns beta0 + beta1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise InvalidParameterError("time must be non-negative")
    g1, g2 = _basis(params.tau, t)
    return params.beta0 + params.beta1 * g1 + params.beta2 * g2


def discount_factor(params: NelsonSiegelParams, t):
    """D(t) = exp(-R(t) * t); D(0) = 1 exactly."""
    return fm.exp(-ns_rate(params, t) * np.asarray(t, dtype=float))


def atm_rate(params: NelsonSiegelParams, payment_times, accruals):
    """Par swap rate (1 - D(T_M)) / sum_i dT_i * D(T_i) for the given schedule."""
    times = np.asarray(payment_times, dtype=float)
    accr = np.asarray(accruals, dtype=float)
    if times.size == 0:
        raise InvalidScheduleError("empty payment schedule")
    if times.size != accr.size:
        raise InvalidScheduleError("payment times and accruals must align")
    if np.any(np.diff(times) <= 0.0):
        raise InvalidScheduleError("payment times must be strictly increasing")
    annuity = None
    for time, dt in zip(times, accr):
        term = discount_factor(params, float(time)) * float(dt)
        annuity = term if annuity is None else annuity + term
    return (1.0 - discount_factor(params, float(times[-1]))) / annuity

"""One-factor linear Gaussian rates model.

State dynamics dx = alpha(t) dW with x(0) = 0, a piecewise-constant forward
volatility alpha, mean-reversion curve H(t) = (1 - exp(-kappa*t)) / kappa and
cumulative variance zeta(t) = int_0^t alpha^2.  Provides the numeraire, the
zero-coupon bond reconstitution formula, and the Rebonato implied-volatility
machinery used to turn sampled market parameters into forward volatilities.

Parameter slots accept floats, numpy arrays or :mod:`bermudann.fm` Jets.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import fm
from .curves import NelsonSiegelParams, discount_factor
from .errors import InvalidMaturityError, InvalidParameterError, InvalidScheduleError, OutOfScheduleError

# |kappa| below this uses 3-term series limits (shared by h_function and the
# implied-to-forward conversion)
_KAPPA_THRESHOLD = 1e-8


class ClampCounter:
    """Thread-safe tally of negative implied vols clamped to zero."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.total = 0

    def add(self, clamped: int, total: int):
        with self._lock:
            self.count += int(clamped)
            self.total += int(total)

    def reset(self):
        with self._lock:
            self.count = 0
            self.total = 0


#: global counter for implied-vol clamps (reported, never fatal)
CLAMP_COUNTER = ClampCounter()


@dataclass(frozen=True, eq=False)
class VolSchedule:
    """Piecewise-constant forward vols: ``alphas[j]`` applies on
    (breakpoints[j], breakpoints[j+1]]."""

    breakpoints: tuple
    alphas: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.size < 2 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0.0):
            raise InvalidScheduleError("breakpoints must start at 0 and increase strictly")
        if len(self.alphas) != bp.size - 1:
            raise InvalidScheduleError("need one alpha per breakpoint interval")
        for a in self.alphas:
            v = fm.val(a)
            if not np.all(np.isfinite(v)) or np.any(v < 0.0):
                raise InvalidParameterError("alphas must be finite and non-negative")

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])


@dataclass(frozen=True, eq=False)
class LgmParams:
    """Mean reversion (may be negative) plus the forward-volatility schedule."""

    kappa: object
    vols: VolSchedule


@dataclass(frozen=True, eq=False)
class RebonatoParams:
    """Volatility term-structure coefficients of h(t) = (a + b*t)*exp(-c*t) + d."""

    a: object
    b: object
    c: object
    d: object


def h_function(kappa, t):
    """H(t) = (1 - exp(-kappa*t)) / kappa, with the series limit near kappa = 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(fm.val(kappa)) < _KAPPA_THRESHOLD
    k_safe = fm.where(small, 1.0, kappa)
    exact = -fm.expm1(-k_safe * t) / k_safe
    series = t - kappa * (t * t) / 2.0 + (kappa * kappa) * (t * t * t) / 6.0
    return fm.where(small, series, exact)


def zeta(vols: VolSchedule, t):
    """Cumulative variance: exact piecewise sum of alpha_j^2 over [0, t]."""
    t = np.asarray(t, dtype=float)
    bp = np.asarray(vols.breakpoints, dtype=float)
    if np.any(t < -1e-12) or np.any(t > bp[-1] + 1e-9):
        raise OutOfScheduleError(f"time outside vol schedule [0, {bp[-1]}]")
    total = None
    for j, alpha in enumerate(vols.alphas):
        w = np.clip(t, bp[j], bp[j + 1]) - bp[j]
        term = alpha * alpha * w
        total = term if total is None else total + term
    return total


def numeraire(lgm: LgmParams, curve: NelsonSiegelParams, t, x):
    """N(t, x) = exp(H(t)*x + H(t)^2 * zeta(t) / 2) / D(t); N(0, 0) = 1."""
    h = h_function(lgm.kappa, t)
    z = zeta(lgm.vols, t)
    return fm.exp(h * x + 0.5 * (h * h) * z) / discount_factor(curve, t)


def zcb(lgm: LgmParams, curve: NelsonSiegelParams, t, x, T):
    """Zero-coupon bond Z(t, x; T); Z(t, x; t) = 1 and Z(0, 0; T) = D(T)."""
    if np.any(np.asarray(T, dtype=float) < np.asarray(t, dtype=float)):
        raise InvalidMaturityError("bond maturity before valuation time")
    h_t = h_function(lgm.kappa, t)
    h_T = h_function(lgm.kappa, T)
    z_t = zeta(lgm.vols, t)
    dh = h_T - h_t
    expo = -dh * x - 0.5 * (h_T * h_T - h_t * h_t) * z_t
    return discount_factor(curve, T) / discount_factor(curve, t) * fm.exp(expo)


def rebonato_vol(reb: RebonatoParams, t):
    """h(t) = (a + b*t) * exp(-c*t) + d."""
    t = np.asarray(t, dtype=float)
    return (reb.a + reb.b * t) * fm.exp(-reb.c * t) + reb.d


def rebonato_implied_vols(reb: RebonatoParams, breakpoints):
    """Implied vols Sigma_j = h(interval midpoint), clamped at zero.

    Clamps are counted on :data:`CLAMP_COUNTER` rather than raised; the sampled
    test-case ranges keep h >= 0 so they should stay rare.
    """
    bp = np.asarray(breakpoints, dtype=float)
    if np.any(np.diff(bp) <= 0.0):
        raise InvalidScheduleError("breakpoints must be strictly increasing")
    sigmas = []
    for j in range(bp.size - 1):
        mid = 0.5 * (bp[j] + bp[j + 1])
        sig = rebonato_vol(reb, mid)
        neg = fm.val(sig) < 0.0
        CLAMP_COUNTER.add(int(np.count_nonzero(neg)), int(np.size(neg)))
        sigmas.append(fm.where(neg, 0.0, sig))
    return tuple(sigmas)


def implied_to_forward_vols(kappa, sigmas, breakpoints, mode: str = "variance") -> VolSchedule:
    """Convert implied vols Sigma_j to forward vols alpha_j.

    ``variance`` (default) matches the defining integral
    Sigma_j^2 * dt_j = alpha_j^2 * int exp(-2*kappa*(t_j - s)) ds exactly, i.e.
    alpha_j^2 = Sigma_j^2 * w / (1 - exp(-w)) with w = 2*kappa*dt_j.
    ``literal`` keeps the denominator (1 - exp(-kappa*dt_j)); its small-kappa
    limit is sqrt(2)*Sigma_j, handled by the matching series.
    """
    if mode not in ("variance", "literal"):
        raise InvalidParameterError(f"unknown conversion mode {mode!r}")
    bp = np.asarray(breakpoints, dtype=float)
    small = np.abs(fm.val(kappa)) < _KAPPA_THRESHOLD
    k_safe = fm.where(small, 1.0, kappa)
    alphas = []
    for j, sig in enumerate(sigmas):
        dt = float(bp[j + 1] - bp[j])
        w = (2.0 * k_safe * dt) if mode == "variance" else (k_safe * dt)
        ratio = w / (-fm.expm1(-w))
        if mode == "literal":
            ratio = ratio * 2.0
        ws = (2.0 * kappa * dt) if mode == "variance" else (kappa * dt)
        series = 1.0 + ws / 2.0 + (ws * ws) / 12.0
        if mode == "literal":
            series = series * 2.0
        alphas.append(sig * fm.sqrt(fm.where(small, series, ratio)))
    return VolSchedule(tuple(bp.tolist()), tuple(alphas))

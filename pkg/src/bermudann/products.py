"""Swap and European swaption valuation under the Gaussian rates model.

Contains the zero-coupon-bond formulation of the swap value, the break-even
root in the shifted state variable y = x + H*zeta, the three-CDF-term
analytic swaption price at t = 0 and t > 0, the coterminal ladder used as
joint-learning side outputs, and the cancellable/Bermudan reporting identity.

The break-even payoff in y reads, writing c_S = H(S) - H(T) and
A_S = D(S)/D(T) * exp(-c_S^2 * zeta(T) / 2),

    g(y) = 1 - A_M * exp(-c_M * y) - K * sum_i dT_i * A_i * exp(-c_i * y),

which has a unique sign change for every strike the samplers can produce
(H is strictly increasing in maturity for any mean reversion).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fm
from .curves import NelsonSiegelParams, discount_factor
from .errors import (
    DegenerateVarianceError,
    InvalidParameterError,
    InvalidScheduleError,
    InvalidTimeError,
    RootNotFoundError,
)
from .lgm import LgmParams, h_function, zcb, zeta

_ROOT_TOL = 1e-13  # target |g(y*)|; contract requires < 1e-12
_BRACKET_START = 10.0  # brackets start at +-10 stdevs of y_T ...
_BRACKET_CAP = 50.0  # ... and widen geometrically up to +-50
_MIN_BRACKET_SCALE = 0.02  # rate-sized floor so degenerate variance still brackets


@dataclass(frozen=True, eq=False)
class SwapSpec:
    """Fixed-for-floating swap: sign ``phi`` (+1 payer, -1 receiver), fixed
    rate, inception ``start`` and strictly increasing payment times.

    Accrual fractions are the gaps between consecutive payment dates, with the
    first one measured from ``start``. ``fixed_rate`` may be an array or Jet.
    """

    phi: int
    fixed_rate: object
    start: float
    payment_times: tuple

    def __post_init__(self):
        if self.phi not in (1, -1):
            raise InvalidParameterError("phi must be +1 or -1")
        times = np.asarray(self.payment_times, dtype=float)
        if times.size == 0:
            raise InvalidScheduleError("swap needs at least one payment")
        if times[0] <= self.start or np.any(np.diff(times) <= 0.0):
            raise InvalidScheduleError("payment times must increase strictly after start")

    @property
    def accruals(self) -> np.ndarray:
        times = np.asarray(self.payment_times, dtype=float)
        return np.diff(np.concatenate([[self.start], times]))

    @property
    def maturity(self) -> float:
        return float(self.payment_times[-1])


# default product: spot-start 10y annual swap, unit notional, callable
# annually from year 1 (call dates = payment dates, last period not callable)
PAYMENT_TIMES = tuple(float(i) for i in range(1, 11))
N_PERIODS = len(PAYMENT_TIMES)
CALL_DATES = tuple(float(i) for i in range(1, 10))


def default_swap(phi: int, fixed_rate) -> SwapSpec:
    return SwapSpec(phi=phi, fixed_rate=fixed_rate, start=0.0, payment_times=PAYMENT_TIMES)


def coterminal_set(phi: int, fixed_rate) -> tuple:
    """European swaptions expiring at each call date, all ending at year 10.

    The underlying of the m-th entry starts at call date m and pays at
    m+1 .. 10; the payment falling on the exercise date itself is treated as
    already settled and excluded.
    """
    out = []
    for m in range(1, N_PERIODS):
        times = tuple(float(i) for i in range(m + 1, N_PERIODS + 1))
        out.append(SwapSpec(phi=phi, fixed_rate=fixed_rate, start=float(m), payment_times=times))
    return tuple(out)


def swap_value(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams, t, x):
    """V_S(t, x) = phi * (Z(t,x;T) - Z(t,x;T_M) - K * sum dT_i * Z(t,x;T_i))."""
    if np.any(np.asarray(t, dtype=float) > spec.start):
        raise InvalidTimeError("swap_value requires t <= inception")
    acc = None
    for time, dt in zip(spec.payment_times, spec.accruals):
        term = zcb(lgm, curve, t, x, float(time)) * float(dt)
        acc = term if acc is None else acc + term
    body = zcb(lgm, curve, t, x, spec.start) - zcb(lgm, curve, t, x, spec.maturity) - spec.fixed_rate * acc
    return spec.phi * body


def _breakeven_terms(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams):
    """Coefficients (c_i, A_i) of g(y); Jet-aware."""
    T = spec.start
    zT = zeta(lgm.vols, T)
    h_T = h_function(lgm.kappa, T)
    d_T = discount_factor(curve, T)
    cs, amps = [], []
    for time in spec.payment_times:
        c = h_function(lgm.kappa, float(time)) - h_T
        a = discount_factor(curve, float(time)) / d_T * fm.exp(-0.5 * (c * c) * zT)
        cs.append(c)
        amps.append(a)
    return cs, amps


def _payoff_in_y(spec: SwapSpec, cs, amps, y):
    g = 1.0
    dgdy = 0.0
    accruals = spec.accruals
    K = spec.fixed_rate
    for i, (c, a) in enumerate(zip(cs, amps)):
        w = a * fm.exp(-c * y)
        coeff = K * float(accruals[i])
        if i == len(cs) - 1:
            coeff = coeff + 1.0
        g = g - coeff * w
        dgdy = dgdy + coeff * c * w
    return g, dgdy


def breakeven_y(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams):
    """Root y* of the exercise-date payoff expressed in y = x + H*zeta.

    Bisection-safeguarded Newton on a sign-change bracket, vectorized across
    whatever batch shape the parameters carry; |g(y*)| < 1e-12 on return.
    When parameters are Jets the tangent of y* follows from the implicit
    function theorem: dy*/dtheta = -(dg/dtheta) / (dg/dy).
    """
    cs, amps = _breakeven_terms(spec, lgm, curve)
    cs_v = [fm.val(c) for c in cs]
    amps_v = [fm.val(a) for a in amps]
    K_v = fm.val(spec.fixed_rate)
    spec_v = SwapSpec(spec.phi, K_v, spec.start, spec.payment_times)

    scale = np.sqrt(np.maximum(fm.val(zeta(lgm.vols, spec.start)), 0.0))
    scale = np.maximum(scale, _MIN_BRACKET_SCALE)
    shape = np.broadcast_shapes(
        np.shape(K_v), np.shape(scale), *(np.shape(v) for v in cs_v), *(np.shape(v) for v in amps_v)
    )
    half = np.broadcast_to(_BRACKET_START * scale, shape).astype(float).copy()
    cap = _BRACKET_CAP * scale

    def g_of(y):
        return _payoff_in_y(spec_v, cs_v, amps_v, y)

    lo = -half
    hi = half.copy()
    g_lo, _ = g_of(lo)
    g_hi, _ = g_of(hi)
    for _ in range(8):
        bad = np.sign(g_lo) == np.sign(g_hi)
        if not np.any(bad):
            break
        grow = np.minimum(half * 2.0, cap)
        stuck = bad & (grow <= half)
        if np.any(stuck):
            raise RootNotFoundError("no sign change within +-50 stdev bracket")
        half = np.where(bad, grow, half)
        lo = -half
        hi = half.copy()
        g_lo, _ = g_of(lo)
        g_hi, _ = g_of(hi)
    else:
        raise RootNotFoundError("bracket widening did not terminate")

    y = np.zeros(shape)
    y = np.clip(y, lo, hi)
    for _ in range(100):
        g, dg = g_of(y)
        if np.all(np.abs(g) < _ROOT_TOL):
            break
        same_as_lo = np.sign(g) == np.sign(g_lo)
        lo = np.where(same_as_lo, y, lo)
        hi = np.where(same_as_lo, hi, y)
        g_lo = np.where(same_as_lo, g, g_lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dg != 0.0, g / np.where(dg != 0.0, dg, 1.0), np.inf)
        cand = y - step
        off = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        y = np.where(off, 0.5 * (lo + hi), cand)
    g, dg = g_of(y)
    if np.any(np.abs(g) >= 1e-12):
        raise RootNotFoundError("break-even solve did not reach |payoff| < 1e-12")

    if fm.is_jet(spec.fixed_rate) or any(fm.is_jet(c) or fm.is_jet(a) for c, a in zip(cs, amps)):
        g_jet, _ = _payoff_in_y(spec, cs, amps, y)
        if not fm.is_jet(g_jet):  # all parameter tangents were zero
            return y
        return fm.Jet(y, -g_jet.tan / np.asarray(dg)[..., None])
    return y


def _price_from_terms(spec, lgm, curve, t, x, variance, ystar):
    # Conditioning on the time-t state shifts every CDF argument by the
    # current y-level: with x_T | x_t Gaussian of variance v, the exercise
    # probability weights use y* - x_t - H(T) * zeta(t), which vanishes at
    # (t, x) = (0, 0) and recovers the inception formula exactly.
    phi = float(spec.phi)
    sq = fm.sqrt(variance)
    h_T = h_function(lgm.kappa, spec.start)
    ytilde = ystar - x - h_T * zeta(lgm.vols, t)
    first = zcb(lgm, curve, t, x, spec.start) * fm.cdf(-phi * (ytilde / sq))
    c_M = h_function(lgm.kappa, spec.maturity) - h_T
    second = zcb(lgm, curve, t, x, spec.maturity) * fm.cdf(-phi * ((ytilde + c_M * variance) / sq))
    annuity = None
    for time, dt in zip(spec.payment_times, spec.accruals):
        c_i = h_function(lgm.kappa, float(time)) - h_T
        term = zcb(lgm, curve, t, x, float(time)) * fm.cdf(-phi * ((ytilde + c_i * variance) / sq)) * float(dt)
        annuity = term if annuity is None else annuity + term
    return phi * first - phi * second - phi * spec.fixed_rate * annuity


def european_price_t(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams, t, x):
    """Analytic European swaption value V_E(t, x) for expiry at spec.start.

    Requires strictly positive remaining variance zeta(T) - zeta(t); callers
    fall back to intrinsic value max(V_S, 0) in the degenerate case.
    """
    if np.any(np.asarray(t, dtype=float) >= spec.start):
        raise InvalidTimeError("european_price_t requires t < expiry")
    variance = zeta(lgm.vols, spec.start) - zeta(lgm.vols, t)
    if np.any(fm.val(variance) <= 0.0):
        raise DegenerateVarianceError("zeta(T) - zeta(t) must be positive")
    ystar = breakeven_y(spec, lgm, curve)
    return _price_from_terms(spec, lgm, curve, t, x, variance, ystar)


def european_price_0(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams):
    """V_E(0, 0): the t = 0 specialization, written directly on discount factors."""
    variance = zeta(lgm.vols, spec.start)
    if np.any(fm.val(variance) <= 0.0):
        raise DegenerateVarianceError("zeta(T) must be positive")
    ystar = breakeven_y(spec, lgm, curve)
    return _price_from_terms(spec, lgm, curve, 0.0, 0.0, variance, ystar)


def intrinsic_value(spec: SwapSpec, lgm: LgmParams, curve: NelsonSiegelParams, t, x):
    """Deterministic-limit option value max(V_S(t, x), 0)."""
    return fm.maximum(swap_value(spec, lgm, curve, t, x), 0.0)


def coterminal_prices(coterminals, lgm: LgmParams, curve: NelsonSiegelParams, t, x):
    """European values of the coterminal ladder at scalar valuation time ``t``.

    Entries whose maturity lies strictly before ``t`` are exactly zero (the
    swaption has expired); at ``t`` equal to the maturity, or when no variance
    remains, the intrinsic value is used.
    """
    t = float(t)
    out = []
    for spec in coterminals:
        if t > spec.start:
            probes = (x, lgm.kappa, curve.beta0, spec.fixed_rate)
            width = fm.jet_width(*probes) if fm.is_jet(*probes) else 0
            zero = np.zeros(np.broadcast_shapes(np.shape(fm.val(x)), np.shape(fm.val(spec.fixed_rate))))
            out.append(fm.lift(zero, width) if width else zero)
        elif t == spec.start or np.all(
            fm.val(zeta(lgm.vols, spec.start) - zeta(lgm.vols, t)) <= 0.0
        ):
            out.append(intrinsic_value(spec, lgm, curve, t, x))
        else:
            out.append(european_price_t(spec, lgm, curve, t, x))
    return out


def bermudan_from_cancellable(v_cancellable, v_swap):
    """Bermudan swaption value from the cancellable-IRS identity: V_B = V_S - V_C."""
    return v_swap - v_cancellable

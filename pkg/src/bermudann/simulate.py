"""Monte Carlo engine for the default product on the annual grid.

Simulates the model state exactly (Gaussian increments, no discretization
bias), computes the per-period deflated cash flows

    F_m = phi * (1/Z(t_m, x_m; t_{m+1}) - 1 - K) / N(t_{m+1}, x_{m+1}),

i.e. the net fixed-vs-floating exchange for [t_m, t_{m+1}] fixed at t_m and
paid at t_{m+1}, deflated at the payment date, and propagates pathwise
sensitivities to the ten sampled market parameters through every step with
the Gaussian draws held fixed.  The payment at t_1 (the first call date) is
treated as already settled and never enters accumulated values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fm
from .curves import NelsonSiegelParams, atm_rate
from .errors import InvalidBundleError, OutOfScheduleError
from .lgm import LgmParams, RebonatoParams, implied_to_forward_vols, numeraire, rebonato_implied_vols, zcb
from .products import N_PERIODS, PAYMENT_TIMES

#: the ten sampled parameters, in network-input order
SCENARIO_COLUMNS = ("kappa", "a", "b", "c", "d", "beta0", "beta1", "beta2", "tau", "dk")
N_SCENARIO = len(SCENARIO_COLUMNS)

#: piecewise-constant volatility intervals (0,1], (1,5], (5,10]
VOL_BREAKPOINTS = (0.0, 1.0, 5.0, 10.0)
N_VOL = len(VOL_BREAKPOINTS) - 1

#: annual simulation grid t_0 .. t_M
GRID = tuple(float(i) for i in range(N_PERIODS + 1))
M = N_PERIODS

# vol interval j covers (bp[j], bp[j+1]]; step m spans (m, m+1] and, with the
# breakpoints aligned to the annual grid, falls inside exactly one interval
_STEP_INTERVAL = tuple(int(np.searchsorted(np.asarray(VOL_BREAKPOINTS), m + 1, side="left")) - 1 for m in range(M))

_ACCRUAL = 1.0  # annual schedule, unit day-count


@dataclass(frozen=True)
class MarketScenario:
    """One draw of the ten model/market parameters."""

    kappa: float
    a: float
    b: float
    c: float
    d: float
    beta0: float
    beta1: float
    beta2: float
    tau: float
    dk: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in SCENARIO_COLUMNS], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "MarketScenario":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != N_SCENARIO:
            raise ValueError(f"scenario needs {N_SCENARIO} entries")
        return cls(*[float(v) for v in theta])


@dataclass
class PathRecord:
    """One simulated path with pathwise parameter sensitivities.

    ``x`` and ``numeraires`` run over the full grid t_0..t_M;
    ``deflated_cashflows[m-1]`` holds F_m for m = 1..M-1. ``dx`` and ``dF``
    hold the derivatives with respect to the ten scenario parameters.
    """

    scenario: MarketScenario
    x: np.ndarray
    numeraires: np.ndarray
    deflated_cashflows: np.ndarray
    dx: np.ndarray
    dF: np.ndarray


class Model:
    """Derived per-scenario quantities, value-only or Jet-carrying."""

    def __init__(self, curve, lgm, fixed_rate, phi):
        self.curve = curve
        self.lgm = lgm
        self.fixed_rate = fixed_rate
        self.phi = phi


def derive_model(theta, phi: int = 1, width: int = 0, slots=None) -> Model:
    """Curve, vol schedule and fixed rate implied by scenario rows.

    ``theta`` is (n, 10) or a single scenario row; with ``width`` > 0 the ten
    columns become forward-mode seeds at tangent ``slots`` (default 0..9) so
    every derived quantity carries exact parameter sensitivities.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    cols = [theta[:, i] for i in range(N_SCENARIO)]
    if width:
        slots = tuple(range(N_SCENARIO)) if slots is None else slots
        cols = [fm.seed(c, slots[i], width) for i, c in enumerate(cols)]
    kappa, a, b, c, d, b0, b1, b2, tau, dk = cols
    curve = NelsonSiegelParams(b0, b1, b2, tau)
    sigmas = rebonato_implied_vols(RebonatoParams(a, b, c, d), VOL_BREAKPOINTS)
    lgm = LgmParams(kappa, implied_to_forward_vols(kappa, sigmas, VOL_BREAKPOINTS))
    fixed = atm_rate(curve, PAYMENT_TIMES, np.ones(N_PERIODS)) + dk
    return Model(curve, lgm, fixed, phi)


def step_vols(model: Model):
    """Forward vol applying on each annual step (0,1], (1,2], ..., (9,10]."""
    alphas = model.lgm.vols.alphas
    return [alphas[_STEP_INTERVAL[m]] for m in range(M)]


def state_path(model: Model, gaussians: np.ndarray, x0=0.0, start: int = 0):
    """Exact state path x_{t_k} for k = start..M given per-step N(0,1) draws.

    ``gaussians[..., m]`` drives the step t_m -> t_{m+1}; on the annual grid
    the increment stdev is the step's forward vol itself.  Entries before
    ``start`` are None.
    """
    gaussians = np.asarray(gaussians, dtype=float)
    if gaussians.shape[-1] != M:
        raise OutOfScheduleError(f"need {M} draws for the annual grid")
    vols = step_vols(model)
    xs: list = [None] * (M + 1)
    xs[start] = x0
    for m in range(start, M):
        xs[m + 1] = xs[m] + vols[m] * gaussians[..., m]
    return xs


def period_flow(model: Model, m: int, x_tm, x_tm1):
    """Deflated cash flow F_m of period [t_m, t_{m+1}]."""
    z = zcb(model.lgm, model.curve, GRID[m], x_tm, GRID[m + 1])
    n1 = numeraire(model.lgm, model.curve, GRID[m + 1], x_tm1)
    return model.phi * (1.0 / z - 1.0 - model.fixed_rate * _ACCRUAL) / n1


def deflated_cashflow(scenario: MarketScenario, m: int, x_at_tm, x_at_tm1, phi: int = 1):
    """F_m for one scenario at given state values (value-only convenience)."""
    if not 1 <= m <= M - 1:
        raise ValueError(f"m must be in 1..{M - 1}")
    model = derive_model(scenario.as_array(), phi=phi)
    out = period_flow(model, m, np.asarray(x_at_tm, dtype=float), np.asarray(x_at_tm1, dtype=float))
    return np.squeeze(fm.val(out))


def simulate_path(scenario: MarketScenario, gaussians, phi: int = 1) -> PathRecord:
    """Simulate one path with full pathwise sensitivities to the ten parameters."""
    g = np.asarray(gaussians, dtype=float).reshape(1, -1)
    if g.shape[1] != M:
        raise OutOfScheduleError(f"need {M} draws for the annual grid")
    model = derive_model(scenario.as_array(), phi=phi, width=N_SCENARIO)
    xs = state_path(model, g, x0=fm.lift(np.zeros(1), N_SCENARIO))
    numer = [numeraire(model.lgm, model.curve, GRID[k], xs[k]) for k in range(M + 1)]
    flows = [period_flow(model, m, xs[m], xs[m + 1]) for m in range(1, M)]
    return PathRecord(
        scenario=scenario,
        x=np.array([float(fm.val(v)[0]) for v in xs]),
        numeraires=np.array([float(fm.val(v)[0]) for v in numer]),
        deflated_cashflows=np.array([float(fm.val(f)[0]) for f in flows]),
        dx=np.stack([v.tan[0] for v in xs]),
        dF=np.stack([f.tan[0] for f in flows]),
    )


def antithetic_pair(scenario: MarketScenario, gaussians, phi: int = 1):
    """The path and its partner driven by the negated draws."""
    g = np.asarray(gaussians, dtype=float)
    return simulate_path(scenario, g, phi), simulate_path(scenario, -g, phi)


def forward_sampled_payoff(paths, policy):
    """Sampled cancellable-IRS payoff of a bundle sharing one scenario.

    ``policy(m, theta, x)`` returns the hold indicator at call date t_m; the
    indicator is multiplicative (once cancelled, a path stays cancelled) and
    treated as locally constant in the differential, so the label is
    mean_k sum_m I_k(m) * F_k(m) and the differential label is the matching
    pathwise derivative.  Returns (value label, d(label)/d(10 parameters)).
    """
    if not paths:
        raise InvalidBundleError("empty bundle")
    theta0 = paths[0].scenario.as_array()
    for p in paths[1:]:
        if not np.array_equal(p.scenario.as_array(), theta0):
            raise InvalidBundleError("paths in a bundle must share one scenario")
    theta = np.tile(theta0, (len(paths), 1))
    x = np.stack([p.x for p in paths])  # (k, M+1)
    flows = np.stack([p.deflated_cashflows for p in paths])  # (k, M-1)
    dflows = np.stack([p.dF for p in paths])  # (k, M-1, 10)
    alive = np.ones(len(paths), dtype=bool)
    value = np.zeros(len(paths))
    dvalue = np.zeros((len(paths), N_SCENARIO))
    for m in range(1, M):
        alive = alive & np.asarray(policy(m, theta, x[:, m]), dtype=bool)
        value += alive * flows[:, m - 1]
        dvalue += alive[:, None] * dflows[:, m - 1, :]
    return float(value.mean()), dvalue.mean(axis=0)


def bulk_gaussians(generator: np.random.Generator, n: int, antithetic: bool) -> np.ndarray:
    """(n, M) standard normal draws; with antithetic pairing rows 2k+1 = -rows 2k."""
    if antithetic and n % 2 == 0:
        half = generator.standard_normal((n // 2, M))
        out = np.empty((n, M))
        out[0::2] = half
        out[1::2] = -half
        return out
    return generator.standard_normal((n, M))

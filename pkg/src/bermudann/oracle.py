"""Independent validation pricers.

``lsm_price`` is a regression Monte Carlo pricer for the cancellable swap:
backward induction over call dates with a cross-sectional polynomial
regression of realized continuation values on the state, indicators taken
from the fitted values, realized cash flows kept for the value recursion
(the low-bias convention), and the final price evaluated on an independent
out-of-sample path set.  ``european_mc_price`` brute-forces the European
swaption by sampling the exercise-date state exactly.  The zero-volatility
exhaustive oracle closes the loop where the model is deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fm, seeding
from .curves import NelsonSiegelParams
from .errors import InvalidParameterError
from .lgm import LgmParams, numeraire, zeta
from .products import SwapSpec, swap_value
from .simulate import GRID, M, MarketScenario, derive_model, period_flow, state_path


@dataclass(frozen=True)
class LsmConfig:
    """Regression Monte Carlo settings; 2^20 paths keep the price good to a
    fraction of a basis point."""

    n_paths: int = 1 << 20
    degree: int = 3
    seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if self.n_paths < (1 << 10):
            raise InvalidParameterError("n_paths must be at least 2^10")
        if self.degree < 1:
            raise InvalidParameterError("degree must be at least 1")


def _theta_of(scenario) -> np.ndarray:
    if isinstance(scenario, MarketScenario):
        return scenario.as_array()
    return np.asarray(scenario, dtype=float).reshape(-1)


def _draws(gen, n, antithetic):
    if antithetic:
        half = gen.standard_normal(((n + 1) // 2, M))
        return np.concatenate([half, -half], axis=0)[:n]
    return gen.standard_normal((n, M))


def _simulate_flows(theta, gaussians, phi, start_index, x0):
    """State path and deflated period flows for one scenario (values only).

    The scenario-derived quantities are kept at shape (1,) and broadcast
    against the path axis.
    """
    n = gaussians.shape[0]
    model = derive_model(theta.reshape(1, -1), phi=phi)
    xs = state_path(model, gaussians, x0=np.full(n, x0), start=start_index)
    flows = {m: fm.val(period_flow(model, m, xs[m], xs[m + 1])) for m in range(max(start_index, 1), M)}
    return model, xs, flows


def _fit_continuation(x, target, degree):
    """Least-squares polynomial fit of realized continuation values on the state.

    The state column is standardized first; rank deficiency (typically a
    deterministic state) reduces the degree automatically with a warning.
    """
    sd = x.std()
    z = (x - x.mean()) / (sd if sd > 1e-13 else 1.0)
    deg = degree
    while True:
        basis = np.column_stack([z**k for k in range(deg + 1)])
        coef, _, rank, _ = np.linalg.lstsq(basis, target, rcond=None)
        if rank == basis.shape[1] or deg == 0:
            if rank < basis.shape[1]:
                warnings.warn("regression basis rank deficient even at degree 0")
            return coef, x.mean(), (sd if sd > 1e-13 else 1.0), deg
        deg = max(deg - 1, 0)
        warnings.warn(f"regression rank deficiency: reducing basis degree to {deg}")


def _eval_continuation(fit, x):
    coef, mu, sd, deg = fit
    z = (x - mu) / sd
    basis = np.column_stack([z**k for k in range(deg + 1)])
    return basis @ coef


def lsm_price(scenario, cfg: LsmConfig, phi: int = 1, start_index: int = 0, x0: float = 0.0):
    """Cancellable-swap value (price, standard error) for one scenario.

    With ``start_index`` = 0 this is the value at inception (the first gate
    applies at the first call date and the period paid there is excluded);
    with ``start_index`` = m >= 1 it is the time-t_m value in t_m currency,
    conditional on the holder having just continued at t_m, for state x0.
    """
    theta = _theta_of(scenario)
    gen_fit = seeding.rng(cfg.seed, seeding.LSM_REGRESSION)
    g_fit = _draws(gen_fit, cfg.n_paths, cfg.antithetic)
    model, xs, flows = _simulate_flows(theta, g_fit, phi, start_index, x0)

    fits = {}
    u = flows[M - 1].copy()
    for k in range(M - 2, max(start_index, 1) - 1, -1):
        fit = _fit_continuation(xs[k + 1], u, cfg.degree)
        fits[k + 1] = fit
        hold = _eval_continuation(fit, xs[k + 1]) > 0.0
        u = flows[k] + np.where(hold, u, 0.0)
    if start_index == 0:
        # the gate at the first call date regresses the realized value just
        # after it; there is no period flow before t_1 to add
        fits[1] = _fit_continuation(xs[1], u, cfg.degree)

    gen_eval = seeding.rng(cfg.seed, seeding.LSM_EVALUATION)
    g_eval = _draws(gen_eval, cfg.n_paths, cfg.antithetic)
    model_e, xs_e, flows_e = _simulate_flows(theta, g_eval, phi, start_index, x0)
    n = g_eval.shape[0]
    alive = np.ones(n, dtype=bool)
    value = np.zeros(n)
    first = max(start_index, 1)
    for m in range(first, M):
        if m > start_index:
            alive = alive & (_eval_continuation(fits[m], xs_e[m]) > 0.0)
        value += alive * flows_e[m]
    if start_index > 0:
        value = value * fm.val(
            numeraire(model_e.lgm, model_e.curve, GRID[start_index], np.full(n, x0))
        )
    if cfg.antithetic:
        half = n // 2
        value = 0.5 * (value[:half] + value[half : 2 * half])
    price = float(value.mean())
    stderr = float(value.std(ddof=1) / np.sqrt(value.size))
    return price, stderr


def exhaustive_zero_vol_price(scenario, phi: int = 1, start_index: int = 0, x0: float = 0.0) -> float:
    """Deterministic optimum when all volatility is zero.

    The state is frozen, so every cancellation date can be tried exhaustively:
    the value is the largest prefix sum of the deflated flows (cancelling at
    the first call date yields exactly zero).
    """
    theta = _theta_of(scenario)
    g = np.zeros((1, M))
    model, xs, flows = _simulate_flows(theta, g, phi, start_index, x0)
    seq = [float(flows[m][0]) for m in range(max(start_index, 1), M)]
    prefix = np.cumsum(seq)
    if start_index == 0:
        return max(0.0, float(prefix.max()))
    # the period starting at t_m is already committed; cancellation can stop
    # the sum after any later date
    numer = float(np.atleast_1d(fm.val(numeraire(model.lgm, model.curve, GRID[start_index], np.full(1, x0))))[0])
    return float(prefix.max()) * numer


def european_mc_price(
    spec: SwapSpec,
    lgm_params: LgmParams,
    curve: NelsonSiegelParams,
    n_paths: int,
    seed: int,
    antithetic: bool = True,
):
    """Brute-force European swaption price: x_T is sampled exactly from its
    Gaussian law and the deflated exercise payoff averaged."""
    gen = seeding.rng(seed, seeding.EUROPEAN_MC)
    if antithetic:
        half = gen.standard_normal((n_paths + 1) // 2)
        draws = np.concatenate([half, -half])[:n_paths]
    else:
        draws = gen.standard_normal(n_paths)
    T = spec.start
    x_T = draws * np.sqrt(fm.val(zeta(lgm_params.vols, T)))
    payoff = np.maximum(fm.val(swap_value(spec, lgm_params, curve, T, x_T)), 0.0)
    deflated = payoff / fm.val(numeraire(lgm_params, curve, T, x_T))
    if antithetic:
        h = n_paths // 2
        deflated = 0.5 * (deflated[:h] + deflated[h : 2 * h])
    return float(deflated.mean()), float(deflated.std(ddof=1) / np.sqrt(deflated.size))

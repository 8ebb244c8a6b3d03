import numpy as np
import pytest

from bermudann import curves, fm, lgm, oracle, products, sampler, simulate
from bermudann.errors import DegenerateVarianceError, InvalidTimeError
from tests.conftest import scenario_model

ANNUAL = np.arange(1.0, 11.0)


def test_par_swap_is_zero(flat_curve, basic_lgm):
    k = curves.atm_rate(flat_curve, ANNUAL, np.ones(10))
    spec = products.default_swap(1, k)
    assert abs(products.swap_value(spec, basic_lgm, flat_curve, 0.0, 0.0)) < 1e-12


def test_payer_receiver_antisymmetry(flat_curve, basic_lgm):
    payer = products.default_swap(1, 0.03)
    receiver = products.default_swap(-1, 0.03)
    for x in (-0.01, 0.0, 0.02):
        vp = products.swap_value(payer, basic_lgm, flat_curve, 0.0, x)
        vr = products.swap_value(receiver, basic_lgm, flat_curve, 0.0, x)
        assert vp + vr == pytest.approx(0.0, abs=1e-16)


def test_swap_value_zcb_composition(flat_curve, basic_lgm):
    spec = products.default_swap(1, 0.03)
    expected = (
        lgm.zcb(basic_lgm, flat_curve, 0.0, 0.0, 0.0)
        - lgm.zcb(basic_lgm, flat_curve, 0.0, 0.0, 10.0)
        - 0.03 * sum(lgm.zcb(basic_lgm, flat_curve, 0.0, 0.0, t) for t in ANNUAL)
    )
    assert products.swap_value(spec, basic_lgm, flat_curve, 0.0, 0.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(InvalidTimeError):
        products.swap_value(products.SwapSpec(1, 0.03, 3.0, (4.0, 5.0)), basic_lgm, flat_curve, 3.5, 0.0)


def test_breakeven_single_payment_analytic(flat_curve, basic_lgm):
    # M = 1: 1 - (1 + K dT) Ztilde(y) = 0 inverts in closed form
    spec = products.SwapSpec(1, 0.03, 5.0, (6.0,))
    y = products.breakeven_y(spec, basic_lgm, flat_curve)
    h5 = lgm.h_function(0.1, 5.0)
    h6 = lgm.h_function(0.1, 6.0)
    c = h6 - h5
    z5 = lgm.zeta(basic_lgm.vols, 5.0)
    amp = np.exp(-0.02 * 6.0) / np.exp(-0.02 * 5.0) * np.exp(-0.5 * c * c * z5)
    expected = -np.log(1.0 / ((1 + 0.03) * amp)) / c
    assert float(y) == pytest.approx(expected, rel=1e-10)


def test_breakeven_zero_strike(flat_curve, basic_lgm):
    # K = 0: payoff is 1 - Ztilde(y; T_M); root where the terminal bond is par
    spec = products.SwapSpec(1, 0.0, 2.0, (3.0, 4.0, 5.0))
    y = products.breakeven_y(spec, basic_lgm, flat_curve)
    h2 = lgm.h_function(0.1, 2.0)
    h5 = lgm.h_function(0.1, 5.0)
    c = h5 - h2
    z2 = lgm.zeta(basic_lgm.vols, 2.0)
    amp = np.exp(-0.02 * 5.0) / np.exp(-0.02 * 2.0) * np.exp(-0.5 * c * c * z2)
    assert float(y) == pytest.approx(np.log(amp) / c, rel=1e-10)


def test_breakeven_payoff_properties(flat_curve, basic_lgm):
    k = curves.atm_rate(flat_curve, ANNUAL, np.ones(10))
    spec = products.SwapSpec(1, k, 1.0, tuple(ANNUAL[1:]))
    y = float(products.breakeven_y(spec, basic_lgm, flat_curve))
    cs, amps = products._breakeven_terms(spec, basic_lgm, flat_curve)
    g0, _ = products._payoff_in_y(spec, cs, amps, y)
    g_lo, _ = products._payoff_in_y(spec, cs, amps, y - 1e-4)
    g_hi, _ = products._payoff_in_y(spec, cs, amps, y + 1e-4)
    assert abs(g0) < 1e-12
    assert np.sign(g_lo) != np.sign(g_hi)


def test_european_price_t0_specialization_exact(tc4_scenarios):
    for theta in tc4_scenarios[:32]:
        lgm_p, curve, k = scenario_model(theta)
        spec = products.SwapSpec(1, k, 1.0, tuple(ANNUAL[1:]))
        assert products.european_price_0(spec, lgm_p, curve) == products.european_price_t(
            spec, lgm_p, curve, 0.0, 0.0
        )


def test_put_call_parity_analytic(tc4_scenarios):
    for theta in tc4_scenarios:
        lgm_p, curve, k = scenario_model(theta)
        t, x = 1.5, 0.004
        payer = products.SwapSpec(1, k, 3.0, tuple(range(4, 11)))
        receiver = products.SwapSpec(-1, k, 3.0, tuple(range(4, 11)))
        vp = products.european_price_t(payer, lgm_p, curve, t, x)
        vr = products.european_price_t(receiver, lgm_p, curve, t, x)
        swap = products.swap_value(payer, lgm_p, curve, t, x)
        scale = max(abs(vp) + abs(vr), 1e-3)
        assert abs((vp - vr) - swap) <= 1e-10 * scale


def test_monotonicity_in_strike(flat_curve, basic_lgm):
    atm = curves.atm_rate(flat_curve, ANNUAL, np.ones(10))
    grid = atm + np.linspace(-0.01, 0.01, 21)
    payer_prices = [
        products.european_price_0(products.SwapSpec(1, k, 1.0, tuple(ANNUAL[1:])), basic_lgm, flat_curve)
        for k in grid
    ]
    receiver_prices = [
        products.european_price_0(products.SwapSpec(-1, k, 1.0, tuple(ANNUAL[1:])), basic_lgm, flat_curve)
        for k in grid
    ]
    assert np.all(np.diff(payer_prices) < 0.0)
    assert np.all(np.diff(receiver_prices) > 0.0)


def test_vanishing_volatility_reaches_intrinsic(flat_curve):
    tiny = lgm.LgmParams(0.1, lgm.VolSchedule((0.0, 10.0), (1e-7,)))
    spec = products.SwapSpec(1, 0.015, 2.0, tuple(range(3, 11)))
    price = products.european_price_t(spec, tiny, flat_curve, 0.0, 0.0)
    intrinsic = max(products.swap_value(spec, tiny, flat_curve, 0.0, 0.0), 0.0)
    assert price == pytest.approx(intrinsic, abs=1e-6)


def test_price_at_least_intrinsic(tc4_scenarios):
    for theta in tc4_scenarios[:64]:
        lgm_p, curve, k = scenario_model(theta)
        spec = products.SwapSpec(1, k, 4.0, tuple(range(5, 11)))
        for x in (-0.02, 0.0, 0.02):
            price = products.european_price_t(spec, lgm_p, curve, 1.0, x)
            intrinsic = products.swap_value(spec, lgm_p, curve, 1.0, x)
            assert price >= max(intrinsic, 0.0) - 1e-12


def test_deep_itm_receiver_asymptote(flat_curve, basic_lgm):
    k = 0.5  # far above any sampled ATM level
    spec = products.SwapSpec(-1, k, 1.0, tuple(ANNUAL[1:]))
    price = products.european_price_0(spec, basic_lgm, flat_curve)
    d = lambda t: np.exp(-0.02 * t)
    expected = k * sum(d(t) for t in ANNUAL[1:]) + d(10.0) - d(1.0)
    assert price == pytest.approx(expected, rel=1e-12)
    # deep out-of-the-money payer at the same strike is worthless
    payer = products.SwapSpec(1, k, 1.0, tuple(ANNUAL[1:]))
    assert products.european_price_0(payer, basic_lgm, flat_curve) < 1e-12


def test_european_price_against_mc(tc4_scenarios):
    misses = 0
    for i, theta in enumerate(tc4_scenarios[:20]):
        lgm_p, curve, k = scenario_model(theta)
        spec = products.SwapSpec(1, k, 3.0, tuple(range(4, 11)))
        analytic = products.european_price_0(spec, lgm_p, curve)
        mc, se = oracle.european_mc_price(spec, lgm_p, curve, 1 << 16, seed=900 + i)
        if abs(mc - analytic) > 3 * se:
            misses += 1
    assert misses <= 1


def test_european_price_conditional_mc_at_future_date(tc4_scenarios):
    # time-t formula vs conditional Monte Carlo: x_T | x_t is Gaussian with
    # variance zeta(T) - zeta(t)
    gen = np.random.default_rng(424242)
    misses = 0
    for theta in tc4_scenarios[:10]:
        lgm_p, curve, k = scenario_model(theta)
        spec = products.SwapSpec(1, k, 4.0, tuple(range(5, 11)))
        t, x_t = 1.0, 0.01
        v = lgm.zeta(lgm_p.vols, 4.0) - lgm.zeta(lgm_p.vols, t)
        x_T = x_t + np.sqrt(v) * gen.standard_normal(1 << 16)
        payoff = np.maximum(products.swap_value(spec, lgm_p, curve, 4.0, x_T), 0.0)
        deflated = payoff / lgm.numeraire(lgm_p, curve, 4.0, x_T)
        mc = deflated.mean() * lgm.numeraire(lgm_p, curve, t, x_t)
        se = deflated.std() / np.sqrt(x_T.size) * lgm.numeraire(lgm_p, curve, t, x_t)
        analytic = products.european_price_t(spec, lgm_p, curve, t, x_t)
        if abs(mc - analytic) > 3 * se:
            misses += 1
    assert misses == 0


def test_degenerate_variance_raises(flat_curve):
    zero = lgm.LgmParams(0.1, lgm.VolSchedule((0.0, 10.0), (0.0,)))
    spec = products.SwapSpec(1, 0.02, 2.0, (3.0, 4.0))
    with pytest.raises(DegenerateVarianceError):
        products.european_price_t(spec, zero, flat_curve, 0.0, 0.0)


def test_coterminal_prices_masking(basic_lgm, flat_curve):
    cots = products.coterminal_set(1, curves.atm_rate(flat_curve, ANNUAL, np.ones(10)))
    assert len(cots) == 9
    at0 = products.coterminal_prices(cots, basic_lgm, flat_curve, 0.0, 0.0)
    assert all(p > 0.0 for p in at0)
    at4 = products.coterminal_prices(cots, basic_lgm, flat_curve, 4.0, 0.003)
    assert all(np.all(p == 0.0) for p in at4[:3])  # maturities 1..3 lie strictly before t
    assert all(np.all(np.asarray(p) >= 0.0) for p in at4[3:])
    assert any(np.all(np.asarray(p) > 0.0) for p in at4[4:])
    late = products.coterminal_prices(cots, basic_lgm, flat_curve, 9.0 + 1e-9, 0.0)
    assert all(np.all(p == 0.0) for p in late)


def test_bermudan_from_cancellable_identity():
    assert products.bermudan_from_cancellable(0.0123, 0.0123) == 0.0
    assert products.bermudan_from_cancellable(0.0, 0.0456) == 0.0456


def test_bermudan_lower_bound_vs_max_coterminal():
    # the exit option embedded in the cancellable payer swap is a Bermudan
    # receiver on the remaining flows; more exercise rights dominate every
    # single European coterminal, up to oracle noise
    theta = sampler.TEST_CASES["IV"].midpoint()
    theta[-1] = 0.004
    lgm_p, curve, k = scenario_model(theta)
    cancellable, se = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 16, seed=31), phi=1)
    swap_tail = _deflated_swap_tail(theta)
    exit_option = cancellable - swap_tail
    cots = products.coterminal_set(-1, k)  # cancelling a payer swap enters receiver swaps
    best = max(products.european_price_0(c, lgm_p, curve) for c in cots)
    assert exit_option >= best - 3 * se - 1e-4
    # the reporting identity carries the same quantity with the opposite sign
    assert products.bermudan_from_cancellable(cancellable, swap_tail) == pytest.approx(-exit_option, abs=0)


def _deflated_swap_tail(theta):
    """Analytic value of the swap flows the cancellable product can earn
    (periods from the first call date on)."""
    model = simulate.derive_model(theta.reshape(1, -1), phi=1)
    total = 0.0
    for m in range(1, simulate.M):
        d_m = curves.discount_factor(model.curve, float(m))
        d_m1 = curves.discount_factor(model.curve, float(m + 1))
        total += fm.val(d_m - (1.0 + model.fixed_rate) * d_m1)[0]
    return total

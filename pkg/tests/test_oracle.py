import numpy as np
import pytest

from bermudann import oracle, products, sampler
from bermudann.errors import InvalidParameterError
from tests.conftest import scenario_model


def _zero_vol_theta(beta1=-0.012, dk=0.0015):
    return np.array([0.03, 0.0, 0.0, 0.0, 0.0, 0.02, beta1, 0.0, 1.5, dk])


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        oracle.LsmConfig(n_paths=100)
    with pytest.raises(InvalidParameterError):
        oracle.LsmConfig(degree=0)


def test_zero_vol_matches_exhaustive_search():
    # deterministic model: regression Monte Carlo must reproduce the best
    # deterministic cancellation date exactly
    for theta in (
        _zero_vol_theta(beta1=-0.012, dk=0.0015),  # cancel immediately
        _zero_vol_theta(beta1=0.0, dk=-0.002),     # never cancel
        _zero_vol_theta(beta1=-0.018, dk=0.0005),  # stop mid-horizon
    ):
        exact = oracle.exhaustive_zero_vol_price(theta, phi=1)
        with pytest.warns(UserWarning):
            got, se = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 10, seed=3), phi=1)
        assert got == pytest.approx(exact, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)


def test_single_decision_matches_closed_form():
    # only the last call date (start_index = M-2 leaves one decision): the
    # holder keeps F_{M-2} and drops F_{M-1} when its fitted value is negative
    theta = sampler.TEST_CASES["IV"].midpoint()
    theta[-1] = 0.003
    lgm_p, curve, k = scenario_model(theta)
    price, se = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 17, seed=5), phi=1, start_index=8, x0=0.004)
    # one remaining decision at t_9 on the final period value: the committed
    # period [8, 9] plus a European-style option to stay in [9, 10]
    from bermudann import fm, lgm as lgm_mod, simulate

    model = simulate.derive_model(theta.reshape(1, -1), phi=1)
    committed = (
        lgm_mod.zcb(model.lgm, model.curve, 8.0, 0.004, 8.0)
        - (1.0 + model.fixed_rate) * lgm_mod.zcb(model.lgm, model.curve, 8.0, 0.004, 9.0)
    )
    tail_spec = products.SwapSpec(1, float(np.atleast_1d(fm.val(model.fixed_rate))[0]), 9.0, (10.0,))
    option = products.european_price_t(tail_spec, lgm_p, curve, 8.0, 0.004)
    expected = float(np.atleast_1d(fm.val(committed))[0]) + float(option)
    assert abs(price - expected) < 3 * se + 5e-5


def test_stderr_scales_with_paths():
    theta = sampler.TEST_CASES["IV"].midpoint()
    _, se_small = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 13, seed=7), phi=1)
    _, se_big = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 14, seed=7), phi=1)
    assert 1.25 < se_small / se_big < 1.6


def test_price_stable_across_seeds():
    theta = sampler.TEST_CASES["IV"].midpoint()
    p1, se1 = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 15, seed=1), phi=1)
    p2, se2 = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 15, seed=2), phi=1)
    assert abs(p1 - p2) < 3 * np.hypot(se1, se2)


def test_lsm_low_bias_on_deterministic_truth():
    theta = _zero_vol_theta(beta1=-0.018, dk=0.0005)
    exact = oracle.exhaustive_zero_vol_price(theta, phi=1)
    with pytest.warns(UserWarning):
        got, se = oracle.lsm_price(theta, oracle.LsmConfig(n_paths=1 << 11, seed=9), phi=1)
    assert got <= exact + 3 * se + 1e-12


def test_european_mc_against_analytic(tc4_scenarios):
    misses = 0
    for i, theta in enumerate(tc4_scenarios[:12]):
        lgm_p, curve, k = scenario_model(theta)
        spec = products.SwapSpec(1, k, 2.0, tuple(range(3, 11)))
        analytic = products.european_price_0(spec, lgm_p, curve)
        mc, se = oracle.european_mc_price(spec, lgm_p, curve, 1 << 15, seed=40 + i)
        if abs(mc - analytic) > 3 * se:
            misses += 1
    assert misses <= 1


def test_european_mc_antithetic_reduces_variance(flat_curve, basic_lgm):
    spec = products.SwapSpec(1, 0.0202, 5.0, tuple(range(6, 11)))
    p_anti, se_anti = oracle.european_mc_price(spec, basic_lgm, flat_curve, 1 << 14, seed=3, antithetic=True)
    p_raw, se_raw = oracle.european_mc_price(spec, basic_lgm, flat_curve, 1 << 14, seed=3, antithetic=False)
    assert abs(p_anti - p_raw) < 4 * max(se_anti, se_raw)
    assert se_anti < se_raw


def test_european_mc_zero_vol_is_intrinsic(flat_curve):
    from bermudann import lgm as lgm_mod

    tiny = lgm_mod.LgmParams(0.1, lgm_mod.VolSchedule((0.0, 10.0), (1e-9,)))
    spec = products.SwapSpec(1, 0.01, 3.0, tuple(range(4, 11)))
    mc, se = oracle.european_mc_price(spec, tiny, flat_curve, 1 << 12, seed=1)
    # the estimator reports time-0 (deflated) value
    intrinsic = max(products.swap_value(spec, tiny, flat_curve, 3.0, 0.0), 0.0)
    deflated = intrinsic / lgm_mod.numeraire(tiny, flat_curve, 3.0, 0.0)
    assert mc == pytest.approx(deflated, abs=1e-6)

import numpy as np
import pytest

from bermudann import curves, lgm, sampler, simulate


@pytest.fixture
def flat_curve():
    return curves.NelsonSiegelParams(0.02, 0.0, 0.0, 1.0)


@pytest.fixture
def basic_lgm():
    vols = lgm.VolSchedule((0.0, 1.0, 5.0, 10.0), (0.0075, 0.0075, 0.0075))
    return lgm.LgmParams(0.1, vols)


@pytest.fixture
def tc4_scenarios():
    """A reproducible batch of test-case-IV scenario rows."""
    return sampler.sample_scenarios(sampler.TEST_CASES["IV"], 256, seed=20240901)


def scenario_model(theta, phi=1):
    """Scalar-parameter model pieces for a single scenario row."""
    from bermudann import fm

    model = simulate.derive_model(np.asarray(theta).reshape(1, -1), phi=phi)
    kappa = float(np.atleast_1d(fm.val(model.lgm.kappa))[0])
    alphas = tuple(float(np.atleast_1d(fm.val(a))[0]) for a in model.lgm.vols.alphas)
    curve = curves.NelsonSiegelParams(*[float(theta[i]) for i in (5, 6, 7, 8)])
    k_rate = float(np.atleast_1d(fm.val(model.fixed_rate))[0])
    return lgm.LgmParams(kappa, lgm.VolSchedule(simulate.VOL_BREAKPOINTS, alphas)), curve, k_rate

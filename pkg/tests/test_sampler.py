import numpy as np
import pytest

from bermudann import cascade, fm, products, sampler, seeding, simulate
from bermudann.errors import CascadeOrderError, NumericAbortError

EPS = 1e-5


def test_presets_match_published_table():
    golden = {
        "I": {
            "l_kappa": -0.05, "u_kappa": 0.1,
            "l_a": -EPS, "u_a": EPS, "l_b": -EPS, "u_b": EPS,
            "l_c": -EPS, "u_c": EPS, "l_d": 0.0075 - EPS, "u_d": 0.0075 + EPS,
            "l_0": 0.02 - EPS, "u_0": 0.02 + EPS, "l_1": -EPS, "u_1": EPS,
            "l_2": -EPS, "u_2": EPS, "l_tau": 1 - EPS, "u_tau": 1 + EPS,
            "l_K": -EPS, "u_K": EPS,
        },
        "II": {
            "l_kappa": -0.05, "u_kappa": 0.1,
            "l_a": EPS, "u_a": 0.0075, "l_b": 0.0, "u_b": 0.0005,
            "l_c": 0.0, "u_c": 0.25, "l_d": EPS, "u_d": 0.0075,
            "l_0": 0.02 - EPS, "u_0": 0.02 + EPS, "l_1": -EPS, "u_1": EPS,
            "l_2": -EPS, "u_2": EPS, "l_tau": 1 - EPS, "u_tau": 1 + EPS,
            "l_K": -EPS, "u_K": EPS,
        },
        "III": {
            "l_kappa": -0.05, "u_kappa": 0.1,
            "l_a": EPS, "u_a": 0.0075, "l_b": 0.0, "u_b": 0.0005,
            "l_c": 0.0, "u_c": 0.25, "l_d": EPS, "u_d": 0.0075,
            "l_0": -0.005, "u_0": 0.05, "l_1": 0.0, "u_1": 0.001,
            "l_2": 0.0, "u_2": 0.01, "l_tau": 0.01, "u_tau": 2.0,
            "l_K": -EPS, "u_K": EPS,
        },
        "IV": {
            "l_kappa": -0.05, "u_kappa": 0.1,
            "l_a": EPS, "u_a": 0.0075, "l_b": 0.0, "u_b": 0.0005,
            "l_c": 0.0, "u_c": 0.25, "l_d": EPS, "u_d": 0.0075,
            "l_0": -0.005, "u_0": 0.05, "l_1": 0.0, "u_1": 0.001,
            "l_2": 0.0, "u_2": 0.01, "l_tau": 0.01, "u_tau": 2.0,
            "l_K": -0.01, "u_K": 0.01,
        },
    }
    for case, expected in golden.items():
        assert sampler.TEST_CASES[case].to_dict() == expected
    # round trip through the dict form
    for case in golden:
        r = sampler.TEST_CASES[case]
        assert sampler.ParamRanges.from_dict(r.to_dict()) == r


def test_degenerate_ranges_yield_identical_scenarios():
    theta0 = sampler.TEST_CASES["I"].midpoint()
    ranges = sampler.ParamRanges.degenerate(theta0)
    theta = sampler.sample_scenarios(ranges, 32, seed=5)
    assert np.all(theta == theta0)


def test_case_one_freezes_vol_group():
    theta = sampler.sample_scenarios(sampler.TEST_CASES["I"], 2000, seed=6)
    for col, center in ((1, 0.0), (2, 0.0), (3, 0.0), (4, 0.0075)):
        assert np.all(np.abs(theta[:, col] - center) <= EPS)
    assert theta[:, 0].min() < -0.03 and theta[:, 0].max() > 0.08


def test_kappa_range_coverage():
    theta = sampler.sample_scenarios(sampler.TEST_CASES["I"], 100_000, seed=7)
    k = theta[:, 0]
    assert k.min() >= -0.05 and k.max() <= 0.1
    assert (k.max() - k.min()) >= 0.99 * 0.15


def test_scenario_domains_disjoint():
    ranges = sampler.TEST_CASES["IV"]
    n = 1 << 14
    back = sampler.sample_scenarios(ranges, n, seeding.rng(3, seeding.BACKWARD_SCENARIOS))
    fwd = sampler.sample_scenarios(ranges, n, seeding.rng(3, seeding.FORWARD_SCENARIOS))
    back_rows = {row.tobytes() for row in back}
    assert not any(row.tobytes() in back_rows for row in fwd)


def test_dataset_file_round_trip(tmp_path):
    ranges = sampler.TEST_CASES["IV"]
    ds = sampler.build_forward_dataset(ranges, 64, 2, cascade.intrinsic_policy(1), seed=3, test_case="IV")
    path = tmp_path / "ds.bin"
    ds.save(path)
    back = sampler.Dataset.load(path)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.value_labels, ds.value_labels)
    assert np.array_equal(back.diff_labels, ds.diff_labels)
    assert back.meta == ds.meta
    # byte-for-byte stability of the container itself
    path2 = tmp_path / "ds2.bin"
    back.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_forward_dataset_determinism():
    ranges = sampler.TEST_CASES["IV"]
    pol = cascade.intrinsic_policy(1)
    a = sampler.build_forward_dataset(ranges, 128, 2, pol, seed=9)
    b = sampler.build_forward_dataset(ranges, 128, 2, pol, seed=9)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.value_labels, b.value_labels)
    assert np.array_equal(a.diff_labels, b.diff_labels)


def test_forward_dataset_never_cancel_zero_width():
    # scenario frozen, never-cancel policy, n_mc = 1, zero vol: every label is
    # the deterministic deflated tail value
    theta = sampler.TEST_CASES["I"].midpoint()
    theta[1:5] = 0.0  # kill the volatility group
    ranges = sampler.ParamRanges.degenerate(theta)
    ds = sampler.build_forward_dataset(ranges, 16, 1, cascade.never_cancel_policy, seed=1)
    assert np.ptp(ds.value_labels[:, 0]) == 0.0
    from bermudann.oracle import exhaustive_zero_vol_price

    never = ds.value_labels[0, 0]
    model = simulate.derive_model(theta.reshape(1, -1))
    xs = simulate.state_path(model, np.zeros((1, simulate.M)))
    expected = sum(
        float(fm.val(simulate.period_flow(model, m, xs[m], xs[m + 1]))[0]) for m in range(1, simulate.M)
    )
    assert never == pytest.approx(expected, abs=1e-7)


def test_backward_dataset_base_case():
    # m = M-1: the label is N(t_{M-1}, x) * F_{M-1} exactly, no networks needed
    ranges = sampler.TEST_CASES["IV"]
    ds = sampler.build_backward_dataset(ranges, 32, simulate.M - 1, {}, seed=4)
    assert ds.d == simulate.N_SCENARIO + 1
    theta, g = sampler.backward_path_set(ranges, 32, 4)
    model = simulate.derive_model(theta)
    xs = simulate.state_path(model, g)
    from bermudann.lgm import numeraire

    m = simulate.M - 1
    flows = fm.val(simulate.period_flow(model, m, xs[m], xs[m + 1]))
    numer = fm.val(numeraire(model.lgm, model.curve, simulate.GRID[m], xs[m]))
    assert ds.value_labels[:, 0] == pytest.approx(numer * flows, rel=1e-6)


def test_backward_dataset_requires_prior_networks():
    ranges = sampler.TEST_CASES["IV"]
    with pytest.raises(CascadeOrderError):
        sampler.build_backward_dataset(ranges, 32, simulate.M - 2, {}, seed=4)


def test_joint_labels_shapes_and_signs():
    ranges = sampler.TEST_CASES["IV"]
    ds = sampler.build_forward_dataset(ranges, 96, 1, cascade.intrinsic_policy(1), seed=12, test_case="IV")
    joint = sampler.attach_joint_labels(ds)
    assert joint.p == 1 + (simulate.M - 1)
    assert np.all(joint.value_labels[:, 1:] >= 0.0)
    # payer coterminal prices fall with the strike spread
    assert np.all(joint.diff_labels[:, 1:, 9] <= 1e-7)


def test_joint_label_audit_catches_corruption(monkeypatch):
    ranges = sampler.TEST_CASES["IV"]
    ds = sampler.build_forward_dataset(ranges, 64, 1, cascade.intrinsic_policy(1), seed=13)
    import bermudann.sampler as sampler_mod

    original = sampler_mod._coterminal_block

    def corrupted(X, t_val, d, phi):
        vals, tans = original(X, t_val, d, phi)
        return vals, tans * 1.5
    monkeypatch.setattr(sampler_mod, "_coterminal_block", corrupted)
    with pytest.raises(NumericAbortError):
        sampler_mod.attach_joint_labels(ds)


def test_time_augmented_rows(tmp_path):
    ranges = sampler.TEST_CASES["I"]
    ds = sampler.build_time_augmented_dataset(ranges, 256, cascade.intrinsic_policy(1), seed=6)
    assert ds.d == simulate.N_SCENARIO + 2
    t_col = ds.inputs[:, simulate.N_SCENARIO]
    assert set(np.unique(t_col)).issubset(set(float(m) for m in range(simulate.M - 1)))
    # t = 0 rows carry x = 0 and match the plain forward value convention
    at0 = ds.inputs[:, simulate.N_SCENARIO] == 0.0
    assert np.all(ds.inputs[at0, simulate.N_SCENARIO + 1] == 0.0)
    # t column never carries differential labels
    assert np.all(ds.diff_labels[:, :, simulate.N_SCENARIO] == 0.0)
    joint = sampler.attach_joint_labels(ds)
    # expired coterminals and their differentials are exactly zero
    for m in range(1, simulate.M - 1):
        rows = t_col == float(m)
        if not rows.any():
            continue
        expired = np.arange(1, simulate.M)[None, :] < m  # maturities strictly before t
        sub = joint.value_labels[rows][:, 1:]
        assert np.all(sub[:, expired[0]] == 0.0)
        assert np.all(joint.diff_labels[rows][:, 1:, :][:, expired[0], :] == 0.0)

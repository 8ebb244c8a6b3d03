"""Interdependent network cascade for the cancellable swap.

The backward stage trains one hold-value network per call date, strictly in
descending date order, on a single shared path set whose labels are replayed
through the already-trained later networks.  The forward stage freezes that
policy, builds sampled payoffs on freshly drawn scenarios and fits the
pricing network (optionally with the analytic coterminal ladder as joint
outputs).  A time-augmented variant adds the valuation date and the state as
inputs (with doubled width) to price at any call date.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fm
from .dann import DannModel, MlpConfig, load_model, predict_price, save_model, train
from .errors import CascadeOrderError, ConfigError, IncompatibleFilesError
from .products import default_swap, swap_value
from .sampler import (
    Dataset,
    DatasetMeta,
    ParamRanges,
    attach_joint_labels,
    backward_labels,
    backward_path_set,
    build_forward_dataset,
    build_time_augmented_dataset,
)
from .simulate import GRID, M, N_SCENARIO, derive_model

BUNDLE_FORMAT_VERSION = 1


def default_mlp_config(inputs: int, outputs: int = 1, time_augmented: bool = False, **overrides) -> MlpConfig:
    """Standard hyperparameters; time-augmented pricers double the width."""
    base = dict(inputs=inputs, outputs=outputs, width=64 if time_augmented else 32)
    base.update(overrides)
    return MlpConfig(**base)


@dataclass
class BackwardPolicy:
    """One hold-value network per call date t_m, m = 1..M-1."""

    models: dict
    ranges: ParamRanges
    seed: int
    phi: int

    def __post_init__(self):
        missing = [m for m in range(1, M) if m not in self.models]
        if missing:
            raise CascadeOrderError(f"policy missing models for call dates {missing}")

    def hold_value(self, m: int, theta, x) -> np.ndarray:
        inp = np.column_stack([np.atleast_2d(theta), np.atleast_1d(x)])
        return predict_price(self.models[m], inp)[0][:, 0]

    def hold(self, m: int, theta, x) -> np.ndarray:
        return self.hold_value(m, theta, x) > 0.0

    def as_policy(self):
        return lambda m, theta, x: self.hold(m, theta, x)


@dataclass
class ForwardPricer:
    """Scenario -> cancellable-swap price network (output 0), possibly with
    coterminal European prices as extra outputs, plus the policy that labeled it."""

    model: DannModel
    policy: BackwardPolicy
    joint: bool


@dataclass
class TimeAugmentedPricer:
    """(scenario, valuation time, state) -> price network; valuation times are
    restricted to the call-date grid and assume no cancellation before t."""

    model: DannModel
    policy: BackwardPolicy
    joint: bool


def never_cancel_policy(m, theta, x):
    return np.ones(np.atleast_2d(theta).shape[0], dtype=bool)


def cancel_immediately_policy(m, theta, x):
    return np.zeros(np.atleast_2d(theta).shape[0], dtype=bool)


def intrinsic_policy(phi: int = 1):
    """Hold while the remaining swap (annuity from the next payment on) has
    positive forward value at the current state; a smooth, network-free
    stand-in used for tests and derivative checks."""

    def policy(m, theta, x):
        theta = np.atleast_2d(theta)
        model = derive_model(theta, phi=phi)
        spec = _remaining_swap(phi, model.fixed_rate, m)
        value = fm.val(swap_value(spec, model.lgm, model.curve, GRID[m], np.atleast_1d(x)))
        return value > 0.0

    return policy


def _remaining_swap(phi, fixed_rate, m):
    times = tuple(float(i) for i in range(m + 1, M + 1))
    from .products import SwapSpec

    return SwapSpec(phi=phi, fixed_rate=fixed_rate, start=float(m), payment_times=times)


def train_backward(
    ranges: ParamRanges,
    n_b: int,
    config: MlpConfig = None,
    seed: int = 0,
    phi: int = 1,
    antithetic: bool = True,
    test_case: str = "custom",
    loss_curves: dict = None,
) -> BackwardPolicy:
    """Fit the cancellation policy by descending-date backward induction.

    One shared path set is simulated once; for each call date the labels are
    refreshed by replaying the recursion through the networks already trained
    for the later dates, then a fresh network is fit on (parameters, state).
    """
    if config is None:
        config = default_mlp_config(inputs=N_SCENARIO + 1)
    if config.inputs != N_SCENARIO + 1 or config.outputs != 1:
        raise ConfigError("backward networks map (10 parameters, x) -> hold value")
    theta, gaussians = backward_path_set(ranges, n_b, seed, antithetic)
    models: dict = {}
    for m in range(M - 1, 0, -1):
        X, y, dy = backward_labels(theta, gaussians, m, models, phi=phi)
        dataset = Dataset(
            inputs=X,
            value_labels=y[:, None],
            diff_labels=dy[:, None, :],
            meta=DatasetMeta(kind="backward", test_case=test_case, n_mc=1, seed=seed, m_index=m, phi=phi),
        )
        model = train(replace(config, seed=config.seed + m), dataset)
        models[m] = model
        if loss_curves is not None:
            loss_curves[f"backward_{m}"] = model.loss_curve
    return BackwardPolicy(models=models, ranges=ranges, seed=seed, phi=phi)


def price_forward(
    policy: BackwardPolicy,
    ranges: ParamRanges,
    n_f: int,
    n_mc: int,
    config: MlpConfig = None,
    seed: int = 0,
    phi: int = 1,
    joint: bool = False,
    antithetic: bool = True,
    test_case: str = "custom",
    loss_curves: dict = None,
) -> ForwardPricer:
    """Train the pricing network on sampled payoffs under the frozen policy."""
    outputs = M if joint else 1
    if config is None:
        config = default_mlp_config(inputs=N_SCENARIO, outputs=outputs)
    if config.inputs != N_SCENARIO or config.outputs != outputs:
        raise ConfigError(f"forward network maps 10 parameters -> {outputs} outputs")
    dataset = build_forward_dataset(
        ranges, n_f, n_mc, policy.as_policy(), seed, phi=phi, antithetic=antithetic, test_case=test_case
    )
    if joint:
        dataset = attach_joint_labels(dataset)
    model = train(config, dataset)
    if loss_curves is not None:
        loss_curves["forward_joint" if joint else "forward"] = model.loss_curve
    return ForwardPricer(model=model, policy=policy, joint=joint)


def train_time_augmented(
    policy: BackwardPolicy,
    ranges: ParamRanges,
    n_f: int,
    config: MlpConfig = None,
    seed: int = 0,
    phi: int = 1,
    joint: bool = False,
    test_case: str = "custom",
    loss_curves: dict = None,
) -> TimeAugmentedPricer:
    """Train the valuation-date-aware pricer on surviving-path rows.

    The t input column gets no differential-loss term (masked), since the
    call-date grid gives it no pathwise derivative.
    """
    outputs = M if joint else 1
    width = N_SCENARIO + 2
    mask = tuple(0.0 if i == N_SCENARIO else 1.0 for i in range(width))
    if config is None:
        config = default_mlp_config(inputs=width, outputs=outputs, time_augmented=True, diff_col_mask=mask)
    if config.inputs != width or config.outputs != outputs:
        raise ConfigError(f"time-augmented network maps 12 inputs -> {outputs} outputs")
    if config.diff_col_mask is None:
        config = replace(config, diff_col_mask=mask)
    dataset = build_time_augmented_dataset(ranges, n_f, policy.as_policy(), seed, phi=phi, test_case=test_case)
    if joint:
        dataset = attach_joint_labels(dataset)
    model = train(config, dataset)
    if loss_curves is not None:
        loss_curves["time_augmented_joint" if joint else "time_augmented"] = model.loss_curve
    return TimeAugmentedPricer(model=model, policy=policy, joint=joint)


def price(pricer, scenario, t: float = None, x: float = None):
    """Price one scenario; returns (price, extrapolation flag).

    For a TimeAugmentedPricer, ``t`` (a call date, or 0) and the state ``x``
    are appended to the inputs.  Prices are per unit notional; multiply by
    1e4 for basis points.
    """
    theta = scenario.as_array() if hasattr(scenario, "as_array") else np.asarray(scenario, dtype=float)
    theta = theta.reshape(1, -1)
    if isinstance(pricer, TimeAugmentedPricer):
        if t is None or x is None:
            raise ConfigError("time-augmented pricing needs t and x")
        inp = np.column_stack([theta, [[float(t)]], [[float(x)]]])
    else:
        if t not in (None, 0.0) or (x not in (None, 0.0)):
            raise ConfigError("plain forward pricer values at t = 0 only")
        inp = theta
    values, outside = predict_price(pricer.model, inp)
    return float(values[0, 0]), bool(outside[0])


def coterminal_outputs(pricer, scenario, t: float = None, x: float = None) -> np.ndarray:
    """Joint models' extra outputs (the coterminal European ladder)."""
    if not pricer.joint:
        raise ConfigError("model was not trained with joint outputs")
    theta = scenario.as_array() if hasattr(scenario, "as_array") else np.asarray(scenario, dtype=float)
    theta = theta.reshape(1, -1)
    if isinstance(pricer, TimeAugmentedPricer):
        inp = np.column_stack([theta, [[float(t)]], [[float(x)]]])
    else:
        inp = theta
    values, _ = predict_price(pricer.model, inp)
    return values[0, 1:]


# ---------------------------------------------------------------------------
# bundle serialization: a directory of model files plus a manifest


def save_bundle(path, policy: BackwardPolicy, forward: ForwardPricer = None, timeaug: TimeAugmentedPricer = None, extra_meta: dict = None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "seed": policy.seed,
        "phi": policy.phi,
        "ranges": policy.ranges.to_dict(),
        "models": {},
        "joint": bool(forward.joint) if forward is not None else False,
    }
    if extra_meta:
        manifest.update(extra_meta)
    for m, model in sorted(policy.models.items()):
        name = f"backward_{m}.dann"
        save_model(model, path / name)
        manifest["models"][f"backward_{m}"] = name
    if forward is not None:
        save_model(forward.model, path / "forward.dann")
        manifest["models"]["forward"] = "forward.dann"
    if timeaug is not None:
        save_model(timeaug.model, path / "time_augmented.dann")
        manifest["models"]["time_augmented"] = "time_augmented.dann"
        manifest["timeaug_joint"] = bool(timeaug.joint)
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_bundle(path):
    """Returns (manifest, policy, forward or None, timeaug or None)."""
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise IncompatibleFilesError("unsupported bundle format version")
    models = {}
    for key, fname in manifest["models"].items():
        models[key] = load_model(path / fname)
    policy = BackwardPolicy(
        models={m: models[f"backward_{m}"] for m in range(1, M)},
        ranges=ParamRanges.from_dict(manifest["ranges"]),
        seed=manifest["seed"],
        phi=manifest["phi"],
    )
    forward = None
    if "forward" in models:
        forward = ForwardPricer(model=models["forward"], policy=policy, joint=manifest.get("joint", False))
    timeaug = None
    if "time_augmented" in models:
        timeaug = TimeAugmentedPricer(
            model=models["time_augmented"], policy=policy, joint=manifest.get("timeaug_joint", False)
        )
    return manifest, policy, forward, timeaug

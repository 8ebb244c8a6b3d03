"""Command-line driver: dataset generation, training, validation reports,
and one-off pricing.

Subcommands
-----------
generate   sample scenario sets, simulate the base backward training data,
           and price the validation scenarios with the regression MC oracle
train      fit the backward policy, the forward pricer (and optionally the
           time-augmented pricer); writes a model bundle plus loss curves
report     compare bundle predictions against a validation file; writes
           report.json, histogram.csv and rendered histograms
price      price one scenario given as flags with a trained bundle
oracle     price one scenario with the regression MC oracle

Exit codes: 0 success, 2 configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import seeding
from .cascade import (
    BackwardPolicy,
    default_mlp_config,
    load_bundle,
    price as cascade_price,
    price_forward,
    save_bundle,
    train_backward,
    train_time_augmented,
)
from .dann import MlpConfig, predict_price
from .errors import BermudannError, ConfigError, IncompatibleFilesError, NumericAbortError
from .oracle import LsmConfig, lsm_price
from .report import compute_report, write_report
from .sampler import (
    Dataset,
    DatasetMeta,
    ParamRanges,
    TEST_CASES,
    build_backward_dataset,
    sample_scenarios,
)
from .simulate import GRID, M, N_SCENARIO, SCENARIO_COLUMNS, MarketScenario, derive_model, state_path


@dataclass(frozen=True)
class RunConfig:
    """One experiment: ranges, sample counts, flags and hyperparameters."""

    test_case: str = "I"
    ranges: dict = None  # explicit range dict overrides the preset
    n_b: int = 1 << 14
    n_f: int = 1 << 14
    n_mc: int = 1
    validation: int = 4096
    n_timeaug: int = None  # defaults to n_f
    joint: bool = True
    time_augmented: bool = False
    phi: int = 1
    seed: int = 0
    antithetic: bool = True
    backward_epochs: int = None  # default: the MlpConfig epoch count
    mlp: dict = field(default_factory=dict)
    lsm: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.test_case not in TEST_CASES and self.test_case != "custom":
            raise ConfigError(f"test_case must be one of {sorted(TEST_CASES)} or 'custom'")
        if self.test_case == "custom" and not self.ranges:
            raise ConfigError("custom test case needs explicit ranges")
        if self.phi not in (1, -1):
            raise ConfigError("phi must be +1 or -1")

    def param_ranges(self) -> ParamRanges:
        if self.ranges:
            return ParamRanges.from_dict(self.ranges)
        return TEST_CASES[self.test_case]

    def mlp_config(self, inputs: int, outputs: int, time_augmented: bool = False, **extra) -> MlpConfig:
        overrides = dict(self.mlp)
        overrides.update(extra)
        overrides.setdefault("seed", self.seed)
        return default_mlp_config(inputs=inputs, outputs=outputs, time_augmented=time_augmented, **overrides)

    def lsm_config(self, scenario_index: int = 0) -> LsmConfig:
        opts = dict(self.lsm)
        opts.setdefault("seed", self.seed)
        opts["seed"] = int(opts["seed"]) + scenario_index
        return LsmConfig(**opts)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


class _OutputLock:
    """One CLI invocation per output directory at a time."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory is locked by another run ({self.path})")
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except OSError:
            pass
        return False


def _echo(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_generate(config: RunConfig, out_dir) -> dict:
    """Write the base backward dataset, the forward scenario set, and the
    oracle-priced validation set, with a manifest echoing the config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ranges = config.param_ranges()

    _echo(f"[generate] backward base dataset (m = {M - 1}, n_b = {config.n_b})")
    backward = build_backward_dataset(
        ranges, config.n_b, M - 1, {}, config.seed, phi=config.phi,
        antithetic=config.antithetic, test_case=config.test_case,
    )
    backward.save(out / "backward_base.bin")

    _echo(f"[generate] forward scenario set (n_f = {config.n_f})")
    fwd_theta = sample_scenarios(ranges, config.n_f, seeding.rng(config.seed, seeding.FORWARD_SCENARIOS))
    Dataset(
        inputs=fwd_theta,
        value_labels=np.zeros((config.n_f, 1), dtype=np.float32),
        diff_labels=np.zeros((config.n_f, 1, N_SCENARIO), dtype=np.float32),
        meta=DatasetMeta(kind="scenarios", test_case=config.test_case, n_mc=config.n_mc, seed=config.seed, phi=config.phi),
    ).save(out / "forward_scenarios.bin")

    _echo(f"[generate] validation set ({config.validation} scenarios, oracle pricing)")
    validation = build_validation_set(config)
    validation.save(out / "validation.bin")

    manifest = {"config": config.to_dict(), "files": ["backward_base.bin", "forward_scenarios.bin", "validation.bin"]}
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def build_validation_set(config: RunConfig) -> Dataset:
    """Validation scenarios with (oracle price, standard error) labels."""
    ranges = config.param_ranges()
    theta = sample_scenarios(ranges, config.validation, seeding.rng(config.seed, seeding.VALIDATION_SCENARIOS))
    labels = np.zeros((config.validation, 2))
    for i in range(config.validation):
        labels[i] = lsm_price(theta[i], config.lsm_config(i), phi=config.phi)
    return Dataset(
        inputs=theta,
        value_labels=labels,
        diff_labels=np.zeros((config.validation, 2, N_SCENARIO), dtype=np.float32),
        meta=DatasetMeta(kind="validation", test_case=config.test_case, n_mc=config.n_mc, seed=config.seed, phi=config.phi),
    )


def build_timeaug_validation(policy: BackwardPolicy, config: RunConfig, n_points: int = None) -> Dataset:
    """(scenario, t, surviving x) validation rows priced by the oracle from t.

    Needs the trained policy to draw survival-consistent states, so it is
    produced at training time rather than by ``generate``.
    """
    from .sampler import build_time_augmented_dataset

    n_points = n_points or config.validation
    rows = build_time_augmented_dataset(
        config.param_ranges(), n_points, policy.as_policy(), config.seed + 1,
        phi=config.phi, test_case=config.test_case,
    )
    X = rows.inputs.astype(np.float64)
    labels = np.zeros((rows.n, 2))
    for i in range(rows.n):
        m = int(round(X[i, N_SCENARIO]))
        labels[i] = lsm_price(
            X[i, :N_SCENARIO], config.lsm_config(i), phi=config.phi,
            start_index=m, x0=float(X[i, N_SCENARIO + 1]),
        )
    return Dataset(
        inputs=rows.inputs,
        value_labels=labels,
        diff_labels=np.zeros((rows.n, 2, N_SCENARIO + 2), dtype=np.float32),
        meta=DatasetMeta(kind="validation", test_case=config.test_case, n_mc=config.n_mc, seed=config.seed, phi=config.phi),
    )


def _check_generated_inputs(config: RunConfig, out: Path) -> None:
    for name in ("backward_base.bin", "forward_scenarios.bin"):
        path = out / name
        if not path.exists():
            raise ConfigError(f"missing dataset {path}; run generate first")
    scen = Dataset.load(out / "forward_scenarios.bin")
    expected = sample_scenarios(
        config.param_ranges(), config.n_f, seeding.rng(config.seed, seeding.FORWARD_SCENARIOS)
    ).astype(np.float32)
    if scen.inputs.shape != expected.shape or not np.array_equal(scen.inputs, expected):
        raise IncompatibleFilesError("forward_scenarios.bin does not match the config seed/ranges")


def cmd_train(config: RunConfig, out_dir) -> dict:
    """Train the cascade against previously generated datasets."""
    out = Path(out_dir)
    _check_generated_inputs(config, out)
    ranges = config.param_ranges()
    loss_curves: dict = {}

    backward_cfg = config.mlp_config(inputs=N_SCENARIO + 1, outputs=1)
    if config.backward_epochs is not None:
        backward_cfg = replace(backward_cfg, epochs=config.backward_epochs)
    _echo(f"[train] backward policy: {M - 1} networks, n_b = {config.n_b}, epochs = {backward_cfg.epochs}")
    policy = train_backward(
        ranges, config.n_b, backward_cfg, seed=config.seed, phi=config.phi,
        antithetic=config.antithetic, test_case=config.test_case, loss_curves=loss_curves,
    )

    outputs = M if config.joint else 1
    fwd_cfg = config.mlp_config(inputs=N_SCENARIO, outputs=outputs)
    _echo(f"[train] forward pricer: n_f = {config.n_f}, n_mc = {config.n_mc}, joint = {config.joint}")
    forward = price_forward(
        policy, ranges, config.n_f, config.n_mc, fwd_cfg, seed=config.seed, phi=config.phi,
        joint=config.joint, antithetic=config.antithetic, test_case=config.test_case, loss_curves=loss_curves,
    )

    timeaug = None
    if config.time_augmented:
        n_ta = config.n_timeaug or config.n_f
        ta_cfg = config.mlp_config(
            inputs=N_SCENARIO + 2, outputs=outputs, time_augmented=True,
            diff_col_mask=tuple(0.0 if i == N_SCENARIO else 1.0 for i in range(N_SCENARIO + 2)),
        )
        _echo(f"[train] time-augmented pricer: n = {n_ta}")
        timeaug = train_time_augmented(
            policy, ranges, n_ta, ta_cfg, seed=config.seed, phi=config.phi,
            joint=config.joint, test_case=config.test_case, loss_curves=loss_curves,
        )

    bundle_dir = out / "bundle"
    save_bundle(
        bundle_dir, policy, forward, timeaug,
        extra_meta={"test_case": config.test_case, "n_b": config.n_b, "n_f": config.n_f, "n_mc": config.n_mc},
    )
    for name, curve in loss_curves.items():
        with open(out / f"loss_{name}.csv", "w") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(curve):
                fh.write(f"{i},{v!r}\n")
    if config.time_augmented:
        _echo("[train] time-augmented validation set (oracle pricing at future dates)")
        build_timeaug_validation(policy, config).save(out / "validation_timeaug.bin")
    _echo(f"[train] bundle written to {bundle_dir}")
    return {"bundle": str(bundle_dir), "losses": sorted(loss_curves)}


def cmd_report(bundle_dir, validation_path, out_dir) -> dict:
    """Predict the validation scenarios and emit the difference report."""
    manifest, policy, forward, timeaug = load_bundle(bundle_dir)
    validation = Dataset.load(validation_path)
    if validation.meta.kind != "validation":
        raise IncompatibleFilesError(f"{validation_path} is not a validation set")
    if validation.meta.phi != manifest["phi"]:
        raise IncompatibleFilesError("bundle and validation disagree on payer/receiver flag")

    X = validation.inputs.astype(np.float64)
    oracle_prices = validation.value_labels[:, 0].astype(np.float64)
    t_values = None
    if validation.d == N_SCENARIO + 2:
        if timeaug is None:
            raise IncompatibleFilesError("time-augmented validation needs a time-augmented bundle")
        pred = predict_price(timeaug.model, X)[0][:, 0]
        t_values = X[:, N_SCENARIO]
    elif validation.d == N_SCENARIO:
        if forward is None:
            raise IncompatibleFilesError("bundle has no forward pricer")
        pred = predict_price(forward.model, X)[0][:, 0]
    else:
        raise IncompatibleFilesError(f"validation sets carry 10 or 12 input columns, got {validation.d}")

    report = compute_report(pred, oracle_prices, t_values)
    doc = write_report(
        report, out_dir,
        extra_meta={
            "bundle": {k: manifest[k] for k in ("seed", "phi", "test_case") if k in manifest},
            "validation_kind": validation.meta.kind,
            "oracle_stderr_bp_mean": float(validation.value_labels[:, 1].mean() * 1e4),
        },
    )
    _echo(f"[report] {report.summary()} -> {Path(out_dir) / 'report.json'}")
    return doc


def _scenario_from_args(args) -> MarketScenario:
    return MarketScenario(**{name: getattr(args, name) for name in SCENARIO_COLUMNS})


def cmd_price(args) -> int:
    manifest, policy, forward, timeaug = load_bundle(args.bundle)
    scenario = _scenario_from_args(args)
    if args.t is not None:
        if timeaug is None:
            raise ConfigError("bundle has no time-augmented pricer; omit --t/--x")
        pricer = timeaug
        value, outside = cascade_price(pricer, scenario, t=args.t, x=args.x or 0.0)
    else:
        if forward is None:
            raise ConfigError("bundle has no forward pricer")
        pricer = forward
        value, outside = cascade_price(pricer, scenario)
    _echo(f"cancellable swap price: {value:.8f} per unit notional ({value * 1e4:.2f} bp)")
    if pricer.joint:
        from .cascade import coterminal_outputs

        ladder = coterminal_outputs(pricer, scenario, t=args.t, x=args.x)
        _echo("coterminal European prices: " + ", ".join(f"{v:.6f}" for v in ladder))
    if outside:
        _echo("warning: scenario lies outside the training hypercube (extrapolating)")
    return 0


def cmd_oracle(args) -> int:
    scenario = _scenario_from_args(args)
    cfg = LsmConfig(n_paths=args.n_paths, seed=args.seed)
    price_value, stderr = lsm_price(scenario, cfg, phi=args.phi, start_index=args.start_index, x0=args.x or 0.0)
    _echo(f"oracle price: {price_value:.8f} +- {stderr:.2e} ({price_value * 1e4:.2f} bp, stderr {stderr * 1e4:.3f} bp)")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_scenario_flags(parser):
    defaults = {"kappa": 0.01, "a": 0.0, "b": 0.0, "c": 0.0, "d": 0.0075,
                "beta0": 0.02, "beta1": 0.0, "beta2": 0.0, "tau": 1.0, "dk": 0.0}
    for name in SCENARIO_COLUMNS:
        parser.add_argument(f"--{name}", type=float, default=defaults[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bermudann", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("generate", "train"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("price")
    p.add_argument("--bundle", required=True)
    _add_scenario_flags(p)
    p.add_argument("--t", type=float, default=None, help="valuation call date for time-augmented bundles")
    p.add_argument("--x", type=float, default=None, help="state value at the valuation date")

    p = sub.add_parser("oracle")
    _add_scenario_flags(p)
    p.add_argument("--phi", type=int, default=1, choices=(1, -1))
    p.add_argument("--n-paths", dest="n_paths", type=int, default=1 << 20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-index", dest="start_index", type=int, default=0)
    p.add_argument("--x", type=float, default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("generate", "train"):
            config = RunConfig.load(args.config)
            if args.seed is not None:
                config = replace(config, seed=args.seed)
            with _OutputLock(Path(args.out)):
                if args.command == "generate":
                    cmd_generate(config, args.out)
                else:
                    cmd_train(config, args.out)
        elif args.command == "report":
            with _OutputLock(Path(args.out)):
                cmd_report(args.bundle, args.validation, args.out)
        elif args.command == "price":
            return cmd_price(args)
        elif args.command == "oracle":
            return cmd_oracle(args)
    except (ConfigError, IncompatibleFilesError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    except BermudannError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

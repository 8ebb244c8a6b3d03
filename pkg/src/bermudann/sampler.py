"""Scenario sampling and training-set assembly.

Scenarios are drawn uniformly inside per-parameter ranges; the four standard
presets freeze parameter groups by shrinking their ranges to (effectively) a
point while keeping the input layout fixed at ten columns.  Datasets bundle
inputs, value labels and differential labels together with the normalization
statistics the networks train against, and round-trip through a columnar
binary container (float32 payload, 64-bit header counts).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import fm, seeding
from .errors import (
    BermudannError,
    CascadeOrderError,
    ConfigError,
    InvalidParameterError,
    NumericAbortError,
)
from .products import coterminal_set, coterminal_prices
from .simulate import (
    GRID,
    M,
    N_SCENARIO,
    SCENARIO_COLUMNS,
    bulk_gaussians,
    derive_model,
    period_flow,
    state_path,
    step_vols,
)
from .lgm import numeraire

_CHUNK = 1 << 15
_MAX_SURVIVAL_ATTEMPTS = 64

RANGE_KEYS = (
    "l_kappa", "u_kappa", "l_a", "u_a", "l_b", "u_b", "l_c", "u_c", "l_d", "u_d",
    "l_0", "u_0", "l_1", "u_1", "l_2", "u_2", "l_tau", "u_tau", "l_K", "u_K",
)


@dataclass(frozen=True)
class ParamRanges:
    """Per-parameter uniform sampling bounds, ordered as SCENARIO_COLUMNS."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.size != N_SCENARIO or hi.size != N_SCENARIO:
            raise InvalidParameterError(f"ranges need {N_SCENARIO} bounds")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidParameterError("range bounds must be finite")
        if np.any(lo > hi):
            raise InvalidParameterError("lower bounds must not exceed upper bounds")
        if lo[SCENARIO_COLUMNS.index("tau")] <= 0.0:
            raise InvalidParameterError("tau lower bound must be strictly positive")

    def to_dict(self) -> dict:
        out = {}
        for i in range(N_SCENARIO):
            out[RANGE_KEYS[2 * i]] = float(self.lower[i])
            out[RANGE_KEYS[2 * i + 1]] = float(self.upper[i])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ParamRanges":
        missing = [k for k in RANGE_KEYS if k not in d]
        if missing:
            raise ConfigError(f"missing range keys: {missing}")
        lo = tuple(float(d[RANGE_KEYS[2 * i]]) for i in range(N_SCENARIO))
        hi = tuple(float(d[RANGE_KEYS[2 * i + 1]]) for i in range(N_SCENARIO))
        return cls(lo, hi)

    @classmethod
    def degenerate(cls, theta) -> "ParamRanges":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return cls(tuple(theta), tuple(theta))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))


def _ranges(*pairs) -> ParamRanges:
    lo, hi = zip(*pairs)
    return ParamRanges(lo, hi)


_EPS = 1e-5

#: incremental test-case presets; groups not yet "switched on" are frozen by
#: a width-2e-5 (or zero-width) interval around their base value
TEST_CASES = {
    "I": _ranges(
        (-0.05, 0.1),
        (-_EPS, _EPS), (-_EPS, _EPS), (-_EPS, _EPS), (0.0075 - _EPS, 0.0075 + _EPS),
        (0.02 - _EPS, 0.02 + _EPS), (-_EPS, _EPS), (-_EPS, _EPS), (1.0 - _EPS, 1.0 + _EPS),
        (-_EPS, _EPS),
    ),
    "II": _ranges(
        (-0.05, 0.1),
        (_EPS, 0.0075), (0.0, 0.0005), (0.0, 0.25), (_EPS, 0.0075),
        (0.02 - _EPS, 0.02 + _EPS), (-_EPS, _EPS), (-_EPS, _EPS), (1.0 - _EPS, 1.0 + _EPS),
        (-_EPS, _EPS),
    ),
    "III": _ranges(
        (-0.05, 0.1),
        (_EPS, 0.0075), (0.0, 0.0005), (0.0, 0.25), (_EPS, 0.0075),
        (-0.005, 0.05), (0.0, 0.001), (0.0, 0.01), (0.01, 2.0),
        (-_EPS, _EPS),
    ),
    "IV": _ranges(
        (-0.05, 0.1),
        (_EPS, 0.0075), (0.0, 0.0005), (0.0, 0.25), (_EPS, 0.0075),
        (-0.005, 0.05), (0.0, 0.001), (0.0, 0.01), (0.01, 2.0),
        (-0.01, 0.01),
    ),
}

_TEST_CASE_IDS = {"custom": 0, "I": 1, "II": 2, "III": 3, "IV": 4}
_KIND_IDS = {"backward": 1, "forward": 2, "validation": 3, "timeaug": 4, "scenarios": 5}


def sample_scenarios(ranges: ParamRanges, n: int, seed) -> np.ndarray:
    """(n, 10) i.i.d.-uniform scenario rows; ``seed`` is an int (keyed into the
    scenario domain) or an already-derived Generator."""
    if n < 1:
        raise InvalidParameterError("need n >= 1")
    gen = seed if isinstance(seed, np.random.Generator) else seeding.rng(int(seed), seeding.FORWARD_SCENARIOS)
    lo = np.asarray(ranges.lower)
    hi = np.asarray(ranges.upper)
    return lo + (hi - lo) * gen.random((n, N_SCENARIO))


# ---------------------------------------------------------------------------
# dataset container


@dataclass(frozen=True)
class DatasetMeta:
    kind: str
    test_case: str = "custom"
    n_mc: int = 1
    seed: int = 0
    m_index: int = 0
    phi: int = 1


@dataclass
class NormStats:
    """Column statistics driving input/label standardization.

    ``diff_scale[j, i] = sd_x[i] / sd_y[j]`` maps raw differential labels into
    the normalized-units Jacobian the network predicts.
    """

    mu_x: np.ndarray
    sd_x: np.ndarray
    mu_y: np.ndarray
    sd_y: np.ndarray

    @property
    def diff_scale(self) -> np.ndarray:
        return self.sd_x[None, :] / self.sd_y[:, None]


def _safe_sd(sd: np.ndarray) -> np.ndarray:
    # frozen columns and constant labels standardize to exactly zero
    return np.where(sd < 1e-12, 1.0, sd)


@dataclass
class Dataset:
    """Inputs, value labels and differential (Jacobian) labels, float32."""

    inputs: np.ndarray
    value_labels: np.ndarray
    diff_labels: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float32)
        self.value_labels = np.ascontiguousarray(self.value_labels, dtype=np.float32)
        self.diff_labels = np.ascontiguousarray(self.diff_labels, dtype=np.float32)
        n, d = self.inputs.shape
        p = self.value_labels.shape[1]
        if self.value_labels.shape[0] != n or self.diff_labels.shape != (n, p, d):
            raise BermudannError("inconsistent dataset shapes")
        for arr in (self.inputs, self.value_labels, self.diff_labels):
            if not np.all(np.isfinite(arr)):
                raise NumericAbortError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.value_labels.shape[1]

    @property
    def columns(self) -> tuple:
        if self.d == N_SCENARIO:
            return SCENARIO_COLUMNS
        if self.d == N_SCENARIO + 1:
            return SCENARIO_COLUMNS + ("x",)
        if self.d == N_SCENARIO + 2:
            return SCENARIO_COLUMNS + ("t", "x")
        return tuple(f"c{i}" for i in range(self.d))

    def norm_stats(self) -> NormStats:
        x = self.inputs.astype(np.float64)
        y = self.value_labels.astype(np.float64)
        return NormStats(
            mu_x=x.mean(axis=0),
            sd_x=_safe_sd(x.std(axis=0)),
            mu_y=y.mean(axis=0),
            sd_y=_safe_sd(y.std(axis=0)),
        )

    # -- binary container --------------------------------------------------
    _MAGIC = b"BDANNDS1"
    _HEADER = struct.Struct("<12q")

    def save(self, path) -> None:
        meta = self.meta
        header = self._HEADER.pack(
            1, self.n, self.d, self.p, M, 3, meta.n_mc,
            _TEST_CASE_IDS.get(meta.test_case, 0), meta.seed,
            _KIND_IDS[meta.kind], meta.m_index, meta.phi,
        )
        rows = np.concatenate(
            [self.inputs, self.value_labels, self.diff_labels.reshape(self.n, -1)], axis=1
        ).astype("<f4")
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(header)
            fh.write(rows.tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != cls._MAGIC:
                raise BermudannError(f"{path}: not a dataset file")
            (version, n, d, p, m_grid, j_grid, n_mc, tc_id, seed, kind_id, m_index, phi) = cls._HEADER.unpack(
                fh.read(cls._HEADER.size)
            )
            if version != 1:
                raise BermudannError(f"{path}: unsupported dataset version {version}")
            payload = np.frombuffer(fh.read(), dtype="<f4").reshape(n, d + p + p * d)
        kind = {v: k for k, v in _KIND_IDS.items()}[kind_id]
        test_case = {v: k for k, v in _TEST_CASE_IDS.items()}[tc_id]
        return cls(
            inputs=payload[:, :d],
            value_labels=payload[:, d : d + p],
            diff_labels=payload[:, d + p :].reshape(n, p, d),
            meta=DatasetMeta(kind=kind, test_case=test_case, n_mc=n_mc, seed=seed, m_index=m_index, phi=phi),
        )


def _chunks(n: int, size: int = _CHUNK):
    for start in range(0, n, size):
        yield start, min(start + size, n)


# ---------------------------------------------------------------------------
# forward (pricing) dataset


def build_forward_dataset(
    ranges: ParamRanges,
    n_f: int,
    n_mc: int,
    policy,
    seed: int,
    phi: int = 1,
    antithetic: bool = True,
    with_diffs: bool = True,
    test_case: str = "custom",
) -> Dataset:
    """Sampled cancellable-IRS payoffs on freshly drawn scenarios.

    Each row averages ``n_mc`` paths sharing the row's scenario; with
    ``antithetic`` and even ``n_mc`` the bundle is made of negated-draw pairs.
    ``policy(m, theta, x)`` supplies the hold indicator at each call date.
    """
    theta = sample_scenarios(ranges, n_f, seeding.rng(seed, seeding.FORWARD_SCENARIOS))
    gen = seeding.rng(seed, seeding.FORWARD_PATHS)
    width = N_SCENARIO if with_diffs else 0
    labels = np.zeros(n_f)
    diffs = np.zeros((n_f, 1, N_SCENARIO))
    for lo, hi in _chunks(n_f, max(_CHUNK // max(n_mc, 1), 1024)):
        th = np.repeat(theta[lo:hi], n_mc, axis=0)
        # a bundle's paths occupy consecutive rows, so the alternating +g/-g
        # layout pairs antithetically inside each bundle when n_mc is even;
        # n_mc = 1 stays a single unpaired path
        g = bulk_gaussians(gen, th.shape[0], antithetic and n_mc % 2 == 0)
        value = _accumulate_cancellable(th, g, policy, phi, width, start_m=0)
        vals = fm.val(value).reshape(-1, n_mc)
        labels[lo:hi] = vals.mean(axis=1)
        if with_diffs:
            diffs[lo:hi, 0, :] = value.tan.reshape(-1, n_mc, N_SCENARIO).mean(axis=1)
    return Dataset(
        inputs=theta,
        value_labels=labels[:, None],
        diff_labels=diffs if with_diffs else np.zeros((n_f, 1, N_SCENARIO)),
        meta=DatasetMeta(kind="forward", test_case=test_case, n_mc=n_mc, seed=seed, phi=phi),
    )


def _accumulate_cancellable(theta, gaussians, policy, phi, width, start_m: int, x_start=None):
    """sum_m (prod of hold indicators) * F_m from valuation index ``start_m``.

    For ``start_m`` = 0 (pricing at inception) the sum starts at m = 1 and the
    first gate applies at t_1; for ``start_m`` = m >= 1 the period starting at
    t_m enters ungated (the date-m decision is conditioned on) and gates run
    from t_{m+1}.  Indicators are evaluated on state values and kept constant
    in the tangents.
    """
    model = derive_model(theta, phi=phi, width=width)
    if x_start is None:
        x0 = fm.lift(np.zeros(theta.shape[0]), width) if width else np.zeros(theta.shape[0])
        xs = state_path(model, gaussians, x0=x0, start=0)
    else:
        xs = state_path(model, gaussians, x0=x_start, start=start_m)
    alive = np.ones(theta.shape[0], dtype=bool)
    value = fm.lift(np.zeros(theta.shape[0]), width) if width else np.zeros(theta.shape[0])
    first = max(start_m, 1)
    for m in range(first, M):
        if m > start_m:
            alive = alive & np.asarray(policy(m, theta, fm.val(xs[m])), dtype=bool)
        value = value + period_flow(model, m, xs[m], xs[m + 1]) * alive.astype(float)
    return value


# ---------------------------------------------------------------------------
# backward (policy) datasets


def backward_path_set(ranges: ParamRanges, n_b: int, seed: int, antithetic: bool = True):
    """The shared scenario/draw set all backward iterations replay."""
    theta = sample_scenarios(ranges, n_b, seeding.rng(seed, seeding.BACKWARD_SCENARIOS))
    g = bulk_gaussians(seeding.rng(seed, seeding.BACKWARD_PATHS), n_b, antithetic)
    return theta, g


def backward_labels(theta, gaussians, m: int, networks: dict, phi: int = 1):
    """Replay the backward recursion down to call date ``m`` on given paths.

    Returns inputs (theta, x_{t_m}), labels V(t_m) = N(t_m) * (F_m + I * V+),
    and their pathwise derivatives with the hold indicators (taken from the
    already-trained later networks) frozen. Slot 10 of the tangent basis is
    the x input itself, so labels differentiate against all eleven network
    inputs.
    """
    missing = [k for k in range(m + 1, M) if k not in networks]
    if missing:
        raise CascadeOrderError(f"backward labels for m={m} need trained models for dates {missing}")
    from .dann import predict_price  # local import to avoid a cycle

    n = theta.shape[0]
    width = N_SCENARIO + 1
    X = np.zeros((n, width))
    y = np.zeros(n)
    dy = np.zeros((n, width))
    for lo, hi in _chunks(n):
        th = theta[lo:hi]
        g = gaussians[lo:hi]
        xs_val = state_path(derive_model(th, phi=phi), g)
        model = derive_model(th, phi=phi, width=width)
        xs = [None] * (M + 1)
        xs[m] = fm.seed(xs_val[m], N_SCENARIO, width)
        vols = step_vols(model)
        for k in range(m, M):
            xs[k + 1] = xs[k] + vols[k] * g[:, k]
        u = period_flow(model, M - 1, xs[M - 1], xs[M])
        for k in range(M - 2, m - 1, -1):
            inp = np.column_stack([th, xs_val[k + 1]])
            hold = (predict_price(networks[k + 1], inp)[0][:, 0] > 0.0).astype(float)
            u = period_flow(model, k, xs[k], xs[k + 1]) + u * hold
        label = numeraire(model.lgm, model.curve, GRID[m], xs[m]) * u
        X[lo:hi, :N_SCENARIO] = th
        X[lo:hi, N_SCENARIO] = xs_val[m]
        y[lo:hi] = label.val
        dy[lo:hi] = label.tan
    return X, y, dy


def build_backward_dataset(
    ranges: ParamRanges,
    n_b: int,
    m: int,
    prior_networks: dict,
    seed: int,
    phi: int = 1,
    antithetic: bool = True,
    test_case: str = "custom",
) -> Dataset:
    """Training set for the call-date-m hold-value network (11 input columns)."""
    if not 1 <= m <= M - 1:
        raise InvalidParameterError(f"m must be in 1..{M - 1}")
    theta, g = backward_path_set(ranges, n_b, seed, antithetic)
    X, y, dy = backward_labels(theta, g, m, prior_networks, phi=phi)
    return Dataset(
        inputs=X,
        value_labels=y[:, None],
        diff_labels=dy[:, None, :],
        meta=DatasetMeta(kind="backward", test_case=test_case, n_mc=1, seed=seed, m_index=m, phi=phi),
    )


# ---------------------------------------------------------------------------
# time-augmented rows


def build_time_augmented_dataset(
    ranges: ParamRanges,
    n: int,
    policy,
    seed: int,
    phi: int = 1,
    test_case: str = "custom",
) -> Dataset:
    """Rows (scenario, valuation time t_m, surviving x_{t_m}) -> remaining value.

    Valuation indices are uniform over m = 0..M-2; paths whose hold indicator
    died before t_m are discarded and redrawn (up to a retry cap), so the x
    inputs follow the surviving distribution.  The t column carries no
    differential label: the grid of call dates gives it no pathwise meaning,
    and training masks it out of the differential loss.
    """
    from .dann import predict_price  # local import to avoid a cycle

    theta = sample_scenarios(ranges, n, seeding.rng(seed, seeding.TIMEAUG_SCENARIOS))
    gen = seeding.rng(seed, seeding.TIMEAUG_PATHS)
    m_idx = gen.integers(0, M - 1, size=n)  # valuation times {0, 1, .., 8}
    width = N_SCENARIO + 2
    x_slot = N_SCENARIO + 1

    x_at_m = np.zeros(n)
    g_rows = np.zeros((n, M))
    unresolved = np.arange(n)
    for _ in range(_MAX_SURVIVAL_ATTEMPTS):
        if unresolved.size == 0:
            break
        th = theta[unresolved]
        g = gen.standard_normal((unresolved.size, M))
        xs_val = state_path(derive_model(th, phi=phi), g, x0=np.zeros(unresolved.size))
        alive = np.ones(unresolved.size, dtype=bool)
        for k in range(1, M - 1):
            sel = m_idx[unresolved] >= k
            if not np.any(sel):
                continue
            hold = np.asarray(policy(k, th, xs_val[k]), dtype=bool)
            alive &= hold | ~sel
        done = unresolved[alive]
        x_all = np.stack([xs_val[k] for k in range(M + 1)], axis=1)
        x_at_m[done] = x_all[alive, m_idx[done]]
        g_rows[done] = g[alive]
        unresolved = unresolved[~alive]
    if unresolved.size:
        # scenarios where survival to t_m is vanishingly rare; drop the rows
        keep = np.setdiff1d(np.arange(n), unresolved)
        theta, m_idx, x_at_m, g_rows = theta[keep], m_idx[keep], x_at_m[keep], g_rows[keep]
        n = keep.size

    X = np.zeros((n, width))
    y = np.zeros(n)
    dy = np.zeros((n, width))
    X[:, :N_SCENARIO] = theta
    X[:, N_SCENARIO] = np.asarray(GRID)[m_idx]
    X[:, x_slot] = x_at_m
    for m in range(M - 1):
        rows = np.where(m_idx == m)[0]
        if rows.size == 0:
            continue
        for lo, hi in _chunks(rows.size):
            idx = rows[lo:hi]
            th = theta[idx]
            model = derive_model(th, phi=phi, width=width)
            x0 = fm.seed(x_at_m[idx], x_slot, width)
            value = _accumulate_cancellable(
                th, g_rows[idx], policy, phi, width, start_m=m, x_start=x0
            )
            label = value if m == 0 else numeraire(model.lgm, model.curve, GRID[m], x0) * value
            y[idx] = fm.val(label)
            dy[idx] = label.tan
    return Dataset(
        inputs=X,
        value_labels=y[:, None],
        diff_labels=dy[:, None, :],
        meta=DatasetMeta(kind="timeaug", test_case=test_case, n_mc=1, seed=seed, phi=phi),
    )


# ---------------------------------------------------------------------------
# joint labels


def attach_joint_labels(dataset: Dataset, audit: bool = True) -> Dataset:
    """Append the coterminal European ladder (analytic values and exact
    differentials) as extra outputs.

    Works on forward-type rows (10 input columns, valued at t = 0) and
    time-augmented rows (12 columns; expired entries and their differentials
    are exactly zero, and the t column never carries differentials).  A
    deterministic 1% sub-sample of rows is audited against central finite
    differences of the analytic prices.
    """
    d = dataset.d
    if d not in (N_SCENARIO, N_SCENARIO + 2):
        raise InvalidParameterError("joint labels apply to 10- or 12-column datasets")
    phi = dataset.meta.phi
    n = dataset.n
    n_cot = M - 1
    prices = np.zeros((n, n_cot))
    dprices = np.zeros((n, n_cot, d))
    X = dataset.inputs.astype(np.float64)
    t_col = X[:, N_SCENARIO] if d == N_SCENARIO + 2 else np.zeros(n)
    for t_val in np.unique(t_col):
        rows = np.where(t_col == t_val)[0]
        for lo, hi in _chunks(rows.size):
            idx = rows[lo:hi]
            p_val, p_tan = _coterminal_block(X[idx], float(t_val), d, phi)
            prices[idx] = p_val
            dprices[idx] = p_tan
    if audit:
        _audit_joint(X, t_col, dprices, d, phi, dataset.meta.seed)
    return Dataset(
        inputs=dataset.inputs,
        value_labels=np.concatenate([dataset.value_labels, prices.astype(np.float32)], axis=1),
        diff_labels=np.concatenate([dataset.diff_labels, dprices.astype(np.float32)], axis=1),
        meta=dataset.meta,
    )


def _coterminal_block(X, t_val: float, d: int, phi: int):
    """Analytic ladder values and d-wide tangents for rows sharing one t."""
    theta = X[:, :N_SCENARIO]
    model = derive_model(theta, phi=phi, width=d)
    if d == N_SCENARIO + 2:
        x = fm.seed(X[:, N_SCENARIO + 1], N_SCENARIO + 1, d)
    else:
        x = fm.lift(np.zeros(X.shape[0]), d)
    cots = coterminal_set(phi, model.fixed_rate)
    entries = coterminal_prices(cots, model.lgm, model.curve, t_val, x)
    vals = np.stack([np.broadcast_to(fm.val(e), (X.shape[0],)) for e in entries], axis=1)
    tans = np.stack(
        [
            e.tan if fm.is_jet(e) else np.zeros((X.shape[0], d))
            for e in entries
        ],
        axis=1,
    )
    return vals, tans


def _coterminal_values(X, t_col, d: int, phi: int) -> np.ndarray:
    """Value-only ladder used by the finite-difference audit."""
    out = np.zeros((X.shape[0], M - 1))
    for t_val in np.unique(t_col):
        rows = np.where(t_col == t_val)[0]
        theta = X[rows, :N_SCENARIO]
        model = derive_model(theta, phi=phi)
        x = X[rows, N_SCENARIO + 1] if d == N_SCENARIO + 2 else np.zeros(rows.size)
        entries = coterminal_prices(coterminal_set(phi, model.fixed_rate), model.lgm, model.curve, float(t_val), x)
        out[rows] = np.stack([np.broadcast_to(fm.val(e), (rows.size,)) for e in entries], axis=1)
    return out


def _audit_joint(X, t_col, dprices_expected, d: int, phi: int, seed: int, fraction: float = 0.01):
    n = X.shape[0]
    k = max(min(n, 8), min(int(n * fraction), 512))
    idx = seeding.rng(seed, seeding.AUDIT).choice(n, size=k, replace=False)
    Xa = X[idx]
    ta = t_col[idx]
    # entries at or past their maturity sit on the intrinsic kink / are
    # constant zero, where central differencing is not meaningful
    maturities = np.arange(1, M, dtype=float)
    smooth = ta[:, None] < maturities[None, :]
    bump = 1e-6
    for col in range(d):
        if d == N_SCENARIO + 2 and col == N_SCENARIO:
            continue  # t has no continuous meaning on the call-date grid
        up = Xa.copy()
        dn = Xa.copy()
        up[:, col] += bump
        dn[:, col] -= bump
        fd = (_coterminal_values(up, ta, d, phi) - _coterminal_values(dn, ta, d, phi)) / (2 * bump)
        got = dprices_expected[idx][:, :, col]
        rel = np.abs(got - fd) / np.maximum(np.abs(fd), 1e-4)
        if np.any(rel[smooth] > 1e-3):
            raise NumericAbortError(
                f"joint-label audit failed on column {col}: max rel err {rel[smooth].max():.2e}"
            )

"""Differential multilayer perceptron.

The value head is a plain affine/softplus stack with a linear output layer.
A twin pass sharing the same weights propagates d(output)/d(input) through
the stack (seeded with one unit vector per output), so each training batch
yields predictions together with their input Jacobians.  The loss combines
squared value errors with weighted squared Jacobian errors; its gradient
therefore back-propagates through the Jacobian computation itself, which
requires the activation's second derivative (hence a smooth activation:
piecewise-linear choices would zero that signal).

Shapes, for batch B, inputs d, outputs p, hidden widths n_l:

    A_l = Z_{l-1} W_l^T + b_l          activations          (B, n_l)
    D_l[b, i, k] = dZ_l[b,k] / dX[b,i]  running Jacobian     (B, d, n_l)
    D_l = s'(A_l) * (D_{l-1} W_l^T)     twin recursion
    J   = D_L W_out^T                   network Jacobian     (B, d, p)

Reverse-mode through both passes gives, per layer, the usual value-path
term plus a Jacobian-path term carrying s''(A_l); all reductions run in
float64 with a fixed order so training is bit-reproducible under a seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit as _sigmoid

from . import seeding
from .errors import BermudannError, ChecksumError, ConfigError, NumericAbortError
from .sampler import Dataset, NormStats


def _softplus(a):
    # stable log(1 + e^a) without the slow logaddexp ufunc
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _softplus_d2(a):
    s = _sigmoid(a)
    return s * (1.0 - s)


ACTIVATIONS = {
    # value, first and second derivative
    "softplus": (_softplus, _sigmoid, _softplus_d2),
    # test-only linear build: the Jacobian collapses to a product of weights
    "identity": (lambda a: a, lambda a: np.ones_like(a), lambda a: np.zeros_like(a)),
}

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and training hyperparameters.

    Defaults are the standard configuration used throughout: 4 hidden layers
    of 32 neurons, 128 epochs, batches of 4096; time-augmented pricers double
    the width.  Optimizer settings (Adam with a cosine-decayed learning rate,
    Glorot-uniform init, gradient-norm clipping) are surfaced here rather
    than hard-coded.
    """

    inputs: int
    outputs: int = 1
    hidden_layers: int = 4
    width: int = 32
    activation: str = "softplus"
    epochs: int = 128
    batch_size: int = 4096
    learning_rate: float = 1e-3
    lr_final: float = 1e-5
    lambda_diff: float = 1.0
    diff_weight_eps: float = 1e-2
    clip_norm: float = 10.0
    seed: int = 0
    diff_col_mask: tuple = None  # per-input 0/1; None = train on every column
    dtype: str = "float32"  # training arithmetic; predictions always run float64

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}")
        if self.hidden_layers < 1 or self.width < 1:
            raise ConfigError("need at least one hidden layer and one neuron")
        if self.diff_col_mask is not None and len(self.diff_col_mask) != self.inputs:
            raise ConfigError("diff_col_mask length must equal inputs")


@dataclass
class DannModel:
    """Trained network: layer weights, the normalization it was fit under,
    the per-(output, input) differential-loss weights, and the training-input
    hypercube used to flag extrapolation."""

    config: MlpConfig
    weights: list  # [(W, b)] hidden layers then the linear output layer
    norm: NormStats
    diff_weights: np.ndarray  # (p, d)
    input_lo: np.ndarray
    input_hi: np.ndarray
    loss_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _init_weights(config: MlpConfig) -> list:
    gen = seeding.rng(config.seed, seeding.NETWORK_INIT)
    dtype = _DTYPES[config.dtype]
    sizes = [config.inputs] + [config.width] * config.hidden_layers + [config.outputs]
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = gen.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)
        weights.append((W, np.zeros(fan_out, dtype=dtype)))
    return weights


def _forward_pass(weights, X, activation):
    """Value and twin-Jacobian passes; returns (Y, J, caches)."""
    act, act_d1, _ = ACTIVATIONS[activation]
    weights = [(W.astype(X.dtype, copy=False), b.astype(X.dtype, copy=False)) for W, b in weights]
    B = X.shape[0]
    Zs = [X]
    As = []
    Ds = []  # running Jacobians, layout (B, d, n_l)
    Z = X
    D = None
    n_hidden = len(weights) - 1
    for l in range(n_hidden):
        W, b = weights[l]
        A = Z @ W.T + b
        s1 = act_d1(A)
        if l == 0:
            D = s1[:, None, :] * W.T[None, :, :]
        else:
            P = _bmm(D, W.T)
            D = s1[:, None, :] * P
        Z = act(A)
        As.append(A)
        Zs.append(Z)
        Ds.append(D)
    W_out, b_out = weights[-1]
    Y = Z @ W_out.T + b_out
    J = _bmm(D, W_out.T)  # (B, d, p)
    return Y, J, (As, Zs, Ds)


def _bmm(T, Wt):
    """(B, d, k) @ (k, n) as one flat GEMM."""
    B, d, k = T.shape
    return (T.reshape(B * d, k) @ Wt).reshape(B, d, -1)


def forward(model: DannModel, X) -> np.ndarray:
    """Normalized-units forward pass; X is (B, d) or a single d-vector."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.config.inputs:
        raise BermudannError(f"expected {model.config.inputs} inputs, got {X.shape[1]}")
    Y, _, _ = _forward_pass(model.weights, X, model.config.activation)
    return Y


def input_jacobian(model: DannModel, X) -> np.ndarray:
    """Exact d(forward)/d(input), (B, p, d), via the twin pass."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _, J, _ = _forward_pass(model.weights, X, model.config.activation)
    return np.swapaxes(J, 1, 2)


def loss_and_grads(weights, X, Y_target, G_target, C, lam, activation):
    """Combined value + differential loss and its gradient per layer.

    ``G_target`` is the (B, p, d) Jacobian label in normalized units, ``C``
    the per-(output, input) weights.  Returns (loss, [(gW, gb)]) with the
    same structure as ``weights``.  Arithmetic follows the dtype of ``X``
    (training uses float32, verification float64); reductions have a fixed
    order, so repeated calls are bit-identical.
    """
    act, act_d1, act_d2 = ACTIVATIONS[activation]
    dtype = X.dtype
    weights = [(W.astype(dtype, copy=False), b.astype(dtype, copy=False)) for W, b in weights]
    B = X.shape[0]
    Gt = np.swapaxes(np.asarray(G_target, dtype=dtype), 1, 2)  # (B, d, p)
    Ct = np.asarray(C, dtype=dtype).T  # (d, p)
    Y, J, (As, Zs, Ds) = _forward_pass(weights, X, activation)

    val_res = Y - np.asarray(Y_target, dtype=dtype)
    loss = float((val_res**2).sum(dtype=np.float64) / B)
    dY = (2.0 / B) * val_res
    if lam != 0.0:
        jac_res = J - Gt
        loss += float(lam / B * (Ct[None, :, :] * jac_res**2).sum(dtype=np.float64))
        dJ = (2.0 * lam / B) * (Ct[None, :, :] * jac_res)
    else:
        dJ = None

    n_hidden = len(weights) - 1
    W_out, _ = weights[-1]
    gW_out = dY.T @ Zs[-1]
    gb_out = dY.sum(axis=0)
    Zbar = dY @ W_out
    Dbar = None
    if dJ is not None:
        Bd = X.shape[0] * X.shape[1]
        gW_out = gW_out + dJ.reshape(Bd, -1).T @ Ds[-1].reshape(Bd, -1)
        Dbar = _bmm(dJ, W_out)
    grads = [None] * len(weights)
    grads[-1] = (gW_out, gb_out)

    for l in range(n_hidden - 1, -1, -1):
        W, _ = weights[l]
        A = As[l]
        s1 = act_d1(A)
        Abar = Zbar * s1
        if Dbar is not None:
            if l == 0:
                P = W.T[None, :, :]
            else:
                P = _bmm(Ds[l - 1], W.T)
            Abar = Abar + (P * Dbar).sum(axis=1) * act_d2(A)
            Pbar = s1[:, None, :] * Dbar
        gW = Abar.T @ Zs[l]
        gb = Abar.sum(axis=0)
        if Dbar is not None:
            if l == 0:
                gW = gW + Pbar.sum(axis=0).T
            else:
                Bd = Pbar.shape[0] * Pbar.shape[1]
                gW = gW + Pbar.reshape(Bd, -1).T @ Ds[l - 1].reshape(Bd, -1)
        grads[l] = (gW, gb)
        if l > 0:
            Zbar = Abar @ W
            if Dbar is not None:
                Dbar = _bmm(Pbar, W)
    return loss, grads


def _normalized_training_arrays(dataset: Dataset, config: MlpConfig):
    stats = dataset.norm_stats()
    X = (dataset.inputs.astype(np.float64) - stats.mu_x) / stats.sd_x
    Y = (dataset.value_labels.astype(np.float64) - stats.mu_y) / stats.sd_y
    G = dataset.diff_labels.astype(np.float64) * stats.diff_scale[None, :, :]
    ms = (G**2).mean(axis=0)  # (p, d)
    C = 1.0 / (ms + config.diff_weight_eps)
    # inputs with exactly zero spread carry no differential information (the
    # sd_x scaling annihilates their labels); drop those terms instead of
    # regressing against vacuous zeros at the 1/eps weight cap
    frozen = dataset.inputs.astype(np.float64).std(axis=0) < 1e-12
    C = C * (~frozen)[None, :]
    if config.diff_col_mask is not None:
        C = C * np.asarray(config.diff_col_mask, dtype=float)[None, :]
    return stats, X, Y, G, C


def train(config: MlpConfig, dataset: Dataset) -> DannModel:
    """Fit the differential network on a dataset; deterministic under seed.

    Minimizes, in normalized units, the batch mean of
    sum_j (value error_j)^2 + lambda * sum_{j,i} C_{j,i} (Jacobian error)^2,
    with C_{j,i} = 1 / (mean squared differential label + eps) so every term
    starts O(1).  Aborts with diagnostics if the loss goes non-finite.
    """
    if dataset.d != config.inputs or dataset.p != config.outputs:
        raise ConfigError(
            f"dataset is {dataset.d} -> {dataset.p}, config expects {config.inputs} -> {config.outputs}"
        )
    stats, X, Y, G, C = _normalized_training_arrays(dataset, config)
    dtype = _DTYPES[config.dtype]
    X = X.astype(dtype)
    Y = Y.astype(dtype)
    G = G.astype(dtype)
    weights = _init_weights(config)
    shuffler = seeding.rng(config.seed, seeding.NETWORK_SHUFFLE)

    adam_m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    adam_v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    n = X.shape[0]
    batches = [(s, min(s + config.batch_size, n)) for s in range(0, n, config.batch_size)]
    total_steps = max(config.epochs * len(batches), 1)
    step = 0
    loss_curve = np.zeros(config.epochs)

    for epoch in range(config.epochs):
        perm = shuffler.permutation(n)
        epoch_loss = 0.0
        for b_idx, (s, e) in enumerate(batches):
            rows = perm[s:e]
            loss, grads = loss_and_grads(
                weights, X[rows], Y[rows], G[rows], C, config.lambda_diff, config.activation
            )
            if not np.isfinite(loss):
                norms = [float(np.linalg.norm(W)) for W, _ in weights]
                raise NumericAbortError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}; weight norms {norms}"
                )
            epoch_loss += loss * (e - s)
            gnorm = np.sqrt(sum(float((gW**2).sum() + (gb**2).sum()) for gW, gb in grads))
            scale = 1.0 if gnorm <= config.clip_norm else config.clip_norm / gnorm
            step += 1
            lr = float(
                config.lr_final
                + 0.5
                * (config.learning_rate - config.lr_final)
                * (1.0 + np.cos(np.pi * (step - 1) / total_steps))
            )
            corr1 = 1.0 - beta1**step
            corr2 = 1.0 - beta2**step
            new_weights = []
            for (W, b), (mW, mb), (vW, vb), (gW, gb) in zip(weights, adam_m, adam_v, grads):
                gW = gW * scale
                gb = gb * scale
                mW[:] = beta1 * mW + (1 - beta1) * gW
                mb[:] = beta1 * mb + (1 - beta1) * gb
                vW[:] = beta2 * vW + (1 - beta2) * gW**2
                vb[:] = beta2 * vb + (1 - beta2) * gb**2
                W = W - lr * (mW / corr1) / (np.sqrt(vW / corr2) + adam_eps)
                b = b - lr * (mb / corr1) / (np.sqrt(vb / corr2) + adam_eps)
                new_weights.append((W, b))
            weights = new_weights
        loss_curve[epoch] = epoch_loss / n

    return DannModel(
        config=config,
        weights=weights,
        norm=stats,
        diff_weights=C,
        input_lo=dataset.inputs.astype(np.float64).min(axis=0),
        input_hi=dataset.inputs.astype(np.float64).max(axis=0),
        loss_curve=loss_curve,
    )


def predict_price(model: DannModel, X_raw):
    """Denormalized predictions in price units plus an extrapolation flag.

    Returns (values (B, p), outside (B,) bool); inputs beyond the training
    hypercube are flagged, not rejected.
    """
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=np.float64))
    Xn = (X_raw - model.norm.mu_x) / model.norm.sd_x
    Y = forward(model, Xn) * model.norm.sd_y + model.norm.mu_y
    # bounds come from float32-stored training inputs; allow that granularity
    tol = 1e-9 + 1e-6 * np.maximum(np.abs(model.input_lo), np.abs(model.input_hi))
    outside = np.any((X_raw < model.input_lo - tol) | (X_raw > model.input_hi + tol), axis=1)
    return Y, outside


# ---------------------------------------------------------------------------
# serialization: JSON header (config, norms, shapes, payload checksum) + raw
# float64 weight payload, little-endian, matrices row-major in layer order

_MODEL_MAGIC = b"BDANNML1"


def save_model(model: DannModel, path) -> None:
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for W, b in model.weights
        for arr in (W, b)
    )
    header = {
        "format": "dann-model",
        "version": 1,
        "config": asdict(model.config),
        "norm": {
            "mu_x": model.norm.mu_x.tolist(),
            "sd_x": model.norm.sd_x.tolist(),
            "mu_y": model.norm.mu_y.tolist(),
            "sd_y": model.norm.sd_y.tolist(),
        },
        "diff_weights": model.diff_weights.tolist(),
        "input_lo": model.input_lo.tolist(),
        "input_hi": model.input_hi.tolist(),
        "loss_curve": model.loss_curve.tolist(),
        "shapes": [[list(W.shape), list(b.shape)] for W, b in model.weights],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(payload)


def load_model(path) -> DannModel:
    with open(path, "rb") as fh:
        if fh.read(8) != _MODEL_MAGIC:
            raise BermudannError(f"{path}: not a model file")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    cfg_dict = dict(header["config"])
    if cfg_dict.get("diff_col_mask") is not None:
        cfg_dict["diff_col_mask"] = tuple(cfg_dict["diff_col_mask"])
    config = MlpConfig(**cfg_dict)
    weights = []
    offset = 0
    buf = np.frombuffer(payload, dtype="<f8")
    for (w_shape, b_shape) in header["shapes"]:
        w_size = int(np.prod(w_shape))
        b_size = int(np.prod(b_shape))
        W = buf[offset : offset + w_size].reshape(w_shape).copy()
        offset += w_size
        b = buf[offset : offset + b_size].reshape(b_shape).copy()
        offset += b_size
        weights.append((W, b))
    norm = NormStats(
        mu_x=np.array(header["norm"]["mu_x"]),
        sd_x=np.array(header["norm"]["sd_x"]),
        mu_y=np.array(header["norm"]["mu_y"]),
        sd_y=np.array(header["norm"]["sd_y"]),
    )
    return DannModel(
        config=config,
        weights=weights,
        norm=norm,
        diff_weights=np.array(header["diff_weights"]),
        input_lo=np.array(header["input_lo"]),
        input_hi=np.array(header["input_hi"]),
        loss_curve=np.array(header["loss_curve"]),
    )

"""Feed-forward classifier for tabular input with an analytic backward pass.

Architecture, for input dimension d (42 by default):

    h1 = relu(batchnorm1(x @ W1 + b1))        d -> 64
    h2 = relu(batchnorm2(h1 @ W2 + b2))       64 -> 128
    h3 = h2 + (h2 @ W3 + b3)                  residual block, 128 -> 128
    logits = h3 @ Wh + bh                     128 -> 2

All numerics are float64. Train-mode forward uses batch statistics and
updates the running batch-norm statistics in place; eval mode reads the
running statistics and is a pure function of (params, input). One params
object must not be shared across concurrent train-mode passes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .seeding import derive_rng

HIDDEN1 = 64
HIDDEN2 = 128
N_CLASSES = 2

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

FORMAT_NAME = "safenet-params"
FORMAT_VERSION = 1


@dataclass
class ModelParams:
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    bn1_gamma: np.ndarray
    bn1_beta: np.ndarray
    bn1_mean: np.ndarray
    bn1_var: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    bn2_gamma: np.ndarray
    bn2_beta: np.ndarray
    bn2_mean: np.ndarray
    bn2_var: np.ndarray
    fc3_w: np.ndarray
    fc3_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.fc1_w.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.as_dict().items()})


PARAM_KEYS = tuple(f.name for f in fields(ModelParams))

# weight decay applies to linear weights/biases only, never to batch-norm
# scale/shift or the running statistics
DECAYED_KEYS = frozenset(
    ("fc1_w", "fc1_b", "fc2_w", "fc2_b", "fc3_w", "fc3_b", "head_w", "head_b")
)

RUNNING_STAT_KEYS = frozenset(("bn1_mean", "bn1_var", "bn2_mean", "bn2_var"))


def init_params(seed: int, scheme: str = "paper", feature_dim: int = 42) -> ModelParams:
    """Fresh parameters.

    scheme "paper": weights and biases i.i.d. standard normal.
    scheme "scaled": weights normal with std 1/sqrt(fan_in), biases zero
    (offered for stability studies).
    Batch-norm starts at scale 1, shift 0, running mean 0, running var 1.
    """
    if scheme not in ("paper", "scaled"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = derive_rng(seed, "init")

    def dense(fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
        if scheme == "paper":
            w = rng.standard_normal((fan_in, fan_out))
            b = rng.standard_normal(fan_out)
        else:
            w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            b = np.zeros(fan_out)
        return w, b

    fc1_w, fc1_b = dense(feature_dim, HIDDEN1)
    fc2_w, fc2_b = dense(HIDDEN1, HIDDEN2)
    fc3_w, fc3_b = dense(HIDDEN2, HIDDEN2)
    head_w, head_b = dense(HIDDEN2, N_CLASSES)
    return ModelParams(
        fc1_w=fc1_w,
        fc1_b=fc1_b,
        bn1_gamma=np.ones(HIDDEN1),
        bn1_beta=np.zeros(HIDDEN1),
        bn1_mean=np.zeros(HIDDEN1),
        bn1_var=np.ones(HIDDEN1),
        fc2_w=fc2_w,
        fc2_b=fc2_b,
        bn2_gamma=np.ones(HIDDEN2),
        bn2_beta=np.zeros(HIDDEN2),
        bn2_mean=np.zeros(HIDDEN2),
        bn2_var=np.ones(HIDDEN2),
        fc3_w=fc3_w,
        fc3_b=fc3_b,
        head_w=head_w,
        head_b=head_b,
    )


def zeros_like_params(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.as_dict().items()}


@dataclass
class ForwardCache:
    """Intermediates from a train-mode forward, consumed by backward()."""

    params: ModelParams
    x: np.ndarray
    xhat1: np.ndarray
    inv_std1: np.ndarray
    h1: np.ndarray
    xhat2: np.ndarray
    inv_std2: np.ndarray
    h2: np.ndarray
    h3: np.ndarray


def _bn_train(a, gamma, beta, running_mean, running_var, update_stats):
    mean = a.mean(axis=0)
    var = a.var(axis=0)  # population variance
    if update_stats:
        running_mean *= 1.0 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mean
        running_var *= 1.0 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (a - mean) * inv_std
    return gamma * xhat + beta, xhat, inv_std


def _bn_eval(a, gamma, beta, running_mean, running_var):
    return gamma * (a - running_mean) / np.sqrt(running_var + BN_EPS) + beta


def forward(
    params: ModelParams,
    batch: np.ndarray,
    mode: str = "train",
    update_stats: bool = True,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Compute logits. Train mode returns a cache for backward().

    Train mode needs a batch of at least 2 rows (batch statistics) and, when
    update_stats is set, mixes the batch statistics into the running
    statistics with momentum 0.1.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.feature_dim:
        raise ValueError(
            f"expected batch of shape (B, {params.feature_dim}), got {x.shape}"
        )
    if mode == "eval":
        a1 = x @ params.fc1_w + params.fc1_b
        h1 = np.maximum(
            _bn_eval(a1, params.bn1_gamma, params.bn1_beta, params.bn1_mean, params.bn1_var),
            0.0,
        )
        a2 = h1 @ params.fc2_w + params.fc2_b
        h2 = np.maximum(
            _bn_eval(a2, params.bn2_gamma, params.bn2_beta, params.bn2_mean, params.bn2_var),
            0.0,
        )
        h3 = h2 + (h2 @ params.fc3_w + params.fc3_b)
        return h3 @ params.head_w + params.head_b, None
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if x.shape[0] < 2:
        raise ValueError("train-mode forward needs a batch of at least 2 rows")

    a1 = x @ params.fc1_w + params.fc1_b
    u1, xhat1, inv_std1 = _bn_train(
        a1, params.bn1_gamma, params.bn1_beta, params.bn1_mean, params.bn1_var, update_stats
    )
    h1 = np.maximum(u1, 0.0)

    a2 = h1 @ params.fc2_w + params.fc2_b
    u2, xhat2, inv_std2 = _bn_train(
        a2, params.bn2_gamma, params.bn2_beta, params.bn2_mean, params.bn2_var, update_stats
    )
    h2 = np.maximum(u2, 0.0)

    h3 = h2 + (h2 @ params.fc3_w + params.fc3_b)
    logits = h3 @ params.head_w + params.head_b
    cache = ForwardCache(
        params=params,
        x=x,
        xhat1=xhat1,
        inv_std1=inv_std1,
        h1=h1,
        xhat2=xhat2,
        inv_std2=inv_std2,
        h2=h2,
        h3=h3,
    )
    return logits, cache


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    Stabilized by subtracting the per-row max before exponentiation. The
    gradient is (softmax - onehot) / B.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError("logits and labels disagree in batch size")
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = -float(log_probs[np.arange(b), labels].mean())
    grad = exp / denom
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def _bn_backward(d_out, xhat, inv_std, gamma):
    b = d_out.shape[0]
    d_gamma = (d_out * xhat).sum(axis=0)
    d_beta = d_out.sum(axis=0)
    d_xhat = d_out * gamma
    d_a = (inv_std / b) * (
        b * d_xhat - d_xhat.sum(axis=0) - xhat * (d_xhat * xhat).sum(axis=0)
    )
    return d_a, d_gamma, d_beta


def backward(cache: ForwardCache, d_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the loss for every parameter tensor.

    Returns a dict over PARAM_KEYS; the running-statistic entries are zero
    (they are state, not optimized parameters). The residual sum routes the
    gradient of h3 both through fc3 and directly into h2.
    """
    p = cache.params
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != (cache.h3.shape[0], N_CLASSES):
        raise ValueError("upstream gradient shape does not match the cached batch")

    grads = {}
    grads["head_w"] = cache.h3.T @ d_logits
    grads["head_b"] = d_logits.sum(axis=0)
    d_h3 = d_logits @ p.head_w.T

    grads["fc3_w"] = cache.h2.T @ d_h3
    grads["fc3_b"] = d_h3.sum(axis=0)
    d_h2 = d_h3 + d_h3 @ p.fc3_w.T

    d_u2 = d_h2 * (cache.h2 > 0)
    d_a2, grads["bn2_gamma"], grads["bn2_beta"] = _bn_backward(
        d_u2, cache.xhat2, cache.inv_std2, p.bn2_gamma
    )
    grads["fc2_w"] = cache.h1.T @ d_a2
    grads["fc2_b"] = d_a2.sum(axis=0)
    d_h1 = d_a2 @ p.fc2_w.T

    d_u1 = d_h1 * (cache.h1 > 0)
    d_a1, grads["bn1_gamma"], grads["bn1_beta"] = _bn_backward(
        d_u1, cache.xhat1, cache.inv_std1, p.bn1_gamma
    )
    grads["fc1_w"] = cache.x.T @ d_a1
    grads["fc1_b"] = d_a1.sum(axis=0)

    for key in RUNNING_STAT_KEYS:
        grads[key] = np.zeros_like(getattr(p, key))
    return {k: grads[k] for k in PARAM_KEYS}


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Argmax over the two logits in eval mode; exact ties resolve to 0."""
    logits, _ = forward(params, features, mode="eval")
    return np.argmax(logits, axis=1)


# ---------------------------------------------------------------------------
# Serialization: versioned header line + raw little-endian float64 tensors
# ---------------------------------------------------------------------------


def save_params(params: ModelParams, path, extras: dict[str, np.ndarray] | None = None) -> None:
    """Write params (plus optional named extra tensors) bit-exactly."""
    extras = extras or {}
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "feature_dim": params.feature_dim,
        "hidden": [HIDDEN1, HIDDEN2],
        "dtype": "<f8",
        "tensors": [[k, list(getattr(params, k).shape)] for k in PARAM_KEYS],
        "extras": [[k, list(np.asarray(v).shape)] for k, v in sorted(extras.items())],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        for k in PARAM_KEYS:
            fh.write(np.ascontiguousarray(getattr(params, k), dtype="<f8").tobytes())
        for k, _ in header["extras"]:
            fh.write(np.ascontiguousarray(extras[k], dtype="<f8").tobytes())


def load_params(path) -> tuple[ModelParams, dict[str, np.ndarray]]:
    """Read a file written by save_params; returns (params, extras)."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("ascii"))
    if header.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('version')}")

    offset = nl + 1
    tensors = {}
    for name, shape in header["tensors"] + header["extras"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.copy()
        offset += count * 8
    params = ModelParams(**{k: tensors.pop(k) for k in PARAM_KEYS})
    return params, tensors

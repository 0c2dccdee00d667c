"""Differentiable models with hand-derived gradients.

One fixed architecture: a 2-layer ReLU MLP with a single sigmoid logit,
plus a logistic linear model whose sensitive-attribute weight can be
overridden. Includes the second-order path through input gradients needed
by the attribution-gap loss, and a minimal Adam.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset
from .pairing import PairSet

_LOG_CLAMP = 1e-12
MODEL_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class MlpParams:
    """2-layer MLP parameters: logit(x) = w2 . relu(W1 x + b1) + b2."""

    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        h, d = W1.shape
        if b1.shape != (h,) or w2.shape != (h,):
            raise ValueError("inconsistent MLP parameter shapes")
        if not (np.isfinite(W1).all() and np.isfinite(b1).all() and np.isfinite(w2).all()):
            raise ValueError("MLP parameters must be finite")
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def hidden_size(self) -> int:
        return self.W1.shape[0]

    @property
    def input_size(self) -> int:
        return self.W1.shape[1]

    def tree(self) -> dict[str, np.ndarray | float]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def from_tree(self, t: dict) -> "MlpParams":
        return MlpParams(W1=t["W1"], b1=t["b1"], w2=t["w2"], b2=float(t["b2"]))


@dataclass(frozen=True)
class LinearParams:
    """Logistic-regression parameters with a tracked sensitive column."""

    w: np.ndarray
    b: float
    sensitive_index: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("w must be a vector")
        if not np.isfinite(w).all():
            raise ValueError("linear parameters must be finite")
        if not 0 <= self.sensitive_index < w.shape[0]:
            raise ValueError("sensitive_index out of range")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def tree(self) -> dict[str, np.ndarray | float]:
        return {"w": self.w, "b": self.b}

    def from_tree(self, t: dict) -> "LinearParams":
        return LinearParams(w=t["w"], b=float(t["b"]), sensitive_index=self.sensitive_index)


@dataclass
class AdamState:
    """First/second-moment accumulators keyed like the parameter tree."""

    m: dict[str, np.ndarray | float]
    v: dict[str, np.ndarray | float]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def mlp_init(d: int, h: int, seed: int) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if d < 1 or h < 1:
        raise ValueError("d and h must be >= 1")
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(d)
    lim2 = 1.0 / np.sqrt(h)
    return MlpParams(
        W1=rng.uniform(-lim1, lim1, size=(h, d)),
        b1=np.zeros(h),
        w2=rng.uniform(-lim2, lim2, size=h),
        b2=0.0,
    )


def mlp_logits(params: MlpParams, X: np.ndarray) -> np.ndarray:
    pre = X @ params.W1.T + params.b1
    return np.maximum(pre, 0.0) @ params.w2 + params.b2


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[float, float]:
    """Single-sample forward: (logit, sigmoid probability)."""
    z = float(mlp_logits(params, np.asarray(x, dtype=np.float64)[None, :])[0])
    return z, float(expit(z))


def input_gradient(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Gradient of the pre-sigmoid logit w.r.t. the input.

    ReLU uses the 1[z > 0] convention, so a unit sitting exactly at zero
    pre-activation contributes nothing.
    """
    return input_gradients(params, np.asarray(x, dtype=np.float64)[None, :])[0]


def input_gradients(params: MlpParams, X: np.ndarray) -> np.ndarray:
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    return (mask * params.w2) @ params.W1


def prob_input_gradients(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Gradient of the predicted probability w.r.t. the input.

    This is the training-time explanation: the sigmoid slope makes a
    model's reliance on any single feature visible as a within-pair
    explanation gap, which the plain logit gradient misses whenever that
    reliance is locally linear.
    """
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    z = np.where(mask, pre, 0.0) @ params.w2 + params.b2
    p = expit(z)
    return (p * (1.0 - p))[:, None] * ((mask * params.w2) @ params.W1)


def bce_loss_grads(
    params: MlpParams, X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray | float]]:
    """Mean binary cross-entropy and its exact parameter gradient."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    act = np.where(mask, pre, 0.0)
    z = act @ params.w2 + params.b2
    p = expit(z)
    pc = np.clip(p, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean())
    dz = (p - y) / X.shape[0]
    grads = _backprop_from_dz(params, X, mask, act, dz)
    return loss, grads


def _backprop_from_dz(
    params: MlpParams,
    X: np.ndarray,
    mask: np.ndarray,
    act: np.ndarray,
    dz: np.ndarray,
) -> dict[str, np.ndarray | float]:
    """Backprop through the MLP given d(loss)/d(logit) per row."""
    dw2 = act.T @ dz
    db2 = float(dz.sum())
    dpre = (dz[:, None] * params.w2) * mask
    dW1 = dpre.T @ X
    db1 = dpre.sum(axis=0)
    return {"W1": dW1, "b1": db1, "w2": dw2, "b2": db2}


def _pair_sign_scatter(S: np.ndarray, idx1: np.ndarray, idx2: np.ndarray, m: int) -> np.ndarray:
    """Accumulate per-pair l1 subgradient signs onto per-row vectors."""
    d = S.shape[1]
    R = np.empty((m, d), dtype=np.float64)
    for g in range(d):
        R[:, g] = np.bincount(idx1, weights=S[:, g], minlength=m) - np.bincount(
            idx2, weights=S[:, g], minlength=m
        )
    return R


def gpf_loss_grads(
    params: MlpParams, X: np.ndarray, pairs: PairSet
) -> tuple[float, dict[str, np.ndarray | float]]:
    """Mean l1 gap between probability-gradient explanations of paired
    rows, with its exact parameter gradient.

    The explanation is e(x) = sigma'(z) * dz/dx. ReLU masks are held fixed
    while differentiating (their derivative is zero almost everywhere) and
    the l1 subgradient uses sign(0) = 0. The sigmoid-slope factor is
    differentiated exactly, which is where the bias gradients come from.
    """
    if len(pairs) == 0:
        raise ValueError("pair set must be non-empty")
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    act = np.where(mask, pre, 0.0)
    z = act @ params.w2 + params.b2
    p = expit(z)
    s = p * (1.0 - p)
    maskf = mask.astype(np.float64)
    G = (maskf * params.w2) @ params.W1  # logit input-gradients
    E = s[:, None] * G
    U = E[pairs.idx1] - E[pairs.idx2]
    k = len(pairs)
    loss = float(np.abs(U).sum(axis=1).mean())

    R = _pair_sign_scatter(np.sign(U) / k, pairs.idx1, pairs.idx2, m)
    sR = s[:, None] * R
    dW1 = (maskf.T @ sR) * params.w2[:, None]
    dw2 = (maskf * (sR @ params.W1.T)).sum(axis=0)
    # slope path: d(sigma')/dtheta = sigma'' dz/dtheta with sigma'' = s(1-2p)
    c = (R * G).sum(axis=1) * s * (1.0 - 2.0 * p)
    slope = _backprop_from_dz(params, X, mask, act, c)
    return loss, {
        "W1": dW1 + slope["W1"],
        "b1": slope["b1"],
        "w2": dw2 + slope["w2"],
        "b2": slope["b2"],
    }


def adam_init(params) -> AdamState:
    def zeros() -> dict:
        return {
            k: (0.0 if np.isscalar(v) else np.zeros_like(v)) for k, v in params.tree().items()
        }

    return AdamState(m=zeros(), v=zeros())


def adam_step(state: AdamState, params, grads: dict, lr: float):
    """One Adam update with bias correction; returns (params', state')."""
    tree = params.tree()
    if set(grads) != set(tree):
        raise ValueError(f"gradient keys {sorted(grads)} do not match parameters")
    t = state.step + 1
    new_m: dict = {}
    new_v: dict = {}
    new_tree: dict = {}
    for key, theta in tree.items():
        g = grads[key]
        if not np.isscalar(theta) and np.shape(g) != np.shape(theta):
            raise ValueError(f"gradient shape mismatch for {key!r}")
        m = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[key] + (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_tree[key] = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[key] = m
        new_v[key] = v
    return params.from_tree(new_tree), AdamState(
        m=new_m, v=new_v, step=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps
    )


def scale_grads(grads: dict, c: float) -> dict:
    return {k: c * v for k, v in grads.items()}


def add_grads(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


def linear_logits(params: LinearParams, X: np.ndarray) -> np.ndarray:
    return X @ params.w + params.b


def linear_init(d: int, sensitive_index: int, seed: int) -> LinearParams:
    rng = np.random.default_rng(seed)
    lim = 1.0 / np.sqrt(d)
    return LinearParams(w=rng.uniform(-lim, lim, size=d), b=0.0, sensitive_index=sensitive_index)


def linear_bce_grads(
    params: LinearParams, X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray | float]]:
    z = linear_logits(params, X)
    p = expit(z)
    pc = np.clip(p, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean())
    dz = (p - y) / X.shape[0]
    return loss, {"w": X.T @ dz, "b": float(dz.sum())}


def linear_train(data: Dataset, epochs: int = 300, lr: float = 0.01, seed: int = 0) -> LinearParams:
    """Full-batch Adam fit of a logistic regression; deterministic per seed."""
    if data.sensitive_col is None:
        raise ValueError("dataset must track its sensitive column for a linear model")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    params = linear_init(data.n_features, data.sensitive_col, seed)
    state = adam_init(params)
    y = data.labels.astype(np.float64)
    for _ in range(epochs):
        _, grads = linear_bce_grads(params, data.features, y)
        params, state = adam_step(state, params, grads, lr)
    return params


def override_sensitive_weight(params: LinearParams, w_s: float) -> LinearParams:
    """Copy with the sensitive-attribute weight pinned to w_s."""
    w = params.w.copy()
    w[params.sensitive_index] = w_s
    return replace(params, w=w)


class MlpModel:
    """Callable view over MlpParams used by evaluation and explanations."""

    def __init__(self, params: MlpParams):
        self.params = params

    def logits(self, X: np.ndarray) -> np.ndarray:
        return mlp_logits(self.params, X)

    def probs(self, X: np.ndarray) -> np.ndarray:
        return expit(self.logits(X))

    def input_grads(self, X: np.ndarray) -> np.ndarray:
        return input_gradients(self.params, X)

    def prob_grads(self, X: np.ndarray) -> np.ndarray:
        return prob_input_gradients(self.params, X)


class LinearModel:
    def __init__(self, params: LinearParams):
        self.params = params

    def logits(self, X: np.ndarray) -> np.ndarray:
        return linear_logits(self.params, X)

    def probs(self, X: np.ndarray) -> np.ndarray:
        return expit(self.logits(X))

    def input_grads(self, X: np.ndarray) -> np.ndarray:
        # The logit is linear, so the input gradient is w for every point.
        return np.tile(self.params.w, (X.shape[0], 1))

    def prob_grads(self, X: np.ndarray) -> np.ndarray:
        p = self.probs(X)
        return (p * (1.0 - p))[:, None] * self.params.w


def as_model(params) -> MlpModel | LinearModel:
    if isinstance(params, MlpParams):
        return MlpModel(params)
    if isinstance(params, LinearParams):
        return LinearModel(params)
    raise TypeError(f"unsupported parameter type: {type(params)!r}")


def save_params(params, path: str | Path) -> None:
    """JSON serialization with explicit shapes and row-major weights."""
    if isinstance(params, MlpParams):
        obj = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "mlp",
            "input_size": params.input_size,
            "hidden_size": params.hidden_size,
            "W1": params.W1.tolist(),
            "b1": params.b1.tolist(),
            "w2": params.w2.tolist(),
            "b2": params.b2,
        }
    elif isinstance(params, LinearParams):
        obj = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "linear",
            "input_size": int(params.w.shape[0]),
            "w": params.w.tolist(),
            "b": params.b,
            "sensitive_index": params.sensitive_index,
        }
    else:
        raise TypeError(f"unsupported parameter type: {type(params)!r}")
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_params(path: str | Path):
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {obj.get('format_version')!r}")
    if obj["kind"] == "mlp":
        return MlpParams(
            W1=np.array(obj["W1"]), b1=np.array(obj["b1"]), w2=np.array(obj["w2"]), b2=obj["b2"]
        )
    if obj["kind"] == "linear":
        return LinearParams(
            w=np.array(obj["w"]), b=obj["b"], sensitive_index=obj["sensitive_index"]
        )
    raise ValueError(f"unknown model kind {obj['kind']!r}")

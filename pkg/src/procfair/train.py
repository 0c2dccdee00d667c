"""Training loops and model evaluation.

Modes: plain cross-entropy (bce_only), cross-entropy plus the
attribution-gap regularizer over matched pairs (procedural; a negative
alpha inverts the regularizer and produces a procedurally unfair model by
construction), and cross-entropy plus a differentiable demographic-parity
surrogate (dp_regularized).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset
from .fairness import (
    FairnessReport,
    MmdConfig,
    demographic_parity,
    disparate_impact,
    equal_opportunity,
    equalized_odds,
    gpf_fae,
    gpf_loss,
)
from .model import (
    MlpParams,
    _backprop_from_dz,
    _pair_sign_scatter,
    adam_init,
    adam_step,
    as_model,
    mlp_init,
)
from .pairing import PairSet, build_pairs

MODES = ("bce_only", "procedural", "dp_regularized")
_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "bce_only"
    alpha: float = 0.5  # attribution-gap weight; negative inverts the objective
    beta: float = 0.0  # demographic-parity surrogate weight
    epochs: int = 300
    lr: float = 0.01
    hidden: int = 32
    seed: int = 0
    pair_refresh: str = "fixed"  # pairs are built once, before the loop

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.pair_refresh != "fixed":
            raise ValueError("only pair_refresh='fixed' is supported")


@dataclass
class TrainHistory:
    """Per-epoch loss traces plus wall-clock and the final parameters."""

    total: np.ndarray
    bce: np.ndarray
    gpf: np.ndarray
    dp_proxy: np.ndarray
    seconds: float
    params: MlpParams

    def to_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "total", "bce", "gpf", "dp_proxy"])
            for i in range(len(self.total)):
                writer.writerow(
                    [i + 1]
                    + [repr(float(v)) for v in (self.total[i], self.bce[i], self.gpf[i], self.dp_proxy[i])]
                )


def dp_proxy_grads(params: MlpParams, X: np.ndarray, group: np.ndarray):
    """Differentiable demographic-parity surrogate and its gradient.

    loss = |mean sigmoid(logit) over s1 - mean over s2|; soft predictions
    keep it differentiable, with subgradient 0 at the absolute-value kink.
    """
    adv = np.asarray(group) == 1
    if not adv.any() or adv.all():
        raise ValueError("dp surrogate needs both groups in the batch")
    X = np.asarray(X, dtype=np.float64)
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    act = np.where(mask, pre, 0.0)
    z = act @ params.w2 + params.b2
    p = expit(z)
    diff = float(p[adv].mean() - p[~adv].mean())
    sgn = np.sign(diff)
    dz = np.where(adv, sgn / adv.sum(), -sgn / (~adv).sum()) * p * (1.0 - p)
    return abs(diff), _backprop_from_dz(params, X, mask, act, dz)


def _fused_epoch(params, X, y, group, idx1, idx2, alpha, beta, mode):
    """One epoch's losses and combined gradient, sharing a single forward pass."""
    m = X.shape[0]
    pre = X @ params.W1.T + params.b1
    mask = pre > 0.0
    act = np.where(mask, pre, 0.0)
    z = act @ params.w2 + params.b2
    p = expit(z)

    pc = np.clip(p, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    bce = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean())
    dz = (p - y) / m
    gpf_val = 0.0
    dp_val = 0.0

    if mode == "dp_regularized":
        adv = group == 1
        diff = float(p[adv].mean() - p[~adv].mean())
        sgn = np.sign(diff)
        dz = dz + beta * (np.where(adv, sgn / adv.sum(), -sgn / (~adv).sum()) * p * (1.0 - p))
        dp_val = abs(diff)

    if mode == "procedural":
        maskf = mask.astype(np.float64)
        s = p * (1.0 - p)
        G = (maskf * params.w2) @ params.W1
        E = s[:, None] * G
        U = E[idx1] - E[idx2]
        k = idx1.shape[0]
        gpf_val = float(np.abs(U).sum(axis=1).mean())
        R = _pair_sign_scatter(np.sign(U) / k, idx1, idx2, m)
        sR = s[:, None] * R
        # the sigmoid-slope path folds into dz; the mask path adds directly
        dz = dz + alpha * ((R * G).sum(axis=1) * s * (1.0 - 2.0 * p))
        grads = _backprop_from_dz(params, X, mask, act, dz)
        grads["W1"] = grads["W1"] + alpha * ((maskf.T @ sR) * params.w2[:, None])
        grads["w2"] = grads["w2"] + alpha * (maskf * (sR @ params.W1.T)).sum(axis=0)
    else:
        grads = _backprop_from_dz(params, X, mask, act, dz)

    total = bce + alpha * gpf_val + beta * dp_val
    return total, bce, gpf_val, dp_val, grads


def train(data: Dataset, cfg: TrainConfig) -> tuple[MlpParams, TrainHistory]:
    """Full-batch Adam training; pairs are built once before the loop.

    In procedural mode the attribution-gap loss runs over the
    probability-gradient explanations of every deduplicated training pair,
    so k is the pair count. Deterministic for fixed (data, cfg).
    """
    t0 = time.perf_counter()
    idx1 = idx2 = np.empty(0, dtype=np.int64)
    if cfg.mode == "procedural":
        pairs = build_pairs(data)  # raises on single-group data
        idx1, idx2 = pairs.idx1, pairs.idx2
    elif cfg.mode == "dp_regularized":
        if not (data.group == 1).any() or not (data.group == 0).any():
            raise ValueError("dp_regularized training needs both groups present")

    params = mlp_init(data.n_features, cfg.hidden, cfg.seed)
    state = adam_init(params)
    y = data.labels.astype(np.float64)
    X = data.features

    totals = np.empty(cfg.epochs)
    bces = np.empty(cfg.epochs)
    gpfs = np.empty(cfg.epochs)
    dps = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        total, bce, gpf_val, dp_val, grads = _fused_epoch(
            params, X, y, data.group, idx1, idx2, cfg.alpha, cfg.beta, cfg.mode
        )
        totals[epoch] = total
        bces[epoch] = bce
        gpfs[epoch] = gpf_val
        dps[epoch] = dp_val
        params, state = adam_step(state, params, grads, cfg.lr)

    history = TrainHistory(
        total=totals,
        bce=bces,
        gpf=gpfs,
        dp_proxy=dps,
        seconds=time.perf_counter() - t0,
        params=params,
    )
    return params, history


def train_inverse(data: Dataset, cfg: TrainConfig) -> tuple[MlpParams, TrainHistory]:
    """Procedural training with alpha < 0: maximizes the attribution gap to
    produce a procedurally unfair model. Rejects alpha >= 0 (including -0.0)."""
    if not cfg.alpha < 0:
        raise ValueError("train_inverse requires alpha strictly below 0")
    return train(data, replace(cfg, mode="procedural"))


def evaluate(
    params,
    test: Dataset,
    eval_pairs: PairSet,
    mmd_cfg: MmdConfig | None = None,
    background: np.ndarray | None = None,
    threshold: float = 0.5,
    train_seconds: float = 0.0,
) -> FairnessReport:
    """Accuracy, distributive metrics at the given probability threshold,
    and both procedural metrics over the evaluation pairs.

    background holds the rows KernelSHAP marginalizes over (typically a
    sample of the training split); it defaults to the test features.
    """
    mmd_cfg = mmd_cfg or MmdConfig()
    t0 = time.perf_counter()
    model = as_model(params)
    probs = model.probs(test.features)
    preds = (probs >= threshold).astype(np.int64)

    accuracy = float((preds == test.labels).mean())
    dp = demographic_parity(preds, test.group)
    di = disparate_impact(preds, test.group)
    eop = equal_opportunity(preds, test.labels, test.group)
    eod = equalized_odds(preds, test.labels, test.group)

    e1 = model.prob_grads(test.features[eval_pairs.idx1])
    e2 = model.prob_grads(test.features[eval_pairs.idx2])
    loss = gpf_loss(e1, e2)
    pval = gpf_fae(params, test.features, eval_pairs, mmd_cfg, background=background)

    return FairnessReport(
        accuracy=accuracy,
        dp=dp,
        di=di,
        eop=eop,
        eod=eod,
        gpf_fae=pval,
        gpf_loss=loss,
        train_seconds=train_seconds,
        eval_seconds=time.perf_counter() - t0,
        di_reason=None if di is not None else "no positive predictions in disadvantaged group",
        eop_reason=None if eop is not None else "a group has no positive labels",
        eod_reason=None if eod is not None else "a group lacks a label value",
    )

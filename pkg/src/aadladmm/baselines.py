"""Comparison optimizers trained on the same model and loss.

Gradient descent and Adam train the plain composed network (no z/a splitting,
no feasibility bands) by full-batch backpropagation; plain_altmin_train is the
acceleration-off alternating-minimization run.  All three produce the same
per-epoch metrics schema as the accelerated trainer, and all share its weight
initialization so runs with equal seeds start from identical parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .linalg import NonFiniteError
from .model import ProblemSpec, accuracy, activation_apply, linear_map, loss_and_grad
from .trainer import EpochMetrics, TrainConfig, TrainResult, init_weights, train

BASELINE_KINDS = ("gd", "adam", "plain_altmin")


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "gd"
    lr: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.lr < 0:  # 0 is allowed: updates become no-ops
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def _activation_grad(kind: str, z: np.ndarray, hz: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)  # subgradient 0 at z == 0
    if kind == "sigmoid":
        return hz * (1.0 - hz)
    if kind == "tanh":
        return 1.0 - hz * hz
    raise ValueError(kind)


def network_loss_and_grads(W, b, x, y, spec: ProblemSpec):
    """Full-batch loss (incl. regularization) and gradients for the composed
    network; returns (loss, dW list, db list)."""
    L = len(W)
    zs, activs = [], [x]
    cur = x
    for l in range(L):
        zl = linear_map(W[l], cur, b[l])
        zs.append(zl)
        if l < L - 1:
            cur = activation_apply(spec.activation, zl)
            activs.append(cur)
    loss, delta = loss_and_grad(zs[-1], y, spec.loss)
    for w in W:
        loss += spec.regularizer.value(w)
    dW = [None] * L
    db = [None] * L
    for l in range(L - 1, -1, -1):
        dW[l] = delta @ activs[l].T + spec.regularizer.grad(W[l])
        db[l] = delta.sum(axis=1)
        if l > 0:
            delta = (W[l].T @ delta) * _activation_grad(spec.activation, zs[l - 1], activs[l])
    return loss, dW, db


def _run_gradient_optimizer(data: Dataset, spec: ProblemSpec, config: BaselineConfig,
                            test_data: Dataset | None, adam: bool, init=None):
    W, b = init if init is not None else init_weights(spec, config.seed)
    W = [w.copy() for w in W]
    b = [v.copy() for v in b]
    betas, aeps = config.adam_betas, config.adam_eps
    mW = [np.zeros_like(w) for w in W]
    vW = [np.zeros_like(w) for w in W]
    mb = [np.zeros_like(v) for v in b]
    vb = [np.zeros_like(v) for v in b]
    metrics: list[EpochMetrics] = []
    test_x = test_data.features if test_data is not None else None
    test_y = test_data.labels if test_data is not None else None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        loss, dW, db = network_loss_and_grads(W, b, data.features, data.labels, spec)
        if not np.isfinite(loss):
            raise NonFiniteError(f"baseline loss diverged at epoch {epoch}")
        if adam:
            t = epoch + 1
            corr1 = 1.0 - betas[0] ** t
            corr2 = 1.0 - betas[1] ** t
            for l in range(len(W)):
                mW[l] = betas[0] * mW[l] + (1 - betas[0]) * dW[l]
                vW[l] = betas[1] * vW[l] + (1 - betas[1]) * dW[l] ** 2
                W[l] = W[l] - config.lr * (mW[l] / corr1) / (np.sqrt(vW[l] / corr2) + aeps)
                mb[l] = betas[0] * mb[l] + (1 - betas[0]) * db[l]
                vb[l] = betas[1] * vb[l] + (1 - betas[1]) * db[l] ** 2
                b[l] = b[l] - config.lr * (mb[l] / corr1) / (np.sqrt(vb[l] / corr2) + aeps)
        else:
            for l in range(len(W)):
                W[l] = W[l] - config.lr * dW[l]
                b[l] = b[l] - config.lr * db[l]
        post_loss, _, _ = network_loss_and_grads(W, b, data.features, data.labels, spec)
        metrics.append(EpochMetrics(
            epoch=epoch,
            objective=float(post_loss),
            residual_norm=0.0,
            train_acc=accuracy(W, b, data.features, data.labels, spec.activation),
            test_acc=accuracy(W, b, test_x, test_y, spec.activation) if test_x is not None else float("nan"),
            wall_ms=(time.perf_counter() - t0) * 1000.0,
            aa_accepted=False,
            eps=0.0,
        ))
    return W, b, metrics


def gd_train(data: Dataset, spec: ProblemSpec, config: BaselineConfig,
             test_data: Dataset | None = None, init=None):
    """Full-batch gradient descent on the composed network."""
    return _run_gradient_optimizer(data, spec, config, test_data, adam=False, init=init)


def adam_train(data: Dataset, spec: ProblemSpec, config: BaselineConfig,
               test_data: Dataset | None = None, init=None):
    """Full-batch Adam with the standard bias correction."""
    return _run_gradient_optimizer(data, spec, config, test_data, adam=True, init=init)


def plain_altmin_train(data: Dataset, spec: ProblemSpec, config: BaselineConfig,
                       test_data: Dataset | None = None) -> TrainResult:
    """Acceleration-off alternating minimization; identical to the trainer
    with acceleration disabled, exposed as a named baseline."""
    return train(data, spec,
                 TrainConfig(epochs=config.epochs, aa=None, seed=config.seed),
                 test_data=test_data)

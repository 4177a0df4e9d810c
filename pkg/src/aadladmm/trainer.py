"""Training loop: alternating-minimization epochs as a fixed-point map.

One epoch sweeps layers l = 1..L in order, updating W -> b -> z -> a within
each layer (no a update at the output layer).  Flattening the blocks into a
single vector turns the epoch into a fixed-point map G, which the accelerated
run wraps with the safeguarded Anderson engine; the combined constraint
residual ||z - W a - b|| over all layers supplies the record-or-revert gate.

The feasibility band width follows eps_k = max(eps0 / 2^k, eps_floor) across
epochs.  Curvature scalars for the backtracked updates persist across epochs
(halved at each epoch start) and stay outside the accelerated vector.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import subproblems as sp
from .anderson import AAConfig, AAState, aa_step, init_aa_state
from .data import Dataset
from .linalg import NonFiniteError, ShapeError
from .model import (
    NetworkState,
    ProblemSpec,
    accuracy,
    activation_apply,
    linear_map,
    objective,
    total_residual_norm,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    aa: AAConfig | None = None
    seed: int = 0
    fista_iters: int = 10
    fista_tol: float = 1e-8
    record_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class EpochMetrics:
    epoch: int
    objective: float
    residual_norm: float
    train_acc: float
    test_acc: float
    wall_ms: float
    aa_accepted: bool
    eps: float


def init_weights(spec: ProblemSpec, seed: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Uniform(-s, s) weights with s = sqrt(6 / (n_in + n_out)); zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    W, b = [], []
    dims = spec.layer_dims
    for l in range(spec.num_layers):
        s = np.sqrt(6.0 / (dims[l] + dims[l + 1]))
        W.append(rng.uniform(-s, s, size=(dims[l + 1], dims[l])))
        b.append(np.zeros(dims[l + 1]))
    return W, b


def init_state(spec: ProblemSpec, data: Dataset, seed: int) -> NetworkState:
    """Feasible start: z = W a + b exactly and a = h(z), so the penalty and
    band violations are zero before the first epoch."""
    if data.num_features != spec.layer_dims[0]:
        raise ShapeError("dataset feature count does not match layer_dims[0]")
    if data.num_classes > spec.layer_dims[-1]:
        raise ShapeError("dataset has more classes than output units")
    W, b = init_weights(spec, seed)
    z: list[np.ndarray] = []
    a: list[np.ndarray] = []
    cur = data.features
    for l in range(spec.num_layers):
        zl = linear_map(W[l], cur, b[l])
        z.append(zl)
        if l < spec.num_layers - 1:
            cur = activation_apply(spec.activation, zl)
            a.append(cur)
    state = NetworkState(W=W, b=b, z=z, a=a, a0=data.features, y=data.labels.copy())
    state.validate(spec)
    return state


def flatten(state: NetworkState) -> np.ndarray:
    """Pack blocks as W1,b1,z1,a1,...,W_L,b_L,z_L into one float64 vector."""
    parts = []
    for l in range(state.num_layers):
        parts.append(state.W[l].ravel())
        parts.append(state.b[l].ravel())
        parts.append(state.z[l].ravel())
        if l < state.num_layers - 1:
            parts.append(state.a[l].ravel())
    return np.concatenate(parts)


def flat_length(spec: ProblemSpec, n_samples: int) -> int:
    dims = spec.layer_dims
    L = spec.num_layers
    total = 0
    for l in range(L):
        total += dims[l + 1] * dims[l] + dims[l + 1] + dims[l + 1] * n_samples
        if l < L - 1:
            total += dims[l + 1] * n_samples
    return total


def unflatten(v: np.ndarray, spec: ProblemSpec, a0: np.ndarray, y: np.ndarray) -> NetworkState:
    """Inverse of flatten for the given problem shape."""
    n = a0.shape[1]
    if v.shape != (flat_length(spec, n),):
        raise ShapeError(f"flat vector has length {v.shape}, expected {flat_length(spec, n)}")
    dims = spec.layer_dims
    L = spec.num_layers
    W, b, z, a = [], [], [], []
    pos = 0

    def take(shape) -> np.ndarray:
        nonlocal pos
        size = int(np.prod(shape))
        out = v[pos:pos + size].reshape(shape).copy()
        pos += size
        return out

    for l in range(L):
        W.append(take((dims[l + 1], dims[l])))
        b.append(take((dims[l + 1],)))
        z.append(take((dims[l + 1], n)))
        if l < L - 1:
            a.append(take((dims[l + 1], n)))
    return NetworkState(W=W, b=b, z=z, a=a, a0=a0, y=y)


BlockTrace = Callable[[str, float], None]


def epoch_map(state: NetworkState, spec: ProblemSpec, surrogates: sp.SurrogateParams,
              eps: float, fista_iters: int = 10, fista_tol: float = 1e-8,
              block_trace: BlockTrace | None = None) -> NetworkState:
    """One full alternating-minimization sweep; returns a new state.

    Every block update is a descent step on the training objective, including
    the clipped z and a updates: their projections are restricted to the
    region where the quadratic model cannot exceed its anchor value, so an
    iterate that starts outside a freshly shrunk band (or arrives there as a
    raw accelerated proposal) migrates back toward the band without ever
    raising the objective.
    """
    out = state.copy()
    surrogates.warm_start_epoch()
    L = out.num_layers
    for l in range(L):
        out.W[l], surrogates.theta[l] = sp.update_W(
            l, out, spec, surrogates.theta[l],
            surrogates.backtrack_growth, surrogates.backtrack_max_iters)
        if block_trace:
            block_trace(f"W{l}", objective(out, spec))
        out.b[l] = sp.update_b(l, out, spec)
        if block_trace:
            block_trace(f"b{l}", objective(out, spec))
        if l < L - 1:
            out.z[l] = sp.update_z_hidden(l, out, spec, eps)
        else:
            out.z[l] = sp.update_z_last(out, spec, fista_iters, fista_tol)
        if block_trace:
            block_trace(f"z{l}", objective(out, spec))
        if l < L - 1:
            out.a[l], surrogates.tau[l] = sp.update_a(
                l, out, spec, surrogates.tau[l], eps,
                surrogates.backtrack_growth, surrogates.backtrack_max_iters)
            if block_trace:
                block_trace(f"a{l}", objective(out, spec))
    return out


def evaluate(state: NetworkState, spec: ProblemSpec, features: np.ndarray, labels: np.ndarray) -> float:
    """Prediction accuracy of the trained (W, b) on the given samples; the
    stored z and a blocks play no part."""
    return accuracy(state.W, state.b, features, labels, spec.activation)


@dataclass
class TrainResult:
    state: NetworkState
    metrics: list[EpochMetrics]
    aa_state: AAState | None = None


def train(data: Dataset, spec: ProblemSpec, config: TrainConfig,
          test_data: Dataset | None = None,
          block_trace: BlockTrace | None = None) -> TrainResult:
    """Run the full training protocol and record one metrics row per epoch."""
    state0 = init_state(spec, data, config.seed)
    surrogates = sp.SurrogateParams.fresh(spec.num_layers)
    metrics: list[EpochMetrics] = []

    test_x = test_data.features if test_data is not None else None
    test_y = test_data.labels if test_data is not None else None

    def record(epoch: int, st: NetworkState, wall_ms: float, accepted: bool, eps: float):
        if epoch % config.record_every and epoch != config.epochs - 1:
            return
        obj = objective(st, spec)
        if not np.isfinite(obj):
            raise NonFiniteError(f"objective diverged at epoch {epoch}")
        metrics.append(EpochMetrics(
            epoch=epoch,
            objective=obj,
            residual_norm=total_residual_norm(st),
            train_acc=evaluate(st, spec, data.features, data.labels),
            test_acc=evaluate(st, spec, test_x, test_y) if test_x is not None else float("nan"),
            wall_ms=wall_ms,
            aa_accepted=accepted,
            eps=eps,
        ))

    if config.aa is None:
        st = state0
        for epoch in range(config.epochs):
            eps = spec.eps_at(epoch)
            t0 = time.perf_counter()
            st = epoch_map(st, spec, surrogates, eps, config.fista_iters, config.fista_tol,
                           block_trace)
            record(epoch, st, (time.perf_counter() - t0) * 1000.0, False, eps)
        return TrainResult(state=st, metrics=metrics)

    # Accelerated run: the epoch sweep is the fixed-point map over flattened
    # iterates; the sweep's band width follows the schedule by outer epoch.
    a0, y = state0.a0, state0.y
    current_eps = spec.eps0

    def G(v: np.ndarray) -> np.ndarray:
        st_in = unflatten(v, spec, a0, y)
        st_out = epoch_map(st_in, spec, surrogates, current_eps,
                           config.fista_iters, config.fista_tol, block_trace)
        return flatten(st_out)

    def combined_residual(_x: np.ndarray, gx: np.ndarray) -> float:
        # gate on the total constraint violation of the sweep output: the
        # linear residual plus any activation-band violation, so proposals
        # whose sweeps leave a stranded outside h(z) +/- eps get reverted
        st = unflatten(gx, spec, a0, y)
        lin = total_residual_norm(st)
        band_sq = 0.0
        for l in range(st.num_layers - 1):
            hz = activation_apply(spec.activation, st.z[l])
            excess = np.maximum(np.abs(st.a[l] - hz) - current_eps, 0.0)
            band_sq += float((excess * excess).sum())
        return float(np.sqrt(lin * lin + band_sq))

    t0 = time.perf_counter()
    current_eps = spec.eps_at(0)
    aa = init_aa_state(G, flatten(state0), config.aa)
    # the init sweep is epoch 0: its plain output is the staged first proposal
    record(0, unflatten(aa.tilde_x, spec, a0, y), (time.perf_counter() - t0) * 1000.0,
           False, current_eps)
    x = aa.tilde_x
    for epoch in range(1, config.epochs):
        current_eps = spec.eps_at(epoch)
        t0 = time.perf_counter()
        x, accepted = aa_step(G, aa, config.aa, combined_residual)
        record(epoch, unflatten(x, spec, a0, y), (time.perf_counter() - t0) * 1000.0,
               accepted, current_eps)
    return TrainResult(state=unflatten(x, spec, a0, y), metrics=metrics, aa_state=aa)

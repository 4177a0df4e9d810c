"""Problem definition for penalty-split MLP training.

The network constraint ``z_l = W_l a_{l-1} + b_l`` is relaxed into a quadratic
penalty, and the activation constraint ``a_l = h_l(z_l)`` into the band
``h_l(z_l) - eps <= a_l <= h_l(z_l) + eps``.  The training objective is

    objective = loss(z_L; y) + sum_l reg(W_l) + (rho/2) sum_l ||z_l - W_l a_{l-1} - b_l||_F^2

with the loss taken as a mean over samples (this keeps its gradient
1-Lipschitz independently of the sample count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import NonFiniteError, ShapeError, frob_norm, require_finite

ACTIVATIONS = ("relu", "sigmoid", "tanh")
LOSSES = ("cross_entropy_softmax", "least_squares")


class LabelError(ValueError):
    """A class label lies outside [0, num_classes)."""


@dataclass(frozen=True)
class Regularizer:
    """Weight regularizer: ``none``, ``l1`` (lam * sum|w|) or ``l2`` (lam * sum w^2)."""

    kind: str = "none"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1", "l2"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.kind != "none" and self.lam <= 0:
            raise ValueError("regularizer weight must be positive")

    def value(self, w: np.ndarray) -> float:
        if self.kind == "l1":
            return self.lam * float(np.abs(w).sum())
        if self.kind == "l2":
            return self.lam * float((w * w).sum())
        return 0.0

    def grad(self, w: np.ndarray) -> np.ndarray:
        # l1 uses the sign subgradient (0 at 0); only the baselines need it.
        if self.kind == "l1":
            return self.lam * np.sign(w)
        if self.kind == "l2":
            return 2.0 * self.lam * w
        return np.zeros_like(w)


@dataclass(frozen=True)
class ProblemSpec:
    """Layer sizes, activation/loss choice, penalty weight and band schedule."""

    layer_dims: tuple[int, ...]
    activation: str = "relu"
    loss: str = "cross_entropy_softmax"
    regularizer: Regularizer = field(default_factory=Regularizer)
    rho: float = 1e-3
    eps0: float = 100.0
    eps_floor: float = 0.001

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError("layer_dims needs at least [input, output], all >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not (self.eps0 >= self.eps_floor > 0):
            raise ValueError("need eps0 >= eps_floor > 0")

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def eps_at(self, epoch: int) -> float:
        """Band width used during the given epoch: eps0 / 2^epoch, floored."""
        return max(self.eps0 / (2.0 ** epoch), self.eps_floor)


@dataclass
class NetworkState:
    """All optimization blocks: per layer W, b, z, plus a for hidden layers.

    Shapes, for layer_dims [n0, ..., nL] and N samples:
    W[l] is (n_{l+1}, n_l); b[l] is (n_{l+1},); z[l] and a[l] are column-major
    over samples, (n_{l+1}, N); a0 is the (n0, N) input; y holds N labels.
    """

    W: list[np.ndarray]
    b: list[np.ndarray]
    z: list[np.ndarray]
    a: list[np.ndarray]
    a0: np.ndarray
    y: np.ndarray

    @property
    def num_layers(self) -> int:
        return len(self.W)

    @property
    def num_samples(self) -> int:
        return self.a0.shape[1]

    def inputs_to(self, l: int) -> np.ndarray:
        """Activations feeding layer ``l`` (0-based): a0 for the first layer."""
        return self.a0 if l == 0 else self.a[l - 1]

    def copy(self) -> "NetworkState":
        return NetworkState(
            W=[w.copy() for w in self.W],
            b=[v.copy() for v in self.b],
            z=[m.copy() for m in self.z],
            a=[m.copy() for m in self.a],
            a0=self.a0,
            y=self.y,
        )

    def validate(self, spec: ProblemSpec) -> None:
        dims = spec.layer_dims
        L = spec.num_layers
        if not (len(self.W) == len(self.b) == len(self.z) == L and len(self.a) == L - 1):
            raise ShapeError("block counts inconsistent with layer_dims")
        n = self.num_samples
        if self.a0.shape != (dims[0], n):
            raise ShapeError(f"a0 shape {self.a0.shape} != {(dims[0], n)}")
        for l in range(L):
            if self.W[l].shape != (dims[l + 1], dims[l]):
                raise ShapeError(f"W[{l}] shape {self.W[l].shape}")
            if self.b[l].shape != (dims[l + 1],):
                raise ShapeError(f"b[{l}] shape {self.b[l].shape}")
            if self.z[l].shape != (dims[l + 1], n):
                raise ShapeError(f"z[{l}] shape {self.z[l].shape}")
            if l < L - 1 and self.a[l].shape != (dims[l + 1], n):
                raise ShapeError(f"a[{l}] shape {self.a[l].shape}")
        for blocks in (self.W, self.b, self.z, self.a):
            for m in blocks:
                require_finite(m, "network block")
        if self.y.shape != (n,):
            raise ShapeError("label vector length != sample count")
        if self.y.min() < 0 or self.y.max() >= dims[-1]:
            raise LabelError("labels out of range")


@dataclass(frozen=True)
class ConstraintBounds:
    lower: np.ndarray
    upper: np.ndarray


def activation_apply(h: str, z: np.ndarray) -> np.ndarray:
    if h == "relu":
        return np.maximum(z, 0.0)
    if h == "sigmoid":
        # split by sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if h == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {h!r}")


def constraint_bounds(h: str, z: np.ndarray, eps: float) -> ConstraintBounds:
    """Feasibility band for the layer output: h(z) - eps <= a <= h(z) + eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    hz = activation_apply(h, z)
    return ConstraintBounds(lower=hz - eps, upper=hz + eps)


def preimage_bounds(h: str, a: np.ndarray, eps: float) -> ConstraintBounds:
    """Elementwise band on z that keeps h(z) within [a - eps, a + eps].

    Bounds outside the activation's range become +/-inf sentinels; for relu the
    lower bound is -inf wherever a - eps <= 0.  When a + eps falls below the
    range (transiently possible right after the band shrinks) the upper bound
    clamps to the nearest attainable output.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo = a - eps
    hi = a + eps
    if h == "relu":
        lower = np.where(lo > 0.0, lo, -np.inf)
        upper = hi  # relu(z) <= hi reduces to z <= hi; hi < 0 forces relu to 0
        return ConstraintBounds(lower=lower, upper=upper)
    if h == "sigmoid":
        tiny = 1e-12
        lo_c = np.clip(lo, tiny, 1.0 - tiny)
        hi_c = np.clip(hi, tiny, 1.0 - tiny)
        logit = lambda p: np.log(p) - np.log1p(-p)
        lower = np.where(lo <= 0.0, -np.inf, logit(lo_c))
        upper = np.where(hi >= 1.0, np.inf, logit(hi_c))
        return ConstraintBounds(lower=lower, upper=upper)
    if h == "tanh":
        tiny = 1e-12
        lo_c = np.clip(lo, -1.0 + tiny, 1.0 - tiny)
        hi_c = np.clip(hi, -1.0 + tiny, 1.0 - tiny)
        lower = np.where(lo <= -1.0, -np.inf, np.arctanh(lo_c))
        upper = np.where(hi >= 1.0, np.inf, np.arctanh(hi_c))
        return ConstraintBounds(lower=lower, upper=upper)
    raise ValueError(f"unknown activation {h!r}")


def linear_map(W: np.ndarray, a_prev: np.ndarray, b: np.ndarray) -> np.ndarray:
    """W @ a_prev + b, with the bias broadcast over sample columns."""
    return W @ a_prev + b[:, None]


def penalty_phi(W: np.ndarray, a_prev: np.ndarray, b: np.ndarray, z: np.ndarray, rho: float) -> float:
    """Quadratic penalty (rho/2) ||z - W a_prev - b||_F^2 for one layer."""
    if W.shape[1] != a_prev.shape[0] or z.shape != (W.shape[0], a_prev.shape[1]):
        raise ShapeError("penalty operand shapes inconsistent")
    r = z - linear_map(W, a_prev, b)
    return 0.5 * rho * float((r * r).sum())


def penalty_gradients(W: np.ndarray, a_prev: np.ndarray, b: np.ndarray, z: np.ndarray,
                      rho: float) -> dict[str, np.ndarray]:
    """Gradients of the layer penalty with respect to each of its blocks."""
    r = z - linear_map(W, a_prev, b)
    return {
        "W": -rho * r @ a_prev.T,
        "b": -rho * r.sum(axis=1),
        "z": rho * r,
        "a_prev": -rho * W.T @ r,
    }


def onehot(y: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError("labels must be 1-D")
    if y.min() < 0 or y.max() >= num_classes:
        raise LabelError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((num_classes, len(y)))
    out[y, np.arange(len(y))] = 1.0
    return out


def loss_and_grad(zL: np.ndarray, y: np.ndarray, kind: str = "cross_entropy_softmax"):
    """Mean loss over samples and its gradient with respect to the logits.

    cross_entropy_softmax: mean CE of softmax(zL) against labels, gradient
    (softmax(zL) - onehot(y)) / N.  least_squares: ||zL - onehot||^2 / (2N),
    gradient (zL - onehot) / N.
    """
    C, N = zL.shape
    hot = onehot(y, C)
    if kind == "cross_entropy_softmax":
        shifted = zL - zL.max(axis=0, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=0))
        loss = float((lse - shifted[y, np.arange(N)]).mean())
        p = np.exp(shifted)
        p /= p.sum(axis=0, keepdims=True)
        return loss, (p - hot) / N
    if kind == "least_squares":
        d = zL - hot
        return 0.5 * float((d * d).sum()) / N, d / N
    raise ValueError(f"unknown loss {kind!r}")


def layer_residual(state: NetworkState, l: int) -> np.ndarray:
    """r_l = z_l - W_l a_{l-1} - b_l for 0-based layer index l."""
    return state.z[l] - linear_map(state.W[l], state.inputs_to(l), state.b[l])


def total_residual_norm(state: NetworkState) -> float:
    """sqrt of the summed squared Frobenius norms of all layer residuals."""
    total = 0.0
    for l in range(state.num_layers):
        r = layer_residual(state, l)
        total += float((r * r).sum())
    return math.sqrt(total)


def objective(state: NetworkState, spec: ProblemSpec) -> float:
    """Loss + regularization + penalty over all layers; raises on non-finite."""
    loss, _ = loss_and_grad(state.z[-1], state.y, spec.loss)
    total = loss
    for l in range(state.num_layers):
        total += spec.regularizer.value(state.W[l])
        total += penalty_phi(state.W[l], state.inputs_to(l), state.b[l], state.z[l], spec.rho)
    if not np.isfinite(total):
        raise NonFiniteError("objective is non-finite")
    return float(total)


def forward_logits(W: Sequence[np.ndarray], b: Sequence[np.ndarray], x: np.ndarray, activation: str) -> np.ndarray:
    """Plain feed-forward pass through (W, b) only; returns output logits."""
    a = x
    for l in range(len(W) - 1):
        a = activation_apply(activation, linear_map(W[l], a, b[l]))
    return linear_map(W[-1], a, b[-1])


def predict(W: Sequence[np.ndarray], b: Sequence[np.ndarray], x: np.ndarray, activation: str) -> np.ndarray:
    return np.argmax(forward_logits(W, b, x, activation), axis=0)


def accuracy(W, b, x, y, activation: str) -> float:
    return float(np.mean(predict(W, b, x, activation) == np.asarray(y)))

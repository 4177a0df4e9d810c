"""Block updates for the penalty-split training objective.

Each epoch sweeps the layers in order, updating W -> b -> z -> a per layer
(a is skipped at the output layer).  The W and a updates minimize a quadratic
majorizer of the penalty whose curvature scalar is found by backtracking: the
scalar doubles until the surrogate, evaluated at the candidate minimizer,
dominates the true penalty there.  The z update for hidden layers is an exact
quadratic step clipped into the feasibility band; the output-layer z update is
solved by an accelerated proximal-gradient loop; the b update has a closed
form that zeroes its gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import NonFiniteError
from .model import (
    NetworkState,
    ProblemSpec,
    constraint_bounds,
    linear_map,
    loss_and_grad,
    penalty_gradients,
    preimage_bounds,
)


class BacktrackDivergenceError(RuntimeError):
    """The curvature search exceeded its doubling budget."""


@dataclass
class SurrogateParams:
    """Per-layer curvature scalars carried across epochs (warm started)."""

    theta: list[float]
    tau: list[float]
    backtrack_growth: float = 2.0
    backtrack_max_iters: int = 60

    def __post_init__(self):
        if any(t <= 0 for t in self.theta) or any(t <= 0 for t in self.tau):
            raise ValueError("curvature scalars must be positive")
        if self.backtrack_growth <= 1:
            raise ValueError("backtrack growth must exceed 1")

    @classmethod
    def fresh(cls, num_layers: int, start: float = 1.0) -> "SurrogateParams":
        return cls(theta=[start] * num_layers, tau=[start] * max(num_layers - 1, 0))

    def warm_start_epoch(self) -> None:
        """Halve every scalar so backtracking can settle lower over time."""
        self.theta = [max(t / 2.0, 1e-12) for t in self.theta]
        self.tau = [max(t / 2.0, 1e-12) for t in self.tau]


def backtrack_scalar(
    candidate_of: Callable[[float], np.ndarray],
    phi_of: Callable[[np.ndarray], float],
    phi_anchor: float,
    grad: np.ndarray,
    anchor: np.ndarray,
    start: float,
    growth: float = 2.0,
    max_iters: int = 60,
) -> tuple[np.ndarray, float]:
    """Smallest scalar t in {start * growth^i} whose quadratic surrogate

        S(v; t) = phi_anchor + <grad, v - anchor> + (t/2) ||v - anchor||^2

    satisfies S(candidate_of(t); t) >= phi(candidate_of(t)).  The candidate is
    recomputed at every trial.  Returns (accepted candidate, accepted t).
    """
    if start <= 0:
        raise ValueError("backtracking start must be positive")
    t = float(start)
    for _ in range(max_iters + 1):
        cand = candidate_of(t)
        step = cand - anchor
        surrogate = phi_anchor + float((grad * step).sum()) + 0.5 * t * float((step * step).sum())
        if phi_of(cand) <= surrogate:
            return cand, t
        t *= growth
    raise BacktrackDivergenceError(f"no majorizing scalar within {max_iters} doublings")


def _phi_and_grad_W(state: NetworkState, spec: ProblemSpec, l: int):
    a_prev = state.inputs_to(l)
    b = state.b[l][:, None]
    z = state.z[l]

    def phi_of(W: np.ndarray) -> float:
        r = z - W @ a_prev - b
        return 0.5 * spec.rho * float((r * r).sum())

    grad = penalty_gradients(state.W[l], a_prev, state.b[l], z, spec.rho)["W"]
    return phi_of, grad


def _prox_candidate_W(anchor: np.ndarray, grad: np.ndarray, reg, theta: float) -> np.ndarray:
    if reg.kind == "l2":
        return (theta * anchor - grad) / (theta + 2.0 * reg.lam)
    g = anchor - grad / theta
    if reg.kind == "l1":
        thr = reg.lam / theta
        return np.sign(g) * np.maximum(np.abs(g) - thr, 0.0)
    return g


def update_W(l: int, state: NetworkState, spec: ProblemSpec, theta_start: float,
             growth: float = 2.0, max_iters: int = 60) -> tuple[np.ndarray, float]:
    """Majorize-minimize step on W_l with the regularizer's proximal map."""
    phi_of, grad = _phi_and_grad_W(state, spec, l)
    anchor = state.W[l]
    cand, theta = backtrack_scalar(
        lambda t: _prox_candidate_W(anchor, grad, spec.regularizer, t),
        phi_of,
        phi_of(anchor),
        grad,
        anchor,
        theta_start,
        growth,
        max_iters,
    )
    return cand, theta


def update_b(l: int, state: NetworkState, spec: ProblemSpec) -> np.ndarray:
    """Exact minimizer over the bias: row means of z_l - W_l a_{l-1}."""
    return np.mean(state.z[l] - state.W[l] @ state.inputs_to(l), axis=1)


def descent_clip(target: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 anchor: np.ndarray) -> np.ndarray:
    """Project ``target`` into the band, restricted per entry to the interval
    around ``target`` where the isotropic quadratic model stays at or below
    its value at ``anchor``.

    With a feasible anchor this reduces to the plain clip.  An infeasible
    anchor (possible right after the band schedule halves, or when an
    accelerated proposal leaves the band) moves toward the band exactly as
    far as descent permits, so the update never raises the objective and the
    band violation never grows.
    """
    radius = np.abs(anchor - target)
    banded = np.clip(target, lower, upper)
    return np.clip(banded, target - radius, target + radius)


def update_z_hidden(l: int, state: NetworkState, spec: ProblemSpec, eps: float) -> np.ndarray:
    """Exact quadratic step on a hidden z_l, clipped so h(z_l) stays within
    eps of the current a_l.  The unconstrained minimizer is W a + b itself."""
    target = linear_map(state.W[l], state.inputs_to(l), state.b[l])
    band = preimage_bounds(spec.activation, state.a[l], eps)
    return descent_clip(target, band.lower, band.upper, state.z[l])


def update_a(l: int, state: NetworkState, spec: ProblemSpec, tau_start: float, eps: float,
             growth: float = 2.0, max_iters: int = 60) -> tuple[np.ndarray, float]:
    """Backtracked gradient step on a_l (which feeds layer l+1), clipped into
    the band h(z_l) +/- eps."""
    if not (0 <= l < state.num_layers - 1):
        raise ValueError("a update applies to hidden layers only")
    W_next = state.W[l + 1]
    b_next = state.b[l + 1][:, None]
    z_next = state.z[l + 1]

    def phi_of(a: np.ndarray) -> float:
        r = z_next - W_next @ a - b_next
        return 0.5 * spec.rho * float((r * r).sum())

    anchor = state.a[l]
    grad = penalty_gradients(W_next, anchor, state.b[l + 1], z_next, spec.rho)["a_prev"]
    band = constraint_bounds(spec.activation, state.z[l], eps)
    cand, tau = backtrack_scalar(
        lambda t: descent_clip(anchor - grad / t, band.lower, band.upper, anchor),
        phi_of,
        phi_of(anchor),
        grad,
        anchor,
        tau_start,
        growth,
        max_iters,
    )
    return cand, tau


def fista_quadratic_plus_loss(
    z0: np.ndarray,
    c: np.ndarray,
    rho: float,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    iters: int = 10,
    tol: float = 1e-8,
    lipschitz: float = 1.0,
) -> np.ndarray:
    """Minimize g(z) = (rho/2) ||z - c||_F^2 + loss(z) by accelerated
    proximal gradient with step 1/(rho + lipschitz).

    Tracks the best iterate seen, so g never increases relative to z0.
    """

    def g_of(z: np.ndarray) -> tuple[float, np.ndarray]:
        lv, lg = loss_fn(z)
        d = z - c
        return lv + 0.5 * rho * float((d * d).sum()), rho * d + lg

    step = 1.0 / (rho + lipschitz)
    z = z0.copy()
    z_prev = z0.copy()
    yk = z0.copy()
    t = 1.0
    best = z0.copy()
    best_val, g0 = g_of(z0)
    if float(np.linalg.norm(g0)) <= tol:
        return best
    for _ in range(iters):
        _, gy = g_of(yk)
        z_prev = z
        z = yk - step * gy
        if not np.all(np.isfinite(z)):
            raise NonFiniteError("output-layer iterate became non-finite")
        val, gz = g_of(z)
        if val < best_val:
            best_val, best = val, z
        if float(np.linalg.norm(gz)) <= tol:
            break
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        yk = z + ((t - 1.0) / t_next) * (z - z_prev)
        t = t_next
    return best


def update_z_last(state: NetworkState, spec: ProblemSpec, fista_iters: int = 10, tol: float = 1e-8) -> np.ndarray:
    """Output-layer z update: quadratic pull toward W a + b plus the loss."""
    c = linear_map(state.W[-1], state.inputs_to(state.num_layers - 1), state.b[-1])
    return fista_quadratic_plus_loss(
        state.z[-1], c, spec.rho,
        lambda z: loss_and_grad(z, state.y, spec.loss),
        iters=fista_iters, tol=tol,
    )

"""Safeguarded limited-memory type-I Anderson acceleration.

For a fixed-point map ``G`` with residual ``F(x) = G(x) - x``, the engine
maintains an approximate inverse Jacobian of ``F`` in the limited-memory form

    B^{-1} = I + sum_i u_i v_i^T        (at most m rank-one pairs)

built from secant pairs of successive proposals, and drives the quasi-Newton
proposal ``x~ = x - B^{-1} F(x)``.  Three protections keep the iteration
globally safe:

* restart checking - the memory is cleared once it would exceed ``m`` pairs or
  when Gram-Schmidt shows the new secant is nearly dependent on the stored
  ones (``||xi_hat|| < tau * ||xi||``);
* rank-one regularization - the secant's residual difference is blended toward
  ``-F_prev`` with a weight ``psi_theta_bar(eta)`` so the update's denominator
  stays bounded away from zero;
* safeguarding - an accelerated proposal is only kept while the residual norm
  of the current iterate obeys the summable decay bound
  ``||F|| <= d * U_bar * (n_AA + 1)^{-(1 + eps_safe)}``; otherwise the engine
  falls back to the plain fixed-point step.

Each accepted proposal is additionally gated by a combined-residual
comparison: a proposal whose measured residual is no better than the last
recorded one is discarded and the iteration reverts to the plain step from the
last recorded iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import NonFiniteError, as_vector

FixedPointMap = Callable[[np.ndarray], np.ndarray]
ResidualFn = Callable[[np.ndarray, np.ndarray], float]


class DegenerateSecantError(ValueError):
    """A zero secant vector cannot be orthogonalized or used for an update."""


class NumericalBreakdownError(ArithmeticError):
    """The rank-one update's denominator underflowed; the memory must restart."""


@dataclass(frozen=True)
class AAConfig:
    """Memory depth and safeguarding constants."""

    m: int = 8
    theta_bar: float = 0.01
    tau_gs: float = 0.01
    d_safe: float = 1e6
    eps_safe: float = 1e-6
    alpha_mix: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("memory depth m must be >= 1")
        if not (0.0 < self.theta_bar < 1.0 and 0.0 < self.tau_gs < 1.0):
            raise ValueError("theta_bar and tau_gs must lie in (0, 1)")
        if self.d_safe <= 0 or self.eps_safe <= 0:
            raise ValueError("safeguarding constants must be positive")
        if not (0.0 < self.alpha_mix <= 1.0):
            raise ValueError("alpha_mix must lie in (0, 1]")

    def safeguard_bound(self, u_bar: float, n_aa: int) -> float:
        return self.d_safe * u_bar * (n_aa + 1) ** (-(1.0 + self.eps_safe))


@dataclass
class AAState:
    """Mutable bookkeeping for one accelerated run."""

    x_default: np.ndarray            # last recorded iterate
    g_default: np.ndarray            # cached G(x_default)
    x_prev: np.ndarray               # point the next secant is taken from
    F_prev: np.ndarray
    tilde_x: np.ndarray              # pending proposal for the next step
    U_bar: float                     # ||F(x0)||, fixed at init
    secant_x: list[np.ndarray] = field(default_factory=list)
    secant_x_hat: list[np.ndarray] = field(default_factory=list)
    jac_u: list[np.ndarray] = field(default_factory=list)
    jac_v: list[np.ndarray] = field(default_factory=list)
    m_k: int = 0
    n_AA: int = 0
    r_prev: float = math.inf
    reset: bool = True
    # diagnostics, refreshed every step
    last_f_norm: float = math.inf
    last_r: float = math.inf
    safeguard_log: list[tuple[float, int, float]] = field(default_factory=list)

    def clear_memory(self) -> None:
        self.secant_x.clear()
        self.secant_x_hat.clear()
        self.jac_u.clear()
        self.jac_v.clear()
        self.m_k = 0


def residual(G: FixedPointMap, x: np.ndarray) -> np.ndarray:
    """F(x) = G(x) - x."""
    x = as_vector(x)
    fx = as_vector(G(x), len(x)) - x
    if not np.all(np.isfinite(fx)):
        raise NonFiniteError("fixed-point residual is non-finite")
    return fx


def psi_theta_bar(eta: float, theta_bar: float) -> float:
    """Regularization weight: (1 - sign(eta) theta_bar) / (1 - eta) when
    |eta| < theta_bar, else 1.  sign(0) is taken as 0, so psi(0) = 1."""
    if abs(eta) >= theta_bar:
        return 1.0
    return (1.0 - math.copysign(theta_bar, eta) * (eta != 0.0)) / (1.0 - eta)


def apply_inverse_jacobian(state: AAState, v: np.ndarray) -> np.ndarray:
    """(I + sum_i u_i v_i^T) v, accumulated in insertion order."""
    out = v.copy()
    for u_i, v_i in zip(state.jac_u, state.jac_v):
        out += u_i * float(v_i @ v)
    return out


def _apply_inverse_jacobian_T(state: AAState, v: np.ndarray) -> np.ndarray:
    out = v.copy()
    for u_i, v_i in zip(state.jac_u, state.jac_v):
        out += v_i * float(u_i @ v)
    return out


def materialize_inverse_jacobian(state: AAState, n: int) -> np.ndarray:
    """Dense n x n form of B^{-1}; intended for small-n verification."""
    B = np.eye(n)
    for u_i, v_i in zip(state.jac_u, state.jac_v):
        B += np.outer(u_i, v_i)
    return B


def gram_schmidt_step(state: AAState, xi_x: np.ndarray, tau_gs: float = 0.01) -> tuple[np.ndarray, bool]:
    """Orthogonalize a new secant against the stored basis.

    Returns the orthogonalized vector and an ill-conditioned flag, set when
    its norm has shrunk below ``tau_gs`` times the input norm.
    """
    norm_in = float(np.linalg.norm(xi_x))
    if norm_in == 0.0:
        raise DegenerateSecantError("zero secant vector")
    xi_hat = xi_x.copy()
    for basis in state.secant_x_hat:
        denom = float(basis @ basis)
        if denom > 0.0:
            xi_hat -= (float(basis @ xi_x) / denom) * basis
    ill = float(np.linalg.norm(xi_hat)) < tau_gs * norm_in
    return xi_hat, ill


def powell_regularize(state: AAState, xi_F: np.ndarray, xi_hat_x: np.ndarray,
                      theta_bar: float) -> np.ndarray:
    """Blend the residual secant toward -F_prev so the coming rank-one update
    stays well conditioned:  xi_F~ = theta xi_F - (1 - theta) F_prev."""
    denom = float(xi_hat_x @ xi_hat_x)
    eta = float(xi_hat_x @ apply_inverse_jacobian(state, xi_F)) / denom if denom > 0 else 0.0
    theta = psi_theta_bar(eta, theta_bar)
    return theta * xi_F - (1.0 - theta) * state.F_prev


def update_inverse_jacobian(state: AAState, xi_x: np.ndarray, xi_F_tilde: np.ndarray,
                            xi_hat_x: np.ndarray) -> None:
    """Append one rank-one pair so that B^{-1} xi_F~ = xi_x afterwards."""
    w = apply_inverse_jacobian(state, xi_F_tilde)
    denom = float(xi_hat_x @ w)
    if abs(denom) < 1e-300:
        raise NumericalBreakdownError("rank-one denominator underflow")
    v = _apply_inverse_jacobian_T(state, xi_hat_x)
    u = (xi_x - w) / denom
    state.jac_u.append(u)
    state.jac_v.append(v)
    state.secant_x.append(xi_x)
    state.secant_x_hat.append(xi_hat_x)
    state.m_k += 1


def init_aa_state(G: FixedPointMap, x0: np.ndarray, config: AAConfig) -> AAState:
    """Set up the run: record x0, cache G(x0), and stage the damped first
    proposal (1 - alpha) x0 + alpha G(x0)."""
    x0 = as_vector(x0).copy()
    g0 = as_vector(G(x0), len(x0)).copy()
    if not np.all(np.isfinite(g0)):
        raise NonFiniteError("map value at the initial point is non-finite")
    F0 = g0 - x0
    a = config.alpha_mix
    return AAState(
        x_default=x0,
        g_default=g0,
        x_prev=x0,
        F_prev=F0,
        tilde_x=(1.0 - a) * x0 + a * g0,
        U_bar=float(np.linalg.norm(F0)),
    )


def _record_secant(state: AAState, config: AAConfig, x_k: np.ndarray, F_k: np.ndarray) -> bool:
    """Restart check + Gram-Schmidt + regularization + rank-one update for the
    secant from x_prev to the just-recorded x_k.  Returns False when the
    secant was unusable and the memory was cleared instead."""
    xi_x = x_k - state.x_prev
    xi_F = F_k - state.F_prev
    norm_x = float(np.linalg.norm(xi_x))
    if norm_x == 0.0 or not np.isfinite(norm_x):
        state.clear_memory()
        return False
    xi_hat = xi_x.copy()
    for basis in state.secant_x_hat:
        d = float(basis @ basis)
        if d > 0.0:
            xi_hat -= (float(basis @ xi_x) / d) * basis
    if state.m_k + 1 == config.m + 1 or float(np.linalg.norm(xi_hat)) < config.tau_gs * norm_x:
        state.clear_memory()
        xi_hat = xi_x.copy()
    xi_F_tilde = powell_regularize(state, xi_F, xi_hat, config.theta_bar)
    try:
        update_inverse_jacobian(state, xi_x, xi_F_tilde, xi_hat)
    except NumericalBreakdownError:
        # restart and retry once from the identity; give up on this secant if
        # the denominator still underflows
        state.clear_memory()
        xi_hat = xi_x.copy()
        xi_F_tilde = powell_regularize(state, xi_F, xi_hat, config.theta_bar)
        try:
            update_inverse_jacobian(state, xi_x, xi_F_tilde, xi_hat)
        except NumericalBreakdownError:
            state.clear_memory()
            return False
    return True


def aa_step(G: FixedPointMap, state: AAState, config: AAConfig,
            residual_fn: ResidualFn | None = None) -> tuple[np.ndarray, bool]:
    """One full pass: evaluate the pending proposal, record or revert, update
    the inverse Jacobian, form the next proposal, and apply the safeguard.

    Returns ``(x_next, accepted)`` where ``accepted`` reports whether the
    safeguard kept the accelerated proposal; on any rejection the returned
    iterate is the plain fixed-point step from the last recorded point.
    """
    g_tilde = as_vector(G(state.tilde_x), len(state.tilde_x))
    if not np.all(np.isfinite(g_tilde)):
        raise NonFiniteError("map value at the proposal is non-finite")
    F_tilde = g_tilde - state.tilde_x
    r = float(np.linalg.norm(F_tilde)) if residual_fn is None else float(residual_fn(state.tilde_x, g_tilde))

    if not (state.reset or r < state.r_prev):
        # Revert: drop the proposal, continue with the plain step from the
        # last recorded iterate (its map value is cached).
        state.reset = True
        state.r_prev = math.inf
        x_k = state.x_default
        x_next = state.g_default.copy()
        state.x_prev = x_k
        state.F_prev = state.g_default - x_k
        state.tilde_x = x_next
        state.last_f_norm = float(np.linalg.norm(state.F_prev))
        state.last_r = r
        return x_next, False

    # Record the proposal as the current iterate.
    x_k = state.tilde_x
    F_k = F_tilde
    state.r_prev = r
    state.reset = False
    _record_secant(state, config, x_k, F_k)

    proposal = x_k - apply_inverse_jacobian(state, F_k)
    f_norm = float(np.linalg.norm(F_k))
    state.x_default = x_k
    state.g_default = g_tilde
    state.x_prev = x_k
    state.F_prev = F_k
    state.last_f_norm = f_norm
    state.last_r = r

    bound = config.safeguard_bound(state.U_bar, state.n_AA)
    if f_norm <= bound:
        state.safeguard_log.append((f_norm, state.n_AA, bound))
        state.n_AA += 1
        state.tilde_x = proposal
        return proposal, True
    state.reset = True
    state.tilde_x = g_tilde.copy()
    return state.tilde_x, False


@dataclass
class FixedPointResult:
    x: np.ndarray
    f_norms: list[float]
    evaluations: int
    iterations: int
    converged: bool
    state: AAState | None = None


def solve_fixed_point(G: FixedPointMap, x0: np.ndarray, config: AAConfig,
                      tol: float = 1e-10, max_iters: int = 1000,
                      residual_fn: ResidualFn | None = None) -> FixedPointResult:
    """Run the accelerated iteration until some evaluated ||F|| <= tol."""
    evals = 0

    def counted(x: np.ndarray) -> np.ndarray:
        nonlocal evals
        evals += 1
        return G(x)

    state = init_aa_state(counted, as_vector(x0), config)
    f_norms = [state.U_bar]
    if state.U_bar <= tol:
        return FixedPointResult(x0.copy(), f_norms, evals, 0, True, state)
    x = state.tilde_x
    for it in range(1, max_iters + 1):
        x, _ = aa_step(counted, state, config, residual_fn)
        f_norms.append(state.last_f_norm)
        if state.last_f_norm <= tol:
            return FixedPointResult(state.x_default.copy(), f_norms, evals, it, True, state)
    return FixedPointResult(state.x_default.copy(), f_norms, evals, max_iters, False, state)


def picard_iterate(G: FixedPointMap, x0: np.ndarray, tol: float = 1e-10,
                   max_iters: int = 100000) -> FixedPointResult:
    """Plain fixed-point iteration, for head-to-head comparisons."""
    x = as_vector(x0).copy()
    f_norms: list[float] = []
    evals = 0
    for it in range(max_iters):
        gx = as_vector(G(x), len(x))
        evals += 1
        f = float(np.linalg.norm(gx - x))
        f_norms.append(f)
        if f <= tol:
            return FixedPointResult(x, f_norms, evals, it + 1, True)
        x = gx
    return FixedPointResult(x, f_norms, evals, max_iters, False)

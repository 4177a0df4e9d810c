"""Small-scale invariant suite behind the ``verify`` CLI command.

Every check is self-contained, fast, and prints one PASS/FAIL line through
the CLI.  The suite covers the algebraic contracts (products, norms,
gradients, proximal steps), the descent and feasibility properties of the
block updates, the conditioning and safeguarding of the accelerated engine,
and the determinism of the serialization layer.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import anderson as ad
from . import data as dio
from . import model as md
from . import subproblems as sp
from . import trainer as tr
from .linalg import fd_gradient_check, frob_norm, matmul
from .runio import metrics_row, read_metrics_csv, write_metrics_csv

Check = Callable[[], tuple[bool, str]]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _random_state(seed: int, dims=(4, 5, 3), n=6, rho=0.5, activation="relu",
                  reg=md.Regularizer()) -> tuple[md.NetworkState, md.ProblemSpec]:
    spec = md.ProblemSpec(layer_dims=dims, rho=rho, activation=activation, regularizer=reg)
    r = _rng(seed)
    ds = dio.Dataset(r.normal(size=(dims[0], n)), r.integers(0, dims[-1], size=n),
                     dims[-1], "verify")
    st = tr.init_state(spec, ds, seed)
    # perturb all blocks so gradients and residuals are nonzero
    for blocks in (st.W, st.b, st.z, st.a):
        for m in blocks:
            m += 0.3 * r.normal(size=m.shape)
    return st, spec


def check_matmul_associativity() -> tuple[bool, str]:
    r = _rng(0)
    worst = 0.0
    for _ in range(20):
        A, B, C = (r.normal(size=(4, 3)), r.normal(size=(3, 5)), r.normal(size=(5, 2)))
        lhs = matmul(matmul(A, B), C)
        rhs = matmul(A, matmul(B, C))
        worst = max(worst, float(np.abs(lhs - rhs).max() / (1 + np.abs(lhs).max())))
    return worst <= 1e-10, f"max relative deviation {worst:.2e}"


def check_frob_triangle() -> tuple[bool, str]:
    r = _rng(1)
    for _ in range(50):
        A, B = r.normal(size=(5, 4)), r.normal(size=(5, 4))
        if frob_norm(A + B) > frob_norm(A) + frob_norm(B) + 1e-12:
            return False, "triangle inequality violated"
    return True, "50 random pairs"


def check_gradients() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20):
        st, spec = _random_state(seed)
        l = seed % st.num_layers
        a_prev, b, z, W = st.inputs_to(l), st.b[l], st.z[l], st.W[l]

        def phi_of_w(v):
            Wm = v.reshape(W.shape)
            rr = z - Wm @ a_prev - b[:, None]
            return 0.5 * spec.rho * float((rr * rr).sum())

        def grad_w(v):
            Wm = v.reshape(W.shape)
            return (-spec.rho * (z - Wm @ a_prev - b[:, None]) @ a_prev.T).ravel()

        worst = max(worst, fd_gradient_check(phi_of_w, grad_w, W.ravel(), 1e-5))

        C, N = st.z[-1].shape
        zL = st.z[-1]
        for kind in ("cross_entropy_softmax", "least_squares"):
            f = lambda v: md.loss_and_grad(v.reshape(C, N), st.y, kind)[0]
            g = lambda v: md.loss_and_grad(v.reshape(C, N), st.y, kind)[1].ravel()
            worst = max(worst, fd_gradient_check(f, g, zL.ravel(), 1e-5))
    return worst <= 1e-5, f"max relative error {worst:.2e} over 20 instances"


def check_prox_vs_golden_section() -> tuple[bool, str]:
    from math import sqrt

    def golden(f, lo, hi, tol=1e-10):
        phi = (sqrt(5) - 1) / 2
        a, b = lo, hi
        c, d = b - phi * (b - a), a + phi * (b - a)
        fc, fd = f(c), f(d)
        while abs(b - a) > tol:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - phi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + phi * (b - a)
                fd = f(d)
        return 0.5 * (a + b)

    r = _rng(2)
    worst = 0.0
    for i in range(100):
        theta = float(r.uniform(0.5, 5.0))
        anchor = float(r.normal())
        grad = float(r.normal())
        lam = float(r.uniform(0.1, 2.0))
        reg = md.Regularizer("l1", lam) if i % 2 else md.Regularizer("l2", lam)
        cand = float(sp._prox_candidate_W(np.array([[anchor]]), np.array([[grad]]), reg, theta)[0, 0])
        obj = lambda w: grad * (w - anchor) + 0.5 * theta * (w - anchor) ** 2 + reg.value(np.array([[w]]))
        ref = golden(obj, anchor - 20, anchor + 20)
        worst = max(worst, abs(cand - ref))
    return worst <= 1e-6, f"max |closed form - golden section| = {worst:.2e}"


def check_majorization() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20):
        st, spec = _random_state(seed)
        for l in range(st.num_layers):
            phi_of, grad = sp._phi_and_grad_W(st, spec, l)
            cand, theta = sp.update_W(l, st, spec, 0.25)
            step = cand - st.W[l]
            sur = phi_of(st.W[l]) + float((grad * step).sum()) + 0.5 * theta * float((step * step).sum())
            worst = min(worst, sur - phi_of(cand))
    return worst >= -1e-10, f"min surrogate slack {worst:.2e}"


def check_fista_descent() -> tuple[bool, str]:
    for seed in range(20):
        st, spec = _random_state(seed)
        c = md.linear_map(st.W[-1], st.inputs_to(st.num_layers - 1), st.b[-1])
        loss = lambda z: md.loss_and_grad(z, st.y, spec.loss)
        g = lambda z: loss(z)[0] + 0.5 * spec.rho * float(((z - c) ** 2).sum())
        out = sp.update_z_last(st, spec, fista_iters=15)
        if g(out) > g(st.z[-1]) + 1e-12:
            return False, f"seed {seed}: value increased"
    return True, "20 random instances"


def check_bias_update() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20):
        st, spec = _random_state(seed)
        for l in range(st.num_layers):
            b_new = sp.update_b(l, st, spec)
            resid = st.z[l] - st.W[l] @ st.inputs_to(l) - b_new[:, None]
            worst = max(worst, float(np.abs(resid.sum(axis=1)).max()) * spec.rho)
    return worst <= 1e-10, f"max |grad_b| after update {worst:.2e}"


def check_block_descent() -> tuple[bool, str]:
    ds = dio.synth_blobs(20, 6, 2, 0.5, seed=3)
    spec = md.ProblemSpec(layer_dims=(6, 8, 2), rho=0.01)
    st = tr.init_state(spec, ds, 0)
    surr = sp.SurrogateParams.fresh(spec.num_layers)
    prev = md.objective(st, spec)
    worst = 0.0
    for ep in range(25):
        vals = []
        st = tr.epoch_map(st, spec, surr, spec.eps_at(ep), block_trace=lambda n, o: vals.append(o))
        for o in vals:
            worst = max(worst, o - prev)
            prev = o
    return worst <= 1e-9, f"max per-block increase {worst:.2e}"


def check_feasibility_constant_band() -> tuple[bool, str]:
    ds = dio.synth_blobs(20, 6, 2, 0.5, seed=4)
    spec = md.ProblemSpec(layer_dims=(6, 8, 8, 2), rho=0.01, eps0=0.05, eps_floor=0.05)
    res = tr.train(ds, spec, tr.TrainConfig(epochs=30, seed=1))
    st = res.state
    for l in range(spec.num_layers - 1):
        cb = md.constraint_bounds(spec.activation, st.z[l], 0.05)
        if np.any(st.a[l] > cb.upper + 1e-12) or np.any(st.a[l] < cb.lower - 1e-12):
            return False, f"layer {l} left the band"
    return True, "all hidden activations inside the constant band"


def check_gram_schmidt() -> tuple[bool, str]:
    r = _rng(5)
    state = ad.init_aa_state(lambda x: 0.5 * x, r.normal(size=6), ad.AAConfig(m=4))
    for _ in range(3):
        xi = r.normal(size=6)
        xi_hat, _ = ad.gram_schmidt_step(state, xi)
        state.secant_x_hat.append(xi_hat)
    xi = r.normal(size=6)
    xi_hat, _ = ad.gram_schmidt_step(state, xi)
    worst = max(abs(float(xi_hat @ h)) for h in state.secant_x_hat)
    return worst <= 1e-10, f"max |<new, stored>| = {worst:.2e}"


def check_secant_condition() -> tuple[bool, str]:
    r = _rng(6)
    n = 8
    cfg = ad.AAConfig(m=4)
    st = ad.init_aa_state(lambda x: 0.5 * x, r.normal(size=n), cfg)
    worst = 0.0
    for _ in range(4):
        xi_x = r.normal(size=n)
        xi_F = r.normal(size=n)
        xi_hat, _ = ad.gram_schmidt_step(st, xi_x)
        xi_F_t = ad.powell_regularize(st, xi_F, xi_hat, cfg.theta_bar)
        ad.update_inverse_jacobian(st, xi_x, xi_F_t, xi_hat)
        res = float(np.linalg.norm(ad.apply_inverse_jacobian(st, xi_F_t) - xi_x))
        worst = max(worst, res / (1.0 + float(np.linalg.norm(xi_x))))
    return worst <= 1e-8, f"max normalized secant residual {worst:.2e}"


def check_conditioning_bounds() -> tuple[bool, str]:
    for seed in range(8):
        r = _rng(seed + 40)
        n = int(r.integers(2, 10))
        m = int(r.integers(1, 5))
        M = r.normal(size=(n, n))
        A = float(r.uniform(0.3, 0.95)) * M / np.linalg.norm(M, 2)
        c = r.normal(size=n)
        G = lambda x: A @ x + c
        cfg = ad.AAConfig(m=m)
        bound = 3.0 * (1 + cfg.theta_bar + cfg.tau_gs) ** m / cfg.tau_gs ** m - 2.0
        inv_bound = (3.0 * ((1 + cfg.theta_bar + cfg.tau_gs) / cfg.tau_gs) ** m - 2.0) ** (n - 1) / cfg.theta_bar ** m
        st = ad.init_aa_state(G, r.normal(size=n), cfg)
        for _ in range(40):
            ad.aa_step(G, st, cfg)
            Binv = ad.materialize_inverse_jacobian(st, n)
            if np.linalg.norm(np.linalg.inv(Binv), 2) > bound:
                return False, f"seed {seed}: forward-operator norm bound violated"
            if np.linalg.norm(Binv, 2) > inv_bound:
                return False, f"seed {seed}: inverse-operator norm bound violated"
            if st.last_f_norm < 1e-13:
                break
    return True, "8 random problems within both norm bounds"


def check_safeguard_ledger() -> tuple[bool, str]:
    r = _rng(9)
    n = 6
    M = r.normal(size=(n, n))
    A = 0.9 * M / np.linalg.norm(M, 2)
    c = r.normal(size=n)
    G = lambda x: A @ x + c
    cfg = ad.AAConfig(m=4)
    res = ad.solve_fixed_point(G, r.normal(size=n), cfg, tol=1e-12, max_iters=200)
    log = res.state.safeguard_log
    if not log:
        return False, "no accepted steps logged"
    for f_norm, n_aa, bound in log:
        if not (f_norm <= bound and abs(bound - cfg.safeguard_bound(res.state.U_bar, n_aa)) < 1e-300):
            return False, "logged acceptance violates its bound"
    bounds = [b for _, _, b in log]
    if any(b2 >= b1 for b1, b2 in zip(bounds, bounds[1:])):
        return False, "bound sequence is not strictly decreasing"
    return True, f"{len(log)} accepted steps all within the decay bound"


def check_picard_equivalence() -> tuple[bool, str]:
    r = _rng(10)
    n = 5
    M = r.normal(size=(n, n))
    A = 0.9 * M / np.linalg.norm(M, 2)
    c = r.normal(size=n)
    G = lambda x: A @ x + c
    x0 = r.normal(size=n)
    cfg = ad.AAConfig(m=4, d_safe=1e-300)  # safeguard always rejects
    st = ad.init_aa_state(G, x0, cfg)
    xs = [st.tilde_x.copy()]
    for _ in range(10):
        x, accepted = ad.aa_step(G, st, cfg)
        if accepted:
            return False, "safeguard accepted despite forced rejection"
        xs.append(x.copy())
    x = x0.copy()
    for k in range(11):
        x = G(x)
        if not np.array_equal(x, xs[k]):
            return False, f"iterate {k} differs from plain iteration"
    return True, "11 forced-fallback iterates bitwise equal to plain iteration"


def check_flatten_roundtrip() -> tuple[bool, str]:
    st, spec = _random_state(11)
    v = tr.flatten(st)
    st2 = tr.unflatten(v, spec, st.a0, st.y)
    same = (
        all(np.array_equal(a, b) for a, b in zip(st.W, st2.W))
        and all(np.array_equal(a, b) for a, b in zip(st.b, st2.b))
        and all(np.array_equal(a, b) for a, b in zip(st.z, st2.z))
        and all(np.array_equal(a, b) for a, b in zip(st.a, st2.a))
    )
    return same and len(v) == tr.flat_length(spec, st.num_samples), "bitwise roundtrip"


def check_eps_schedule() -> tuple[bool, str]:
    spec = md.ProblemSpec(layer_dims=(3, 2), eps0=100.0, eps_floor=0.001)
    for k in range(40):
        if spec.eps_at(k) != max(100.0 / 2 ** k, 0.001):
            return False, f"epoch {k} off schedule"
    return True, "max(100/2^k, 0.001) holds for k < 40"


def check_split_properties() -> tuple[bool, str]:
    ds = dio.synth_blobs(25, 4, 3, 1.0, seed=12)
    tr_ds, te_ds = dio.split(ds, 0.8, seed=0)
    tr2, te2 = dio.split(ds, 0.8, seed=0)
    if not (np.array_equal(tr_ds.features, tr2.features) and np.array_equal(te_ds.features, te2.features)):
        return False, "split not deterministic"
    if tr_ds.num_samples + te_ds.num_samples != ds.num_samples:
        return False, "split does not cover the dataset"
    if set(np.unique(tr_ds.labels)) != set(np.unique(te_ds.labels)):
        return False, "label sets differ across sides"
    return True, "deterministic, covering, stratified"


def check_csv_roundtrip() -> tuple[bool, str]:
    ds = dio.synth_blobs(5, 3, 2, 1.0, seed=13)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "ds.csv"
        dio.write_csv(ds, p)
        back = dio.load_csv(p)
    ok = np.max(np.abs(back.features - ds.features)) <= 1e-12 and np.array_equal(back.labels, ds.labels)
    return ok, "write then load preserves values"


def check_metrics_determinism() -> tuple[bool, str]:
    ds = dio.synth_blobs(15, 4, 2, 0.5, seed=14)
    spec = md.ProblemSpec(layer_dims=(4, 6, 2), rho=0.01)

    def run() -> str:
        res = tr.train(ds, spec, tr.TrainConfig(epochs=5, seed=3))
        return "\n".join(metrics_row(m, fixed_timing=True) for m in res.metrics)

    return run() == run(), "two identical runs produce identical rows"


CHECKS: list[tuple[str, Check]] = [
    ("matmul-associativity", check_matmul_associativity),
    ("frob-triangle-inequality", check_frob_triangle),
    ("analytic-gradients", check_gradients),
    ("prox-vs-golden-section", check_prox_vs_golden_section),
    ("majorization-slack", check_majorization),
    ("output-layer-descent", check_fista_descent),
    ("bias-update-stationary", check_bias_update),
    ("per-block-descent", check_block_descent),
    ("feasibility-constant-band", check_feasibility_constant_band),
    ("gram-schmidt-orthogonality", check_gram_schmidt),
    ("secant-condition", check_secant_condition),
    ("conditioning-bounds", check_conditioning_bounds),
    ("safeguard-ledger", check_safeguard_ledger),
    ("picard-equivalence", check_picard_equivalence),
    ("flatten-roundtrip", check_flatten_roundtrip),
    ("eps-schedule", check_eps_schedule),
    ("split-properties", check_split_properties),
    ("csv-roundtrip", check_csv_roundtrip),
    ("metrics-determinism", check_metrics_determinism),
]


def run_all(inject_fault: bool = False):
    """Run every check; yields (name, ok, detail)."""
    checks = list(CHECKS)
    if inject_fault:
        checks.append(("injected-fault", lambda: (False, "deliberate failure for harness testing")))
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash counts as a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        yield name, ok, detail

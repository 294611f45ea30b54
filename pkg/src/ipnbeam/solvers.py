"""MSE objective, closed-form baseband blocks, Euclidean gradients, AO-IR and FD-IR.

All matrix arguments accept stacked leading axes (typically the subcarrier
axis); gradients of the multi-carrier residual objectives are summed over
those axes since the RF matrices are shared across subcarriers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .flopcount import mm, ct, solve_herm, inv_herm, fro_norm, tally
from .manifold import (
    ArmijoParams,
    ZERO_GRAD_NORM,
    armijo_search,
    assert_unit_modulus,
    riemannian_project,
)

POWER_ATOL = 1e-9


class SolverError(RuntimeError):
    """Numerical failure inside a solver (singular system, null precoder, ...)."""


def _as_h(h) -> np.ndarray:
    return h.H if hasattr(h, "H") and not isinstance(h, np.ndarray) else np.asarray(h)


def _as_r(r) -> np.ndarray:
    return r.R if hasattr(r, "R") and not isinstance(r, np.ndarray) else np.asarray(r)


# -- transceivers --------------------------------------------------------------


@dataclass
class HybridTransceiver:
    """RF + baseband precoder/combiner and the per-subcarrier scaling beta."""

    v_rf: np.ndarray   # (Kb, KrfB) unit modulus
    v_bb: np.ndarray   # (X, KrfB, Ns)
    w_rf: np.ndarray   # (Ka, KrfA) unit modulus
    w_bb: np.ndarray   # (X, KrfA, Ns)
    beta: np.ndarray   # (X,) positive

    def joint_precoder(self) -> np.ndarray:
        return mm(self.v_rf, self.v_bb)

    def joint_combiner(self) -> np.ndarray:
        return mm(self.w_rf, self.w_bb)

    def copy(self) -> "HybridTransceiver":
        return HybridTransceiver(
            self.v_rf.copy(), self.v_bb.copy(), self.w_rf.copy(), self.w_bb.copy(),
            self.beta.copy(),
        )

    def validate(self, atol: float = POWER_ATOL) -> None:
        assert_unit_modulus(self.v_rf, atol)
        assert_unit_modulus(self.w_rf, atol)
        if np.any(self.beta <= 0) or not np.all(np.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        v = self.v_rf @ self.v_bb
        power = np.sum(np.abs(v) ** 2, axis=(-2, -1))
        if np.any(power > 1.0 + atol):
            raise ValueError(f"transmit power constraint violated: max {power.max():.12f}")


@dataclass
class FullDigitalTransceiver:
    """Unconstrained per-subcarrier transceiver (the FD-IR bound)."""

    v: np.ndarray      # (X, Kb, Ns)
    w: np.ndarray      # (X, Ka, Ns)
    beta: np.ndarray   # (X,)
    converged: bool = True
    iterations: int = 0

    def joint_precoder(self) -> np.ndarray:
        return self.v

    def joint_combiner(self) -> np.ndarray:
        return self.w


def random_init(
    x: int, ka: int, kb: int, krf_a: int, krf_b: int, ns: int, rng: np.random.Generator
) -> HybridTransceiver:
    """Default standalone-AO start: i.i.d. uniform RF phases, identity-slab
    baseband matrices with the transmit power met with equality, beta = 1."""
    v_rf = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(kb, krf_b)))
    w_rf = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(ka, krf_a)))
    slab = np.eye(krf_b, ns, dtype=complex)
    scale = np.linalg.norm(v_rf @ slab)
    v_bb = np.broadcast_to(slab / scale, (x, krf_b, ns)).copy()
    w_bb = np.broadcast_to(np.eye(krf_a, ns, dtype=complex), (x, krf_a, ns)).copy()
    return HybridTransceiver(v_rf, v_bb, w_rf, w_bb, np.ones(x))


# -- objective -----------------------------------------------------------------


def mse_objective(tx, h, r) -> float:
    """Exact per-frame MSE summed over subcarriers.

    MSE[x] = b^-2*||W^H H V||_F^2 - 2*b^-1*Re Tr(W^H H V)
             + b^-2*Tr(W^H R W) + Ns  with the joint matrices V, W.
    """
    h, r = _as_h(h), _as_r(r)
    v = tx.joint_precoder()
    w = tx.joint_combiner()
    beta = np.asarray(tx.beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    t = mm(ct(w), mm(h, v))                       # (X, Ns, Ns)
    ns = t.shape[-1]
    quad = np.sum(np.abs(t) ** 2, axis=(-2, -1))
    cross = np.real(np.trace(t, axis1=-2, axis2=-1))
    eta = np.real(np.einsum("...ij,...ij->...", mm(r, w).conj(), w))
    tally(muls=2 * t.size + w.size, adds=2 * t.size + w.size)
    mse_x = quad / beta**2 - 2.0 * cross / beta + eta / beta**2 + ns
    if not np.all(np.isfinite(mse_x)):
        raise ValueError("non-finite MSE")
    return float(np.sum(mse_x))


# -- combiner side -------------------------------------------------------------


class _CombinerCtx(NamedTuple):
    h1: np.ndarray      # (X, Ka, Ns) = beta^-1 H V
    r: np.ndarray       # (X, Ka, Ka)
    beta: np.ndarray    # (X,)


def _combiner_ctx(h, v_joint, r, beta) -> _CombinerCtx:
    h = _as_h(h)
    beta = np.asarray(beta, dtype=float)
    h1 = mm(h, v_joint) / beta[..., None, None]
    tally(muls=h1.size)
    return _CombinerCtx(h1=h1, r=_as_r(r), beta=beta)


def _gamma_m1(w_rf, ctx: _CombinerCtx):
    gamma = mm(ct(w_rf), mm(ctx.r, w_rf))
    m1 = mm(ct(w_rf), ctx.h1)
    return gamma, m1


def _g_matrix(m1, p, beta):
    b2 = (beta**2)[..., None, None]
    ns = m1.shape[-1]
    g = np.eye(ns) + b2 * mm(ct(m1), p)
    tally(muls=m1.shape[-1] ** 2, adds=m1.shape[-1] ** 2)
    return g


def _combiner_objective(w_rf, ctx: _CombinerCtx) -> np.ndarray:
    gamma, m1 = _gamma_m1(w_rf, ctx)
    p = solve_herm(gamma, m1, "interference-projected Gram matrix")
    ginv = inv_herm(_g_matrix(m1, p, ctx.beta), "combiner residual system")
    return np.real(np.trace(ginv, axis1=-2, axis2=-1))


def _combiner_grad(w_rf, ctx: _CombinerCtx) -> np.ndarray:
    gamma, m1 = _gamma_m1(w_rf, ctx)
    p = solve_herm(gamma, m1, "interference-projected Gram matrix")
    ginv = inv_herm(_g_matrix(m1, p, ctx.beta), "combiner residual system")
    b = mm(mm(ginv, ginv), ct(p))                       # (X, Ns, KrfA)
    term2 = mm(ctx.h1, b)
    term1 = mm(mm(ctx.r, mm(w_rf, p)), b)
    grad = (ctx.beta**2)[..., None, None] * (term1 - term2)
    tally(muls=grad.size, adds=grad.size)
    ka, krf = w_rf.shape[-2], w_rf.shape[-1]
    return grad.reshape(-1, ka, krf).sum(axis=0)


def _bb_combiner(w_rf, ctx: _CombinerCtx) -> np.ndarray:
    gamma, m1 = _gamma_m1(w_rf, ctx)
    a = mm(m1, ct(m1)) + gamma / (ctx.beta**2)[..., None, None]
    tally(muls=gamma.size, adds=a.size)
    return solve_herm(a, m1, "combiner system")


def bb_combiner_closed_form(w_rf, h1, r, beta) -> np.ndarray:
    """Optimal baseband combiner
    (W_RF^H H1 H1^H W_RF + b^-2 W_RF^H R W_RF)^-1 W_RF^H H1."""
    ctx = _CombinerCtx(np.asarray(h1), np.asarray(r), np.asarray(beta, dtype=float))
    return _bb_combiner(w_rf, ctx)


def combiner_residual_objective(w_rf, h1, r, beta):
    """Per-subcarrier MSE after the optimal baseband combiner,
    Tr (I + b^2 H1^H W_RF Gamma^-1 W_RF^H H1)^-1."""
    ctx = _CombinerCtx(np.asarray(h1), np.asarray(r), np.asarray(beta, dtype=float))
    out = _combiner_objective(w_rf, ctx)
    return float(out) if out.ndim == 0 else out


def euclidean_grad_combiner(w_rf, h1, r, beta) -> np.ndarray:
    """Conjugate Euclidean gradient of the combiner residual objective w.r.t.
    W_RF*, summed over any stacked subcarrier axes."""
    ctx = _CombinerCtx(np.asarray(h1), np.asarray(r), np.asarray(beta, dtype=float))
    return _combiner_grad(w_rf, ctx)


# -- precoder side -------------------------------------------------------------


class _PrecoderCtx(NamedTuple):
    b: np.ndarray     # (X, Kb, Ns) = H^H W
    eta: np.ndarray   # (X,) = Tr(W^H R W)
    ns: int


def _precoder_ctx(h, w_joint, r) -> _PrecoderCtx:
    h, r = _as_h(h), _as_r(r)
    b = mm(ct(h), w_joint)
    eta = np.real(np.einsum("...ij,...ij->...", mm(r, w_joint).conj(), w_joint))
    tally(muls=w_joint.size, adds=w_joint.size)
    return _PrecoderCtx(b=b, eta=eta, ns=w_joint.shape[-1])


def _h2_a(v_rf, ctx: _PrecoderCtx):
    h2 = mm(ct(v_rf), ctx.b)
    vv = mm(ct(v_rf), v_rf)
    a = mm(h2, ct(h2)) + ctx.eta[..., None, None] * vv
    tally(muls=a.size, adds=a.size)
    return h2, a


def _precoder_objective(v_rf, ctx: _PrecoderCtx) -> np.ndarray:
    h2, a = _h2_a(v_rf, ctx)
    m = solve_herm(a, h2, "regularized precoder system")
    fit = np.real(np.einsum("...ij,...ij->...", h2.conj(), m))
    tally(muls=h2.size, adds=h2.size)
    return ctx.ns - fit


def _precoder_grad(v_rf, ctx: _PrecoderCtx) -> np.ndarray:
    h2, a = _h2_a(v_rf, ctx)
    m = solve_herm(a, h2, "regularized precoder system")
    mh = ct(m)
    term1 = -mm(ctx.b, mh)
    term2 = mm(mm(ctx.b, mm(mh, h2)), mh)
    term3 = ctx.eta[..., None, None] * mm(v_rf, mm(m, mh))
    grad = term1 + term2 + term3
    tally(muls=term3.size, adds=2 * grad.size)
    kb, krf = v_rf.shape[-2], v_rf.shape[-1]
    return grad.reshape(-1, kb, krf).sum(axis=0)


def _bb_precoder(v_rf, ctx: _PrecoderCtx):
    h2, a = _h2_a(v_rf, ctx)
    v_tilde = solve_herm(a, h2, "precoder system")
    joint = mm(v_rf, v_tilde)
    power = np.sum(np.abs(joint) ** 2, axis=(-2, -1))
    tally(muls=joint.size, adds=joint.size)
    if np.any(power <= 0):
        raise SolverError("null precoder: zero-trace baseband solution")
    beta = 1.0 / np.sqrt(power)
    v_bb = beta[..., None, None] * v_tilde
    tally(muls=v_bb.size)
    return v_bb, beta


def bb_precoder_closed_form(v_rf, h, w, r):
    """Closed-form baseband precoder and scaling:
    Vt = (H2 H2^H + eta V_RF^H V_RF)^-1 H2, beta = Tr(V_RF Vt Vt^H V_RF^H)^-1/2,
    V_BB = beta * Vt; the joint precoder meets the power constraint with equality."""
    return _bb_precoder(v_rf, _precoder_ctx(h, np.asarray(w), r))


def precoder_residual_objective(v_rf, h, w, r):
    """Per-subcarrier MSE after the optimal (V_BB, beta) for the given V_RF."""
    out = _precoder_objective(v_rf, _precoder_ctx(h, np.asarray(w), r))
    return float(out) if out.ndim == 0 else out


def euclidean_grad_precoder(v_rf, h, w, r) -> np.ndarray:
    """Conjugate Euclidean gradient of the precoder residual objective w.r.t.
    V_RF*, summed over any stacked subcarrier axes."""
    return _precoder_grad(v_rf, _precoder_ctx(h, np.asarray(w), r))


# -- AO-IR ----------------------------------------------------------------------


@dataclass(frozen=True)
class AoConfig:
    """AO-IR(I, J): outer iteration count and per-outer inner MO step counts."""

    outer_iters: int = 2
    inner_iters: tuple[int, ...] = (5, 2)
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    converge_tol: float | None = None   # set to run past outer_iters to convergence
    max_outer: int = 100

    def __post_init__(self):
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be >= 0")
        if self.outer_iters and len(self.inner_iters) != self.outer_iters:
            raise ValueError("inner_iters must list one step count per outer iteration")


@dataclass
class AoResult:
    objectives: list[float]                 # MSE after each outer iteration
    gamma_b: list[list[float]]              # accepted precoder step sizes per outer
    gamma_a: list[list[float]]              # accepted combiner step sizes per outer
    outer_exits: list[HybridTransceiver]    # populated when record=True
    converged: bool = True


def _rf_descent_block(rf, objective, gradient, j_steps, params):
    """J Armijo-driven Riemannian steps on one RF matrix; returns the updated
    matrix, accepted step sizes (0 for skipped/stalled steps) and the final
    objective value."""
    f_cur = objective(rf)
    gammas = [0.0] * j_steps
    for j in range(j_steps):
        grad_r = riemannian_project(gradient(rf), rf)
        if fro_norm(grad_r) <= ZERO_GRAD_NORM:
            break
        res = armijo_search(objective, rf, grad_r, params, f_base=f_cur)
        if res.stalled or res.gamma == 0.0:
            break
        gammas[j] = res.gamma
        rf = res.candidate
        f_cur = res.f_new
    return rf, gammas, f_cur


def ao_ir_solve(h, r, cfg: AoConfig, init: HybridTransceiver, record: bool = False):
    """Alternating optimization: per outer iteration, J inner MO steps on the
    RF precoder with Armijo line search, the closed-form baseband precoder,
    J MO steps on the RF combiner, and the closed-form baseband combiner.

    The residual objectives equal the true MSE right after their baseband
    closed form, so the per-outer objective trace is non-increasing. With
    cfg.converge_tol set, outer iterations continue (at the last listed inner
    step count) until the relative objective change drops below the tolerance
    or cfg.max_outer is hit (flagged, not raised).
    """
    h, r = _as_h(h), _as_r(r)
    state = init.copy()
    result = AoResult(objectives=[], gamma_b=[], gamma_a=[], outer_exits=[])
    schedule = list(cfg.inner_iters[: cfg.outer_iters])
    if not schedule and cfg.converge_tol is None:
        return state, result

    prev_obj = None
    outer = 0
    while True:
        if outer < len(schedule):
            j_steps = schedule[outer]
        elif cfg.converge_tol is not None:
            j_steps = schedule[-1] if schedule else 1
        else:
            break
        if outer >= cfg.max_outer:
            result.converged = False
            break

        pctx = _precoder_ctx(h, state.joint_combiner(), r)
        state.v_rf, gammas, _ = _rf_descent_block(
            state.v_rf,
            lambda v: float(np.sum(_precoder_objective(v, pctx))),
            lambda v: _precoder_grad(v, pctx),
            j_steps,
            cfg.armijo,
        )
        result.gamma_b.append(gammas)
        state.v_bb, state.beta = _bb_precoder(state.v_rf, pctx)

        cctx = _combiner_ctx(h, state.joint_precoder(), r, state.beta)
        state.w_rf, gammas, obj = _rf_descent_block(
            state.w_rf,
            lambda w: float(np.sum(_combiner_objective(w, cctx))),
            lambda w: _combiner_grad(w, cctx),
            j_steps,
            cfg.armijo,
        )
        result.gamma_a.append(gammas)
        state.w_bb = _bb_combiner(state.w_rf, cctx)
        result.objectives.append(obj)
        if record:
            result.outer_exits.append(state.copy())

        outer += 1
        if cfg.converge_tol is not None:
            if prev_obj is not None and outer >= len(schedule):
                rel = abs(prev_obj - obj) / max(abs(prev_obj), 1e-300)
                if rel < cfg.converge_tol:
                    break
            prev_obj = obj
        elif outer >= len(schedule):
            break
    return state, result


# -- FD-IR ----------------------------------------------------------------------


def fd_ir_solve(h, r, ns: int | None = None, tol: float = 1e-8, max_iters: int = 500):
    """Fully-digital interference-resistant bound: the same two closed forms
    with identity RF matrices and full RF-chain counts, alternated to
    convergence (relative objective change below tol per subcarrier).

    Initialized from the top-Ns right singular subspace of each H[x] at unit
    power. ns defaults to min(Ka, Kb). Exceeding max_iters flags the result
    as non-converged rather than raising.
    """
    h, r = _as_h(h), _as_r(r)
    x, ka, kb = h.shape
    if ns is None:
        ns = min(ka, kb)
    _, _, vh = np.linalg.svd(h)
    v = ct(vh)[..., :, :ns] / np.sqrt(ns)          # unit power per subcarrier
    beta = np.ones(x)
    w = np.zeros((x, ka, ns), dtype=complex)

    eye_b = np.broadcast_to(np.eye(kb, dtype=complex), (x, kb, kb)).copy()
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # combiner closed form at identity RF
        h1 = mm(h, v) / beta[:, None, None]
        tally(muls=h1.size)
        a = mm(h1, ct(h1)) + r / (beta**2)[:, None, None]
        tally(muls=r.size, adds=a.size)
        w = solve_herm(a, h1, "fully digital combiner system")

        # precoder closed form at identity RF (joint beta optimization)
        b = mm(ct(h), w)
        eta = np.real(np.einsum("xij,xij->x", mm(r, w).conj(), w))
        tally(muls=w.size, adds=w.size)
        a2 = mm(b, ct(b)) + eta[:, None, None] * eye_b
        tally(muls=eye_b.size, adds=a2.size)
        v_tilde = solve_herm(a2, b, "fully digital precoder system")
        power = np.sum(np.abs(v_tilde) ** 2, axis=(-2, -1))
        tally(muls=v_tilde.size, adds=v_tilde.size)
        if np.any(power <= 0):
            raise SolverError("null precoder: zero-trace fully digital solution")
        beta = 1.0 / np.sqrt(power)
        v = beta[:, None, None] * v_tilde
        tally(muls=v.size)

        fit = np.real(np.einsum("xij,xij->x", b.conj(), v_tilde))
        obj = ns - fit                                # per-x MSE after both blocks
        tally(muls=b.size, adds=b.size)
        if prev is not None:
            rel = np.abs(prev - obj) / np.maximum(np.abs(prev), 1e-300)
            if np.all(rel < tol):
                converged = True
                break
        prev = obj
    return FullDigitalTransceiver(v=v, w=w, beta=beta, converged=converged, iterations=it)

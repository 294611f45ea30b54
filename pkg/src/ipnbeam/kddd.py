"""Deep-unfolded interference-resistant solver with trainable step sizes.

The forward pass replays the AO block structure (RF precoder / BB precoder /
RF combiner / BB combiner per layer) with fixed step sizes and no line
search; training fits the step sizes layer by layer against the batch-mean
MSE loss using derivative-free gradient estimates (the parameter count is at
most 2 * sum(J_i) scalars).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .flopcount import fro_norm, tally
from .manifold import ZERO_GRAD_NORM, retract, riemannian_project, tangent_step
from .solvers import (
    FullDigitalTransceiver,
    HybridTransceiver,
    SolverError,
    _as_h,
    _as_r,
    _bb_combiner,
    _bb_precoder,
    _combiner_ctx,
    _combiner_grad,
    _precoder_ctx,
    _precoder_grad,
    fd_ir_solve,
    mse_objective,
)


@dataclass
class StepSizeSchedule:
    """Trainable step sizes gamma_b[i][j], gamma_a[i][j] of the unfolded solver."""

    gamma_b: list[list[float]]
    gamma_a: list[list[float]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gamma_b = [[float(g) for g in row] for row in self.gamma_b]
        self.gamma_a = [[float(g) for g in row] for row in self.gamma_a]
        if [len(r) for r in self.gamma_b] != [len(r) for r in self.gamma_a]:
            raise ValueError("gamma_b and gamma_a must share the (I, J) structure")
        for row in self.gamma_b + self.gamma_a:
            for g in row:
                if not np.isfinite(g) or g < 0:
                    raise ValueError("step sizes must be finite and >= 0")

    @property
    def layers(self) -> int:
        return len(self.gamma_b)

    @property
    def steps_per_layer(self) -> list[int]:
        return [len(row) for row in self.gamma_b]

    @classmethod
    def constant(cls, steps_per_layer, value: float, meta: dict | None = None):
        return cls(
            gamma_b=[[float(value)] * j for j in steps_per_layer],
            gamma_a=[[float(value)] * j for j in steps_per_layer],
            meta=meta or {},
        )

    @classmethod
    def zeros(cls, steps_per_layer, meta: dict | None = None):
        return cls.constant(steps_per_layer, 0.0, meta)

    def to_json(self) -> str:
        return json.dumps(
            {
                "I": self.layers,
                "J": self.steps_per_layer,
                "gammaB": self.gamma_b,
                "gammaA": self.gamma_a,
                "meta": self.meta,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "StepSizeSchedule":
        d = json.loads(text)
        sched = cls(gamma_b=d["gammaB"], gamma_a=d["gammaA"], meta=d.get("meta", {}))
        if d.get("I") != sched.layers or list(d.get("J", [])) != sched.steps_per_layer:
            raise ValueError("schedule header (I, J) disagrees with the gamma arrays")
        return sched

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "StepSizeSchedule":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# -- initialization --------------------------------------------------------------


def init_from_fd(fd: FullDigitalTransceiver, krf_a: int, krf_b: int) -> HybridTransceiver:
    """Hybrid starting point from the fully-digital solution.

    RF matrices take the entrywise phase of the first K_RF columns of the
    (subcarrier-concatenated) FD precoder/combiner; baseband matrices are the
    least-squares fit of each FD matrix through the RF matrix, with the
    precoder side rescaled so the power constraint holds with equality.
    """

    def rf_from(fd_mat: np.ndarray, krf: int) -> np.ndarray:
        cols = np.concatenate(list(fd_mat), axis=1)   # (K, X*Ns)
        if cols.shape[1] < krf:
            raise SolverError("not enough FD columns for the requested RF width")
        sel = cols[:, :krf]
        if np.any(np.abs(sel) == 0.0):
            raise SolverError("zero entry in FD initialization column")
        return retract(sel)

    v_rf = rf_from(fd.v, krf_b)
    w_rf = rf_from(fd.w, krf_a)

    v_fit = np.linalg.pinv(v_rf) @ fd.v               # (X, KrfB, Ns)
    scale = np.linalg.norm(v_rf @ v_fit, axis=(-2, -1))
    if np.any(scale <= 0):
        raise SolverError("null precoder: FD precoder orthogonal to the RF span")
    v_bb = v_fit / scale[:, None, None]
    beta = fd.beta / scale
    w_bb = np.linalg.pinv(w_rf) @ fd.w
    return HybridTransceiver(v_rf=v_rf, v_bb=v_bb, w_rf=w_rf, w_bb=w_bb, beta=beta)


# -- forward ----------------------------------------------------------------------


@dataclass
class KdddTrace:
    block_exits: list[tuple[str, HybridTransceiver]] = field(default_factory=list)


def _fixed_step_block(rf, gradient, gammas) -> np.ndarray:
    """Deterministic Riemannian steps with fixed step sizes; zero step sizes
    and numerically zero gradients skip the step outright."""
    for gamma in gammas:
        if gamma == 0.0:
            continue
        grad_r = riemannian_project(gradient(rf), rf)
        if fro_norm(grad_r) <= ZERO_GRAD_NORM:
            continue
        rf = retract(tangent_step(rf, gamma, grad_r))
    return rf


def _renormalize_precoder(state: HybridTransceiver) -> None:
    """Rescale (V_BB, beta) jointly so the power constraint holds with equality
    after the RF precoder moved; the baseband closed form that follows is
    invariant to this scaling."""
    scale = np.linalg.norm(state.v_rf @ state.v_bb, axis=(-2, -1))
    state.v_bb = state.v_bb / scale[:, None, None]
    state.beta = state.beta / scale
    tally(muls=state.v_bb.size + state.beta.size)


def kddd_forward(h, r, sched: StepSizeSchedule, init: HybridTransceiver, record: bool = False):
    """Deterministic unfolded forward pass.

    Per layer i: J_i normalized-gradient steps on V_RF with gamma_b[i], the
    closed-form baseband precoder, J_i steps on W_RF with gamma_a[i], and the
    closed-form baseband combiner. Pure function of its inputs; manifold and
    power invariants hold after every block.
    """
    h, r = _as_h(h), _as_r(r)
    state = init.copy()
    trace = KdddTrace()
    for i in range(sched.layers):
        pctx = _precoder_ctx(h, state.joint_combiner(), r)
        state.v_rf = _fixed_step_block(
            state.v_rf, lambda v: _precoder_grad(v, pctx), sched.gamma_b[i]
        )
        _renormalize_precoder(state)
        if record:
            trace.block_exits.append((f"layer{i + 1}/rf-precoder", state.copy()))
        state.v_bb, state.beta = _bb_precoder(state.v_rf, pctx)
        if record:
            trace.block_exits.append((f"layer{i + 1}/bb-precoder", state.copy()))

        cctx = _combiner_ctx(h, state.joint_precoder(), r, state.beta)
        state.w_rf = _fixed_step_block(
            state.w_rf, lambda w: _combiner_grad(w, cctx), sched.gamma_a[i]
        )
        if record:
            trace.block_exits.append((f"layer{i + 1}/rf-combiner", state.copy()))
        state.w_bb = _bb_combiner(state.w_rf, cctx)
        if record:
            trace.block_exits.append((f"layer{i + 1}/bb-combiner", state.copy()))
    return state, trace


# -- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Layer-by-layer training configuration for the step-size schedule.

    valid_size = 0 reuses the training split for validation-based selection.
    """

    layers: tuple[int, ...] = (5, 2)    # inner step counts J_i
    epochs: int = 40
    batch: int = 32
    train_size: int = 128
    valid_size: int = 16
    test_size: int = 16
    learning_rate: float = 0.05
    init_gamma: float = 0.1
    estimator: str = "fd"               # "fd" central differences | "spsa"
    fd_step: float = 1e-3               # perturbation scale
    spsa_avg: int = 4                   # averaged SPSA probes
    divergence_factor: float = 2.0
    divergence_patience: int = 20

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if self.train_size < 1:
            raise ValueError("train_size must be >= 1")
        if self.estimator not in ("fd", "spsa"):
            raise ValueError("estimator must be 'fd' or 'spsa'")
        if not self.layers:
            raise ValueError("layers must list at least one inner step count")


@dataclass
class TrainReport:
    curves: list[list[tuple[int, float, float]]]   # per layer: (epoch, train, valid)
    layer_valid_losses: list[float]
    zero_schedule_valid_loss: float
    zero_schedule_train_loss: float
    final_train_loss: float
    final_valid_loss: float


def _one_layer(state, h, r, gamma_b, gamma_a) -> HybridTransceiver:
    sched = StepSizeSchedule(gamma_b=[list(gamma_b)], gamma_a=[list(gamma_a)])
    out, _ = kddd_forward(h, r, sched, state)
    return out


def _layer_loss(states, scen, idx, gammas, j_steps) -> float:
    gamma_b, gamma_a = gammas[:j_steps], gammas[j_steps:]
    total = 0.0
    for s in idx:
        h, r = scen[s]
        out = _one_layer(states[s], h, r, gamma_b, gamma_a)
        total += mse_objective(out, h, r)
    return total / len(idx)


def _estimate_gradient(loss_fn, gammas: np.ndarray, cfg: TrainConfig, rng) -> np.ndarray:
    """Derivative-free gradient of the batch loss over the step-size scalars.

    Central differences per coordinate, falling back to a one-sided probe at
    the gamma >= 0 boundary; or averaged SPSA when configured.
    """
    c = cfg.fd_step
    if cfg.estimator == "spsa":
        grad = np.zeros_like(gammas)
        for _ in range(cfg.spsa_avg):
            delta = rng.choice([-1.0, 1.0], size=gammas.shape)
            up = np.clip(gammas + c * delta, 0.0, None)
            dn = np.clip(gammas - c * delta, 0.0, None)
            grad += (loss_fn(up) - loss_fn(dn)) / (2.0 * c * delta)
        return grad / cfg.spsa_avg

    grad = np.zeros_like(gammas)
    base = None
    for k in range(gammas.size):
        up = gammas.copy()
        up[k] += c
        if gammas[k] - c >= 0.0:
            dn = gammas.copy()
            dn[k] -= c
            grad[k] = (loss_fn(up) - loss_fn(dn)) / (2.0 * c)
        else:
            if base is None:
                base = loss_fn(gammas)
            grad[k] = (loss_fn(up) - base) / c
    return grad


def kddd_train(
    scenarios,
    cfg: TrainConfig,
    *,
    ns: int,
    krf_a: int,
    krf_b: int,
    rng: np.random.Generator | None = None,
):
    """Layer-by-layer unsupervised training of the step-size schedule.

    `scenarios` is a sequence of (H, R) pairs carved into train/valid/test
    splits by the configured sizes. Every scenario starts from its own FD-IR
    solution (computed once, cached). Layer i trains its 2*J_i scalars with
    Adam on derivative-free gradients of the batch-mean MSE; the parameters
    with the best validation loss win, with the all-zero step sizes evaluated
    first so training never ends below the gamma = 0 baseline. The frozen
    layer output then becomes layer i+1's input (Algorithm-style hand-off).

    Returns (StepSizeSchedule, TrainReport). Raises SolverError if the
    training loss diverges past divergence_factor x the initial loss for
    divergence_patience consecutive epochs.
    """
    rng = rng or np.random.default_rng(0)
    need = cfg.train_size + cfg.valid_size + cfg.test_size
    if len(scenarios) < need:
        raise ValueError(f"need {need} scenarios for the configured splits, got {len(scenarios)}")
    scen = [(_as_h(h), _as_r(r)) for h, r in list(scenarios)[:need]]
    train_idx = list(range(cfg.train_size))
    valid_idx = (
        list(range(cfg.train_size, cfg.train_size + cfg.valid_size))
        if cfg.valid_size
        else train_idx
    )

    states = [
        init_from_fd(fd_ir_solve(h, r, ns), krf_a=krf_a, krf_b=krf_b) for h, r in scen
    ]

    zero_sched = StepSizeSchedule.zeros(cfg.layers)

    def _full_loss(current_states, idx):
        return float(
            np.mean([mse_objective(current_states[s], scen[s][0], scen[s][1]) for s in idx])
        )

    zero_states = [kddd_forward(scen[s][0], scen[s][1], zero_sched, states[s])[0] for s in range(need)]
    zero_train_total = _full_loss(zero_states, train_idx)
    zero_valid_total = _full_loss(zero_states, valid_idx)
    del zero_states

    gamma_b_rows: list[list[float]] = []
    gamma_a_rows: list[list[float]] = []
    curves: list[list[tuple[int, float, float]]] = []
    layer_valid: list[float] = []

    for j_steps in cfg.layers:
        n_par = 2 * j_steps

        def train_loss(g, idx=train_idx, j=j_steps):
            return _layer_loss(states, scen, idx, g, j)

        def valid_loss(g, idx=valid_idx, j=j_steps):
            return _layer_loss(states, scen, idx, g, j)

        zeros = np.zeros(n_par)
        best_g = zeros
        best_valid = valid_loss(zeros)

        gammas = np.full(n_par, cfg.init_gamma)
        m = np.zeros(n_par)
        v = np.zeros(n_par)
        step = 0
        initial = train_loss(zeros)
        bad_epochs = 0
        curve = []
        for epoch in range(cfg.epochs):
            perm = rng.permutation(train_idx)
            for lo in range(0, len(perm), cfg.batch):
                batch = perm[lo : lo + cfg.batch]
                grad = _estimate_gradient(
                    lambda g: _layer_loss(states, scen, batch, g, j_steps), gammas, cfg, rng
                )
                step += 1
                m = 0.9 * m + 0.1 * grad
                v = 0.999 * v + 0.001 * grad**2
                m_hat = m / (1 - 0.9**step)
                v_hat = v / (1 - 0.999**step)
                gammas = np.clip(
                    gammas - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8), 0.0, None
                )
            tr = train_loss(gammas)
            va = valid_loss(gammas) if valid_idx is not train_idx else tr
            curve.append((epoch, tr, va))
            if va < best_valid:
                best_valid = va
                best_g = gammas.copy()
            bad_epochs = bad_epochs + 1 if tr > cfg.divergence_factor * initial else 0
            if bad_epochs >= cfg.divergence_patience:
                raise SolverError("divergent training loss: aborting layer training")

        gamma_b_rows.append(list(best_g[:j_steps]))
        gamma_a_rows.append(list(best_g[j_steps:]))
        layer_valid.append(best_valid)
        curves.append(curve)

        states = [
            _one_layer(states[s], scen[s][0], scen[s][1], best_g[:j_steps], best_g[j_steps:])
            for s in range(need)
        ]

    # after the last layer, `states` hold the full trained forward outputs
    final_train = _full_loss(states, train_idx)
    final_valid = _full_loss(states, valid_idx)
    sched = StepSizeSchedule(
        gamma_b=gamma_b_rows,
        gamma_a=gamma_a_rows,
        meta={"layers": list(cfg.layers), "epochs": cfg.epochs, "batch": cfg.batch},
    )
    report = TrainReport(
        curves=curves,
        layer_valid_losses=layer_valid,
        zero_schedule_valid_loss=float(zero_valid_total),
        zero_schedule_train_loss=float(zero_train_total),
        final_train_loss=final_train,
        final_valid_loss=final_valid,
    )
    return sched, report

"""Operation counting: instrumented linear-algebra shims plus analytic counts.

The counting unit is complex multiplications ("cmul"): a matmul of stacked
(m,k)x(k,n) blocks costs m*n*k per block, a Hermitian solve of an n x n
system with m right-hand sides costs n^3 + n^2*m, an entrywise retraction
costs one per entry and a tangent projection two per entry. Complex
additions are tallied separately.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FlopCounter:
    muls: int = 0
    adds: int = 0
    inversions: int = 0  # number of linear-system factorizations

    @property
    def total(self) -> int:
        """Total cmul-equivalents (inversion cost is already inside muls)."""
        return self.muls + self.adds

    def merge(self, other: "FlopCounter") -> None:
        self.muls += other.muls
        self.adds += other.adds
        self.inversions += other.inversions


_stack: list[FlopCounter] = []


@contextmanager
def counting():
    """Collect operation counts for everything executed inside the block."""
    counter = FlopCounter()
    _stack.append(counter)
    try:
        yield counter
    finally:
        _stack.pop()


def tally(muls: int = 0, adds: int = 0, inversions: int = 0) -> None:
    for counter in _stack:
        counter.muls += int(muls)
        counter.adds += int(adds)
        counter.inversions += int(inversions)


def _batch(shape) -> int:
    return int(np.prod(shape, dtype=np.int64)) if len(shape) else 1


def mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Counted matmul over stacked matrices."""
    out = a @ b
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    blocks = _batch(out.shape[:-2])
    tally(muls=blocks * m * n * k, adds=blocks * m * n * max(k - 1, 0))
    return out


def ct(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose of stacked matrices (free)."""
    return a.conj().swapaxes(-1, -2)


def solve_herm(a: np.ndarray, b: np.ndarray, context: str = "system"):
    """Counted guarded solve of Hermitian positive-definite stacked systems.

    Uses the eigendecomposition of the Hermitian part both as the
    factorization and as the conditioning guard (raises on eigenvalue ratio
    above 1e12 or non-positive spectrum).
    """
    from .solvers import SolverError  # local import to avoid a cycle

    a = np.asarray(a)
    n = a.shape[-1]
    herm = 0.5 * (a + ct(a))
    w, v = np.linalg.eigh(herm)
    wmin = w[..., 0]
    wmax = w[..., -1]
    if np.any(wmin <= 0) or np.any(wmax > 1e12 * np.where(wmin > 0, wmin, np.inf)):
        raise SolverError(f"rank-deficient {context}: condition number above 1e12")
    blocks = _batch(a.shape[:-2])
    m = b.shape[-1] if b.ndim >= 2 else 1
    tally(muls=blocks * (n**3 + n * n * m), adds=blocks * (n**3 + n * n * m), inversions=blocks)
    inv_w = 1.0 / w
    return v @ ((ct(v) @ b) * inv_w[..., None])


def inv_herm(a: np.ndarray, context: str = "system") -> np.ndarray:
    eye = np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape).copy()
    return solve_herm(a, eye, context)


def fro_norm(a: np.ndarray) -> float:
    tally(muls=a.size, adds=max(a.size - 1, 0))
    return float(np.linalg.norm(a))


# -- analytic expressions -----------------------------------------------------


def _grad_step_counts(dims: dict) -> dict:
    """Per-step analytic cost of one RF gradient-descent step (combiner side)."""
    x = dims["X"]
    ka, kb = dims["Ka"], dims["Kb"]
    krf, ns = dims["Krf"], dims["Ns"]
    conj_grad = x * (
        ns**2 * kb
        + 2 * krf**2 * ka
        + krf * ka**2
        + 6 * ns * ka * krf
        + 2 * ns * krf**2
        + 3 * ns**2 * ka
        + ns**3
        + krf**3
        + ns**3
    )
    return {
        "conjugate_gradient": conj_grad,
        "tangent_projection": x * (2 * ka * krf),
        "retraction": x * (ka * krf),
    }


def count_flops(method: str, dims: dict) -> dict:
    """Analytic operation counts plus instrumented counts from a seeded run.

    `dims` holds X, Ka, Kb, Krf, Ns and, per method, outer/inner structure
    (I, J list) or predictor shape (P, L, G, K, channels). The instrumented
    numbers come from running the solver on one random scenario with the
    counters active; FD-IR initialization of the unfolded solver is reported
    separately and excluded from its solver total.
    """
    if method == "predictor":
        ka, x = dims["Ka"], dims["X"]
        p, l, g = dims.get("P", 25), dims.get("L", 5), dims.get("G", dims.get("P", 25))
        k = dims.get("K", 27)  # 3x3x3 kernel taps
        channels = dims.get("channels", [32, 64, p])
        chain = [p, *channels]
        res_cost = sum(cin * cout for cin, cout in zip(chain[:-1], chain[1:]))
        conv = k * ka**2 * x * (p**2 + res_cost)
        attention = ka**4 * x**2 + (g + p + l) * ka**2 * x
        fc = ka**4 * x**2
        return {
            "analytic": {
                "cnn3d": conv,
                "attention": attention,
                "fc": fc,
                "total": conv + attention + fc,
            }
        }

    if method not in ("ao", "kddd"):
        raise ValueError(f"unknown method {method!r}")

    inner = list(dims.get("J", [5, 2]))
    steps = sum(inner)
    per_step = _grad_step_counts(dims)
    analytic = {key: value * steps * 2 for key, value in per_step.items()}  # both sides
    analytic["per_step"] = per_step
    analytic["total"] = sum(v * steps * 2 for v in per_step.values())

    instrumented = _instrumented_run(method, dims)
    return {"analytic": analytic, "instrumented": instrumented}


def _instrumented_run(method: str, dims: dict) -> dict:
    from . import solvers as sv
    from . import kddd as kd

    rng = np.random.default_rng(dims.get("seed", 0))
    x, ka, kb = dims["X"], dims["Ka"], dims["Kb"]
    krf, ns = dims["Krf"], dims["Ns"]
    inner = list(dims.get("J", [5, 2]))
    h = (rng.standard_normal((x, ka, kb)) + 1j * rng.standard_normal((x, ka, kb))) / np.sqrt(2)
    a = (rng.standard_normal((x, ka, ka)) + 1j * rng.standard_normal((x, ka, ka))) / np.sqrt(2)
    r = a @ ct(a) / ka + 0.1 * np.eye(ka)

    if method == "ao":
        init = sv.random_init(x, ka, kb, krf, krf, ns, rng)
        cfg = sv.AoConfig(outer_iters=len(inner), inner_iters=inner)
        with counting() as counter:
            sv.ao_ir_solve(h, r, cfg, init)
        return {"muls": counter.muls, "adds": counter.adds, "inversions": counter.inversions,
                "total": counter.total}

    with counting() as fd_counter:
        fd = sv.fd_ir_solve(h, r, ns)
        init = kd.init_from_fd(fd, krf_a=krf, krf_b=krf)
    sched = kd.StepSizeSchedule.constant(inner, 0.1)
    with counting() as counter:
        kd.kddd_forward(h, r, sched, init)
    return {
        "muls": counter.muls,
        "adds": counter.adds,
        "inversions": counter.inversions,
        "total": counter.total,
        "fd_init_total": fd_counter.total,
    }

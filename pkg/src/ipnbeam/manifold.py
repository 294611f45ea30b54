"""Complex-circle manifold primitives: projection, retraction, descent step, Armijo."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .flopcount import tally, fro_norm

UNIT_MODULUS_ATOL = 1e-9
ZERO_GRAD_NORM = 1e-14


def assert_unit_modulus(w: np.ndarray, atol: float = UNIT_MODULUS_ATOL) -> None:
    dev = np.max(np.abs(np.abs(w) - 1.0))
    if dev > atol:
        raise ValueError(f"matrix leaves the complex-circle manifold (|.|-1 up to {dev:.2e})")


def riemannian_project(euc_grad: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Project a Euclidean gradient onto the tangent space at `base`.

    Entrywise grad_R = g - Re(g * conj(w)) * w, the canonical projection for
    the complex circle; the result satisfies Re(grad_R * conj(w)) = 0.
    """
    if euc_grad.shape != base.shape:
        raise ValueError("gradient/base shape mismatch")
    radial = np.real(euc_grad * base.conj())
    tally(muls=2 * euc_grad.size, adds=euc_grad.size)
    return euc_grad - radial * base


def retract(point: np.ndarray) -> np.ndarray:
    """Map a point back onto the manifold by entrywise normalization v/|v|."""
    mag = np.abs(point)
    if np.any(mag == 0.0):
        raise ValueError("retraction singularity: zero entry has no phase")
    tally(muls=point.size)
    return point / mag


def tangent_step(base: np.ndarray, gamma: float, grad_r: np.ndarray) -> np.ndarray:
    """Pre-retraction update base - gamma * grad_r / ||grad_r||_F."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0.0:
        return base.copy()
    norm = fro_norm(grad_r)
    if norm <= ZERO_GRAD_NORM:
        raise ValueError("degenerate direction: zero Riemannian gradient")
    tally(muls=grad_r.size, adds=grad_r.size)
    return base - (gamma / norm) * grad_r


@dataclass(frozen=True)
class ArmijoParams:
    gamma0: float = 1.0
    shrink: float = 0.5
    slope: float = 1e-4
    max_backtracks: int = 50


class ArmijoResult(NamedTuple):
    gamma: float
    stalled: bool
    evaluations: int
    candidate: np.ndarray | None = None   # accepted retracted point
    f_new: float | None = None            # objective at the accepted point


def armijo_search(
    objective: Callable[[np.ndarray], float],
    base: np.ndarray,
    grad_r: np.ndarray,
    params: ArmijoParams = ArmijoParams(),
    f_base: float | None = None,
) -> ArmijoResult:
    """Backtracking line search along the normalized Riemannian direction.

    Accepts the largest gamma = gamma0 * shrink^m with
    f(retract(base - gamma*grad/||grad||)) <= f(base) - slope*gamma*||grad||_F^2.
    A (numerically) zero gradient returns gamma0 immediately; exhausting the
    backtrack cap returns gamma = 0 with the stalled flag set.
    """
    norm = fro_norm(grad_r)
    if norm <= ZERO_GRAD_NORM:
        return ArmijoResult(params.gamma0, False, 0)
    evals = 0
    if f_base is None:
        f_base = objective(base)
        evals += 1
    gamma = params.gamma0
    for _ in range(params.max_backtracks + 1):
        candidate = retract(tangent_step(base, gamma, grad_r))
        f_new = objective(candidate)
        evals += 1
        if f_new <= f_base - params.slope * gamma * norm * norm:
            return ArmijoResult(gamma, False, evals, candidate, f_new)
        gamma *= params.shrink
    return ArmijoResult(0.0, True, evals)

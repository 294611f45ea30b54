"""IPN covariance estimation, perturbation, scoring and the persistence baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .interference import IpnSnapshot


@dataclass
class IpnCovariance:
    """Per-subcarrier Hermitian IPN covariance matrices of one frame."""

    t: int
    R: np.ndarray  # (X, Ka, Ka) complex, Hermitian per subcarrier


@dataclass
class IpnSeries:
    """Time-ordered stack of per-frame covariances with contiguous frame indices."""

    frames: list[IpnCovariance] = field(default_factory=list)

    def __post_init__(self):
        ts = [f.t for f in self.frames]
        if ts and ts != list(range(ts[0], ts[0] + len(ts))):
            raise ValueError("frame indices must be contiguous")
        shapes = {f.R.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError("non-uniform covariance dimensions")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i) -> IpnCovariance:
        return self.frames[i]

    @property
    def t0(self) -> int:
        return self.frames[0].t

    def stack(self) -> np.ndarray:
        """(T, X, Ka, Ka) array over frames."""
        return np.stack([f.R for f in self.frames])

    @classmethod
    def from_stack(cls, stacked: np.ndarray, t0: int = 0) -> "IpnSeries":
        return cls([IpnCovariance(t=t0 + i, R=np.asarray(r)) for i, r in enumerate(stacked)])


@dataclass
class ErrorModel:
    """Gaussian snapshot-sampling error with per-entry variance sigma_e^2,
    parameterized as rhoDb = 10*log10(sigma_e^2)."""

    rhoDb: float

    @property
    def sigma_e_sq(self) -> float:
        if self.rhoDb == -np.inf:
            return 0.0
        return 10.0 ** (self.rhoDb / 10.0)


def snapshot_covariance(snapshots: Sequence[IpnSnapshot], t: int = 0) -> IpnCovariance:
    """Empirical average R_hat[x] = (1/S) sum_s d_x[s] d_x[s]^H.

    Hermitian PSD by construction (the average is re-symmetrized to kill
    rounding skew).
    """
    if len(snapshots) == 0:
        raise ValueError("no snapshots")
    d0 = snapshots[0].d
    if any(s.d.shape != d0.shape for s in snapshots):
        raise ValueError("snapshots have mismatched dimensions")
    d = np.stack([s.d for s in snapshots])  # (S, X, Ka)
    r = np.einsum("sxi,sxj->xij", d, d.conj()) / len(snapshots)
    r = 0.5 * (r + r.conj().swapaxes(-1, -2))
    return IpnCovariance(t=t, R=r)


def perturb_covariance(
    cov: IpnCovariance, em: ErrorModel, rng: np.random.Generator
) -> IpnCovariance:
    """Inject the sampling-error model: returns R_hat = R - E with E Hermitian.

    E starts from i.i.d. complex Gaussian entries with per-entry variance
    sigma_e^2 (real/imag each sigma_e^2/2) and is symmetrized as
    (E0 + E0^H)/sqrt(2), which preserves the per-entry variance while keeping
    the output Hermitian.
    """
    s2 = em.sigma_e_sq
    if s2 == 0.0:
        return IpnCovariance(t=cov.t, R=cov.R.copy())
    shape = cov.R.shape
    e0 = np.sqrt(s2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    e = (e0 + e0.conj().swapaxes(-1, -2)) / np.sqrt(2.0)
    return IpnCovariance(t=cov.t, R=cov.R - e)


def nmse(pred: IpnSeries | np.ndarray, actual: IpnSeries | np.ndarray) -> float:
    """Global ratio sum_t ||R^t - Rdot^t||_F^2 / sum_t ||R^t||_F^2, the squared
    Frobenius norms summed over frames and subcarriers."""
    p = pred.stack() if isinstance(pred, IpnSeries) else np.asarray(pred)
    a = actual.stack() if isinstance(actual, IpnSeries) else np.asarray(actual)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {a.shape}")
    denom = float(np.sum(np.abs(a) ** 2))
    if denom == 0.0:
        raise ValueError("degenerate reference: actual series is all zero")
    return float(np.sum(np.abs(a - p) ** 2)) / denom


def nmse_db(pred, actual) -> float:
    return 10.0 * float(np.log10(nmse(pred, actual)))


def predict_persistence(history: IpnSeries, L: int) -> IpnSeries:
    """Repeat the last observed covariance for L future frames."""
    if len(history) == 0:
        raise ValueError("empty history")
    if L < 1:
        raise ValueError("L must be >= 1")
    last = history[-1]
    return IpnSeries([IpnCovariance(t=last.t + 1 + k, R=last.R.copy()) for k in range(L)])


def nearest_psd(r: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Project stacked Hermitian matrices onto the PSD cone by eigenvalue clipping.

    Perturbed/predicted covariances can be indefinite; solvers require PSD
    inputs, so pipeline code runs estimates through this first.
    """
    r = np.asarray(r)
    herm = 0.5 * (r + r.conj().swapaxes(-1, -2))
    w, v = np.linalg.eigh(herm)
    w = np.clip(w, floor, None)
    return (v * w[..., None, :]) @ v.conj().swapaxes(-1, -2)

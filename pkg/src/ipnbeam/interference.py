"""Poisson impulse interference and raw IPN snapshot generation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arrays import upa_steering, arrival_angles
from .config import ScenarioConfig


@dataclass
class ImpulseTrain:
    """Impulse arrivals within one OFDM symbol: (sample index, complex amplitude)."""

    symbol: int
    samples: np.ndarray      # (N,) int in [0, X)
    amplitudes: np.ndarray   # (N,) complex


@dataclass
class IpnSnapshot:
    """One interference-plus-noise observation d[x] (length Ka) per subcarrier."""

    s: int
    d: np.ndarray  # (X, Ka) complex


def gen_impulse_train(cfg: ScenarioConfig, rng: np.random.Generator, symbol: int = 0) -> ImpulseTrain:
    """Draw one symbol's impulse train.

    The arrival count is Poisson(impulseRate), positions are uniform over the
    X samples, and amplitudes have constant magnitude sqrt(sigma_i^2/rate)
    with uniform phase, which calibrates the mean per-antenna per-subcarrier
    interference power to exactly sigma_i^2.
    """
    if cfg.impulseRate < 0:
        raise ValueError("impulseRate must be >= 0")
    if cfg.impulseRate == 0:
        return ImpulseTrain(symbol, np.zeros(0, dtype=int), np.zeros(0, dtype=complex))
    n = rng.poisson(cfg.impulseRate)
    samples = rng.integers(0, cfg.X, size=n)
    mag = np.sqrt(cfg.interference_var / cfg.impulseRate)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return ImpulseTrain(symbol, samples, mag * np.exp(1j * phases))


def impulse_spectrum(train: ImpulseTrain, x_count: int) -> np.ndarray:
    """Frequency-domain coefficient g_x of the train: an impulse at sample m
    contributes amplitude * exp(-j*2*pi*x*m/X) on subcarrier x."""
    x = np.arange(x_count)
    if train.samples.size == 0:
        return np.zeros(x_count, dtype=complex)
    phase = np.exp(-2j * np.pi * np.outer(x, train.samples) / x_count)
    return phase @ train.amplitudes


def igs_arrival_angles(cfg: ScenarioConfig, ac_pos=None) -> tuple[float, float]:
    """(azi, ele) under which the interfering ground station is seen at the AC."""
    ac = np.asarray(cfg.positions.ac if ac_pos is None else ac_pos, dtype=float)
    return arrival_angles(np.asarray(cfg.positions.igs, dtype=float), ac)


def gen_ipn_snapshots(
    cfg: ScenarioConfig,
    trains: ImpulseTrain | Sequence[ImpulseTrain],
    igs_angles: tuple[float, float],
    S: int,
    rng: np.random.Generator,
) -> list[IpnSnapshot]:
    """S IPN snapshots d_x[s] = g_x[s]*a_A(igs) + n_x[s], n ~ CN(0, sigma_n^2 I).

    `trains` is either one ImpulseTrain reused for every snapshot or a
    sequence of S independent trains (one OFDM symbol each).
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    if isinstance(trains, ImpulseTrain):
        trains = [trains] * S
    if len(trains) != S:
        raise ValueError(f"expected {S} impulse trains, got {len(trains)}")
    a = upa_steering(*igs_angles, *cfg.Ka)
    ka = cfg.ka_total
    sigma_n = np.sqrt(cfg.noise_var)
    out = []
    for s in range(S):
        g = impulse_spectrum(trains[s], cfg.X)
        noise = sigma_n * (
            rng.standard_normal((cfg.X, ka)) + 1j * rng.standard_normal((cfg.X, ka))
        ) / np.sqrt(2.0)
        out.append(IpnSnapshot(s=s, d=g[:, None] * a[None, :] + noise))
    return out


def true_ipn_covariance(cfg: ScenarioConfig, igs_angles: tuple[float, float]) -> np.ndarray:
    """Ensemble IPN covariance sigma_i^2 * a a^H + sigma_n^2 * I, stacked over x."""
    a = upa_steering(*igs_angles, *cfg.Ka)
    r = cfg.interference_var * np.outer(a, a.conj()) + cfg.noise_var * np.eye(cfg.ka_total)
    return np.broadcast_to(r, (cfg.X, cfg.ka_total, cfg.ka_total)).copy()

"""Time-evolving geometric Saleh-Valenzuela air-to-ground channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import upa_steering, arrival_angles
from .config import ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_FREQ_HZ = 1.0e9       # L-band link
SYMBOLS_PER_FRAME = 50        # frame interval = SYMBOLS_PER_FRAME * X * Ts

# NLoS excess delays live in [0, MAX_EXCESS_DELAY_FRAC * X * Ts]; the random
# walk std below is per sqrt(second) of elapsed time.
MAX_EXCESS_DELAY_FRAC = 0.25
DELAY_JITTER_FRAC_PER_SQRT_S = 0.005


def frame_interval(cfg: ScenarioConfig) -> float:
    """Frame-to-frame spacing in seconds."""
    return SYMBOLS_PER_FRAME * cfg.X * cfg.Ts


def doppler_correlation(cfg: ScenarioConfig, dt: float) -> float:
    """First-order Gauss-Markov coefficient for NLoS gains over a dt gap."""
    v_mps = cfg.velocity * (1000.0 / 3600.0)
    f_d = v_mps * CARRIER_FREQ_HZ / SPEED_OF_LIGHT
    return float(np.exp(-2.0 * np.pi * f_d * dt))


@dataclass
class PathState:
    """Per-path gains, excess delays and angles, plus the AC position they
    were derived from. Delays are excess relative to the LoS arrival
    (tau_los = 0 by convention)."""

    ac_pos: np.ndarray                 # (3,)
    los_gain: complex
    los_delay: float
    los_aoa: tuple[float, float]       # (azi, ele) at the AC
    los_aod: tuple[float, float]       # (azi, ele) at the LGS
    nlos_gains: np.ndarray             # (U,) complex
    nlos_delays: np.ndarray            # (U,) seconds, >= 0
    nlos_aoa: np.ndarray               # (U, 2)
    nlos_aod: np.ndarray               # (U, 2)

    def copy(self) -> "PathState":
        return PathState(
            ac_pos=self.ac_pos.copy(),
            los_gain=self.los_gain,
            los_delay=self.los_delay,
            los_aoa=self.los_aoa,
            los_aod=self.los_aod,
            nlos_gains=self.nlos_gains.copy(),
            nlos_delays=self.nlos_delays.copy(),
            nlos_aoa=self.nlos_aoa.copy(),
            nlos_aod=self.nlos_aod.copy(),
        )


@dataclass
class FrameChannel:
    """Per-frame, per-subcarrier channel matrices H[x] of shape (Ka, Kb)."""

    t: int
    H: np.ndarray  # (X, Ka, Kb) complex


def _los_geometry(cfg: ScenarioConfig, ac_pos: np.ndarray):
    lgs = np.asarray(cfg.positions.lgs, dtype=float)
    aoa = arrival_angles(lgs, ac_pos)   # LGS as seen from the AC
    aod = arrival_angles(ac_pos, lgs)   # AC as seen from the LGS
    return aoa, aod


def init_path_state(cfg: ScenarioConfig, rng: np.random.Generator) -> PathState:
    """Draw a fresh path state: unit LoS gain from geometry, CN(0,1) NLoS gains,
    uniform excess delays, and NLoS angles uniform over the hemisphere-ish sector."""
    ac_pos = np.asarray(cfg.positions.ac, dtype=float)
    aoa, aod = _los_geometry(cfg, ac_pos)
    tau_max = MAX_EXCESS_DELAY_FRAC * cfg.X * cfg.Ts
    u = cfg.U
    gains = (rng.standard_normal(u) + 1j * rng.standard_normal(u)) / np.sqrt(2.0)
    delays = rng.uniform(0.0, tau_max, size=u)
    nlos_aoa = np.column_stack(
        [rng.uniform(-np.pi, np.pi, size=u), rng.uniform(-np.pi / 2, np.pi / 2, size=u)]
    ) if u else np.zeros((0, 2))
    nlos_aod = np.column_stack(
        [rng.uniform(-np.pi, np.pi, size=u), rng.uniform(-np.pi / 2, np.pi / 2, size=u)]
    ) if u else np.zeros((0, 2))
    return PathState(
        ac_pos=ac_pos,
        los_gain=1.0 + 0.0j,
        los_delay=0.0,
        los_aoa=aoa,
        los_aod=aod,
        nlos_gains=gains,
        nlos_delays=delays,
        nlos_aoa=nlos_aoa,
        nlos_aod=nlos_aod,
    )


def evolve_paths(
    state: PathState, dt: float, cfg: ScenarioConfig, rng: np.random.Generator
) -> PathState:
    """Advance the path state by dt seconds.

    The AC position moves by velocity*dt along the configured heading and the
    LoS angles are recomputed from the new geometry; NLoS gains follow the
    first-order Gauss-Markov recursion h' = a*h + sqrt(1-a^2)*w with w CN(0,1)
    and a = doppler_correlation(cfg, dt); excess delays random-walk inside
    their [0, tau_max] bounds.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    out = state.copy()
    v_mps = cfg.velocity * (1000.0 / 3600.0)
    out.ac_pos = state.ac_pos + v_mps * dt * np.asarray(cfg.heading, dtype=float)
    out.los_aoa, out.los_aod = _los_geometry(cfg, out.ac_pos)

    a = doppler_correlation(cfg, dt)
    u = cfg.U
    if u:
        w = (rng.standard_normal(u) + 1j * rng.standard_normal(u)) / np.sqrt(2.0)
        out.nlos_gains = a * state.nlos_gains + np.sqrt(max(0.0, 1.0 - a * a)) * w
        tau_max = MAX_EXCESS_DELAY_FRAC * cfg.X * cfg.Ts
        jitter = DELAY_JITTER_FRAC_PER_SQRT_S * cfg.X * cfg.Ts * np.sqrt(dt)
        out.nlos_delays = np.clip(
            state.nlos_delays + jitter * rng.standard_normal(u), 0.0, tau_max
        )
    return out


def gen_frame_channel(cfg: ScenarioConfig, state: PathState, t: int) -> FrameChannel:
    """Per-subcarrier channel H[x] = a_los*aA*aB^H + sqrt(1/(U*rho))*sum_u a_u*aA*aB^H
    with per-path gains a_u = h_u * exp(-j*2*pi*x*tau_u/(Ts*X)).

    Pure function of (cfg, state, t); U = 0 yields the rank-1 LoS-only channel.
    """
    x = np.arange(cfg.X)
    ka, kb = cfg.ka_total, cfg.kb_total
    h = np.zeros((cfg.X, ka, kb), dtype=complex)

    a_rx = upa_steering(*state.los_aoa, *cfg.Ka)
    a_tx = upa_steering(*state.los_aod, *cfg.Kb)
    outer = np.outer(a_rx, a_tx.conj())
    alpha = state.los_gain * np.exp(-2j * np.pi * x * state.los_delay / (cfg.Ts * cfg.X))
    h += alpha[:, None, None] * outer

    if cfg.U:
        scale = np.sqrt(1.0 / (cfg.U * cfg.ricianK))
        for u in range(cfg.U):
            a_rx = upa_steering(*state.nlos_aoa[u], *cfg.Ka)
            a_tx = upa_steering(*state.nlos_aod[u], *cfg.Kb)
            outer = np.outer(a_rx, a_tx.conj())
            alpha = state.nlos_gains[u] * np.exp(
                -2j * np.pi * x * state.nlos_delays[u] / (cfg.Ts * cfg.X)
            )
            h += scale * alpha[:, None, None] * outer

    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite channel entries")
    return FrameChannel(t=t, H=h)

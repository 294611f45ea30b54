"""Scenario configuration: all physical and system constants of a run."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

SEED_ENV_VAR = "IPNB_SEED"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


@dataclass(frozen=True)
class Positions:
    """Initial Cartesian coordinates (meters) of the three nodes."""

    lgs: tuple[float, float, float] = (0.0, 0.0, 0.0)
    igs: tuple[float, float, float] = (100.0, 100.0, 0.0)
    ac: tuple[float, float, float] = (0.0, 0.0, 8000.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical/system constants of one simulated scenario.

    Antenna counts Ka/Kb are given as (rows, cols) of a half-wavelength UPA.
    snrDb = 10*log10(1/sigma_n^2) and sirDb = 10*log10(1/sigma_i^2), both
    relative to the normalized unit transmit power.
    """

    X: int = 8                      # subcarriers
    Ns: int = 2                     # data streams
    Ka: tuple[int, int] = (2, 4)    # receive UPA (rows, cols)
    Kb: tuple[int, int] = (2, 4)    # transmit UPA (rows, cols)
    KrfA: int = 2                   # receive RF chains
    KrfB: int = 2                   # transmit RF chains
    ricianK: float = 10.0           # Rician factor (linear)
    U: int = 4                      # NLoS path count (0 = pure LoS)
    Ts: float = 1e-6                # sample period, seconds
    velocity: float = 600.0         # aircraft speed, km/h
    positions: Positions = field(default_factory=Positions)
    snrDb: float = 8.0
    sirDb: float = -3.8
    impulseRate: float = 2.0        # Poisson mean arrivals per OFDM symbol
    frames: int = 40
    seed: int = 0
    heading: tuple[float, float, float] = (1.0, 0.0, 0.0)  # AC flight direction

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if min(self.X, self.KrfA, self.KrfB, self.Ns) < 1:
            raise ConfigError("X, Ns and RF-chain counts must be >= 1")
        if len(self.Ka) != 2 or len(self.Kb) != 2 or min(*self.Ka, *self.Kb) < 1:
            raise ConfigError("Ka/Kb must be (rows, cols) pairs of positive ints")
        if self.Ns > min(self.KrfA, self.KrfB):
            raise ConfigError("Ns must not exceed min(KrfA, KrfB)")
        if self.U < 0:
            raise ConfigError("U must be >= 0")
        if self.ricianK <= 0:
            raise ConfigError("ricianK must be > 0")
        if self.impulseRate < 0:
            raise ConfigError("impulseRate must be >= 0")
        if self.Ts <= 0:
            raise ConfigError("Ts must be > 0")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if not math.isclose(float(np.linalg.norm(self.heading)), 1.0, rel_tol=1e-6):
            raise ConfigError("heading must be a unit vector")

    # -- derived quantities -------------------------------------------------

    @property
    def ka_total(self) -> int:
        return self.Ka[0] * self.Ka[1]

    @property
    def kb_total(self) -> int:
        return self.Kb[0] * self.Kb[1]

    @property
    def noise_var(self) -> float:
        """sigma_n^2 from snrDb."""
        return 10.0 ** (-self.snrDb / 10.0)

    @property
    def interference_var(self) -> float:
        """sigma_i^2 from sirDb."""
        return 10.0 ** (-self.sirDb / 10.0)

    # -- JSON round trip ----------------------------------------------------

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        d = dict(d)
        if "positions" in d:
            p = d["positions"]
            if not isinstance(p, dict):
                raise ConfigError("positions must be an object")
            bad = set(p) - {"lgs", "igs", "ac"}
            if bad:
                raise ConfigError(f"unknown position keys: {sorted(bad)}")
            defaults = Positions()
            d["positions"] = Positions(
                lgs=tuple(p.get("lgs", defaults.lgs)),
                igs=tuple(p.get("igs", defaults.igs)),
                ac=tuple(p.get("ac", defaults.ac)),
            )
        for key in ("Ka", "Kb", "heading"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("scenario file must hold a JSON object")
        return cls.from_dict(d)


def desk_config(**overrides) -> ScenarioConfig:
    """Desk-scale default scenario (8x8 arrays, X=8) used across tests and demos."""
    return ScenarioConfig(**overrides)


def load_scenario(path: str | os.PathLike) -> ScenarioConfig:
    """Load a scenario file; the IPNB_SEED environment variable overrides its seed."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = ScenarioConfig.from_json(fh.read())
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
        cfg = ScenarioConfig.from_dict({**json.loads(cfg.to_json()), "seed": seed})
    return cfg

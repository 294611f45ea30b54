"""Uniform planar array response vectors."""

from __future__ import annotations

import numpy as np


def upa_steering(azi: float, ele: float, rows: int, cols: int) -> np.ndarray:
    """Half-wavelength UPA response vector, row-major flattened.

    Entry (m, n) is exp(j*pi*(m*sin(ele)*cos(azi) + n*sin(azi))) for
    m in [0, rows) and n in [0, cols); every entry has unit modulus.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    phase = np.pi * (m * np.sin(ele) * np.cos(azi) + n * np.sin(azi))
    return np.exp(1j * phase).reshape(rows * cols)


def arrival_angles(src: np.ndarray, dst: np.ndarray) -> tuple[float, float]:
    """(azimuth, elevation) of the direction from which `src` is seen at `dst`."""
    v = np.asarray(src, dtype=float) - np.asarray(dst, dtype=float)
    r = np.linalg.norm(v)
    if r == 0:
        raise ValueError("coincident positions have no arrival direction")
    azi = float(np.arctan2(v[1], v[0]))
    ele = float(np.arcsin(np.clip(v[2] / r, -1.0, 1.0)))
    return azi, ele

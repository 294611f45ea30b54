import numpy as np
import pytest


def randc(rng, *shape):
    """Standard complex Gaussian array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_psd(rng, x, k, ridge=0.2):
    """Stacked random Hermitian positive-definite matrices."""
    a = randc(rng, x, k, k)
    return a @ a.conj().swapaxes(-1, -2) / k + ridge * np.eye(k)


def fd_wirtinger_grad(f, w, h=1e-6):
    """Central finite differences on real/imag parts of each entry, combined
    into the conjugate-gradient convention 0.5*(df/dx + j*df/dy)."""
    g = np.zeros(w.shape, dtype=complex)
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            e = np.zeros_like(w)
            e[i, j] = h
            dx = (f(w + e) - f(w - e)) / (2 * h)
            e[i, j] = 1j * h
            dy = (f(w + e) - f(w - e)) / (2 * h)
            g[i, j] = 0.5 * (dx + 1j * dy)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

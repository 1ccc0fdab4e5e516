import numpy as np
import pytest

from sepcov.geometry import SpdMatrix
from sepcov.kron import symm
from sepcov.model import SeparableState


def random_spd(d: int, rng: np.random.Generator, scale: float = 1.0) -> SpdMatrix:
    """Well-conditioned random SPD matrix."""
    x = rng.standard_normal((d, d))
    return SpdMatrix(x @ x.T / d + scale * np.eye(d))


def random_symm(d: int, rng: np.random.Generator) -> np.ndarray:
    return symm(rng.standard_normal((d, d)))


def random_state(d1: int, d2: int, rng: np.random.Generator) -> SeparableState:
    return SeparableState(sigma1=random_spd(d1, rng), sigma2=random_spd(d2, rng))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def fd_gradient(f, sigma_mat: np.ndarray, h_rel: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar f(matrix).

    Returns the matrix G with df = tr(G dS) for symmetric perturbations:
    entry (i, j) is recovered from the symmetric direction e_i e_j^T + e_j e_i^T.
    """
    d = sigma_mat.shape[0]
    h = h_rel * max(1.0, np.abs(sigma_mat).max())
    g = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            e = np.zeros((d, d))
            e[i, j] = e[j, i] = 1.0
            fp = f(sigma_mat + h * e)
            fm = f(sigma_mat - h * e)
            slope = (fp - fm) / (2 * h)
            if i == j:
                g[i, i] = slope
            else:
                g[i, j] = g[j, i] = slope / 2.0
    return g


def grad_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float) -> None:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    err = np.abs(analytic - numeric).max() / scale
    assert err < rtol, f"gradient mismatch: max rel error {err:.3e} >= {rtol:.1e}"

"""Affine-invariant geometry of a single SPD factor.

Matrix functions go through the symmetric eigendecomposition: factor
dimensions stay small here and the eigen data is reused by the
eigenvalue-based priors. Every matrix-function output passes through
:func:`sepcov.kron.symm` so asymmetry cannot drift across integrator steps.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EigFailure, NotPositiveDefinite
from .kron import check_symmetric, symm

# Constructor jitter rule: absorb eigenvalues down to -JITTER_RTOL * lambda_max
# as rounding noise, reject anything below.
JITTER_RTOL = 1e-12


class SpdMatrix:
    """Dense symmetric positive definite matrix with a dimension tag.

    Construction validates symmetry (relative tolerance 1e-10) and positive
    definiteness via Cholesky. A failed Cholesky with minimum eigenvalue
    above ``-1e-12 * lambda_max`` gets a jitter of ``1e-12 * lambda_max * I``;
    anything worse raises :class:`NotPositiveDefinite`. The wrapped array is
    read-only, so instances are freely shareable across threads.
    """

    __slots__ = ("m",)

    def __init__(self, m: np.ndarray):
        m = check_symmetric(np.array(m, dtype=float), what="SpdMatrix input")
        m = symm(m)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            lams = np.linalg.eigvalsh(m)
            lam_max = lams[-1]
            if lam_max <= 0 or lams[0] <= -JITTER_RTOL * lam_max:
                raise NotPositiveDefinite(
                    f"minimum eigenvalue {lams[0]:.3e} below jitter threshold "
                    f"{-JITTER_RTOL * lam_max:.3e}"
                ) from None
            m = m + (JITTER_RTOL * lam_max) * np.eye(m.shape[0])
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite("jitter did not restore positive definiteness") from None
        m.setflags(write=False)
        self.m = m

    @property
    def d(self) -> int:
        return self.m.shape[0]

    def __repr__(self) -> str:
        return f"SpdMatrix(d={self.d})"

    def logdet(self) -> float:
        """log |Sigma| via Cholesky."""
        return 2.0 * float(np.log(np.diag(np.linalg.cholesky(self.m))).sum())

    def inv(self) -> np.ndarray:
        """Dense inverse, symmetrized."""
        return symm(np.linalg.inv(self.m))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.m, b)


def _as_matrix(sigma) -> np.ndarray:
    return sigma.m if isinstance(sigma, SpdMatrix) else np.asarray(sigma, dtype=float)


def spd_eig(sigma) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with eigenvalues sorted descending.

    Returns ``(lams, q)`` with ``q @ diag(lams) @ q.T`` reconstructing the
    input. Wraps LAPACK non-convergence in :class:`EigFailure`.
    """
    m = _as_matrix(sigma)
    try:
        lams, q = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(f"eigh failed: {exc}") from exc
    return lams[::-1].copy(), q[:, ::-1].copy()


_SPD_FNS = {
    "sqrt": np.sqrt,
    "inv_sqrt": lambda lam: 1.0 / np.sqrt(lam),
    "log": np.log,
    "exp": np.exp,
}


def spd_fn(sigma, fn: str) -> np.ndarray:
    """Matrix function through the eigendecomposition, symmetrized.

    ``fn`` is one of ``sqrt``, ``inv_sqrt``, ``log`` (SPD input) or ``exp``
    (any symmetric input).
    """
    if fn not in _SPD_FNS:
        raise ValueError(f"unknown matrix function {fn!r}")
    lams, q = spd_eig(sigma)
    if fn != "exp" and lams[-1] <= 0:
        raise NotPositiveDefinite(f"{fn} needs a positive spectrum, min eigenvalue {lams[-1]:.3e}")
    return symm((q * _SPD_FNS[fn](lams)) @ q.T)


def affine_inner(sigma: SpdMatrix, s1: np.ndarray, s2: np.ndarray) -> float:
    """Affine-invariant inner product ``tr(Sigma^-1 S1 Sigma^-1 S2)``."""
    if s1.shape != (sigma.d, sigma.d) or s2.shape != (sigma.d, sigma.d):
        raise DimensionMismatch("tangent dimensions do not match the base point")
    x1 = sigma.solve(s1)
    x2 = sigma.solve(s2)
    return float((x1 * x2.T).sum())


def _sqrt_pair(sigma: SpdMatrix) -> tuple[np.ndarray, np.ndarray]:
    lams, q = spd_eig(sigma)
    if lams[-1] <= 0:
        raise NotPositiveDefinite(f"non-positive eigenvalue {lams[-1]:.3e}")
    root = np.sqrt(lams)
    return symm((q * root) @ q.T), symm((q / root) @ q.T)


def geodesic_flow(sigma0: SpdMatrix, v0: np.ndarray, t: float) -> tuple[SpdMatrix, np.ndarray]:
    """Position and velocity after time ``t`` along the affine geodesic.

    Sigma(t) = R exp(t W) R and V(t) = R W exp(t W) R with R = Sigma0^{1/2}
    and W = R^-1 V0 R^-1. The pair shares one eigendecomposition of W. The
    position stays SPD for every real ``t``; no projection is ever applied.
    """
    root, root_inv = _sqrt_pair(sigma0)
    w = symm(root_inv @ v0 @ root_inv)
    theta, u = spd_eig(w)
    e = np.exp(t * theta)
    exp_tw = (u * e) @ u.T
    w_exp_tw = (u * (theta * e)) @ u.T
    sigma_t = SpdMatrix(symm(root @ exp_tw @ root))
    v_t = symm(root @ w_exp_tw @ root)
    return sigma_t, v_t


def geodesic_step(sigma0: SpdMatrix, v0: np.ndarray, t: float) -> SpdMatrix:
    """Geodesic position update; ``geodesic_step(s, v, 0) == s``."""
    return geodesic_flow(sigma0, v0, t)[0]


def velocity_flow(sigma0: SpdMatrix, v0: np.ndarray, t: float) -> np.ndarray:
    """Velocity transported along the geodesic; conserves the affine norm."""
    return geodesic_flow(sigma0, v0, t)[1]


def spd_log_map(sigma0: SpdMatrix, sigma1: SpdMatrix) -> np.ndarray:
    """Tangent ``V`` at ``sigma0`` with ``geodesic_step(sigma0, V, 1) == sigma1``."""
    if sigma0.d != sigma1.d:
        raise DimensionMismatch("log map needs matching dimensions")
    root, root_inv = _sqrt_pair(sigma0)
    inner = symm(root_inv @ sigma1.m @ root_inv)
    return symm(root @ spd_fn(inner, "log") @ root)

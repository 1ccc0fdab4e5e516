"""Nearest-Kronecker-sum decomposition of the data scatter matrix.

The scatter ``S = sum_i y_i y_i^T`` of observations with ``d1 * d2``
components is rearranged into a ``d1^2 x d2^2`` matrix whose SVD yields an
exact expansion ``S = sum_k A_k (x) B_k``. The decomposition is computed once
per dataset; likelihood, gradients, and Gibbs updates all run off the cached
terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EigFailure, SepcovError
from .kron import check_symmetric, kron, symm, unvec

_RECONSTRUCTION_RTOL = 1e-9
_RECONSTRUCTION_CHECK_MAX_DIM = 64


@dataclass(frozen=True)
class ScatterMatrix:
    """Symmetric PSD scatter ``sum_i y_i y_i^T`` with its observation count."""

    s: np.ndarray
    n: int

    def __post_init__(self):
        s = check_symmetric(np.array(self.s, dtype=float), what="scatter matrix")
        lams = np.linalg.eigvalsh(s)
        lam_max = max(lams[-1], 0.0)
        if lams[0] < -1e-10 * max(lam_max, 1e-300):
            raise SepcovError(f"scatter not PSD: min eigenvalue {lams[0]:.3e}")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def d(self) -> int:
        return self.s.shape[0]


def scatter(ys: np.ndarray) -> ScatterMatrix:
    """Accumulate the scatter matrix from observations (one per row)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[0] == 0:
        raise SepcovError("scatter needs at least one observation")
    return ScatterMatrix(s=symm(ys.T @ ys), n=ys.shape[0])


def rearrange(s: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Kronecker rearrangement: block (i, j) of ``s`` becomes row vec(S_ij).

    ``s`` is split into a d1 x d1 grid of d2 x d2 blocks; output row
    ``j * d1 + i`` holds ``vec(S_ij)``, so ``rearrange(A (x) B) ==
    vec(A) vec(B)^T``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (d1 * d2, d1 * d2):
        raise DimensionMismatch(f"scatter shape {s.shape} incompatible with ({d1}, {d2})")
    blocks = s.reshape(d1, d2, d1, d2)
    return blocks.transpose(2, 0, 3, 1).reshape(d1 * d1, d2 * d2).copy()


@dataclass(frozen=True)
class PvlTerms:
    """Terms ``{(A_k, B_k)}`` with ``sum_k A_k (x) B_k`` equal to the source.

    The singular value is folded entirely into ``A_k``, keeping each ``B_k``
    unit Frobenius norm; every downstream formula is invariant to that split.

    A symmetric source splits into symmetric (x) symmetric pairs plus
    antisymmetric (x) antisymmetric pairs; both kinds are retained so the
    expansion stays exact. The antisymmetric pairs are invisible to the
    likelihood, gradients, and conjugate updates, because a trace against a
    symmetric inverse vanishes on them.
    """

    d1: int
    d2: int
    a_terms: np.ndarray  # (r, d1, d1)
    b_terms: np.ndarray  # (r, d2, d2)
    n: int = 0

    @property
    def r(self) -> int:
        return self.a_terms.shape[0]

    def dense(self) -> np.ndarray:
        """Materialize ``sum_k A_k (x) B_k`` (tests and small dimensions only)."""
        out = np.zeros((self.d1 * self.d2, self.d1 * self.d2))
        for a, b in zip(self.a_terms, self.b_terms):
            out += kron(a, b, cap=None)
        return out


def _clean_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Snap a singular pair onto its symmetry type to remove rounding noise.

    Simple singular values of the rearrangement of a symmetric source yield
    factors that are exactly symmetric or exactly antisymmetric; repeated
    singular values can mix the two types, in which case the raw factors are
    kept (the expansion stays exact either way).
    """
    anti_a = 0.5 * (a - a.T)
    norm_a = max(np.linalg.norm(a), 1e-300)
    frac = np.linalg.norm(anti_a) / norm_a
    if frac < 1e-8:
        return symm(a), symm(b)
    if frac > 1.0 - 1e-8:
        return anti_a, 0.5 * (b - b.T)
    return a, b


def pvl_decompose(scat: ScatterMatrix, d1: int, d2: int, tol: float = 1e-12) -> PvlTerms:
    """Decompose a scatter matrix into a sum of Kronecker products.

    SVD of the rearranged scatter gives ``R = sum_k s_k u_k v_k^T``; term k is
    ``A_k = mat(s_k u_k)``, ``B_k = mat(v_k)``, snapped onto their symmetry
    type. Terms with ``s_k <= tol * s_1`` are dropped; the default keeps the
    expansion exact. Gradient cost downstream scales with the number of
    retained terms, which is why coarser truncation is exposed at all.
    """
    r_mat = rearrange(scat.s, d1, d2)
    try:
        u, sv, vt = np.linalg.svd(r_mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(f"SVD failed in decomposition: {exc}") from exc
    keep = sv > (tol * sv[0] if sv.size else 0.0)
    idx = np.nonzero(keep)[0]
    pairs = [_clean_pair(unvec(sv[k] * u[:, k], d1, d1), unvec(vt[k], d2, d2)) for k in idx]
    a_terms = np.array([p[0] for p in pairs])
    b_terms = np.array([p[1] for p in pairs])
    if idx.size == 0:
        a_terms = np.zeros((0, d1, d1))
        b_terms = np.zeros((0, d2, d2))
    terms = PvlTerms(d1=d1, d2=d2, a_terms=a_terms, b_terms=b_terms, n=scat.n)
    if d1 * d2 <= _RECONSTRUCTION_CHECK_MAX_DIM:
        scale = max(np.linalg.norm(scat.s), 1e-300)
        # Intentional truncation is allowed to miss by the dropped singular mass.
        dropped = float(np.sqrt((sv[~keep] ** 2).sum())) / scale
        err = np.linalg.norm(terms.dense() - scat.s) / scale
        if err > _RECONSTRUCTION_RTOL + dropped * (1 + _RECONSTRUCTION_RTOL):
            raise SepcovError(
                f"decomposition reconstruction error {err:.3e} exceeds the "
                f"tolerance implied by truncation ({dropped:.3e})"
            )
    return terms

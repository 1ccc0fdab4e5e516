"""Kronecker-product algebra and (half-)vectorization machinery.

Vectorization is column-major throughout the package: ``vec(A)`` stacks the
columns of ``A``, so every reshape here uses ``order="F"``. The duplication
and commutation matrices are built once per dimension and cached; they back
the dense regularized-metric path and the test oracles, never the fast
per-factor path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, KronCapExceeded, NotSymmetric

#: Largest output dimension ``kron`` will materialize unless told otherwise.
DEFAULT_KRON_CAP = 64

SYMMETRY_RTOL = 1e-10


def kron(a: np.ndarray, b: np.ndarray, *, cap: int | None = DEFAULT_KRON_CAP) -> np.ndarray:
    """Dense Kronecker product ``a ⊗ b``.

    Block (i, j) of the result is ``a[i, j] * b``. Materialization is refused
    when the output would exceed ``cap`` rows or columns: large Kronecker
    products should stay implicit (see :func:`kron_quadratic_form`).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if cap is not None and max(rows, cols) > cap:
        raise KronCapExceeded(
            f"kron output would be {rows}x{cols}, above cap {cap}; "
            "use a structured kernel or pass an explicit cap"
        )
    return np.kron(a, b)


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization: ``vec([[1,3],[2,4]]) = [1,2,3,4]``."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def unvec(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``rows x cols`` target."""
    x = np.asarray(x, dtype=float)
    if x.size != rows * cols:
        raise DimensionMismatch(f"cannot reshape {x.size} entries to {rows}x{cols}")
    return x.reshape(rows, cols, order="F")


def symm(a: np.ndarray) -> np.ndarray:
    """Symmetric part ``(a + a.T) / 2`` of a square matrix."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"symm needs a square matrix, got {a.shape}")
    return 0.5 * (a + a.T)


def check_symmetric(a: np.ndarray, *, rtol: float = SYMMETRY_RTOL, what: str = "matrix") -> np.ndarray:
    """Validate symmetry within relative tolerance; returns ``a`` unchanged."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1e-300)
    skew = np.abs(a - a.T).max()
    if skew > rtol * scale:
        raise NotSymmetric(f"{what} asymmetry {skew:.3e} exceeds {rtol:.1e} * {scale:.3e}")
    return a


def vech(a: np.ndarray, *, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Half-vectorization of a symmetric matrix.

    Stacks the lower triangle column by column:
    ``vech([[1,2],[2,5]]) = [1,2,5]``. Raises :class:`NotSymmetric` when the
    input is not symmetric within ``rtol``.
    """
    a = check_symmetric(a, rtol=rtol, what="vech input")
    # Lower triangle column-major equals upper triangle row-major for symmetric a.
    return a[np.triu_indices(a.shape[0])].copy()


def unvech(x: np.ndarray) -> np.ndarray:
    """Symmetric matrix whose :func:`vech` equals ``x``."""
    x = np.asarray(x, dtype=float)
    m = x.size
    d = int((np.sqrt(8 * m + 1) - 1) / 2 + 0.5)
    if d * (d + 1) // 2 != m:
        raise DimensionMismatch(f"{m} entries is not a triangular number")
    out = np.zeros((d, d))
    iu = np.triu_indices(d)
    out[iu] = x
    out[(iu[1], iu[0])] = x
    return out


@dataclass(frozen=True)
class DuplicationPair:
    """Duplication matrix ``D`` with its Moore-Penrose pseudo-inverse.

    ``D @ vech(S) == vec(S)`` for symmetric ``S`` and
    ``Dplus = (D.T D)^-1 D.T`` so ``Dplus @ vec(A) == vech(symm(A))``.
    """

    d: int
    dup: np.ndarray
    dup_pinv: np.ndarray


@lru_cache(maxsize=None)
def duplication(d: int) -> DuplicationPair:
    """Duplication matrix pair for dimension ``d`` (cached)."""
    if d < 1:
        raise DimensionMismatch(f"dimension must be >= 1, got {d}")
    m = d * (d + 1) // 2
    dup = np.zeros((d * d, m))
    col = 0
    for j in range(d):
        for i in range(j, d):
            dup[i + j * d, col] = 1.0
            dup[j + i * d, col] = 1.0
            col += 1
    counts = dup.sum(axis=0)  # 1 for diagonal entries, 2 off-diagonal
    dup_pinv = dup.T / counts[:, None]
    dup.setflags(write=False)
    dup_pinv.setflags(write=False)
    return DuplicationPair(d=d, dup=dup, dup_pinv=dup_pinv)


@lru_cache(maxsize=None)
def commutation(m: int, n: int) -> np.ndarray:
    """Commutation matrix ``K`` with ``K @ vec(A) = vec(A.T)`` for m x n ``A``."""
    if m < 1 or n < 1:
        raise DimensionMismatch(f"dimensions must be >= 1, got ({m}, {n})")
    k = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            k[j + i * n, i + j * m] = 1.0
    k.setflags(write=False)
    return k


def kron_quadratic_form(y: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``y.T (a ⊗ b) y`` without materializing ``a ⊗ b``.

    Computed as ``tr(a M.T b M)`` with ``M`` the column-major reshape of
    ``y`` to shape ``(d2, d1)`` where ``a`` is d1 x d1 and ``b`` is d2 x d2.
    Exact for symmetric ``a``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d1, d2 = a.shape[0], b.shape[0]
    if y.size != d1 * d2:
        raise DimensionMismatch(f"vector length {y.size} != {d1} * {d2}")
    m = unvec(y, d2, d1)
    return float(np.trace(a @ m.T @ b @ m))

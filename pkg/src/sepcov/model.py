"""Matrix-normal likelihood, priors, data generation, and MLE initialization.

Observations are zero-mean Gaussian vectors of length ``d1 * d2`` whose
covariance is the Kronecker product ``Sigma1 (x) Sigma2``. Equivalently each
observation is the column-major vectorization of a ``d2 x d1`` matrix drawn
from a matrix normal. The likelihood and its gradients are evaluated through
the cached Kronecker-sum decomposition of the scatter, never through the full
``d1 d2``-dimensional covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NearDegenerateEigenvalues, SepcovError
from .geometry import SpdMatrix, spd_eig, spd_fn
from .kron import symm
from .pvl import PvlTerms, ScatterMatrix, pvl_decompose, scatter

EIGEN_GAP_RTOL = 1e-8


@dataclass(frozen=True)
class SeparableState:
    """Pair of SPD Kronecker factors; the MCMC position."""

    sigma1: SpdMatrix
    sigma2: SpdMatrix

    @property
    def dims(self) -> tuple[int, int]:
        return self.sigma1.d, self.sigma2.d


@dataclass(frozen=True)
class Dataset:
    """Sufficient statistics of one sample: dimensions, count, scatter terms."""

    d1: int
    d2: int
    n: int
    pvl: PvlTerms
    scat: ScatterMatrix | None = None

    @property
    def dim(self) -> int:
        return self.d1 * self.d2


def dataset_from_observations(ys: np.ndarray, d1: int, d2: int, *, keep_scatter: bool = True,
                              tol: float = 1e-12) -> Dataset:
    """Build a dataset (scatter + decomposition) from raw observation rows."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != d1 * d2:
        raise DimensionMismatch(f"observations have {ys.shape[1]} columns, expected {d1 * d2}")
    scat = scatter(ys)
    terms = pvl_decompose(scat, d1, d2, tol=tol)
    return Dataset(d1=d1, d2=d2, n=ys.shape[0], pvl=terms, scat=scat if keep_scatter else None)


def _trace_products(inv: np.ndarray, terms: np.ndarray) -> np.ndarray:
    """tr(inv @ T_k) for a stack of symmetric T_k."""
    return np.einsum("ij,kij->k", inv, terms)


def nll(state: SeparableState, data: Dataset) -> float:
    """Negative log-likelihood up to an additive constant.

    ``(n d2 / 2) log|S1| + (n d1 / 2) log|S2| + 1/2 sum_k tr(S1^-1 A_k) tr(S2^-1 B_k)``.
    Exactly invariant under the rescaling ``(c S1, S2 / c)``.
    """
    d1, d2 = state.dims
    if (d1, d2) != (data.d1, data.d2):
        raise DimensionMismatch(f"state dims {state.dims} != data dims {(data.d1, data.d2)}")
    inv1, inv2 = state.sigma1.inv(), state.sigma2.inv()
    cross = float(_trace_products(inv1, data.pvl.a_terms) @ _trace_products(inv2, data.pvl.b_terms))
    return (0.5 * data.n * d2 * state.sigma1.logdet()
            + 0.5 * data.n * d1 * state.sigma2.logdet()
            + 0.5 * cross)


def nll_grad(state: SeparableState, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean gradients of :func:`nll` with respect to each factor.

    d nll / d S1 = (n d2 / 2) S1^-1 - 1/2 sum_k tr(S2^-1 B_k) S1^-1 A_k S1^-1,
    and symmetrically for S2.
    """
    d1, d2 = state.dims
    if (d1, d2) != (data.d1, data.d2):
        raise DimensionMismatch(f"state dims {state.dims} != data dims {(data.d1, data.d2)}")
    inv1, inv2 = state.sigma1.inv(), state.sigma2.inv()
    w2 = _trace_products(inv2, data.pvl.b_terms)
    w1 = _trace_products(inv1, data.pvl.a_terms)
    a_sum = np.einsum("k,kij->ij", w2, data.pvl.a_terms) if data.pvl.r else np.zeros((d1, d1))
    b_sum = np.einsum("k,kij->ij", w1, data.pvl.b_terms) if data.pvl.r else np.zeros((d2, d2))
    g1 = 0.5 * data.n * d2 * inv1 - 0.5 * inv1 @ a_sum @ inv1
    g2 = 0.5 * data.n * d1 * inv2 - 0.5 * inv2 @ b_sum @ inv2
    return symm(g1), symm(g2)


# ---------------------------------------------------------------------------
# Priors


def iw_logpdf_grad(sigma: SpdMatrix, nu: float, t: SpdMatrix) -> tuple[float, np.ndarray]:
    """Inverse-Wishart log density (up to constant) and its gradient.

    logpdf = -((nu + d + 1)/2) log|S| - 1/2 tr(T S^-1);
    grad   = -((nu + d + 1)/2) S^-1 + 1/2 S^-1 T S^-1.
    """
    d = sigma.d
    if nu <= d - 1:
        raise SepcovError(f"inverse-Wishart needs nu > d - 1, got nu={nu}, d={d}")
    if t.d != d:
        raise DimensionMismatch("scale matrix dimension mismatch")
    inv = sigma.inv()
    coef = 0.5 * (nu + d + 1)
    logpdf = -coef * sigma.logdet() - 0.5 * float((t.m * inv).sum())
    grad = -coef * inv + 0.5 * inv @ t.m @ inv
    return logpdf, symm(grad)


def _eigen_terms(sigma: SpdMatrix) -> tuple[np.ndarray, float, np.ndarray]:
    """Eigenvalues (descending), log-spacing penalty, and its gradient.

    The penalty is ``sum_{k<j} log(lam_k - lam_j)``; its gradient uses the
    inverse Vandermonde of the eigenvalues to express each eigenvalue
    gradient through powers of Sigma, valid only for distinct spectra.
    """
    lams, _ = spd_eig(sigma)
    d = sigma.d
    gaps = lams[:-1] - lams[1:]
    if d > 1 and gaps.min() <= EIGEN_GAP_RTOL * lams[0]:
        raise NearDegenerateEigenvalues(
            f"eigenvalue gap {gaps.min():.3e} below {EIGEN_GAP_RTOL:.1e} * {lams[0]:.3e}"
        )
    if d == 1:
        return lams, 0.0, np.zeros((1, 1))
    # V[i, k] = lam_k^(i-1); column k of V^-1 expands q_k q_k^T in powers of Sigma.
    vand = np.vander(lams, increasing=True).T
    vinv = np.linalg.inv(vand)
    powers = np.empty((d, d, d))
    powers[0] = np.eye(d)
    for i in range(1, d):
        powers[i] = powers[i - 1] @ sigma.m
    penalty = float(np.log(np.subtract.outer(lams, lams)[np.triu_indices(d, k=1)]).sum())
    grad = np.zeros((d, d))
    for k in range(d):
        for j in range(k + 1, d):
            coeff = (vinv[k] - vinv[j]) / (lams[k] - lams[j])
            grad += np.einsum("i,iab->ab", coeff, powers)
    return lams, penalty, symm(grad)


def reference_logpdf_grad(sigma: SpdMatrix) -> tuple[float, np.ndarray]:
    """Eigenvalue-repelling reference prior, up to a constant.

    logpdf = -log|S| - sum_{k<j} log(lam_k - lam_j). Requires a distinct
    spectrum; near-degenerate input raises, which samplers treat as a
    rejected proposal. Propriety of this prior is not established; it is
    exposed for experimentation.
    """
    _, penalty, pen_grad = _eigen_terms(sigma)
    inv = sigma.inv()
    return -sigma.logdet() - penalty, symm(-inv - pen_grad)


def siw_logpdf_grad(sigma: SpdMatrix, a: float, c: float) -> tuple[float, np.ndarray]:
    """Shrinkage inverse-Wishart log density (up to constant) and gradient.

    logpdf = -1/2 tr(S^-1 c) - a log|S| - sum_{k<j} log(lam_k - lam_j) with
    identity scale matrix ``c I``. Moment matching against an inverse-Wishart
    with scale ``(sqrt(gamma)/d) I`` gives a = 3, c = sqrt(gamma)/d.
    """
    if a <= 0 or c <= 0:
        raise SepcovError(f"shrinkage prior needs a > 0 and c > 0, got a={a}, c={c}")
    _, penalty, pen_grad = _eigen_terms(sigma)
    inv = sigma.inv()
    logpdf = -0.5 * c * float(np.trace(inv)) - a * sigma.logdet() - penalty
    grad = 0.5 * c * inv @ inv - a * inv - pen_grad
    return logpdf, symm(grad)


def siw_moment_matched_constants(gamma: float, d: int) -> tuple[float, float]:
    """(a, c) matching the default inverse-Wishart prior: a = 3, c = sqrt(gamma)/d."""
    return 3.0, float(np.sqrt(gamma) / d)


@dataclass(frozen=True)
class InverseWishartPrior:
    nu: float
    scale: SpdMatrix

    def logpdf_grad(self, sigma: SpdMatrix) -> tuple[float, np.ndarray]:
        return iw_logpdf_grad(sigma, self.nu, self.scale)


@dataclass(frozen=True)
class ShrinkageInverseWishartPrior:
    a: float
    c: float

    def logpdf_grad(self, sigma: SpdMatrix) -> tuple[float, np.ndarray]:
        return siw_logpdf_grad(sigma, self.a, self.c)


@dataclass(frozen=True)
class ReferencePrior:
    def logpdf_grad(self, sigma: SpdMatrix) -> tuple[float, np.ndarray]:
        return reference_logpdf_grad(sigma)


@dataclass(frozen=True)
class ScaleMarginalizedIwPair:
    """Joint prior on (Sigma1, unit-determinant Sigma2) for constrained runs.

    The Kronecker product is invariant along the scale fiber
    ``(S1, S2) -> (c S1, S2 / c)``. Pinning ``|S2| = 1`` therefore calls for
    the pushforward of the independent inverse-Wishart pair prior along that
    fiber, not a pointwise evaluation on the constraint surface. The fiber
    integral is a generalized-inverse-Gaussian normalizer, giving

    ``log q = -((nu1+d1+1)/2) log|S1| - ((nu2+d2+1)/2) log|S2|
              + (p/2)(log beta - log alpha) + log K_p(sqrt(alpha beta))``

    with ``alpha = tr(T1 S1^-1)``, ``beta = tr(T2 S2^-1)`` and order
    ``p = [d1(nu1+d1+1) - d2(nu2+d2+1)]/2 + m2 - m1`` (``m = d(d+1)/2``).
    With this prior, constrained chains are invariant for exactly the
    unconstrained posterior pushed through :func:`normalize_component`,
    which is what makes them comparable to normalized conjugate draws.
    """

    prior1: InverseWishartPrior
    prior2: InverseWishartPrior

    def _order(self, d1: int, d2: int) -> float:
        m1, m2 = d1 * (d1 + 1) // 2, d2 * (d2 + 1) // 2
        return (d1 * (self.prior1.nu + d1 + 1) - d2 * (self.prior2.nu + d2 + 1)) / 2 + m2 - m1

    def logpdf_grad_pair(self, sigma1: SpdMatrix, sigma2: SpdMatrix
                         ) -> tuple[float, np.ndarray, np.ndarray]:
        from scipy.special import kve

        d1, d2 = sigma1.d, sigma2.d
        nu1, t1 = self.prior1.nu, self.prior1.scale.m
        nu2, t2 = self.prior2.nu, self.prior2.scale.m
        inv1, inv2 = sigma1.inv(), sigma2.inv()
        alpha = float((t1 * inv1).sum())
        beta = float((t2 * inv2).sum())
        p = self._order(d1, d2)
        z = np.sqrt(alpha * beta)
        k_m1, k_0, k_p1 = kve([p - 1, p, p + 1], z)
        if not (np.isfinite(k_0) and k_0 > 0):
            raise SepcovError(f"Bessel normalizer failed at order {p}, argument {z:.3e}")
        log_k = float(np.log(k_0) - z)
        dlogk_dz = float(-(k_m1 + k_p1) / (2 * k_0))
        value = (-(nu1 + d1 + 1) / 2 * sigma1.logdet()
                 - (nu2 + d2 + 1) / 2 * sigma2.logdet()
                 + p / 2 * (np.log(beta) - np.log(alpha)) + log_k)
        dval_dalpha = -p / (2 * alpha) + dlogk_dz * z / (2 * alpha)
        dval_dbeta = p / (2 * beta) + dlogk_dz * z / (2 * beta)
        g1 = -(nu1 + d1 + 1) / 2 * inv1 - dval_dalpha * inv1 @ t1 @ inv1
        g2 = -(nu2 + d2 + 1) / 2 * inv2 - dval_dbeta * inv2 @ t2 @ inv2
        return float(value), symm(g1), symm(g2)


def default_inference_prior(d: int, gamma: float = 5.0) -> InverseWishartPrior:
    """Inference default: IW(nu = d + 2, (gamma / d) I)."""
    return InverseWishartPrior(nu=d + 2, scale=SpdMatrix((gamma / d) * np.eye(d)))


def default_generation_prior(d: int, gamma: float = 5.0) -> InverseWishartPrior:
    """Data-generation default: IW(nu = d + 10, (sqrt(gamma) / d) I)."""
    return InverseWishartPrior(nu=d + 10, scale=SpdMatrix((np.sqrt(gamma) / d) * np.eye(d)))


# ---------------------------------------------------------------------------
# Sampling


def observations_matrix_normal(state: SeparableState, n: int, rng: np.random.Generator) -> np.ndarray:
    """Raw observation rows (n x d1*d2) with covariance ``Sigma1 (x) Sigma2``.

    Each observation is ``vec(Sigma2^{1/2} Z Sigma1^{1/2})`` with ``Z`` a
    ``d2 x d1`` standard normal matrix and column-major vec.
    """
    if n < 1:
        raise SepcovError("need n >= 1 observations")
    d1, d2 = state.dims
    root1 = spd_fn(state.sigma1, "sqrt")
    root2 = spd_fn(state.sigma2, "sqrt")
    z = rng.standard_normal((n, d2, d1))
    m = root2 @ z @ root1
    return m.transpose(0, 2, 1).reshape(n, d1 * d2)  # row i = vec(M_i), column-major


def sample_matrix_normal(state: SeparableState, n: int, rng: np.random.Generator,
                         *, keep_scatter: bool = True) -> Dataset:
    """Draw observations and package them with their scatter decomposition."""
    d1, d2 = state.dims
    ys = observations_matrix_normal(state, n, rng)
    return dataset_from_observations(ys, d1, d2, keep_scatter=keep_scatter)


def sample_inverse_wishart(nu: float, t: SpdMatrix, rng: np.random.Generator) -> SpdMatrix:
    """Inverse-Wishart draw via the Bartlett construction.

    Samples W ~ Wishart(nu, T^-1) and returns W^-1, so the result has mean
    ``T / (nu - d - 1)`` for ``nu > d + 1``.
    """
    d = t.d
    if nu <= d - 1:
        raise SepcovError(f"inverse-Wishart needs nu > d - 1, got nu={nu}, d={d}")
    bartlett = np.zeros((d, d))
    for i in range(d):
        bartlett[i, i] = np.sqrt(rng.chisquare(nu - i))
    if d > 1:
        idx = np.tril_indices(d, k=-1)
        bartlett[idx] = rng.standard_normal(idx[0].size)
    chol_t = np.linalg.cholesky(t.m)
    # M M^T = T^-1 for M = chol(T)^-T, so W = (M L)(M L)^T ~ Wishart(nu, T^-1).
    m_factor = np.linalg.solve(chol_t.T, np.eye(d))
    factor = m_factor @ bartlett
    w = factor @ factor.T
    return SpdMatrix(symm(np.linalg.inv(w)))


# ---------------------------------------------------------------------------
# Initialization and identifiability


def normalize_component(state: SeparableState) -> SeparableState:
    """Rescale so ``|Sigma2| = 1`` while keeping the Kronecker product fixed."""
    d1, d2 = state.dims
    c = np.exp(state.sigma2.logdet() / d2)
    return SeparableState(sigma1=SpdMatrix(state.sigma1.m * c),
                          sigma2=SpdMatrix(state.sigma2.m / c))


@dataclass(frozen=True)
class FlipFlopResult:
    state: SeparableState
    n_iter: int
    converged: bool
    nll_values: tuple[float, ...]


def _matrix_normal_nll(mats: np.ndarray, sigma1: SpdMatrix, sigma2: SpdMatrix) -> float:
    n, d2, d1 = mats.shape
    inv1 = sigma1.inv()
    quad = float(np.einsum("nji,jk,nkl,li->", mats, sigma2.inv(), mats, inv1))
    return 0.5 * n * d2 * sigma1.logdet() + 0.5 * n * d1 * sigma2.logdet() + 0.5 * quad


def flipflop_mle(ys: np.ndarray, d1: int, d2: int, *, tol: float = 1e-8,
                 max_iter: int = 200) -> FlipFlopResult:
    """Alternating maximum likelihood for the two Kronecker factors.

    Iterates Sigma2 <- (1 / (n d1)) sum_i M_i Sigma1^-1 M_i^T and
    Sigma1 <- (1 / (n d2)) sum_i M_i^T Sigma2^-1 M_i with M_i the d2 x d1
    reshape of observation i, until the relative change in negative
    log-likelihood drops below ``tol``. The result is normalized to
    ``|Sigma2| = 1``. Non-convergence returns the last iterate flagged, it
    does not raise.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    n = ys.shape[0]
    if ys.shape[1] != d1 * d2:
        raise DimensionMismatch(f"observations have {ys.shape[1]} columns, expected {d1 * d2}")
    if n * d2 <= d1 or n * d1 <= d2:
        raise SepcovError(f"too few observations (n={n}) for a ({d1}, {d2}) factor MLE")
    mats = ys.reshape(n, d1, d2).transpose(0, 2, 1)  # column-major reshape of each row
    sigma1 = SpdMatrix(np.eye(d1))
    sigma2 = SpdMatrix(np.eye(d2))
    history = [_matrix_normal_nll(mats, sigma1, sigma2)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        inv1 = sigma1.inv()
        sigma2 = SpdMatrix(symm(np.einsum("nij,jk,nlk->il", mats, inv1, mats) / (n * d1)))
        inv2 = sigma2.inv()
        sigma1 = SpdMatrix(symm(np.einsum("nji,jk,nkl->il", mats, inv2, mats) / (n * d2)))
        history.append(_matrix_normal_nll(mats, sigma1, sigma2))
        denom = max(abs(history[-2]), 1.0)
        if abs(history[-1] - history[-2]) <= tol * denom:
            converged = True
            break
    state = normalize_component(SeparableState(sigma1=sigma1, sigma2=sigma2))
    return FlipFlopResult(state=state, n_iter=it, converged=converged,
                          nll_values=tuple(history))

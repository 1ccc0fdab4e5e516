"""The four Riemannian metric variants on the product of SPD factor spaces.

Block-weight convention used everywhere in this module: the first-factor
block carries ``d2`` and the second-factor block carries ``d1`` (the weighted
variant interpolates those against unit weights). The coupled variant adds an
``alpha``-scaled cross term between the blocks; at ``alpha = 1`` the tensor is
singular, which is why sampling requires ``alpha < 1``. The diagonal variants
have fast per-factor paths; only the coupled variant ever materializes the
dense tensor in stacked half-vectorization coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, EigFailure, SepcovError
from .geometry import SpdMatrix, spd_fn
from .kron import duplication, symm, unvech, vec
from .model import SeparableState

_DENSE_TENSOR_CAP = 2000


@dataclass(frozen=True)
class TangentPair:
    """Symmetric velocity components for the two factors."""

    v1: np.ndarray
    v2: np.ndarray

    def scaled(self, c: float) -> "TangentPair":
        return TangentPair(v1=c * self.v1, v2=c * self.v2)


@dataclass(frozen=True)
class MetricKind:
    """Selector for the metric variant, with its parameters.

    ``regularized`` couples the blocks with strength ``alpha`` in [0, 1);
    ``orthogonalized`` and ``weighted`` drop the coupling and constrain the
    second factor to unit determinant; ``product`` is the plain product
    geometry with unit weights.
    """

    kind: str
    alpha: float = 0.0
    omega: float = 0.5

    @classmethod
    def regularized(cls, alpha: float = 0.95) -> "MetricKind":
        if not 0.0 <= alpha < 1.0:
            raise ConfigError(f"regularized metric needs alpha in [0, 1), got {alpha}")
        return cls(kind="regularized", alpha=alpha)

    @classmethod
    def orthogonalized(cls) -> "MetricKind":
        return cls(kind="orthogonalized")

    @classmethod
    def weighted(cls, omega: float = 0.5) -> "MetricKind":
        if not 0.0 < omega < 1.0:
            raise ConfigError(f"weighted metric needs omega in (0, 1), got {omega}")
        return cls(kind="weighted", omega=omega)

    @classmethod
    def product(cls) -> "MetricKind":
        return cls(kind="product")

    @property
    def constrained(self) -> bool:
        """Whether the unit-determinant constraint on the second factor is active."""
        return self.kind in ("orthogonalized", "weighted")

    @property
    def cross(self) -> float:
        return self.alpha if self.kind == "regularized" else 0.0

    def weights(self, d1: int, d2: int) -> tuple[float, float]:
        """Per-block quadratic-form weights (first block, second block)."""
        if self.kind in ("regularized", "orthogonalized"):
            return float(d2), float(d1)
        if self.kind == "weighted":
            return self.omega * d2 + 1 - self.omega, self.omega * d1 + 1 - self.omega
        if self.kind == "product":
            return 1.0, 1.0
        raise ConfigError(f"unknown metric kind {self.kind!r}")


def project_tangent(sigma2: SpdMatrix, v2: np.ndarray) -> np.ndarray:
    """Remove the pure-scale direction: V - (tr(V S^-1) / d) S.

    Output satisfies ``tr(S^-1 out) == 0``; the map is idempotent and is the
    metric-orthogonal projection onto the unit-determinant tangent space.
    """
    if v2.shape != (sigma2.d, sigma2.d):
        raise DimensionMismatch("tangent dimension does not match the factor")
    coef = float(np.trace(sigma2.solve(v2))) / sigma2.d
    return v2 - coef * sigma2.m


def metric_inner(kind: MetricKind, state: SeparableState, u: TangentPair, w: TangentPair) -> float:
    """Bilinear form of the metric on two tangent pairs."""
    d1, d2 = state.dims
    w1, w2 = kind.weights(d1, d2)
    x1u, x1w = state.sigma1.solve(u.v1), state.sigma1.solve(w.v1)
    x2u, x2w = state.sigma2.solve(u.v2), state.sigma2.solve(w.v2)
    val = w1 * float((x1u * x1w.T).sum()) + w2 * float((x2u * x2w.T).sum())
    if kind.cross:
        val += kind.cross * (np.trace(x1u) * np.trace(x2w) + np.trace(x1w) * np.trace(x2u))
    return float(val)


def kinetic_energy(kind: MetricKind, state: SeparableState, v: TangentPair) -> float:
    """Half the metric quadratic form of the velocity."""
    return 0.5 * metric_inner(kind, state, v, v)


def sample_velocity(kind: MetricKind, state: SeparableState, rng: np.random.Generator) -> TangentPair:
    """Draw a velocity with covariance equal to the inverse metric.

    Diagonal kinds use the per-factor construction
    ``V_i = w_i^{-1/2} symm(S_i^{1/2} A_i S_i^{1/2})`` with standard normal
    ``A_i``, projecting the second component when the constraint is active.
    The coupled kind draws stacked half-vectorization coordinates from the
    dense tensor via Cholesky.
    """
    d1, d2 = state.dims
    if kind.kind == "regularized":
        g_hat = build_metric_tensor(kind, state)
        try:
            chol = np.linalg.cholesky(g_hat)
        except np.linalg.LinAlgError as exc:
            raise EigFailure(
                f"metric tensor Cholesky failed (alpha={kind.alpha} too close to 1?)"
            ) from exc
        m1 = d1 * (d1 + 1) // 2
        z = rng.standard_normal(g_hat.shape[0])
        v_hat = np.linalg.solve(chol.T, z)  # covariance = inverse tensor
        return TangentPair(v1=unvech(v_hat[:m1]), v2=unvech(v_hat[m1:]))
    w1, w2 = kind.weights(d1, d2)
    root1 = spd_fn(state.sigma1, "sqrt")
    root2 = spd_fn(state.sigma2, "sqrt")
    v1 = symm(root1 @ rng.standard_normal((d1, d1)) @ root1) / np.sqrt(w1)
    v2 = symm(root2 @ rng.standard_normal((d2, d2)) @ root2) / np.sqrt(w2)
    if kind.constrained:
        v2 = project_tangent(state.sigma2, v2)
    return TangentPair(v1=v1, v2=v2)


def riemannian_grad(kind: MetricKind, state: SeparableState,
                    euclid: tuple[np.ndarray, np.ndarray]) -> TangentPair:
    """Map Euclidean gradients to the metric's natural (Riemannian) gradients.

    Diagonal kinds: ``(1/w_1) S1 E1 S1`` and ``(1/w_2) S2 E2 S2`` (projected
    when constrained). The coupled kind solves the dense tensor system in
    stacked half-vectorization coordinates.
    """
    e1, e2 = euclid
    d1, d2 = state.dims
    if kind.kind == "regularized":
        g_hat = build_metric_tensor(kind, state)
        rhs = np.concatenate([duplication(d1).dup.T @ vec(e1), duplication(d2).dup.T @ vec(e2)])
        try:
            x = np.linalg.solve(g_hat, rhs)
        except np.linalg.LinAlgError as exc:
            raise EigFailure("singular metric tensor in gradient solve") from exc
        m1 = d1 * (d1 + 1) // 2
        return TangentPair(v1=unvech(x[:m1]), v2=unvech(x[m1:]))
    w1, w2 = kind.weights(d1, d2)
    g1 = symm(state.sigma1.m @ e1 @ state.sigma1.m) / w1
    g2 = symm(state.sigma2.m @ e2 @ state.sigma2.m) / w2
    if kind.constrained:
        g2 = project_tangent(state.sigma2, g2)
    return TangentPair(v1=g1, v2=g2)


def pullback_metric_tensor(state: SeparableState, alpha: float) -> np.ndarray:
    """Dense coupled tensor in stacked vech coordinates, any alpha in [0, 1].

    ``alpha = 1`` gives the raw (singular) pullback tensor and is allowed
    here for diagnostics; sampling requires ``alpha < 1``.
    """
    d1, d2 = state.dims
    return _dense_tensor(state, w1=float(d2), w2=float(d1), cross=alpha)


def _dense_tensor(state: SeparableState, w1: float, w2: float, cross: float) -> np.ndarray:
    d1, d2 = state.dims
    m1, m2 = d1 * (d1 + 1) // 2, d2 * (d2 + 1) // 2
    if m1 + m2 > _DENSE_TENSOR_CAP:
        raise SepcovError(f"dense tensor would be {m1 + m2} coordinates, above cap")
    dup1, dup2 = duplication(d1).dup, duplication(d2).dup
    inv1, inv2 = state.sigma1.inv(), state.sigma2.inv()
    g = np.zeros((m1 + m2, m1 + m2))
    g[:m1, :m1] = w1 * dup1.T @ np.kron(inv1, inv1) @ dup1
    g[m1:, m1:] = w2 * dup2.T @ np.kron(inv2, inv2) @ dup2
    if cross:
        off = cross * np.outer(dup1.T @ vec(inv1), dup2.T @ vec(inv2))
        g[:m1, m1:] = off
        g[m1:, :m1] = off.T
    return symm(g)


def build_metric_tensor(kind: MetricKind, state: SeparableState) -> np.ndarray:
    """Dense metric tensor over stacked vech coordinates (small dims only)."""
    d1, d2 = state.dims
    w1, w2 = kind.weights(d1, d2)
    return _dense_tensor(state, w1=w1, w2=w2, cross=kind.cross)


def metric_logdet(kind: MetricKind, state: SeparableState) -> float:
    """log-determinant of the metric tensor, up to a state-independent constant.

    ``-(d1+1) log|S1| - (d2+1) log|S2|`` for the unconstrained kinds and
    ``-(d1+1) log|S1|`` for the constrained ones (where ``|S2|`` is pinned
    to 1 anyway). The block weights and the coupling only shift the constant.
    """
    d1, d2 = state.dims
    val = -(d1 + 1) * state.sigma1.logdet()
    if not kind.constrained:
        val -= (d2 + 1) * state.sigma2.logdet()
    return val


def metric_grad_logdet(kind: MetricKind, state: SeparableState) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean gradient of :func:`metric_logdet` per factor."""
    d1, d2 = state.dims
    g1 = -(d1 + 1) * state.sigma1.inv()
    if kind.constrained:
        g2 = np.zeros((d2, d2))
    else:
        g2 = -(d2 + 1) * state.sigma2.inv()
    return g1, g2

"""Gibbs and separable geodesic Lagrangian Monte Carlo (SGLMC) samplers.

Energy convention. The integrator runs on the potential
``U(q) = -log target(q) + 1/2 log|G(q)|`` with kinetic term
``K(q, v) = 1/2 v^T G(q) v`` and velocities drawn from ``N(0, G(q)^{-1})``.
With this composition the retained positions are distributed exactly as the
posterior under the Lebesgue measure: the ``1/2 log|G|`` in the energy
cancels the normalizer of the velocity Gaussian together with the volume
distortion of the geodesic drift in velocity coordinates. (Putting the
metric term into the log-target with the opposite sign instead skews the
invariant law by a full ``|G(q)|`` factor; a one-dimensional conjugate model
makes the bias obvious, and matching the Gibbs sampler is the acceptance
bar, so the exact composition is used.)

A proposal is accepted with probability ``min(1, exp(-(h* - h)))`` where
``h = U + K``. Any numerical failure inside a trajectory (eigendecomposition
breakdown, loss of positive definiteness, eigenvalue collisions in a prior)
rejects the proposal and never aborts the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import ConfigError, EigFailure, NearDegenerateEigenvalues, NonConjugatePrior, SepcovError
from .errors import NotPositiveDefinite
from .geometry import SpdMatrix, geodesic_flow, spd_log_map
from .kron import symm
from .model import (Dataset, InverseWishartPrior, ScaleMarginalizedIwPair,
                    SeparableState, FlipFlopResult, nll, nll_grad,
                    normalize_component, sample_inverse_wishart)
from .metrics import (MetricKind, TangentPair, kinetic_energy, metric_grad_logdet,
                      metric_inner, metric_logdet, project_tangent, riemannian_grad,
                      sample_velocity)

_HARD_L_CAP = 1024

_NUMERICAL_FAILURES = (EigFailure, NearDegenerateEigenvalues, NotPositiveDefinite,
                       np.linalg.LinAlgError, FloatingPointError, OverflowError)


@dataclass(frozen=True)
class TargetDensity:
    """Posterior target: data likelihood, per-factor priors, metric choice.

    Constrained metric kinds with inverse-Wishart priors on both factors
    replace the pointwise prior product by the scale-fiber-marginalized pair
    prior, so that the chain's invariant law is exactly the unconstrained
    posterior pushed through ``normalize_component`` (the distribution the
    normalized conjugate draws follow). Other prior choices fall back to
    pointwise evaluation on the constraint surface.
    """

    data: Dataset
    prior1: object
    prior2: object
    metric: MetricKind

    def _pair_prior(self) -> ScaleMarginalizedIwPair | None:
        if (self.metric.constrained
                and isinstance(self.prior1, InverseWishartPrior)
                and isinstance(self.prior2, InverseWishartPrior)):
            return ScaleMarginalizedIwPair(self.prior1, self.prior2)
        return None

    def factor_prior_logpdf_grad(self, state: SeparableState
                                 ) -> tuple[float, np.ndarray, np.ndarray]:
        """Pointwise per-factor prior sum (the reporting composition)."""
        lp1, g1 = self.prior1.logpdf_grad(state.sigma1)
        lp2, g2 = self.prior2.logpdf_grad(state.sigma2)
        return lp1 + lp2, g1, g2

    def log_target_grad(self, state: SeparableState) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
        """Log target kernel (likelihood + prior) the chain samples, with gradient."""
        pair = self._pair_prior()
        if pair is not None:
            lp, g1, g2 = pair.logpdf_grad_pair(state.sigma1, state.sigma2)
        else:
            lp, g1, g2 = self.factor_prior_logpdf_grad(state)
        value = -nll(state, self.data) + lp
        n1, n2 = nll_grad(state, self.data)
        return value, (g1 - n1, g2 - n2)

    def log_target(self, state: SeparableState) -> float:
        return self.log_target_grad(state)[0]


def target_eval(target: TargetDensity, state: SeparableState) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Metric-corrected log density ``loglik + priors + 1/2 log|G|``, gradient.

    Composed from the pointwise per-factor priors; this is the reporting and
    diagnostics composition. See the module docstring for how the pieces
    enter the integrator energy, and :class:`TargetDensity` for the prior
    substitution constrained chains make.
    """
    lik = -nll(state, target.data)
    n1, n2 = nll_grad(state, target.data)
    lp, g1, g2 = target.factor_prior_logpdf_grad(state)
    h1, h2 = metric_grad_logdet(target.metric, state)
    value = lik + lp + 0.5 * metric_logdet(target.metric, state)
    return value, (g1 - n1 + 0.5 * h1, g2 - n2 + 0.5 * h2)


def _potential_grad(target: TargetDensity, state: SeparableState,
                    temper: float) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Integrator potential ``-temper * log target + 1/2 log|G|`` and gradient."""
    value, (g1, g2) = target.log_target_grad(state)
    h1, h2 = metric_grad_logdet(target.metric, state)
    u = -temper * value + 0.5 * metric_logdet(target.metric, state)
    return u, (-temper * g1 + 0.5 * h1, -temper * g2 + 0.5 * h2)


# ---------------------------------------------------------------------------
# Gibbs


def gibbs_step(state: SeparableState, target: TargetDensity,
               rng: np.random.Generator) -> SeparableState:
    """One conjugate scan: each factor drawn from its full conditional.

    With inverse-Wishart priors IW(nu_j, S_j), the first factor's conditional
    is IW(nu_1 + d2 n, S_1 + sum_k A_k tr(S2^-1 B_k)) and symmetrically for
    the second, evaluated at the freshly drawn first factor.
    """
    if not isinstance(target.prior1, InverseWishartPrior) or \
       not isinstance(target.prior2, InverseWishartPrior):
        raise NonConjugatePrior("Gibbs updates need inverse-Wishart priors on both factors")
    data = target.data
    d1, d2 = data.d1, data.d2
    a_terms, b_terms = data.pvl.a_terms, data.pvl.b_terms

    inv2 = state.sigma2.inv()
    wts = np.einsum("ij,kij->k", inv2, b_terms) if data.pvl.r else np.zeros(0)
    scale1 = target.prior1.scale.m + (np.einsum("k,kij->ij", wts, a_terms) if wts.size else 0.0)
    sigma1 = sample_inverse_wishart(target.prior1.nu + d2 * data.n, SpdMatrix(symm(scale1)), rng)

    inv1 = sigma1.inv()
    wts = np.einsum("ij,kij->k", inv1, a_terms) if data.pvl.r else np.zeros(0)
    scale2 = target.prior2.scale.m + (np.einsum("k,kij->ij", wts, b_terms) if wts.size else 0.0)
    sigma2 = sample_inverse_wishart(target.prior2.nu + d1 * data.n, SpdMatrix(symm(scale2)), rng)
    return SeparableState(sigma1=sigma1, sigma2=sigma2)


# ---------------------------------------------------------------------------
# Step-size adaptation


@dataclass(frozen=True)
class DualAveragingState:
    """Dual-averaging recursion state for step-size adaptation."""

    mu: float
    log_eps: float
    log_eps_bar: float
    h_bar: float
    iteration: int
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def init(cls, eps0: float) -> "DualAveragingState":
        return cls(mu=math.log(10.0 * eps0), log_eps=math.log(eps0),
                   log_eps_bar=math.log(eps0), h_bar=0.0, iteration=0)

    @property
    def eps(self) -> float:
        return math.exp(self.log_eps)

    @property
    def eps_frozen(self) -> float:
        """Step size to use once adaptation has ended."""
        return math.exp(self.log_eps_bar)


def dual_averaging_update(da: DualAveragingState, accept_prob: float,
                          a0: float) -> tuple[DualAveragingState, float]:
    """Advance the recursion toward mean acceptance ``a0``; returns new eps."""
    if not 0.0 <= accept_prob <= 1.0:
        raise ConfigError(f"acceptance probability {accept_prob} outside [0, 1]")
    m = da.iteration + 1
    eta = 1.0 / (m + da.t0)
    h_bar = (1.0 - eta) * da.h_bar + eta * (a0 - accept_prob)
    log_eps = da.mu - math.sqrt(m) / da.gamma * h_bar
    w = m ** (-da.kappa)
    log_eps_bar = w * log_eps + (1.0 - w) * da.log_eps_bar
    new = replace(da, log_eps=log_eps, log_eps_bar=log_eps_bar, h_bar=h_bar, iteration=m)
    return new, math.exp(log_eps)


# ---------------------------------------------------------------------------
# Leapfrog policies


@dataclass(frozen=True)
class FixedSteps:
    l: int = 10


@dataclass(frozen=True)
class DynamicSteps:
    """Terminate on the log-map U-turn criterion, capped at ``l_max`` steps."""

    l_max: int = 1024


LeapfrogPolicy = Union[FixedSteps, DynamicSteps]


def dynamic_termination(start: SeparableState, current: SeparableState,
                        v: TangentPair, metric: MetricKind) -> bool:
    """Continue flag for the dynamic trajectory length rule.

    The geodesic from the current point back to the trajectory start has
    initial tangent ``W``; the trajectory continues while the metric inner
    product between the current velocity and ``-W`` (the direction away from
    the start) is nonnegative. Geometry failures terminate.
    """
    try:
        w1 = spd_log_map(current.sigma1, start.sigma1)
        w2 = spd_log_map(current.sigma2, start.sigma2)
        val = metric_inner(metric, current, v, TangentPair(v1=-w1, v2=-w2))
    except _NUMERICAL_FAILURES:
        return False
    return bool(val >= 0.0)


# ---------------------------------------------------------------------------
# SGLMC


@dataclass(frozen=True)
class ChainSample:
    """One retained draw with its proposal bookkeeping."""

    state: SeparableState
    accepted: bool
    delta_energy: float
    epsilon: float
    l_used: int


def _leapfrog(state: SeparableState, v: TangentPair, target: TargetDensity, eps: float,
              policy: LeapfrogPolicy, temper: float) -> tuple[SeparableState, TangentPair, float, int]:
    """Integrate the trajectory; returns (state, v, final potential, steps)."""
    kind = target.metric
    if isinstance(policy, FixedSteps):
        n_max = min(policy.l, _HARD_L_CAP)
        dynamic = False
    else:
        n_max = min(policy.l_max, _HARD_L_CAP)
        dynamic = True
    start = state
    u, grad = _potential_grad(target, state, temper)
    steps = 0
    for _ in range(n_max):
        kick = riemannian_grad(kind, state, (-grad[0], -grad[1]))
        v1 = v.v1 + 0.5 * eps * kick.v1
        v2 = v.v2 + 0.5 * eps * kick.v2
        if kind.constrained:
            v2 = project_tangent(state.sigma2, v2)
        sigma1, v1 = geodesic_flow(state.sigma1, v1, eps)
        sigma2, v2 = geodesic_flow(state.sigma2, v2, eps)
        state = SeparableState(sigma1=sigma1, sigma2=sigma2)
        u, grad = _potential_grad(target, state, temper)
        kick = riemannian_grad(kind, state, (-grad[0], -grad[1]))
        v1 = v1 + 0.5 * eps * kick.v1
        v2 = v2 + 0.5 * eps * kick.v2
        if kind.constrained:
            v2 = project_tangent(state.sigma2, v2)
        v = TangentPair(v1=v1, v2=v2)
        steps += 1
        if dynamic and not dynamic_termination(start, state, v, kind):
            break
    return state, v, u, steps


def sglmc_step(state: SeparableState, target: TargetDensity, eps: float,
               policy: LeapfrogPolicy, rng: np.random.Generator, *,
               temper: float = 1.0) -> ChainSample:
    """One SGLMC transition: sample velocity, integrate, Metropolis-correct.

    Velocity is always drawn (advancing the stream) before any evaluation, so
    rejected-on-error steps stay reproducible. ``temper`` scales the data and
    prior terms only; the metric term is left untouched.
    """
    if eps <= 0:
        raise ConfigError(f"step size must be positive, got {eps}")
    v = sample_velocity(target.metric, state, rng)
    try:
        # Overflow inside a trajectory is an expected rejection path (huge
        # trial steps during adaptation), not a warning-worthy event.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            u0, _ = _potential_grad(target, state, temper)
            h0 = u0 + kinetic_energy(target.metric, state, v)
            new_state, new_v, u1, steps = _leapfrog(state, v, target, eps, policy, temper)
            h1 = u1 + kinetic_energy(target.metric, new_state, new_v)
            delta = h1 - h0
        if not math.isfinite(delta):
            raise SepcovError(f"non-finite energy change {delta}")
    except _NUMERICAL_FAILURES + (SepcovError,):
        return ChainSample(state=state, accepted=False, delta_energy=math.inf,
                           epsilon=eps, l_used=0)
    accept = math.log(rng.uniform()) < -delta
    return ChainSample(state=new_state if accept else state, accepted=bool(accept),
                       delta_energy=float(delta), epsilon=eps, l_used=steps)


def accept_probability(sample: ChainSample) -> float:
    """min(1, exp(-delta_energy)), the dual-averaging feedback signal."""
    if not math.isfinite(sample.delta_energy):
        return 0.0
    return 1.0 if sample.delta_energy <= 0 else math.exp(-sample.delta_energy)


# ---------------------------------------------------------------------------
# Parallel tempering


def tempering_ladder(c1: float, n_chains: int) -> np.ndarray:
    """Geometric inverse-temperature ladder from ``c1`` up to exactly 1."""
    if not 0.0 < c1 <= 1.0:
        raise ConfigError(f"base inverse temperature must be in (0, 1], got {c1}")
    if n_chains < 2:
        raise ConfigError(f"tempering needs at least 2 chains, got {n_chains}")
    i = np.arange(n_chains)
    ladder = c1 * (1.0 / c1) ** (i / (n_chains - 1))
    ladder[0], ladder[-1] = c1, 1.0
    return ladder


def swap_accept(h_i: float, h_j: float, t_i: float, t_j: float,
                rng: np.random.Generator) -> bool:
    """Replica-exchange acceptance for adjacent chains.

    Accepts with probability ``min(1, exp((H_i - H_j) (1/T_i - 1/T_j)))``
    where ``H`` is the untempered potential energy of each chain's state.
    """
    log_ratio = (h_i - h_j) * (1.0 / t_i - 1.0 / t_j)
    if log_ratio >= 0:
        return True
    return bool(math.log(rng.uniform()) < log_ratio)


# ---------------------------------------------------------------------------
# Orchestration


@dataclass(frozen=True)
class Tempering:
    n_chains: int = 5
    c1: float = 0.5


@dataclass(frozen=True)
class SamplerConfig:
    """Run schedule and tuning parameters for one chain (or one ladder)."""

    n_adapt: int = 500
    n_burn: int = 500
    n_samples: int = 2000
    leapfrog: LeapfrogPolicy = field(default_factory=FixedSteps)
    epsilon0: float = 0.1
    target_accept: float = 0.8
    seed: int = 0
    tempering: Tempering | None = None
    sampler: str = "sglmc"

    def __post_init__(self):
        if min(self.n_adapt, self.n_burn, self.n_samples) < 0:
            raise ConfigError("iteration counts must be nonnegative")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError(f"target acceptance must be in (0, 1), got {self.target_accept}")
        if self.epsilon0 <= 0:
            raise ConfigError(f"initial step size must be positive, got {self.epsilon0}")
        if self.sampler not in ("sglmc", "gibbs"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.tempering is not None and self.sampler != "sglmc":
            raise ConfigError("tempering applies to the sglmc sampler only")


def _resolve_init(target: TargetDensity, init) -> SeparableState:
    state = init.state if isinstance(init, FlipFlopResult) else init
    if target.metric.constrained:
        state = normalize_component(state)
    return state


def run_chain(config: SamplerConfig, target: TargetDensity, init) -> list[ChainSample]:
    """Adapt, burn in, then sample; returns the retained cold-chain draws.

    Deterministic given ``config.seed``: one child RNG stream per tempering
    chain plus one stream for swap decisions, all split up front. Tempered
    ladders run in lockstep with one adjacent-pair swap proposal per
    iteration, and only the unit-temperature chain is recorded.
    """
    init_state = _resolve_init(target, init)
    root = np.random.SeedSequence(config.seed)
    if config.sampler == "gibbs":
        rng = np.random.default_rng(root)
        state = init_state
        out = []
        for it in range(config.n_adapt + config.n_burn + config.n_samples):
            state = gibbs_step(state, target, rng)
            if it >= config.n_adapt + config.n_burn:
                out.append(ChainSample(state=state, accepted=True, delta_energy=0.0,
                                       epsilon=0.0, l_used=0))
        return out

    n_chains = config.tempering.n_chains if config.tempering else 1
    ladder = tempering_ladder(config.tempering.c1, n_chains) if config.tempering else np.array([1.0])
    streams = root.spawn(n_chains + 1)
    chain_rngs = [np.random.default_rng(s) for s in streams[:n_chains]]
    swap_rng = np.random.default_rng(streams[-1])
    cold = n_chains - 1

    states = [init_state] * n_chains
    das = [DualAveragingState.init(config.epsilon0) for _ in range(n_chains)]
    eps = [config.epsilon0] * n_chains
    out: list[ChainSample] = []
    total = config.n_adapt + config.n_burn + config.n_samples
    for it in range(total):
        adapting = it < config.n_adapt
        cold_sample = None
        for c in range(n_chains):
            step = sglmc_step(states[c], target, eps[c], config.leapfrog, chain_rngs[c],
                              temper=float(ladder[c]))
            states[c] = step.state
            if adapting:
                das[c], eps[c] = dual_averaging_update(das[c], accept_probability(step),
                                                       config.target_accept)
                if it == config.n_adapt - 1:
                    eps[c] = das[c].eps_frozen
            if c == cold:
                cold_sample = step
        if n_chains > 1:
            j = int(swap_rng.integers(0, n_chains - 1))
            h_j = -target.log_target(states[j])
            h_j1 = -target.log_target(states[j + 1])
            if swap_accept(h_j, h_j1, 1.0 / ladder[j], 1.0 / ladder[j + 1], swap_rng):
                states[j], states[j + 1] = states[j + 1], states[j]
        if it >= config.n_adapt + config.n_burn:
            out.append(replace(cold_sample, state=states[cold]))
    return out

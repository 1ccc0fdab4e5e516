"""Bayesian inference for Kronecker-separable covariance matrices.

Conjugate Gibbs sampling and separable geodesic Lagrangian Monte Carlo
(SGLMC) over four Riemannian metric variants, with step-size adaptation,
dynamic trajectory termination, parallel tempering, and chain diagnostics.
"""

from .geometry import SpdMatrix, geodesic_step, spd_eig, spd_fn, spd_log_map, velocity_flow
from .metrics import MetricKind, TangentPair
from .model import (Dataset, InverseWishartPrior, ReferencePrior, ScaleMarginalizedIwPair,
                    SeparableState, ShrinkageInverseWishartPrior, dataset_from_observations,
                    default_generation_prior, default_inference_prior, flipflop_mle,
                    normalize_component, sample_inverse_wishart, sample_matrix_normal)
from .samplers import (ChainSample, DynamicSteps, FixedSteps, SamplerConfig,
                       TargetDensity, Tempering, gibbs_step, run_chain, sglmc_step,
                       target_eval)
from .diagnostics import SummaryRecord, acf, ess, summarize, two_sample_ks

__version__ = "0.1.0"

__all__ = [
    "SpdMatrix", "SeparableState", "TangentPair", "MetricKind", "Dataset",
    "InverseWishartPrior", "ShrinkageInverseWishartPrior", "ReferencePrior",
    "ScaleMarginalizedIwPair",
    "dataset_from_observations", "sample_matrix_normal", "sample_inverse_wishart",
    "default_inference_prior", "default_generation_prior", "flipflop_mle",
    "normalize_component", "spd_eig", "spd_fn", "geodesic_step", "velocity_flow",
    "spd_log_map", "TargetDensity", "SamplerConfig", "Tempering", "FixedSteps",
    "DynamicSteps", "ChainSample", "gibbs_step", "sglmc_step", "target_eval",
    "run_chain", "SummaryRecord", "summarize", "acf", "ess", "two_sample_ks",
]

"""Chain summaries, autocorrelation, effective sample size, distribution tests."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import SepcovError
from .geometry import spd_eig
from .model import SeparableState

#: Ceiling on ESS relative to the chain length; anticorrelated chains can be
#: super-efficient, but the estimator is clipped at 3n.
ESS_MAX_FACTOR = 3.0


@dataclass(frozen=True)
class SummaryRecord:
    """Per-sample scalar summaries of one separable state.

    Kronecker-level statistics are derived through the mixed identities
    ``tr(S1 (x) S2) = tr(S1) tr(S2)`` and
    ``log|S1 (x) S2| = d2 log|S1| + d1 log|S2|``; the full product is never
    materialized.
    """

    tr1: float
    tr2: float
    tr_kron: float
    logdet1: float
    logdet2: float
    logdet_kron: float
    cond1: float
    cond2: float

    @classmethod
    def column_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


def summarize(state: SeparableState) -> SummaryRecord:
    """Scalar summaries (traces, log-determinants, condition numbers)."""
    d1, d2 = state.dims
    lam1, _ = spd_eig(state.sigma1)
    lam2, _ = spd_eig(state.sigma2)
    tr1, tr2 = float(lam1.sum()), float(lam2.sum())
    logdet1, logdet2 = float(np.log(lam1).sum()), float(np.log(lam2).sum())
    return SummaryRecord(
        tr1=tr1, tr2=tr2, tr_kron=tr1 * tr2,
        logdet1=logdet1, logdet2=logdet2,
        logdet_kron=d2 * logdet1 + d1 * logdet2,
        cond1=float(lam1[0] / lam1[-1]), cond2=float(lam2[0] / lam2[-1]),
    )


def acf(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation for lags 0..max_lag (biased 1/n autocovariance).

    ``acf[0] == 1``. A zero-variance series returns 1 followed by zeros.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n <= max_lag:
        raise SepcovError(f"series of length {n} too short for max_lag {max_lag}")
    xc = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(max(2 * n, 2))))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    if acov[0] <= 0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    return acov / acov[0]


def ess(values: np.ndarray) -> float:
    """Effective sample size via initial-positive-sequence truncation.

    ``n / (1 + 2 sum rho_k)``, summing autocorrelations while the pair sums
    ``rho_{2m} + rho_{2m+1}`` stay positive. Clipped to ``3 n``; a constant
    series returns NaN (reports show a dash for pinned statistics).
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 10:
        raise SepcovError(f"series of length {n} too short for an ESS estimate")
    if np.ptp(x) == 0.0:
        return float("nan")
    rho = acf(x, n - 1)
    tau = 0.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        m += 1
    tau -= 1.0
    tau = max(tau, 1.0 / ESS_MAX_FACTOR)
    return float(min(n / tau, ESS_MAX_FACTOR * n))


def two_sample_ks(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup distance of empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise SepcovError("KS statistic needs nonempty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())

"""Effective sample size, cost per effective draw, KS tests, bootstrap CIs.

Two ESS estimators are provided. The autocorrelation estimator works on a
single series and truncates the lag sum by Geyer's initial positive sequence
rule. The error-based estimator needs the true mean and standard deviation;
it squares the ratio of true spread to the cross-chain RMS error, so unlike
the autocorrelation version it punishes sampling the wrong distribution, not
just slow mixing. Undefined quantities are reported as NaN flags rather than
raised.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MIN_CHAINS_FOR_ERROR_ESS = 8
MIN_BOOTSTRAP_RESAMPLES = 200


def autocorrelations(values: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation function of a 1-D series (FFT-based, exact)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    centered = values - values.mean()
    size = 1
    while size < 2 * n:
        size <<= 1
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n].real / n
    if acov[0] <= 0.0:
        return np.full(n, np.nan)
    return acov / acov[0]


def autocorr_ess(values) -> float:
    """ESS = N / (1 + 2 sum rho_t), truncated by Geyer pairs.

    Consecutive-lag pairs (rho_{2m} + rho_{2m+1}) are summed while positive;
    the estimate is capped at N. A constant (zero-variance) series has no
    defined ESS and comes back as NaN.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 10:
        raise ValueError(f"series too short for an ESS estimate: {n}")
    if not np.all(np.isfinite(values)):
        raise ValueError("series contains non-finite values")
    if values.std() == 0.0:
        return float("nan")
    rho = autocorrelations(values)
    pair_sum = 0.0
    m = 0
    while 2 * m + 1 < n:
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        pair_sum += gamma
        m += 1
    tau = max(2.0 * pair_sum - 1.0, 1.0)
    return min(float(n), n / tau)


def pooled_autocorr_ess(chains) -> float:
    """Per-chain ESS summed over chains; NaN if any chain is undefined."""
    total = 0.0
    for series in chains:
        ess = autocorr_ess(series)
        if math.isnan(ess):
            return float("nan")
        total += ess
    return total


def error_based_ess(estimates, true_mean: float, true_sd: float) -> float:
    """Per-chain ESS backed out of cross-chain errors: (true_sd / se)^2.

    ``estimates`` holds one posterior-mean estimate per independent chain;
    ``se`` is the RMS of their errors against the known true mean, so bias
    inflates the error and deflates the ESS. Needs at least
    ``MIN_CHAINS_FOR_ERROR_ESS`` chains for se to be usable. Returns +inf
    when every chain is exactly right, and warns when the estimates carry no
    cross-chain variance at all (e.g. one chain duplicated).
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.ndim != 1 or estimates.size < MIN_CHAINS_FOR_ERROR_ESS:
        raise ValueError(f"need at least {MIN_CHAINS_FOR_ERROR_ESS} chain estimates")
    if np.ptp(estimates) == 0.0:
        warnings.warn("zero cross-chain variance; error-based ESS is unreliable", stacklevel=2)
    se_sq = float(np.mean((estimates - true_mean) ** 2))
    if se_sq == 0.0:
        return float("inf")
    return true_sd * true_sd / se_sq


def cost_per_ess(n_evals: float, ess: float) -> float:
    """Joint evaluations per effective draw; NaN propagates from undefined ESS."""
    if math.isnan(ess):
        return float("nan")
    if ess <= 0:
        raise ValueError(f"ess must be positive, got {ess}")
    return n_evals / ess


def _kolmogorov_sf(t: float) -> float:
    """Survival function of the Kolmogorov distribution, 2 sum (-1)^(j-1) exp(-2 j^2 t^2)."""
    if t <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 101):
        term = math.exp(-2.0 * j * j * t * t)
        total += sign * term
        if term < 1e-14:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(samples, reference_cdf) -> tuple[float, float]:
    """One-sample KS statistic and its asymptotic p-value.

    The p-value uses the Kolmogorov series with the small-sample effective
    size correction sqrt(n) + 0.12 + 0.11/sqrt(n). The independence
    assumption is the caller's responsibility; thin autocorrelated chains
    first.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 100:
        raise ValueError(f"need at least 100 samples for a KS test, got {n}")
    ordered = np.sort(samples)
    cdf = np.asarray(reference_cdf(ordered), dtype=float)
    grid = np.arange(1, n + 1) / n
    d_plus = float(np.max(grid - cdf))
    d_minus = float(np.max(cdf - (np.arange(n) / n)))
    stat = max(d_plus, d_minus)
    root_n = math.sqrt(n)
    p_value = _kolmogorov_sf((root_n + 0.12 + 0.11 / root_n) * stat)
    return stat, p_value


def tail_ks_statistic(samples, reference_cdf, threshold: float):
    """KS test restricted to |value| > threshold, against the conditional CDF.

    Returns (statistic, p_value, n_tail); an empty tail subset is flagged as
    (nan, nan, 0) rather than raised.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    samples = np.asarray(samples, dtype=float)
    subset = samples[np.abs(samples) > threshold]
    lower = float(reference_cdf(np.array([-threshold]))[0])
    upper = float(reference_cdf(np.array([threshold]))[0])
    mass = lower + (1.0 - upper)
    if subset.size < 100 or mass <= 0.0:
        return float("nan"), float("nan"), int(subset.size)

    def conditional_cdf(x):
        x = np.asarray(x, dtype=float)
        base = np.asarray(reference_cdf(x), dtype=float)
        out = np.where(x < -threshold, base, lower)
        out = np.where(x > threshold, lower + base - upper, out)
        return out / mass

    stat, p_value = ks_statistic(subset, conditional_cdf)
    return stat, p_value, int(subset.size)


def normal_cdf(x, mean: float = 0.0, sd: float = 1.0):
    """Vectorized normal CDF, handy as a KS reference."""
    from scipy.special import ndtr

    return ndtr((np.asarray(x, dtype=float) - mean) / sd)


def bootstrap_cost(chains, n_resamples: int, statistic, seed: int = 0):
    """Bootstrap a cost statistic over chains: (mean, central 68% interval).

    ``statistic`` maps a list of chains to a scalar; chains are resampled
    with replacement. Identical chains give a zero-width interval.
    """
    chains = list(chains)
    if len(chains) < MIN_CHAINS_FOR_ERROR_ESS:
        raise ValueError(f"need at least {MIN_CHAINS_FOR_ERROR_ESS} chains to bootstrap")
    if n_resamples < MIN_BOOTSTRAP_RESAMPLES:
        raise ValueError(f"need at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {n_resamples}")
    rng = np.random.default_rng(seed)
    n = len(chains)
    values = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        values[b] = statistic([chains[i] for i in idx])
    low, high = np.percentile(values, [16.0, 84.0])
    return float(values.mean()), (float(low), float(high))


@dataclass
class EssReport:
    """Cost summary for one scalar functional of one sampler cell."""

    ess_r: float
    ess_c: float
    n_evals: int
    cost_r: float
    cost_c: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ess_r": self.ess_r,
            "ess_c": self.ess_c,
            "n_evals": self.n_evals,
            "cost_r": self.cost_r,
            "cost_c": self.cost_c,
            "flags": list(self.flags),
        }


def ess_report(chain_series, n_evals: int, true_mean=None, true_sd=None) -> EssReport:
    """Combine both ESS estimates and their costs for one functional.

    ``chain_series`` is a list of per-chain 1-D arrays of the functional's
    draws. ESS values are totals across chains (per-chain estimates summed
    for the autocorrelation version, multiplied by the chain count for the
    error-based one). The error-based entries are NaN when true moments are
    not supplied.
    """
    chain_series = [np.asarray(s, dtype=float) for s in chain_series]
    flags = []
    ess_r = pooled_autocorr_ess(chain_series)
    if math.isnan(ess_r):
        flags.append("ess_r_undefined")
    ess_c = float("nan")
    if true_mean is not None and true_sd is not None:
        estimates = np.array([s.mean() for s in chain_series])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            per_chain = error_based_ess(estimates, true_mean, true_sd)
        if caught:
            flags.append("zero_cross_chain_variance")
        ess_c = per_chain * len(chain_series)
        if math.isinf(ess_c):
            flags.append("ess_c_infinite")
    cost_r = cost_per_ess(n_evals, ess_r) if not math.isnan(ess_r) else float("nan")
    if math.isnan(ess_c) or math.isinf(ess_c):
        cost_c = 0.0 if math.isinf(ess_c) else float("nan")
    else:
        cost_c = cost_per_ess(n_evals, ess_c)
    return EssReport(ess_r=ess_r, ess_c=ess_c, n_evals=int(n_evals),
                     cost_r=cost_r, cost_c=cost_c, flags=flags)

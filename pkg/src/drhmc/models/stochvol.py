"""Stochastic volatility model: AR(1) log-volatility driving observed returns.

Generative model for returns ``y_t`` at T time points::

    mu ~ Cauchy(0, 10);  sigma ~ half-Cauchy(0, 5);  phi ~ uniform(-1, 1)
    h_1 ~ N(mu, sigma^2 / (1 - phi^2))
    h_t ~ N(mu + phi (h_{t-1} - mu), sigma^2)
    y_t ~ N(0, exp(h_t))

The sampler works on ``(mu, log_sigma, atanh_phi, h_1..h_T)``; both transforms
carry their Jacobian terms, so dim = T + 3 and the density is finite
everywhere. Not multiscale, but high-dimensional with strongly correlated
latents.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from ._dists import LOG_TWO_PI, log_cauchy, log_half_cauchy
from .base import TargetModel

MU_PRIOR_SCALE = 10.0
SIGMA_PRIOR_SCALE = 5.0

# Desk-scale synthetic series: persistence high enough to be realistic while
# keeping the latent chain well identified.
SYNTHETIC_T = 100
SYNTHETIC_PARAMS = (-1.0, 0.3, 0.95)
SYNTHETIC_SEED = 20240809


def simulate_returns(seed, n_steps, mu, sigma, phi):
    """Simulate (returns, log_volatilities) from the generative model.

    ``sigma = 0`` is allowed and pins every h_t at mu; ``|phi| >= 1`` and
    negative sigma are rejected. Deterministic given the seed.
    """
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if not (abs(phi) < 1):
        raise ValueError(f"phi must lie in (-1, 1), got {phi}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    rng = np.random.default_rng(seed)
    h = np.empty(n_steps)
    h[0] = mu + sigma / math.sqrt(1.0 - phi * phi) * rng.standard_normal()
    for t in range(1, n_steps):
        h[t] = mu + phi * (h[t - 1] - mu) + sigma * rng.standard_normal()
    returns = np.exp(h / 2.0) * rng.standard_normal(n_steps)
    return returns, h


def load_returns_data(path):
    """Read the y column from a CSV file of returns."""
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    return np.array([float(r["y"]) for r in rows])


class StochVol(TargetModel):
    name = "stoch_vol"

    def __init__(self, returns):
        returns = np.asarray(returns, dtype=float)
        if returns.ndim != 1 or returns.size < 1:
            raise ValueError("need at least one return observation")
        super().__init__(returns.size + 3)
        self.returns = returns

    @classmethod
    def synthetic(cls, n_steps=SYNTHETIC_T, mu=None, sigma=None, phi=None, seed=SYNTHETIC_SEED):
        m, s, p = SYNTHETIC_PARAMS
        returns, _ = simulate_returns(
            seed,
            n_steps,
            m if mu is None else mu,
            s if sigma is None else sigma,
            p if phi is None else phi,
        )
        return cls(returns)

    def _logp_grad(self, q):
        mu, log_sigma, raw_phi = q[0], q[1], q[2]
        h = q[3:]
        y = self.returns
        n = h.size
        sigma = np.exp(log_sigma)
        s2 = sigma * sigma
        phi = np.tanh(raw_phi)
        omp2 = 1.0 - phi * phi  # also the Jacobian of the tanh transform

        logp = log_cauchy(mu, MU_PRIOR_SCALE)
        logp += log_half_cauchy(sigma, SIGMA_PRIOR_SCALE) + log_sigma
        logp += math.log(0.5) + np.log(omp2)

        r1 = h[0] - mu
        logp += -0.5 * r1 * r1 * omp2 / s2 - 0.5 * (np.log(s2) - np.log(omp2) + LOG_TWO_PI)
        if n > 1:
            prev = h[:-1] - mu
            innov = h[1:] - mu - phi * prev
            logp += -0.5 * float(innov @ innov) / s2 - 0.5 * (n - 1) * (np.log(s2) + LOG_TWO_PI)
        else:
            prev = np.zeros(0)
            innov = np.zeros(0)
        obs_quad = y * y * np.exp(-h)
        logp += -0.5 * float(obs_quad.sum()) - 0.5 * float(h.sum()) - 0.5 * n * LOG_TWO_PI

        grad = np.empty_like(q)
        mscale2 = MU_PRIOR_SCALE * MU_PRIOR_SCALE
        grad[0] = -2.0 * mu / (mscale2 + mu * mu) + r1 * omp2 / s2 + (1.0 - phi) * float(innov.sum()) / s2
        sscale2 = SIGMA_PRIOR_SCALE * SIGMA_PRIOR_SCALE
        grad[1] = (
            -2.0 * s2 / (sscale2 + s2)
            + 1.0
            + (r1 * r1 * omp2 / s2 - 1.0)
            + (float(innov @ innov) / s2 - (n - 1))
        )
        # d/dphi of the Jacobian, the h_1 terms, and the AR terms, then chain
        # rule through dphi/draw = 1 - phi^2.
        grad[2] = -3.0 * phi + omp2 * (r1 * r1 * phi / s2 + float(innov @ prev) / s2)
        dh = 0.5 * obs_quad - 0.5
        dh[0] += -r1 * omp2 / s2
        if n > 1:
            dh[1:] += -innov / s2
            dh[:-1] += phi * innov / s2
        grad[3:] = dh
        return logp, grad

"""Univariate Gaussian mixture with components of very different scales."""

from __future__ import annotations

import math

import numpy as np

from ._dists import LOG_TWO_PI
from .base import TargetModel

# Two equally weighted components an order of magnitude apart in scale: the
# narrow one forces a small step size that is wasteful on the wide one.
DEFAULT_WEIGHTS = (0.5, 0.5)
DEFAULT_LOCATIONS = (0.0, 3.0)
DEFAULT_SCALES = (0.1, 1.0)


class GaussianMixture(TargetModel):
    """sum_i w_i N(theta | mu_i, s_i^2) on the real line.

    The log density is assembled with log-sum-exp; the gradient uses the
    posterior component responsibilities, so both stay finite far into the
    tails.
    """

    name = "mixture"

    def __init__(self, weights=DEFAULT_WEIGHTS, locations=DEFAULT_LOCATIONS, scales=DEFAULT_SCALES):
        weights = np.asarray(weights, dtype=float)
        locations = np.asarray(locations, dtype=float)
        scales = np.asarray(scales, dtype=float)
        if not (weights.shape == locations.shape == scales.shape) or weights.ndim != 1:
            raise ValueError("weights, locations, scales must be 1-D and the same length")
        if weights.size < 1:
            raise ValueError("mixture needs at least one component")
        if np.any(weights <= 0):
            raise ValueError("all weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-8:
            raise ValueError(f"weights must sum to 1, got {weights.sum()}")
        if np.any(scales <= 0):
            raise ValueError("all scales must be positive")
        super().__init__(1)
        self.weights = weights
        self.locations = locations
        self.scales = scales
        self._var = scales * scales
        self._parts = [
            (math.log(w), float(mu), float(v), math.log(v))
            for w, mu, v in zip(weights, locations, self._var)
        ]

    def _logp_grad(self, q):
        # scalar arithmetic: this sits inside every leapfrog step and numpy
        # overhead on length-2 arrays dominates the whole sampler otherwise
        theta = float(q[0])
        comp = [
            lw - 0.5 * (theta - mu) * (theta - mu) / v - 0.5 * (lv + LOG_TWO_PI)
            for lw, mu, v, lv in self._parts
        ]
        top = max(comp)
        logp = top + math.log(math.fsum(math.exp(c - top) for c in comp))
        grad = math.fsum(
            math.exp(c - logp) * (mu - theta) / v
            for c, (_, mu, v, _) in zip(comp, self._parts)
        )
        return logp, np.array([grad])

    def reference_sample(self, rng, n):
        idx = rng.choice(self.weights.size, size=n, p=self.weights)
        return (self.locations[idx] + self.scales[idx] * rng.standard_normal(n))[:, None]

    def true_moments(self):
        w, mu, var = self.weights, self.locations, self._var
        m1 = float(w @ mu)
        m2 = float(w @ (mu * mu + var))
        m4 = float(w @ (mu**4 + 6.0 * mu * mu * var + 3.0 * var * var))
        mean = np.array([m1])
        sd = np.array([math.sqrt(m2 - m1 * m1)])
        mean_sq = np.array([m2])
        sd_sq = np.array([math.sqrt(m4 - m2 * m2)])
        return mean, sd, mean_sq, sd_sq

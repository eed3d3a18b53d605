"""Isotropic Gaussian target, used for audits and well-conditioned baselines."""

from __future__ import annotations

import math

import numpy as np

from ._dists import LOG_TWO_PI
from .base import TargetModel


class IidGaussian(TargetModel):
    """Independent N(0, sd^2) coordinates."""

    name = "normal"

    def __init__(self, dim: int = 1, sd: float = 1.0):
        if not (sd > 0 and math.isfinite(sd)):
            raise ValueError(f"sd must be positive and finite, got {sd}")
        super().__init__(dim)
        self.sd = float(sd)

    def _logp_grad(self, q):
        var = self.sd * self.sd
        logp = -0.5 * float(q @ q) / var - 0.5 * self._dim * (math.log(var) + LOG_TWO_PI)
        return logp, -q / var

    def reference_sample(self, rng, n):
        return self.sd * rng.standard_normal((n, self._dim))

    def true_moments(self):
        var = self.sd * self.sd
        mean = np.zeros(self._dim)
        sd = np.full(self._dim, self.sd)
        mean_sq = np.full(self._dim, var)
        sd_sq = np.full(self._dim, math.sqrt(2.0) * var)
        return mean, sd, mean_sq, sd_sq

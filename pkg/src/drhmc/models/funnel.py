"""Funnel-shaped Gaussian scale hierarchy.

The first coordinate is a log-scale parameter and the remaining ones are
conditionally normal with variance ``exp(q[0])``::

    q[0]         ~ N(0, sigma^2)
    q[i] | q[0]  ~ N(0, exp(q[0]))    for i >= 1

The conditional curvature ``exp(-q[0])`` spans many orders of magnitude along
the scale axis, which is what defeats fixed-step-size samplers. An exact
sampler exists via the non-centered construction, so true moments and
reference draws are available for calibration.
"""

from __future__ import annotations

import math

import numpy as np

from ._dists import LOG_TWO_PI
from .base import TargetModel


class Funnel(TargetModel):
    name = "funnel"

    def __init__(self, dim: int = 2, sigma: float = 3.0):
        if dim < 2:
            raise ValueError(f"funnel needs dim >= 2, got {dim}")
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be positive and finite, got {sigma}")
        super().__init__(dim)
        self.sigma = float(sigma)

    def _logp_grad(self, q):
        scale, rest = q[0], q[1:]
        s2 = self.sigma * self.sigma
        m = self._dim - 1
        # exp overflows to +inf for very negative scale; base class poisons that.
        inv_var = np.exp(-scale)
        sumsq = float(rest @ rest)
        logp = (
            -0.5 * scale * scale / s2
            - 0.5 * (math.log(s2) + LOG_TWO_PI)
            - 0.5 * inv_var * sumsq
            - 0.5 * m * scale
            - 0.5 * m * LOG_TWO_PI
        )
        grad = np.empty_like(q)
        grad[0] = -scale / s2 + 0.5 * inv_var * sumsq - 0.5 * m
        grad[1:] = -rest * inv_var
        return logp, grad

    def reference_sample(self, rng, n):
        scale = self.sigma * rng.standard_normal(n)
        rest = np.exp(scale / 2.0)[:, None] * rng.standard_normal((n, self._dim - 1))
        return np.column_stack([scale, rest])

    def true_moments(self):
        s2 = self.sigma * self.sigma
        # E[exp(k * q0)] = exp(k^2 sigma^2 / 2) gives the lognormal moments of q[i].
        e1 = math.exp(s2 / 2.0)
        e2 = math.exp(2.0 * s2)
        mean = np.zeros(self._dim)
        sd = np.full(self._dim, math.sqrt(e1))
        sd[0] = self.sigma
        mean_sq = np.full(self._dim, e1)
        mean_sq[0] = s2
        sd_sq = np.full(self._dim, math.sqrt(3.0 * e2 - e1 * e1))
        sd_sq[0] = math.sqrt(2.0) * s2
        return mean, sd, mean_sq, sd_sq

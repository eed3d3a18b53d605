"""Hierarchical normal meta-analysis of school-level treatment effects.

Parameter vector on unconstrained space: ``(mu, log_tau, theta_1..theta_n)``.
The group scale tau is sampled as ``log_tau`` with its Jacobian term added, so
the density is finite for every real input. Priors: ``mu ~ N(0, 5^2)``,
``tau ~ half-Cauchy(0, 5)``, ``theta_i ~ N(mu, tau^2)``; observations
``y_i ~ N(theta_i, sigma_i^2)``. The small-tau ridge gives this posterior its
funnel-like geometry.
"""

from __future__ import annotations

import csv
from importlib import resources

import numpy as np

from ._dists import LOG_TWO_PI, log_half_cauchy, log_normal
from .base import TargetModel

MU_PRIOR_VAR = 25.0
TAU_PRIOR_SCALE = 5.0


def load_school_data(path=None):
    """Read (y, sigma) columns from a CSV file; defaults to the packaged dataset."""
    if path is None:
        source = resources.files("drhmc.models").joinpath("data/eight_schools.csv")
        text = source.read_text(encoding="utf-8")
        rows = list(csv.DictReader(text.splitlines()))
    else:
        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))
    y = np.array([float(r["y"]) for r in rows])
    sigma = np.array([float(r["sigma"]) for r in rows])
    return y, sigma


class EightSchools(TargetModel):
    name = "eight_schools"

    def __init__(self, y=None, sigma=None):
        if y is None or sigma is None:
            if y is not None or sigma is not None:
                raise ValueError("pass both y and sigma, or neither")
            y, sigma = load_school_data()
        y = np.asarray(y, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if y.shape != sigma.shape or y.ndim != 1 or y.size < 1:
            raise ValueError("y and sigma must be matching 1-D arrays")
        if np.any(sigma <= 0):
            raise ValueError("all observation scales must be positive")
        super().__init__(2 + y.size)
        self.y = y
        self.sigma = sigma
        self._obs_var = sigma * sigma

    def _logp_grad(self, q):
        mu, log_tau = q[0], q[1]
        effects = q[2:]
        n = effects.size
        tau = np.exp(log_tau)
        tau2 = tau * tau

        centered = effects - mu
        resid = self.y - effects
        logp = log_normal(mu, 0.0, MU_PRIOR_VAR)
        logp += log_half_cauchy(tau, TAU_PRIOR_SCALE) + log_tau
        logp += -0.5 * float(centered @ centered) / tau2 - n * log_tau - 0.5 * n * LOG_TWO_PI
        logp += (
            -0.5 * float(resid @ (resid / self._obs_var))
            - 0.5 * float(np.log(self._obs_var).sum())
            - 0.5 * n * LOG_TWO_PI
        )

        grad = np.empty_like(q)
        grad[0] = -mu / MU_PRIOR_VAR + float(centered.sum()) / tau2
        scale2 = TAU_PRIOR_SCALE * TAU_PRIOR_SCALE
        grad[1] = 1.0 - 2.0 * tau2 / (scale2 + tau2) + float(centered @ centered) / tau2 - n
        grad[2:] = -centered / tau2 + resid / self._obs_var
        return logp, grad

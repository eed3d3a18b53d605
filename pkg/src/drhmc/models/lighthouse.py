"""Cauchy position/scale posterior for flashes observed along a coastline.

A source at alongshore position x0 and offshore distance y emits flashes in
uniformly random directions; each lands on the shore Cauchy-distributed
around x0 with scale y. Parameters are ``(x0, log_y)`` with flat priors, the
log transform contributing its Jacobian term.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .base import TargetModel

DEFAULT_FLASHES = (0.9, 1.2, 1.21)


def load_flash_data(path):
    """Read the x column from a CSV file of flash positions."""
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    return np.array([float(r["x"]) for r in rows])


class Lighthouse(TargetModel):
    name = "lighthouse"

    def __init__(self, flashes=DEFAULT_FLASHES):
        flashes = np.asarray(flashes, dtype=float)
        if flashes.ndim != 1 or flashes.size < 1:
            raise ValueError("need at least one flash position")
        super().__init__(2)
        self.flashes = flashes

    def _logp_grad(self, q):
        x0, log_y = q
        y = np.exp(log_y)
        y2 = y * y
        offset = self.flashes - x0
        denom = y2 + offset * offset
        n = self.flashes.size
        logp = n * (log_y - math.log(math.pi)) - float(np.log(denom).sum()) + log_y
        grad = np.array([
            float((2.0 * offset / denom).sum()),
            n - float((2.0 * y2 / denom).sum()) + 1.0,
        ])
        return logp, grad

"""Target-density interface shared by all benchmark models."""

from __future__ import annotations

import math
import threading

import numpy as np


class TargetModel:
    """A differentiable unnormalized log density on R^d.

    Subclasses implement ``_logp_grad(q)`` returning the joint
    ``(log density, gradient)`` at a point. The public :meth:`logp_grad`
    wrapper sanitizes non-finite results to ``(-inf, zeros)`` and bumps
    :attr:`eval_count` by exactly one per joint evaluation, which is the unit
    the cost diagnostics are measured in. Instances are immutable apart from
    that counter, which is lock-protected so concurrent chains may share a
    model.
    """

    name = "target"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self._dim = int(dim)
        self._eval_count = 0
        self._count_lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def eval_count(self) -> int:
        """Number of joint (log density + gradient) evaluations so far."""
        return self._eval_count

    def logp_grad(self, q) -> tuple[float, np.ndarray]:
        """Evaluate log density and gradient jointly at ``q``.

        Overflow or invalid intermediate values never raise; they map to
        ``(-inf, zeros)``. A call with non-finite input returns the same
        without touching the model (and without counting: nothing was
        evaluated). Finiteness is screened through sums of squares, so
        magnitudes past sqrt(float max) also poison; any honest log density
        is -inf out there in double precision anyway.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self._dim,):
            raise ValueError(f"expected shape ({self._dim},), got {q.shape}")
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            if not math.isfinite(float(q @ q)):
                return -np.inf, np.zeros(self._dim)
            logp, grad = self._logp_grad(q)
            logp = float(logp)
            grad = np.asarray(grad, dtype=float)
            if not (math.isfinite(logp) and math.isfinite(float(grad @ grad))):
                logp = -np.inf
                grad = np.zeros(self._dim)
        with self._count_lock:
            self._eval_count += 1
        return logp, grad

    def _logp_grad(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def true_moments(self):
        """Closed-form per-coordinate moments, or None when not available.

        Returns ``(mean, sd, mean_sq, sd_sq)`` arrays of length ``dim``:
        moments of each coordinate and of its square.
        """
        return None

    def reference_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` exact iid samples, shape ``(n, dim)``, where supported."""
        raise NotImplementedError(f"model '{self.name}' has no exact sampler")


def check_gradient(model: TargetModel, q, h: float = 1e-5) -> float:
    """Worst per-coordinate disagreement between analytic and central-difference gradients.

    The per-coordinate error is ``|fd - analytic| / max(1, |fd|, |analytic|)``
    so near-zero components are compared absolutely. Non-finite entries are
    reported as ``inf`` rather than raised.
    """
    q = np.asarray(q, dtype=float)
    logp0, grad = model.logp_grad(q)
    if not np.isfinite(logp0):
        return np.inf
    worst = 0.0
    for j in range(model.dim):
        step = np.zeros(model.dim)
        step[j] = h
        lp_hi, _ = model.logp_grad(q + step)
        lp_lo, _ = model.logp_grad(q - step)
        fd = (lp_hi - lp_lo) / (2.0 * h)
        if not (np.isfinite(fd) and np.isfinite(grad[j])):
            return np.inf
        scale = max(1.0, abs(fd), abs(grad[j]))
        worst = max(worst, abs(fd - grad[j]) / scale)
    return worst

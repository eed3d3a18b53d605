"""Shared test utilities: toy models, a definitional acceptance oracle, thinning."""

import math

import numpy as np

from drhmc.models import TargetModel
from drhmc.phase import hamiltonian, stage_map
from drhmc.sampler import LOG_ONE_MINUS_ALPHA_FLOOR, log1mexp


class FlatModel(TargetModel):
    """Constant density: zero potential everywhere."""

    name = "flat"

    def __init__(self, dim=1):
        super().__init__(dim)

    def _logp_grad(self, q):
        return 0.0, np.zeros(q.size)


def thin_by_autocorr(values):
    """Subsample a chain down to roughly independent draws.

    The KS p-value assumes iid samples; thinning by the integrated
    autocorrelation time (estimated from the chain itself) restores that.
    """
    from drhmc.diagnostics import autocorr_ess

    values = np.asarray(values, dtype=float)
    ess = autocorr_ess(values)
    if math.isnan(ess):
        return values
    stride = max(1, math.ceil(values.size / ess))
    return values[::stride]


def _retry_term(log_alpha, config):
    if config.retry_rule == "one-minus-alpha":
        return log1mexp(min(log_alpha, 0.0))
    return math.log(config.retry_prob)


def brute_force_log_alpha(x, stage, config, model):
    """Definitional stage acceptance: every phase point recomputed, no caching.

    Fully written-out enumerations for stages 1..3 (the 2, 4, and 8 point
    trees), sharing only the flow-map primitive with the production path.
    """
    if stage not in (1, 2, 3):
        raise ValueError("oracle written out for stages 1..3 only")

    def apply_map(point, j):
        return stage_map(point, config.step_size, config.n_steps, config.shrink,
                         j, config.mass, model)[0]

    def lp(point):
        # log of the joint Gibbs density, up to its constant
        return -hamiltonian(point, config.mass)

    def floor(v):
        return max(v, LOG_ONE_MINUS_ALPHA_FLOOR)

    if stage == 1:
        s = apply_map(x, 1)
        return min(0.0, lp(s) - lp(x))

    if stage == 2:
        s = apply_map(x, 1)
        y = apply_map(x, 2)
        ghost = apply_map(y, 1)
        if lp(y) == -np.inf:
            return -np.inf
        la1_x = min(0.0, lp(s) - lp(x))
        la1_y = min(0.0, lp(ghost) - lp(y))
        acc = lp(y) - lp(x) + log1mexp(la1_y) - floor(log1mexp(la1_x))
        if config.probabilistic:
            acc += _retry_term(la1_y, config) - floor(_retry_term(la1_x, config))
        return min(0.0, acc)

    # stage 3: all eight phase points of the two trees, explicitly
    f1x = apply_map(x, 1)
    f2x = apply_map(x, 2)
    f1f2x = apply_map(f2x, 1)
    y = apply_map(x, 3)
    if lp(y) == -np.inf:
        return -np.inf
    f1y = apply_map(y, 1)
    f2y = apply_map(y, 2)
    f1f2y = apply_map(f2y, 1)

    la1_x = min(0.0, lp(f1x) - lp(x))
    la1_f2x = min(0.0, lp(f1f2x) - lp(f2x))
    acc2_x = lp(f2x) - lp(x) + log1mexp(la1_f2x) - floor(log1mexp(la1_x))
    if config.probabilistic:
        acc2_x += _retry_term(la1_f2x, config) - floor(_retry_term(la1_x, config))
    la2_x = min(0.0, acc2_x)

    la1_y = min(0.0, lp(f1y) - lp(y))
    la1_f2y = min(0.0, lp(f1f2y) - lp(f2y))
    acc2_y = lp(f2y) - lp(y) + log1mexp(la1_f2y) - floor(log1mexp(la1_y))
    if config.probabilistic:
        acc2_y += _retry_term(la1_f2y, config) - floor(_retry_term(la1_y, config))
    la2_y = min(0.0, acc2_y)

    acc = (lp(y) - lp(x)
           + log1mexp(la1_y) + log1mexp(la2_y)
           - floor(log1mexp(la1_x)) - floor(log1mexp(la2_x)))
    if config.probabilistic:
        acc += (_retry_term(la1_y, config) + _retry_term(la2_y, config)
                - floor(_retry_term(la1_x, config)) - floor(_retry_term(la2_x, config)))
    return min(0.0, acc)

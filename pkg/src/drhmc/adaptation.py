"""Warmup tuning: dual-averaging step size and diagonal mass estimation.

Warmup is per chain and independent. The step size is adapted with the
standard Nesterov dual-averaging recursion toward a target acceptance rate,
driven by classical single-stage transitions (the retry machinery exists to
rescue a tuned step size, so it is tuned as plain HMC). The number of
leapfrog steps is recomputed every iteration to hold the integration time
fixed. After warmup everything is frozen; the sampling phase never mutates
the returned config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .phase import MassMatrix
from .sampler import DrConfig, hmc_transition

# Stan's dual-averaging constants.
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75

MIN_MASS_DRAWS = 50


@dataclass(frozen=True)
class DualAveragingState:
    """State of the dual-averaging recursion on log step size."""

    mu: float
    log_step: float
    log_step_avg: float
    h_stat: float
    iteration: int


def da_init(step_size: float) -> DualAveragingState:
    """Fresh state; iterates are shrunk toward 10x the initial step size."""
    log_step = math.log(step_size)
    return DualAveragingState(
        mu=math.log(10.0 * step_size),
        log_step=log_step,
        log_step_avg=log_step,
        h_stat=0.0,
        iteration=0,
    )


def da_update(state: DualAveragingState, observed_accept: float,
              target_accept: float) -> DualAveragingState:
    """One dual-averaging update from an observed acceptance statistic."""
    if not 0.0 <= observed_accept <= 1.0:
        raise ValueError(f"observed_accept must be in [0, 1], got {observed_accept}")
    t = state.iteration + 1
    eta = 1.0 / (t + DA_T0)
    h_stat = (1.0 - eta) * state.h_stat + eta * (target_accept - observed_accept)
    log_step = state.mu - math.sqrt(t) / DA_GAMMA * h_stat
    weight = t ** (-DA_KAPPA)
    log_step_avg = weight * log_step + (1.0 - weight) * state.log_step_avg
    return DualAveragingState(state.mu, log_step, log_step_avg, h_stat, t)


def da_step(state: DualAveragingState) -> float:
    """Exploration step size for the next warmup iteration."""
    return math.exp(state.log_step)


def da_frozen_step(state: DualAveragingState) -> float:
    """The averaged iterate, used once adaptation ends."""
    return math.exp(state.log_step_avg)


def estimate_diag_mass(draws) -> MassMatrix:
    """Diagonal mass from warmup draws: inverse mass = regularized variances.

    Per-coordinate sample variances are shrunk 10% toward one; degenerate or
    non-finite coordinates fall back to unit mass.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < MIN_MASS_DRAWS:
        raise ValueError(f"need a (n >= {MIN_MASS_DRAWS}, dim) array of draws")
    variances = draws.var(axis=0, ddof=1)
    inv_mass = 0.9 * variances + 0.1
    bad = ~np.isfinite(variances) | (variances <= 0.0)
    inv_mass[bad] = 1.0
    return MassMatrix.from_inverse(inv_mass)


def default_mass_windows(n_warmup: int):
    """One variance-collection window over the middle half of warmup."""
    if n_warmup < 4 * MIN_MASS_DRAWS:
        return ()
    return ((n_warmup // 4, (3 * n_warmup) // 4),)


@dataclass(frozen=True)
class WarmupPlan:
    """Warmup schedule: length, acceptance target, mass-update windows."""

    n_warmup: int
    target_accept: float = 0.8
    mass_windows: tuple = None
    adapt_mass: bool = True

    def __post_init__(self):
        if self.n_warmup < 1:
            raise ValueError(f"n_warmup must be >= 1, got {self.n_warmup}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(f"target_accept must be in (0, 1), got {self.target_accept}")
        windows = self.mass_windows
        if windows is None:
            windows = default_mass_windows(self.n_warmup) if self.adapt_mass else ()
        windows = tuple((int(a), int(b)) for a, b in windows)
        previous_end = 0
        for start, end in windows:
            if not (0 <= start < end <= self.n_warmup):
                raise ValueError(f"window ({start}, {end}) outside warmup")
            if start < previous_end:
                raise ValueError("mass windows must be disjoint and ordered")
            previous_end = end
        object.__setattr__(self, "mass_windows", windows)


def _steps_for(t_total: float, step: float) -> int:
    return max(1, round(t_total / step))


def warmup_adapt(rng, x, config: DrConfig, plan: WarmupPlan, model, eps_scale: float = 1.0):
    """Run adaptive warmup; returns the frozen config and the final state.

    The acceptance statistic fed to dual averaging is the expected
    single-stage acceptance probability exp(min(0, -dH)) rather than the
    binary outcome. After each mass window closes the recursion restarts from
    the current averaged step, since the old statistics described a different
    metric.
    """
    t_total = config.integration_time
    state = da_init(config.step_size)
    mass = config.mass
    windows = list(plan.mass_windows)
    buffer = []
    for i in range(plan.n_warmup):
        step = da_step(state)
        x, info = hmc_transition(rng, x, step, _steps_for(t_total, step), mass, model)
        accept_stat = math.exp(min(0.0, info.log_alpha))
        state = da_update(state, accept_stat, plan.target_accept)
        if windows:
            start, end = windows[0]
            if start <= i < end:
                buffer.append(x.q.copy())
            if i == end - 1:
                if len(buffer) >= MIN_MASS_DRAWS:
                    mass = estimate_diag_mass(np.asarray(buffer))
                buffer = []
                windows.pop(0)
                state = da_init(da_frozen_step(state))
    tuned = eps_scale * da_frozen_step(state)
    frozen = replace(config, step_size=tuned, n_steps=_steps_for(t_total, tuned), mass=mass)
    return frozen, x

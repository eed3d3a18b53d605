"""Delayed rejection Hamiltonian Monte Carlo toolkit.

HMC whose rejected proposals are retried at geometrically smaller step sizes
(same integration time), with acceptance probabilities corrected through
ghost preimages so detailed balance survives. Ships the multiscale benchmark
targets, warmup adaptation, effective-sample-size and cost diagnostics, and a
config-driven experiment harness.
"""

from .adaptation import DualAveragingState, WarmupPlan, da_init, da_update, estimate_diag_mass
from .diagnostics import (
    EssReport,
    autocorr_ess,
    bootstrap_cost,
    cost_per_ess,
    error_based_ess,
    ess_report,
    ks_statistic,
    normal_cdf,
    tail_ks_statistic,
)
from .config import ConfigError, RunSpec, config_schema, parse_config
from .models import (
    EightSchools,
    Funnel,
    GaussianMixture,
    IidGaussian,
    Lighthouse,
    StochVol,
    TargetModel,
    check_gradient,
    make_model,
)
from .phase import MassMatrix, PhasePoint, evaluate, hamiltonian, leapfrog
from .sampler import (
    ChainResult,
    DrConfig,
    Ladder,
    derive_seed,
    drhmc_transition,
    hmc_transition,
    log1mexp,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "ChainResult",
    "ConfigError",
    "DrConfig",
    "DualAveragingState",
    "EightSchools",
    "EssReport",
    "Funnel",
    "GaussianMixture",
    "IidGaussian",
    "Ladder",
    "Lighthouse",
    "MassMatrix",
    "PhasePoint",
    "RunSpec",
    "StochVol",
    "TargetModel",
    "WarmupPlan",
    "autocorr_ess",
    "bootstrap_cost",
    "check_gradient",
    "config_schema",
    "cost_per_ess",
    "da_init",
    "da_update",
    "derive_seed",
    "drhmc_transition",
    "error_based_ess",
    "ess_report",
    "estimate_diag_mass",
    "evaluate",
    "hamiltonian",
    "hmc_transition",
    "ks_statistic",
    "leapfrog",
    "log1mexp",
    "make_model",
    "normal_cdf",
    "parse_config",
    "run_chain",
    "tail_ks_statistic",
]

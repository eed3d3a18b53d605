"""Hamiltonian Monte Carlo transitions with delayed rejection retries.

A transition refreshes the momentum from its Gaussian conditional and then
walks an acceptance ladder: stage k proposes through the stage-k flow map
(same integration time, step size divided by ``shrink`` per stage) and is
accepted with a probability corrected for all the earlier rejections. The
correction is where the cost lives: the stage-k probability at the origin x
needs the stage-i probabilities (i < k) at the proposal y = F_k(x), which
recursively demands the density at every composition F_{i1}(F_{i2}(...(x)))
with strictly increasing stage indices. Reaching stage k therefore touches
2^k distinct phase points: the origin, the k proposals, and 2^k - k - 1
"ghost" preimages that are never proposed but balance the reverse chain.
The :class:`Ladder` memoizes those points so each is evaluated exactly once.

All acceptance arithmetic stays in log space; energy differences in the hard
regions these samplers are built for routinely span hundreds of units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phase import MassMatrix, PhasePoint, evaluate, hamiltonian, stage_map, stage_settings

__version__ = "0.1.0"

RETRY_RULES = ("one-minus-alpha", "constant")

# Floor for log(1 - alpha) factors in the denominator of an acceptance
# ratio. The math guarantees they are finite (a stage is only reached after
# the earlier ones rejected, so alpha_i < 1), but floating point does not.
LOG_ONE_MINUS_ALPHA_FLOOR = -700.0

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, index: int) -> int:
    """Per-chain seed: (master, index) through a splitmix64 round.

    Keeps chain streams decorrelated while remaining a pure function of the
    master seed, so grids rerun byte-identically.
    """
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def log1mexp(a: float) -> float:
    """log(1 - exp(a)) for a <= 0, stable across the whole range."""
    if a > 0.0:
        raise ValueError(f"log1mexp needs a <= 0, got {a}")
    if a == 0.0:
        return -np.inf
    if a < -math.log(2.0):
        return math.log1p(-math.exp(a))
    return math.log(-math.expm1(a))


@dataclass(frozen=True)
class DrConfig:
    """Sampler settings for one chain.

    ``max_stages = 1`` is classical HMC. ``shrink`` is the integer factor the
    step size is divided by (and the step count multiplied by) at each retry
    stage, keeping the integration time ``step_size * n_steps`` constant.
    With ``probabilistic`` set, a rejected stage is retried only with the
    probability given by ``retry_rule``, and that probability enters the
    acceptance ratios; otherwise retries are certain.
    """

    step_size: float
    n_steps: int
    mass: MassMatrix
    max_stages: int = 1
    shrink: int = 2
    probabilistic: bool = False
    retry_rule: str = "one-minus-alpha"
    retry_prob: float = 1.0
    divergence_energy: float = 1000.0

    def __post_init__(self):
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.max_stages < 1:
            raise ValueError(f"max_stages must be >= 1, got {self.max_stages}")
        if int(self.shrink) != self.shrink or self.shrink < 2:
            raise ValueError(f"shrink must be an integer >= 2, got {self.shrink}")
        if self.retry_rule not in RETRY_RULES:
            raise ValueError(f"retry_rule must be one of {RETRY_RULES}, got '{self.retry_rule}'")
        if not (0.0 < self.retry_prob <= 1.0):
            raise ValueError(f"retry_prob must be in (0, 1], got {self.retry_prob}")

    @property
    def integration_time(self) -> float:
        return self.step_size * self.n_steps

    def stage_settings(self, stage: int):
        return stage_settings(self.step_size, self.n_steps, self.shrink, stage)

    def snapshot(self) -> dict:
        """JSON-serializable view of the resolved settings."""
        return {
            "step_size": self.step_size,
            "n_steps": self.n_steps,
            "mass_diag": [float(v) for v in self.mass.diag],
            "max_stages": self.max_stages,
            "shrink": self.shrink,
            "probabilistic": self.probabilistic,
            "retry_rule": self.retry_rule,
            "retry_prob": self.retry_prob,
            "divergence_energy": self.divergence_energy,
        }


def refresh_momentum(rng: np.random.Generator, mass: MassMatrix) -> np.ndarray:
    """Draw p ~ N(0, M) componentwise for a diagonal mass matrix."""
    return mass.sqrt_diag * rng.standard_normal(mass.dim)


def log_alpha1(h_current: float, h_proposal: float) -> float:
    """First-stage log acceptance probability min(0, H(x) - H(y))."""
    if h_proposal == np.inf:
        return -np.inf
    return min(0.0, h_current - h_proposal)


def combine_log_alpha(log_ratio, log_alphas_fwd, log_alphas_rev,
                      log_retries_fwd=None, log_retries_rev=None) -> float:
    """Log acceptance probability of a delayed proposal from its ingredients.

    ``log_ratio`` is log pi(y) - log pi(x) on the extended space (equivalently
    H(x) - H(y)); the ``fwd`` lists hold the earlier-stage log acceptance
    probabilities evaluated at the proposal y and the ``rev`` lists those at
    the origin x. With retry terms supplied, each stage's retry log
    probability enters the same way, as a general composition; nothing here
    assumes a particular retry rule. Denominator factors are floored so a
    rev-side probability that rounds to one cannot poison the arithmetic.
    """
    acc = log_ratio
    for la_fwd, la_rev in zip(log_alphas_fwd, log_alphas_rev):
        acc += log1mexp(la_fwd) - max(log1mexp(la_rev), LOG_ONE_MINUS_ALPHA_FLOOR)
    if log_retries_fwd is not None:
        for lr_fwd, lr_rev in zip(log_retries_fwd, log_retries_rev):
            acc += lr_fwd - max(lr_rev, LOG_ONE_MINUS_ALPHA_FLOOR)
    return min(0.0, acc)


@dataclass
class StageRecord:
    """One rung of a transition's ladder, for diagnostics and figure data."""

    stage: int
    log_alpha: float
    proposal_logp: float
    divergent: bool
    accepted: bool
    retry_log_prob: float | None = None


class Ladder:
    """Per-transition workspace for the delayed rejection acceptance ladder.

    Phase points are keyed by their map signature: ``()`` is the origin and
    ``(i,) + sig`` is the stage-i map applied to the node at ``sig``.
    Signatures stay strictly increasing because stage k only ever needs
    earlier-stage probabilities at its proposal. Every node's density is
    evaluated once; ``n_density_points`` and ``leapfrog_steps`` expose the
    audit counters.
    """

    def __init__(self, origin: PhasePoint, config: DrConfig, model):
        self.config = config
        self.model = model
        self._nodes = {(): origin}
        self._energies = {(): hamiltonian(origin, config.mass)}
        self._alphas = {}
        self.leapfrog_steps = 0
        self.records: list[StageRecord] = []
        self.accepted_stage = 0

    @property
    def origin(self) -> PhasePoint:
        return self._nodes[()]

    @property
    def n_density_points(self) -> int:
        return len(self._nodes)

    @property
    def stages_tried(self) -> int:
        return len(self.records)

    def node(self, sig: tuple) -> PhasePoint:
        point = self._nodes.get(sig)
        if point is None:
            parent = self.node(sig[1:])
            point, steps = stage_map(
                parent, self.config.step_size, self.config.n_steps,
                self.config.shrink, sig[0], self.config.mass, self.model,
            )
            self.leapfrog_steps += steps
            self._nodes[sig] = point
            self._energies[sig] = hamiltonian(point, self.config.mass)
        return point

    def energy(self, sig: tuple) -> float:
        self.node(sig)
        return self._energies[sig]

    def log_retry(self, log_alpha: float) -> float:
        """Log probability of retrying after a rejection with the given alpha."""
        if self.config.retry_rule == "one-minus-alpha":
            return log1mexp(min(log_alpha, 0.0))
        return math.log(self.config.retry_prob)

    def log_alpha(self, stage: int, sig: tuple = ()) -> float:
        """Log acceptance probability of the stage-k proposal from node ``sig``."""
        key = (stage, sig)
        cached = self._alphas.get(key)
        if cached is not None:
            return cached
        if sig and stage >= sig[0]:
            raise ValueError(f"stage {stage} not below signature {sig}")
        proposal_sig = (stage,) + sig
        h_prop = self.energy(proposal_sig)
        if h_prop == np.inf:
            # Divergent proposal: zero acceptance, and the ghost subtree
            # behind it is never needed, so skip the recursion entirely.
            value = -np.inf
        else:
            h_here = self._energies[sig]
            if stage == 1:
                value = log_alpha1(h_here, h_prop)
            else:
                fwd = [self.log_alpha(j, proposal_sig) for j in range(1, stage)]
                rev = [self.log_alpha(j, sig) for j in range(1, stage)]
                if self.config.probabilistic:
                    retries_fwd = [self.log_retry(a) for a in fwd]
                    retries_rev = [self.log_retry(a) for a in rev]
                else:
                    retries_fwd = retries_rev = None
                value = combine_log_alpha(h_here - h_prop, fwd, rev, retries_fwd, retries_rev)
        self._alphas[key] = value
        return value

    def evaluate_through(self, stage: int):
        """Force evaluation of every stage up to ``stage``, as if all rejected."""
        for k in range(1, stage + 1):
            self.log_alpha(k)
        return [self._alphas[(k, ())] for k in range(1, stage + 1)]

    def stage_histogram(self) -> dict:
        counts = {}
        for rec in self.records:
            counts[rec.stage] = counts.get(rec.stage, 0) + 1
        return counts


def log_alpha_stage(x: PhasePoint, stage: int, config: DrConfig, model) -> float:
    """Stage-k log acceptance probability at x, on a throwaway ladder."""
    ladder = Ladder(x, config, model)
    return ladder.log_alpha(stage)


def _log_uniform(u: float) -> float:
    return math.log(u) if u > 0.0 else -np.inf


def drhmc_transition(rng: np.random.Generator, state: PhasePoint, config: DrConfig, model):
    """One momentum refresh plus the delayed rejection acceptance ladder.

    Returns ``(next_state, ladder)``. An accepted proposal keeps the flipped
    momentum its map produced; a full rejection keeps the refreshed momentum.
    Either way the next transition's refresh overwrites it. One uniform is
    consumed per acceptance decision and one per retry decision (the retry
    draw happens even when retries are certain, so seeds stay aligned between
    probabilistic and deterministic runs).
    """
    momentum = refresh_momentum(rng, config.mass)
    x = PhasePoint(state.q, momentum, state.logp, state.grad)
    ladder = Ladder(x, config, model)
    h_origin = ladder.energy(())
    result = x
    for stage in range(1, config.max_stages + 1):
        la = ladder.log_alpha(stage)
        proposal = ladder.node((stage,))
        h_prop = ladder.energy((stage,))
        divergent = h_prop == np.inf or (h_prop - h_origin) > config.divergence_energy
        accepted = _log_uniform(rng.random()) < la
        record = StageRecord(
            stage=stage, log_alpha=la, proposal_logp=proposal.logp,
            divergent=divergent, accepted=accepted,
        )
        ladder.records.append(record)
        if accepted:
            ladder.accepted_stage = stage
            result = proposal
            break
        if stage == config.max_stages:
            break
        log_retry = ladder.log_retry(la) if config.probabilistic else 0.0
        record.retry_log_prob = log_retry
        if not rng.random() < math.exp(log_retry):
            break
        if log1mexp(la) == -np.inf:
            # Alpha rounded to one yet the proposal was rejected: the next
            # stage's reverse factor would be -inf, so treat it as unreachable.
            break
    return result, ladder


def hmc_transition(rng: np.random.Generator, state: PhasePoint, step: float,
                   n_steps: int, mass: MassMatrix, model):
    """Classical HMC: momentum refresh, flow map, single accept/reject.

    Kept as a standalone path; a delayed rejection chain with one stage must
    reproduce it draw for draw on the same seed.
    """
    momentum = refresh_momentum(rng, mass)
    x = PhasePoint(state.q, momentum, state.logp, state.grad)
    h_x = hamiltonian(x, mass)
    y, steps = stage_map(x, step, n_steps, 2, 1, mass, model)
    h_y = hamiltonian(y, mass)
    la = log_alpha1(h_x, h_y)
    accepted = _log_uniform(rng.random()) < la
    info = StageRecord(
        stage=1, log_alpha=la, proposal_logp=y.logp,
        divergent=h_y == np.inf, accepted=accepted,
    )
    return (y if accepted else x), info


@dataclass
class ChainResult:
    """Draws and bookkeeping for one chain.

    ``eval_counts[i]`` is the cumulative number of joint model evaluations
    after draw i, counted from the start of the sampling phase; warmup cost
    is recorded separately. ``stage_tags[i]`` is the accepted stage of draw i
    (0 when every stage rejected), and ``stages_tried[i]`` how many stages
    were proposed.
    """

    draws: np.ndarray
    stage_tags: np.ndarray
    stages_tried: np.ndarray
    eval_counts: np.ndarray
    seed: int
    config: dict
    model_name: str
    n_warmup: int
    warmup_evals: int
    adapted: bool = False
    leapfrog_steps: int = 0
    start_q: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def n_evals(self) -> int:
        return int(self.eval_counts[-1]) if self.eval_counts.size else 0

    def stage_histogram(self) -> dict:
        values, counts = np.unique(self.stage_tags, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def sidecar(self) -> dict:
        return {
            "toolkit_version": __version__,
            "model": self.model_name,
            "seed": self.seed,
            "config": self.config,
            "n_warmup": self.n_warmup,
            "warmup_evals": self.warmup_evals,
            "adapted": self.adapted,
            "n_draws": self.n_draws,
            "n_evals": self.n_evals,
            "leapfrog_steps": self.leapfrog_steps,
            "stage_histogram": {str(k): v for k, v in sorted(self.stage_histogram().items())},
        }

    def save(self, stem) -> None:
        """Write ``<stem>.csv`` (draws) and ``<stem>.json`` (sidecar)."""
        stem = str(stem)
        dim = self.draws.shape[1]
        header = ",".join([f"q{j}" for j in range(dim)] + ["stage", "tried", "evals"])
        table = np.column_stack([
            self.draws,
            self.stage_tags.astype(float),
            self.stages_tried.astype(float),
            self.eval_counts.astype(float),
        ])
        with open(stem + ".csv", "w") as handle:
            handle.write(header + "\n")
            for row in table:
                cells = [repr(float(v)) for v in row[:dim]]
                cells += [str(int(v)) for v in row[dim:]]
                handle.write(",".join(cells) + "\n")
        with open(stem + ".json", "w") as handle:
            json.dump(self.sidecar(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def initial_position(rng: np.random.Generator, model, init="uniform") -> np.ndarray:
    """Starting point: uniform(-2, 2) per coordinate, an exact reference draw,
    or an explicit vector."""
    if isinstance(init, str):
        if init == "uniform":
            return rng.uniform(-2.0, 2.0, size=model.dim)
        if init == "reference":
            return model.reference_sample(rng, 1)[0]
        raise ValueError(f"unknown init '{init}'")
    q0 = np.asarray(init, dtype=float)
    if q0.shape != (model.dim,):
        raise ValueError(f"init vector must have shape ({model.dim},)")
    return q0


def run_chain(seed: int, model, config: DrConfig, n_warmup: int, n_draws: int,
              adapt=None, eps_scale: float = 1.0, init="uniform") -> ChainResult:
    """Run warmup then sampling; fully deterministic given the seed.

    Without ``adapt``, warmup is plain burn-in under the fixed config. With a
    :class:`~drhmc.adaptation.WarmupPlan`, warmup tunes the step size by dual
    averaging (and optionally the diagonal mass), after which the tuned step
    is multiplied by ``eps_scale``, the step count is recomputed to hold the
    integration time, and everything is frozen for sampling.
    """
    if n_draws < 1:
        raise ValueError(f"n_draws must be >= 1, got {n_draws}")
    rng = np.random.default_rng(seed)
    start_evals = model.eval_count
    q0 = initial_position(rng, model, init)
    x = evaluate(model, q0)

    if adapt is not None:
        from .adaptation import warmup_adapt

        config, x = warmup_adapt(rng, x, config, adapt, model, eps_scale=eps_scale)
    else:
        for _ in range(n_warmup):
            x, _ = drhmc_transition(rng, x, config, model)
    warmup_evals = model.eval_count - start_evals

    draws = np.empty((n_draws, model.dim))
    stage_tags = np.zeros(n_draws, dtype=np.int64)
    stages_tried = np.zeros(n_draws, dtype=np.int64)
    eval_counts = np.zeros(n_draws, dtype=np.int64)
    sampling_start = model.eval_count
    start_q = x.q.copy()
    leapfrogs = 0
    for i in range(n_draws):
        x, ladder = drhmc_transition(rng, x, config, model)
        draws[i] = x.q
        stage_tags[i] = ladder.accepted_stage
        stages_tried[i] = ladder.stages_tried
        eval_counts[i] = model.eval_count - sampling_start
        leapfrogs += ladder.leapfrog_steps

    return ChainResult(
        draws=draws,
        stage_tags=stage_tags,
        stages_tried=stages_tried,
        eval_counts=eval_counts,
        seed=int(seed),
        config=config.snapshot(),
        model_name=model.name,
        n_warmup=n_warmup,
        warmup_evals=warmup_evals,
        adapted=adapt is not None,
        leapfrog_steps=leapfrogs,
        start_q=start_q,
    )

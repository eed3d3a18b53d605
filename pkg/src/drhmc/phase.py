"""Phase-space machinery: Hamiltonian, leapfrog flow, stage maps, and probes.

State lives in ``PhasePoint``s that memoize the log density and gradient at
their position. A leapfrog step therefore evaluates the model exactly once
(at its endpoint); composing ``n`` steps from a warm start costs ``n`` joint
evaluations, or ``n + 1`` from a cold one. The eval counters the cost
diagnostics rely on depend on this sharing, so the memo is never bypassed.

A stage-k proposal map runs ``n * shrink**(k-1)`` leapfrog steps of size
``step / shrink**(k-1)`` and then flips the momentum, keeping the total
integration time fixed while refining resolution. Each such map is a
volume-preserving involution; :func:`involution_gap` and
:func:`jacobian_determinant` probe those two properties numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, slots=True)
class MassMatrix:
    """Diagonal mass matrix with cached inverse and square root."""

    diag: np.ndarray
    inv_diag: np.ndarray
    sqrt_diag: np.ndarray

    @classmethod
    def from_diag(cls, diag) -> "MassMatrix":
        diag = np.asarray(diag, dtype=float)
        if diag.ndim != 1 or diag.size < 1:
            raise ValueError("mass diagonal must be a non-empty 1-D array")
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ValueError("mass diagonal entries must be positive and finite")
        return cls(diag=diag, inv_diag=1.0 / diag, sqrt_diag=np.sqrt(diag))

    @classmethod
    def from_inverse(cls, inv_diag) -> "MassMatrix":
        inv_diag = np.asarray(inv_diag, dtype=float)
        return cls.from_diag(1.0 / inv_diag)

    @classmethod
    def identity(cls, dim: int) -> "MassMatrix":
        return cls.from_diag(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.diag.size


@dataclass(frozen=True, slots=True)
class PhasePoint:
    """Position, momentum, and the memoized log density and gradient at q."""

    q: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray

    def flipped(self) -> "PhasePoint":
        return PhasePoint(self.q, -self.p, self.logp, self.grad)


def evaluate(model, q, p=None) -> PhasePoint:
    """Build a phase point at q, evaluating the model once."""
    q = np.asarray(q, dtype=float)
    p = np.zeros_like(q) if p is None else np.asarray(p, dtype=float)
    logp, grad = model.logp_grad(q)
    return PhasePoint(q, p, logp, grad)


def kinetic_energy(p: np.ndarray, mass: MassMatrix) -> float:
    # Poisoned trajectories can carry astronomically large momenta; overflow
    # here must quietly become +inf, not a warning.
    with np.errstate(over="ignore"):
        return 0.5 * float(p @ (mass.inv_diag * p))


def hamiltonian(x: PhasePoint, mass: MassMatrix) -> float:
    """Total energy -log pi(q) + p' M^-1 p / 2; +inf off the support."""
    if not np.isfinite(x.logp):
        return np.inf
    kin = kinetic_energy(x.p, mass)
    if not np.isfinite(kin):
        return np.inf
    return -x.logp + kin


def leapfrog(x: PhasePoint, step: float, mass: MassMatrix, model) -> PhasePoint:
    """One half-kick / drift / half-kick step; one fresh model evaluation.

    Non-finite intermediates never raise: the model evaluation screens its
    input and poisons the point (logp = -inf, zero gradient, Hamiltonian
    +inf), and the magnitude ceiling it enforces keeps the arithmetic here
    overflow-free.
    """
    p_half = x.p + (0.5 * step) * x.grad
    q_new = x.q + step * (mass.inv_diag * p_half)
    logp, grad = model.logp_grad(q_new)
    return PhasePoint(q_new, p_half + (0.5 * step) * grad, logp, grad)


def flow_map(x: PhasePoint, step: float, n_steps: int, mass: MassMatrix, model):
    """n leapfrog steps then a momentum flip; returns (endpoint, steps run).

    Integration stops early once the trajectory is poisoned: the remaining
    steps could only produce more non-finite values, and skipping them keeps
    the eval counters honest about work actually done.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    y = x
    done = 0
    for _ in range(n_steps):
        y = leapfrog(y, step, mass, model)
        done += 1
        if not np.isfinite(y.logp):
            break
    return y.flipped(), done


def stage_settings(step: float, n_steps: int, shrink: int, stage: int):
    """Step size and step count for the given proposal stage (1-based)."""
    if stage < 1:
        raise ValueError(f"stage must be >= 1, got {stage}")
    factor = shrink ** (stage - 1)
    return step / factor, n_steps * factor


def stage_map(x: PhasePoint, step: float, n_steps: int, shrink: int, stage: int, mass, model):
    """The stage-k proposal map: refined leapfrog flow plus momentum flip."""
    eps_k, n_k = stage_settings(step, n_steps, shrink, stage)
    return flow_map(x, eps_k, n_k, mass, model)


def flow_fn(model, mass: MassMatrix, step: float, n_steps: int):
    """The flow map as a plain (q, p) -> (q, p) function, for probes."""

    def apply(q, p):
        x = evaluate(model, q, p)
        y, _ = flow_map(x, step, n_steps, mass, model)
        return y.q, y.p

    return apply


def involution_gap(map_fn, q, p) -> float:
    """Relative distance between x and map(map(x)) in phase space."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    q2, p2 = map_fn(*map_fn(q, p))
    x = np.concatenate([q, p])
    x2 = np.concatenate([q2, p2])
    return float(np.linalg.norm(x2 - x) / (1.0 + np.linalg.norm(x)))


def jacobian_determinant(map_fn, q, p, probe_step: float = 1e-5) -> float:
    """|det| of the central-difference Jacobian of a phase-space map at (q, p)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    z = np.concatenate([q, p])
    dim2 = z.size
    d = q.size
    jac = np.empty((dim2, dim2))
    for j in range(dim2):
        bump = np.zeros(dim2)
        bump[j] = probe_step
        zp = z + bump
        zm = z - bump
        qp, pp = map_fn(zp[:d], zp[d:])
        qm, pm = map_fn(zm[:d], zm[d:])
        jac[:, j] = (np.concatenate([qp, pp]) - np.concatenate([qm, pm])) / (2.0 * probe_step)
    return float(abs(np.linalg.det(jac)))


def energy_error(model, mass: MassMatrix, step: float, n_steps: int, q, p) -> float:
    """H(F(x)) - H(x) for the flow map starting at (q, p)."""
    x = evaluate(model, q, p)
    y, _ = flow_map(x, step, n_steps, mass, model)
    return hamiltonian(y, mass) - hamiltonian(x, mass)

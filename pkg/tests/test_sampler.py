"""Transitions and the acceptance ladder: formulas, oracles, invariants."""

import math

import numpy as np
import pytest

from drhmc.diagnostics import autocorr_ess, ks_statistic, normal_cdf
from drhmc.models import Funnel, IidGaussian
from drhmc.phase import MassMatrix, evaluate, hamiltonian
from drhmc.sampler import (
    ChainResult,
    DrConfig,
    Ladder,
    combine_log_alpha,
    derive_seed,
    drhmc_transition,
    hmc_transition,
    log1mexp,
    log_alpha1,
    log_alpha_stage,
    refresh_momentum,
    run_chain,
)
from tests.helpers import FlatModel, brute_force_log_alpha, thin_by_autocorr

RNG = np.random.default_rng
I1 = MassMatrix.identity(1)


def _config(**kwargs):
    base = dict(step_size=1.0, n_steps=5, mass=I1)
    base.update(kwargs)
    return DrConfig(**base)


# -- numerics -----------------------------------------------------------------

def test_log1mexp_matches_naive_in_easy_range():
    for a in (-0.1, -0.5, -1.0, -5.0, -30.0):
        assert log1mexp(a) == pytest.approx(math.log(1.0 - math.exp(a)), rel=1e-12)


def test_log1mexp_extremes():
    assert log1mexp(0.0) == -np.inf
    assert log1mexp(-1e-300) == pytest.approx(math.log(1e-300), rel=1e-12)
    assert log1mexp(-800.0) == pytest.approx(-math.exp(-800.0), abs=1e-320)
    with pytest.raises(ValueError):
        log1mexp(0.5)


def test_log_alpha1_cases():
    assert log_alpha1(3.0, 3.0) == 0.0                       # dH = 0: always accept
    assert log_alpha1(1.0, 1.0 + math.log(2.0)) == pytest.approx(math.log(0.5))
    assert log_alpha1(1.0, np.inf) == -np.inf                # divergent proposal


# -- acceptance formula, hand-evaluated ---------------------------------------

def test_combine_log_alpha_symmetric_case_is_certain():
    la = combine_log_alpha(0.0, [math.log(0.4)], [math.log(0.4)])
    assert la == 0.0


def test_combine_log_alpha_hand_value():
    # density ratio 2, alpha1(y) = 0.5, alpha1(x) = 0.2:
    # 2 * (1 - 0.5) / (1 - 0.2) = 1.25, clamped to 1.
    la = combine_log_alpha(math.log(2.0), [math.log(0.5)], [math.log(0.2)])
    assert la == 0.0


def test_combine_log_alpha_reverse_chain_would_have_accepted():
    # alpha1(y) = 1 exactly: numerator factor log(0)
    la = combine_log_alpha(math.log(2.0), [0.0], [math.log(0.2)])
    assert la == -np.inf


def test_combine_log_alpha_probabilistic_hand_value():
    # Retry rule 1 - alpha: factors square, 2 * 0.25 / 0.64 = 0.78125.
    fwd = [math.log(0.5)]
    rev = [math.log(0.2)]
    la = combine_log_alpha(math.log(2.0), fwd, rev,
                           [log1mexp(f) for f in fwd], [log1mexp(r) for r in rev])
    assert la == pytest.approx(math.log(0.78125), abs=1e-12)


def test_retry_rule_values():
    model = IidGaussian(1)
    x = evaluate(model, np.zeros(1), np.zeros(1))
    ladder = Ladder(x, _config(probabilistic=True), model)
    assert ladder.log_retry(-np.inf) == 0.0                          # hard rejection: retry certain
    assert ladder.log_retry(math.log(0.95)) == pytest.approx(math.log(0.05))
    const = Ladder(x, _config(probabilistic=True, retry_rule="constant", retry_prob=0.3), model)
    assert const.log_retry(math.log(0.95)) == pytest.approx(math.log(0.3))


# -- oracle agreement ---------------------------------------------------------

def _random_instance(rng, probabilistic):
    if rng.random() < 0.5:
        model = IidGaussian(1)
    else:
        model = Funnel(dim=2)
    config = DrConfig(
        step_size=float(rng.uniform(0.3, 3.0)),
        n_steps=int(rng.integers(1, 7)),
        mass=MassMatrix.identity(model.dim),
        max_stages=3,
        shrink=int(rng.choice([2, 3, 5])),
        probabilistic=probabilistic,
    )
    q = rng.standard_normal(model.dim)
    p = rng.standard_normal(model.dim)
    return model, config, q, p


@pytest.mark.parametrize("probabilistic", [False, True])
def test_ladder_matches_brute_force_enumeration(probabilistic):
    rng = RNG(100 + probabilistic)
    for _ in range(60):
        model, config, q, p = _random_instance(rng, probabilistic)
        stage = int(rng.integers(2, 4))
        x = evaluate(model, q, p)
        got = log_alpha_stage(x, stage, config, model)
        want = brute_force_log_alpha(evaluate(model, q, p), stage, config, model)
        if want == -np.inf:
            assert got == -np.inf
        else:
            assert got == pytest.approx(want, abs=1e-12)


def test_ladder_memoizes_each_density_point_once():
    model = IidGaussian(1)
    config = _config(max_stages=3, shrink=2)
    x = evaluate(model, np.array([0.4]), np.array([1.1]))
    start = model.eval_count
    ladder = Ladder(x, config, model)
    ladder.evaluate_through(3)
    assert ladder.n_density_points == 2**3
    # every leapfrog costs one eval and nothing is recomputed
    assert model.eval_count - start == ladder.leapfrog_steps
    # ghosts beyond the origin and the three proposals
    assert ladder.n_density_points - 1 - 3 == 2**3 - 3 - 1


def test_detailed_balance_identity_on_random_points():
    # pi(x) prod(1 - alpha_i(x)) alpha_k(x) == pi(y) prod(1 - alpha_i(y)) alpha_k(y)
    # in log space, whenever the min() clamps at most one side.
    rng = RNG(77)
    checked = 0
    for _ in range(500):
        model, config, q, p = _random_instance(rng, bool(rng.integers(0, 2)))
        stage = int(rng.integers(2, 4))
        x = evaluate(model, q, p)
        fwd = Ladder(x, config, model)
        la_x = fwd.log_alpha(stage)
        y = fwd.node((stage,))
        if not np.isfinite(y.logp) or la_x == -np.inf:
            continue
        rev = Ladder(evaluate(model, y.q, y.p), config, model)
        la_y = rev.log_alpha(stage)
        if la_x == 0.0 and la_y == 0.0:
            continue  # both clamped: identity not implied
        lhs = -fwd.energy(()) + la_x
        rhs = -rev.energy(()) + la_y
        for j in range(1, stage):
            lhs += log1mexp(fwd.log_alpha(j))
            rhs += log1mexp(rev.log_alpha(j))
            if config.probabilistic:
                lhs += fwd.log_retry(fwd.log_alpha(j))
                rhs += rev.log_retry(rev.log_alpha(j))
        if not (np.isfinite(lhs) and np.isfinite(rhs)):
            continue
        assert lhs == pytest.approx(rhs, abs=1e-10)
        checked += 1
    assert checked > 100


# -- transitions --------------------------------------------------------------

def test_momentum_refresh_variance_and_determinism():
    mass = MassMatrix.from_diag(np.array([1.0, 4.0]))
    draws = np.array([refresh_momentum(RNG(s), mass) for s in range(4000)])
    assert draws[:, 0].var() == pytest.approx(1.0, rel=0.05)
    assert draws[:, 1].var() == pytest.approx(4.0, rel=0.05)
    assert np.array_equal(refresh_momentum(RNG(1), mass), refresh_momentum(RNG(1), mass))


def test_single_stage_reduces_to_classic_hmc_bit_for_bit():
    model_a = IidGaussian(3)
    model_b = IidGaussian(3)
    config = DrConfig(step_size=0.7, n_steps=8, mass=MassMatrix.identity(3), max_stages=1)
    rng_a, rng_b = RNG(42), RNG(42)
    xa = evaluate(model_a, np.array([0.1, -0.4, 1.2]))
    xb = evaluate(model_b, np.array([0.1, -0.4, 1.2]))
    for _ in range(300):
        xa, _ = drhmc_transition(rng_a, xa, config, model_a)
        xb, _ = hmc_transition(rng_b, xb, 0.7, 8, config.mass, model_b)
        assert np.array_equal(xa.q, xb.q)
        assert np.array_equal(xa.p, xb.p)
    assert model_a.eval_count == model_b.eval_count


def test_flat_density_always_accepts_stage_one():
    model = FlatModel(2)
    config = DrConfig(step_size=0.5, n_steps=4, mass=MassMatrix.identity(2), max_stages=3)
    rng = RNG(3)
    x = evaluate(model, np.zeros(2))
    for _ in range(50):
        x, ladder = drhmc_transition(rng, x, config, model)
        assert ladder.accepted_stage == 1
        assert ladder.records[0].log_alpha == 0.0


def test_unstable_step_accepts_at_later_stages():
    model = IidGaussian(1)
    config = DrConfig(step_size=3.0, n_steps=5, mass=I1, max_stages=3, shrink=2)
    result = run_chain(6, model, config, n_warmup=200, n_draws=4000)
    hist = result.stage_histogram()
    assert hist.get(1, 0) < 200              # stage 1 almost never survives eps = 3
    assert hist.get(2, 0) + hist.get(3, 0) > 2000
    series = result.draws[:, 0]
    se = series.std() / math.sqrt(autocorr_ess(series))
    assert abs(series.mean()) <= 3 * se


def test_probabilistic_constant_rule_matches_deterministic_draw_for_draw():
    det = DrConfig(step_size=2.0, n_steps=4, mass=I1, max_stages=3, probabilistic=False)
    prob = DrConfig(step_size=2.0, n_steps=4, mass=I1, max_stages=3,
                    probabilistic=True, retry_rule="constant", retry_prob=1.0)
    res_det = run_chain(9, IidGaussian(1), det, n_warmup=50, n_draws=800)
    res_prob = run_chain(9, IidGaussian(1), prob, n_warmup=50, n_draws=800)
    assert np.array_equal(res_det.draws, res_prob.draws)
    assert np.array_equal(res_det.stage_tags, res_prob.stage_tags)


def test_probabilistic_mode_skips_retries_after_near_misses():
    model = IidGaussian(1)
    config = DrConfig(step_size=1.2, n_steps=3, mass=I1, max_stages=3, probabilistic=True)
    rng = RNG(21)
    x = evaluate(model, np.zeros(1))
    tried_after_near_miss = 0
    near_misses = 0
    for _ in range(3000):
        x, ladder = drhmc_transition(rng, x, config, model)
        first = ladder.records[0]
        if not first.accepted and first.log_alpha > math.log(0.9):
            near_misses += 1
            tried_after_near_miss += ladder.stages_tried > 1
    assert near_misses > 20
    # retry probability after a 0.9+ alpha rejection is below 0.1
    assert tried_after_near_miss <= 0.35 * near_misses


def test_ghost_count_audit_during_sampling():
    model = IidGaussian(1)
    config = DrConfig(step_size=3.0, n_steps=5, mass=I1, max_stages=3, shrink=2)
    rng = RNG(14)
    x = evaluate(model, np.zeros(1))
    seen = set()
    for _ in range(400):
        before = model.eval_count
        x, ladder = drhmc_transition(rng, x, config, model)
        assert ladder.n_density_points == 2 ** ladder.stages_tried
        assert model.eval_count - before == ladder.leapfrog_steps
        seen.add(ladder.stages_tried)
    assert {2, 3} <= seen


def test_stationarity_ks_on_standard_normal():
    # Stable-regime configs must leave N(0,1) invariant.
    configs = [
        DrConfig(step_size=0.9, n_steps=7, mass=I1, max_stages=2, shrink=2),
        DrConfig(step_size=1.5, n_steps=4, mass=I1, max_stages=3, shrink=5,
                 probabilistic=True),
    ]
    for seed, config in enumerate(configs):
        result = run_chain(50 + seed, IidGaussian(1), config, n_warmup=500, n_draws=50_000)
        thinned = thin_by_autocorr(result.draws[:, 0])
        _, p_value = ks_statistic(thinned, normal_cdf)
        assert p_value > 0.01, f"config {seed}: p = {p_value}"


# -- run_chain ----------------------------------------------------------------

def test_run_chain_single_draw_eval_count():
    model = IidGaussian(2)
    config = DrConfig(step_size=0.5, n_steps=6, mass=MassMatrix.identity(2), max_stages=1)
    result = run_chain(1, model, config, n_warmup=0, n_draws=1)
    # n_steps fresh evaluations; the initial point adds one more.
    assert result.n_evals == 6
    assert result.warmup_evals == 1
    assert model.eval_count == 7


def test_run_chain_deterministic_given_seed():
    config = DrConfig(step_size=1.0, n_steps=5, mass=I1, max_stages=2)
    a = run_chain(33, IidGaussian(1), config, n_warmup=100, n_draws=500)
    b = run_chain(33, IidGaussian(1), config, n_warmup=100, n_draws=500)
    assert np.array_equal(a.draws, b.draws)
    assert np.array_equal(a.eval_counts, b.eval_counts)
    assert a.sidecar() == b.sidecar()


def test_run_chain_rejected_draws_repeat_previous_row():
    config = DrConfig(step_size=2.9, n_steps=5, mass=I1, max_stages=1)
    result = run_chain(2, IidGaussian(1), config, n_warmup=10, n_draws=300)
    rejected = np.flatnonzero(result.stage_tags == 0)
    rejected = rejected[rejected > 0]
    assert rejected.size > 0
    for i in rejected[:50]:
        assert np.array_equal(result.draws[i], result.draws[i - 1])


def test_chain_result_serialization_round_trip(tmp_path):
    config = DrConfig(step_size=1.0, n_steps=5, mass=I1, max_stages=2)
    result = run_chain(4, IidGaussian(1), config, n_warmup=20, n_draws=50)
    stem = tmp_path / "chain_00"
    result.save(stem)
    text = (tmp_path / "chain_00.csv").read_text().strip().splitlines()
    assert text[0] == "q0,stage,tried,evals"
    assert len(text) == 51
    import json

    sidecar = json.loads((tmp_path / "chain_00.json").read_text())
    assert sidecar["seed"] == 4
    assert sidecar["n_draws"] == 50
    assert sidecar["config"]["step_size"] == 1.0
    assert "stage_histogram" in sidecar


def test_derive_seed_is_deterministic_and_spreads():
    seeds = {derive_seed(123, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(123, 7) == derive_seed(123, 7)
    assert derive_seed(124, 7) != derive_seed(123, 7)


def test_config_validation():
    with pytest.raises(ValueError):
        DrConfig(step_size=0.0, n_steps=5, mass=I1)
    with pytest.raises(ValueError):
        DrConfig(step_size=1.0, n_steps=0, mass=I1)
    with pytest.raises(ValueError):
        DrConfig(step_size=1.0, n_steps=5, mass=I1, shrink=1)
    with pytest.raises(ValueError):
        DrConfig(step_size=1.0, n_steps=5, mass=I1, retry_rule="sometimes")
    with pytest.raises(ValueError):
        run_chain(1, IidGaussian(1), _config(), n_warmup=0, n_draws=0)

"""Experiment harness: grid runner, per-cell diagnostics, audits, figure data.

The artifact tree is a pure function of (run spec, seed): cell and chain
seeds derive from the master seed by a splitmix64 round, workers share
nothing, and all files are written with full-precision reprs and sorted
keys, so rerunning a spec overwrites its outputs byte for byte. A failure
inside one grid cell is caught and reported without touching other cells.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .adaptation import WarmupPlan
from .config import RunSpec, config_hash
from .models import make_model
from .phase import MassMatrix, evaluate, flow_fn, involution_gap, jacobian_determinant, energy_error
from .sampler import ChainResult, DrConfig, Ladder, __version__, derive_seed, run_chain

SUMMARY_COLUMNS = (
    "model", "method", "eps0", "k", "a", "probabilistic", "moment", "slowest_index",
    "ess_r", "ess_c", "n_evals", "cost_r", "cost_c", "ci_lo", "ci_hi",
)

MOMENTS = ("theta", "theta_sq")

FIGURE_IDS = ("funnel-marginal", "stage-histogram", "cost-ratio")

MARGINAL_BIN_WIDTH = 0.1


@dataclass(frozen=True)
class GridCell:
    cell_id: str
    method: str
    eps0: float | None
    eps_scale: float
    max_stages: int
    shrink: int
    probabilistic: bool
    seed: int
    index: int


def expand_grid(spec: RunSpec) -> list[GridCell]:
    """Cartesian product of the spec's grid, each cell with a derived seed."""
    cells = []
    if spec.method == "hmc":
        combos = [(m, 1, 2) for m in spec.eps_multipliers]
    else:
        combos = [
            (m, k, a)
            for m in spec.eps_multipliers
            for k in spec.stage_grid
            for a in spec.shrink_grid
        ]
    for index, (mult, k, a) in enumerate(combos):
        eps0 = None if spec.adaptive else spec.eps0 * mult
        if spec.method == "hmc":
            cell_id = f"hmc_m{mult:g}"
        else:
            cell_id = f"{spec.method}_m{mult:g}_k{k}_a{a}"
        cells.append(GridCell(
            cell_id=cell_id,
            method=spec.method,
            eps0=eps0,
            eps_scale=mult,
            max_stages=k,
            shrink=a,
            probabilistic=spec.method == "drhmc-prob",
            seed=derive_seed(spec.seed, index),
            index=index,
        ))
    return cells


def _chain_job(payload: dict) -> ChainResult:
    """Run one chain; top-level so process pools can pickle it."""
    model = make_model(payload["model_name"], payload["model_params"])
    t_total = payload["t_integration"]
    common = dict(
        max_stages=payload["max_stages"],
        shrink=payload["shrink"],
        probabilistic=payload["probabilistic"],
        mass=MassMatrix.identity(model.dim),
    )
    seed = derive_seed(payload["cell_seed"], payload["chain_index"])
    if payload["eps0"] is not None:
        eps = payload["eps0"]
        config = DrConfig(step_size=eps, n_steps=max(1, round(t_total / eps)), **common)
        return run_chain(seed, model, config, payload["n_warmup"], payload["n_draws"],
                         init=payload["init"])
    # Adaptive cell: dual averaging starts from a tenth of the trajectory.
    config = DrConfig(step_size=t_total / 10.0, n_steps=10, **common)
    plan = WarmupPlan(n_warmup=payload["n_warmup"], target_accept=payload["target_accept"])
    return run_chain(seed, model, config, payload["n_warmup"], payload["n_draws"],
                     adapt=plan, eps_scale=payload["eps_scale"], init=payload["init"])


def _cell_payloads(spec: RunSpec, cell: GridCell) -> list[dict]:
    return [
        {
            "model_name": spec.model_name,
            "model_params": spec.model_params,
            "t_integration": spec.t_integration,
            "eps0": cell.eps0,
            "eps_scale": cell.eps_scale,
            "max_stages": cell.max_stages,
            "shrink": cell.shrink,
            "probabilistic": cell.probabilistic,
            "n_warmup": spec.n_warmup,
            "n_draws": spec.n_draws,
            "target_accept": spec.target_accept,
            "init": spec.init,
            "cell_seed": cell.seed,
            "chain_index": chain,
        }
        for chain in range(spec.n_chains)
    ]


def cell_summary_rows(spec: RunSpec, cell: GridCell, results: list[ChainResult], model) -> list[dict]:
    """Two summary rows (first and second moment) for one completed cell."""
    n_evals = sum(r.n_evals for r in results)
    moments = model.true_moments()
    dim = model.dim
    eps_used = float(np.mean([r.config["step_size"] for r in results]))
    rows = []
    for moment in MOMENTS:
        def series_at(j, chains=results, which=moment):
            if which == "theta":
                return [c.draws[:, j] for c in chains]
            return [c.draws[:, j] ** 2 for c in chains]

        # error-based ESS needs true moments and enough chains for a usable se
        if moments is not None and len(results) >= diag.MIN_CHAINS_FOR_ERROR_ESS:
            mean1, sd1, mean2, sd2 = moments
            true_mean = mean1 if moment == "theta" else mean2
            true_sd = sd1 if moment == "theta" else sd2
        else:
            true_mean = true_sd = None

        per_coord = []
        for j in range(dim):
            tm = float(true_mean[j]) if true_mean is not None else None
            ts = float(true_sd[j]) if true_sd is not None else None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                per_coord.append(diag.ess_report(series_at(j), n_evals, tm, ts))
        key = [r.ess_c if true_mean is not None else r.ess_r for r in per_coord]
        key = [v if not math.isnan(v) else math.inf for v in key]
        slowest = int(np.argmin(key))
        report = per_coord[slowest]

        ci_lo = ci_hi = float("nan")
        if len(results) >= diag.MIN_CHAINS_FOR_ERROR_ESS:
            def cost_stat(chains, j=slowest, which=moment, tm=true_mean, ts=true_sd):
                evals = sum(c.n_evals for c in chains)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rep = diag.ess_report(
                        [c.draws[:, j] if which == "theta" else c.draws[:, j] ** 2 for c in chains],
                        evals,
                        float(tm[j]) if tm is not None else None,
                        float(ts[j]) if ts is not None else None,
                    )
                value = rep.cost_c if tm is not None else rep.cost_r
                return value if math.isfinite(value) else 0.0

            _, (ci_lo, ci_hi) = diag.bootstrap_cost(results, diag.MIN_BOOTSTRAP_RESAMPLES,
                                                    cost_stat, seed=cell.seed)
        rows.append({
            "model": spec.model_name,
            "method": spec.method,
            "eps0": eps_used,
            "k": cell.max_stages,
            "a": cell.shrink if spec.method != "hmc" else 0,
            "probabilistic": cell.probabilistic,
            "moment": moment,
            "slowest_index": slowest,
            "ess_r": report.ess_r,
            "ess_c": report.ess_c,
            "n_evals": n_evals,
            "cost_r": report.cost_r,
            "cost_c": report.cost_c,
            "ci_lo": ci_lo,
            "ci_hi": ci_hi,
            "cell_id": cell.cell_id,
        })
    return rows


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary_csv(path, rows) -> None:
    with open(path, "w") as handle:
        handle.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            handle.write(",".join(_format_cell(row[c]) for c in SUMMARY_COLUMNS) + "\n")


@dataclass
class GridReport:
    out_dir: Path
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_grid(spec: RunSpec, out_dir=None, workers: int | None = None) -> GridReport:
    """Run every grid cell, write artifacts, and assemble the summary CSV.

    Chains run in parallel up to the worker budget (``workers <= 1`` runs
    inline). Per-cell failures are isolated: healthy cells still produce
    their artifacts and the report lists what broke.
    """
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = GridReport(out_dir=out)
    cells = expand_grid(spec)
    resolved = spec.resolved()

    jobs = {}
    for cell in cells:
        for payload in _cell_payloads(spec, cell):
            jobs[(cell.cell_id, payload["chain_index"])] = payload

    outcomes: dict = {}
    if workers is not None and workers <= 1:
        for key, payload in jobs.items():
            try:
                outcomes[key] = _chain_job(payload)
            except Exception as err:  # noqa: BLE001 - cell isolation
                outcomes[key] = err
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(_chain_job, payload) for key, payload in jobs.items()}
            for key, future in futures.items():
                try:
                    outcomes[key] = future.result()
                except Exception as err:  # noqa: BLE001 - cell isolation
                    outcomes[key] = err

    model = make_model(spec.model_name, spec.model_params)
    for cell in cells:
        chain_outcomes = [outcomes[(cell.cell_id, c)] for c in range(spec.n_chains)]
        errors = [o for o in chain_outcomes if isinstance(o, Exception)]
        cell_dir = out / "cells" / cell.cell_id
        try:
            if errors:
                raise errors[0]
            results = chain_outcomes
            cell_dir.mkdir(parents=True, exist_ok=True)
            for index, result in enumerate(results):
                result.save(cell_dir / f"chain_{index:02d}")
            sidecar = {
                "toolkit_version": __version__,
                "config_hash": config_hash(resolved),
                "resolved_spec": resolved,
                "cell": {
                    "cell_id": cell.cell_id,
                    "method": cell.method,
                    "eps0": cell.eps0,
                    "eps_scale": cell.eps_scale,
                    "k": cell.max_stages,
                    "a": cell.shrink,
                    "probabilistic": cell.probabilistic,
                    "seed": cell.seed,
                },
                "chain_seeds": [derive_seed(cell.seed, c) for c in range(spec.n_chains)],
                "n_evals": sum(r.n_evals for r in results),
                "warmup_evals": sum(r.warmup_evals for r in results),
            }
            with open(cell_dir / "cell.json", "w") as handle:
                json.dump(sidecar, handle, indent=2, sort_keys=True)
                handle.write("\n")
            rows = cell_summary_rows(spec, cell, results, model)
            with open(cell_dir / "diagnostics.json", "w") as handle:
                json.dump(rows, handle, indent=2, sort_keys=True, default=float)
                handle.write("\n")
            report.rows.extend(rows)
        except Exception as err:  # noqa: BLE001 - cell isolation
            report.failures[cell.cell_id] = f"{type(err).__name__}: {err}"
    write_summary_csv(out / "summary.csv", report.rows)
    return report


# -- audit probes -----------------------------------------------------------

def _audit_points(model, mass, rng, n_points, step, n_steps):
    """Sample non-divergent phase points near the target's typical set."""
    points = []
    attempts = 0
    while len(points) < n_points and attempts < 50 * n_points:
        attempts += 1
        try:
            q = model.reference_sample(rng, 1)[0]
        except NotImplementedError:
            q = rng.standard_normal(model.dim)
        p = mass.sqrt_diag * rng.standard_normal(model.dim)
        x = evaluate(model, q, p)
        if not np.isfinite(x.logp):
            continue
        if abs(energy_error(model, mass, step, n_steps, q, p)) > 50.0:
            continue
        points.append((q, p))
    if len(points) < n_points:
        raise RuntimeError(f"could not find {n_points} stable probe points for {model.name}")
    return points


def audit_involution(model, mass, step, n_steps, shrink, max_stage, n_points, seed, map_fn=None):
    """Worst relative gap of F_k(F_k(x)) - x per stage k."""
    rng = np.random.default_rng(seed)
    worst = {}
    for stage in range(1, max_stage + 1):
        eps_k = step / shrink ** (stage - 1)
        n_k = n_steps * shrink ** (stage - 1)
        fn = map_fn if map_fn is not None else flow_fn(model, mass, eps_k, n_k)
        points = _audit_points(model, mass, rng, n_points, eps_k, n_k)
        worst[stage] = max(involution_gap(fn, q, p) for q, p in points)
    return worst


def audit_jacobian(model, mass, step, n_steps, shrink, max_stage, n_points, seed,
                   probe_step=1e-5, map_fn=None):
    """Worst |det J| deviation from one per stage k (finite differences)."""
    rng = np.random.default_rng(seed)
    worst = {}
    for stage in range(1, max_stage + 1):
        eps_k = step / shrink ** (stage - 1)
        n_k = n_steps * shrink ** (stage - 1)
        fn = map_fn if map_fn is not None else flow_fn(model, mass, eps_k, n_k)
        points = _audit_points(model, mass, rng, n_points, eps_k, n_k)
        worst[stage] = max(abs(jacobian_determinant(fn, q, p, probe_step) - 1.0) for q, p in points)
    return worst


def audit_energy_scaling(model, mass, t_total, eps_list, n_points, seed):
    """Log-log slope of mean |dH| against the step size; 2 for leapfrog."""
    rng = np.random.default_rng(seed)
    points = [
        (rng.standard_normal(model.dim), mass.sqrt_diag * rng.standard_normal(model.dim))
        for _ in range(n_points)
    ]
    means = []
    for eps in eps_list:
        n_steps = max(1, round(t_total / eps))
        errs = [abs(energy_error(model, mass, eps, n_steps, q, p)) for q, p in points]
        means.append(float(np.mean(errs)))
    slope = float(np.polyfit(np.log(np.asarray(eps_list)), np.log(np.asarray(means)), 1)[0])
    return slope, dict(zip(eps_list, means))


def audit_report(model, mass=None, step=0.05, n_steps=5, shrink=2, max_stage=4,
                 n_points=100, seed=20240810) -> list[dict]:
    """Run all three map audits and return pass/fail rows."""
    mass = mass if mass is not None else MassMatrix.identity(model.dim)
    rows = []
    inv = audit_involution(model, mass, step, n_steps, shrink, max_stage, n_points, seed)
    for stage, gap in sorted(inv.items()):
        rows.append({"probe": "involution", "stage": stage, "value": gap,
                     "threshold": 1e-8, "passed": gap <= 1e-8})
    if model.dim <= 5:
        jac = audit_jacobian(model, mass, step, n_steps, shrink, max_stage,
                             max(10, n_points // 10), seed)
        for stage, dev in sorted(jac.items()):
            rows.append({"probe": "jacobian", "stage": stage, "value": dev,
                         "threshold": 1e-5, "passed": dev <= 1e-5})
    slope, _ = audit_energy_scaling(model, mass, step * n_steps,
                                    [0.2, 0.1, 0.05, 0.025], n_points, seed)
    rows.append({"probe": "energy_slope", "stage": 0, "value": slope,
                 "threshold": "[1.9, 2.1]", "passed": 1.9 <= slope <= 2.1})
    return rows


def forced_ladder(model, config: DrConfig, q, p) -> Ladder:
    """Evaluate a full ladder through every stage, as if all stages rejected."""
    x = evaluate(model, q, p)
    ladder = Ladder(x, config, model)
    ladder.evaluate_through(config.max_stages)
    return ladder


def expected_leapfrog_total(n_steps: int, shrink: int, max_stages: int) -> int:
    """Leapfrog count of a full ladder: sum_j 2^(k-j) * n * a^(j-1)."""
    return sum(2 ** (max_stages - j) * n_steps * shrink ** (j - 1)
               for j in range(1, max_stages + 1))


# -- figure data ------------------------------------------------------------

def _bin_edges(values, width):
    lo = math.floor(float(np.min(values)) / width) * width
    hi = math.ceil(float(np.max(values)) / width) * width
    count = max(1, round((hi - lo) / width))
    return lo + width * np.arange(count + 1)


def figure_funnel_marginal(results, bin_width=MARGINAL_BIN_WIDTH) -> list[dict]:
    """Binned marginal of the first coordinate, pooled over chains."""
    pooled = np.concatenate([r.draws[:, 0] for r in results])
    edges = _bin_edges(pooled, bin_width)
    counts, _ = np.histogram(pooled, bins=edges)
    total = pooled.size
    return [
        {"bin_left": float(edges[i]), "bin_right": float(edges[i + 1]),
         "count": int(counts[i]), "density": counts[i] / (total * bin_width)}
        for i in range(len(counts))
    ]


def figure_stage_histogram(results, bin_width=MARGINAL_BIN_WIDTH) -> list[dict]:
    """Per-stage accept/reject counts, binned by the origin's first coordinate.

    The origin of draw i is draw i-1 (the post-warmup start for i = 0). A
    stage counts as tried for a draw when the ladder reached it; accepted
    when it is the draw's accepted stage. Stage-1 tried counts therefore
    total the number of transitions.
    """
    origins = []
    tags = []
    tried = []
    for r in results:
        start = r.start_q if r.start_q is not None else r.draws[0]
        origins.append(np.concatenate([[start[0]], r.draws[:-1, 0]]))
        tags.append(r.stage_tags)
        tried.append(r.stages_tried)
    origins = np.concatenate(origins)
    tags = np.concatenate(tags)
    tried = np.concatenate(tried)
    edges = _bin_edges(origins, bin_width)
    rows = []
    for stage in range(1, int(tried.max()) + 1):
        mask = tried >= stage
        accepted = mask & (tags == stage)
        rejected = mask & (tags != stage)
        acc_counts, _ = np.histogram(origins[accepted], bins=edges)
        rej_counts, _ = np.histogram(origins[rejected], bins=edges)
        for i in range(len(acc_counts)):
            if acc_counts[i] == 0 and rej_counts[i] == 0:
                continue
            rows.append({"stage": stage, "bin_left": float(edges[i]),
                         "bin_right": float(edges[i + 1]),
                         "accepted": int(acc_counts[i]), "rejected": int(rej_counts[i])})
    return rows


def figure_cost_ratio(rows) -> list[dict]:
    """Cost ratios against the best plain-HMC cell, recorded per moment.

    The baseline is the HMC cell with the lowest primary cost (error-based
    when defined, autocorrelation otherwise); its id is carried on every
    output row so the normalization is reconstructible.
    """
    out = []
    for moment in MOMENTS:
        subset = [r for r in rows if r["moment"] == moment]

        def primary(row):
            value = row["cost_c"]
            if value is None or (isinstance(value, float) and not math.isfinite(value)):
                value = row["cost_r"]
            if value is None or (isinstance(value, float) and not math.isfinite(value)):
                return math.inf
            return value

        baselines = [r for r in subset if r["method"] == "hmc"]
        if not baselines:
            continue
        base = min(baselines, key=primary)
        base_cost = primary(base)
        for row in subset:
            entry = dict(row)
            entry["baseline_cell"] = base["cell_id"]
            entry["baseline_cost"] = base_cost
            entry["cost_ratio"] = primary(row) / base_cost if base_cost > 0 else float("nan")
            out.append(entry)
    return out


def write_figure_csv(path, rows) -> None:
    if not rows:
        with open(path, "w") as handle:
            handle.write("\n")
        return
    columns = list(rows[0].keys())
    with open(path, "w") as handle:
        handle.write(",".join(columns) + "\n")
        for row in rows:
            handle.write(",".join(_format_cell(row[c]) for c in columns) + "\n")

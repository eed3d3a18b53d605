"""Command-line entry point: run grids, audit the maps, check gradients, emit figure data."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import config_schema, parse_config
from .models import MODEL_NAMES, check_gradient, make_model
from .phase import MassMatrix


def _add_common(parser):
    parser.add_argument("--config", type=Path, required=True, help="run spec JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--workers", type=int, default=None, help="parallel worker budget")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def _load_spec(args):
    spec = parse_config(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    return spec


def _cmd_run(args) -> int:
    from .harness import run_grid

    spec = _load_spec(args)
    report = run_grid(spec, out_dir=args.out, workers=args.workers)
    print(f"wrote {len(report.rows)} summary rows to {report.out_dir / 'summary.csv'}")
    for cell_id, message in sorted(report.failures.items()):
        print(f"FAILED {cell_id}: {message}", file=sys.stderr)
    return 0 if report.ok else 1


def _cmd_audit(args) -> int:
    from .harness import audit_report

    model = make_model(args.model, {"dim": args.dim} if args.dim else {})
    rows = audit_report(
        model,
        mass=MassMatrix.identity(model.dim),
        step=args.step,
        n_steps=args.n_steps,
        shrink=args.shrink,
        max_stage=args.max_stage,
        n_points=args.points,
        seed=args.seed,
    )
    failures = 0
    print(f"{'probe':<14} {'stage':>5} {'value':>14} {'threshold':>12} {'result':>8}")
    for row in rows:
        ok = row["passed"]
        failures += not ok
        print(f"{row['probe']:<14} {row['stage']:>5} {row['value']:>14.3e} "
              f"{str(row['threshold']):>12} {'pass' if ok else 'FAIL':>8}")
    return 0 if failures == 0 else 1


def _cmd_gradcheck(args) -> int:
    model = make_model(args.model, {"dim": args.dim} if args.dim else {})
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.points):
        q = rng.standard_normal(model.dim)
        worst = max(worst, check_gradient(model, q, h=args.h))
    ok = worst <= args.tol
    print(f"{args.model}: max relative gradient error {worst:.3e} over "
          f"{args.points} points ({'pass' if ok else 'FAIL'} at {args.tol:g})")
    return 0 if ok else 1


def _cmd_figure_data(args) -> int:
    from .harness import (FIGURE_IDS, expand_grid, figure_cost_ratio,
                          figure_funnel_marginal, figure_stage_histogram,
                          run_grid, write_figure_csv)

    if args.figure not in FIGURE_IDS:
        print(f"unknown figure id '{args.figure}'; known: {', '.join(FIGURE_IDS)}",
              file=sys.stderr)
        return 2
    spec = _load_spec(args)
    out = Path(args.out) if args.out else Path(spec.out_dir)
    report = run_grid(spec, out_dir=out, workers=args.workers)
    if not report.ok:
        for cell_id, message in sorted(report.failures.items()):
            print(f"FAILED {cell_id}: {message}", file=sys.stderr)
        return 1
    if args.figure == "cost-ratio":
        write_figure_csv(out / "figure_cost-ratio.csv", figure_cost_ratio(report.rows))
        print(f"wrote {out / 'figure_cost-ratio.csv'}")
        return 0
    from .sampler import ChainResult  # noqa: F401  (type context only)

    builder = figure_funnel_marginal if args.figure == "funnel-marginal" else figure_stage_histogram
    for cell in expand_grid(spec):
        cell_dir = out / "cells" / cell.cell_id
        results = _load_cell_results(cell_dir)
        rows = builder(results)
        path = cell_dir / f"figure_{args.figure}.csv"
        write_figure_csv(path, rows)
        print(f"wrote {path}")
    return 0


def _load_cell_results(cell_dir: Path):
    """Rehydrate just enough of each chain CSV for the figure builders."""
    from .sampler import ChainResult

    results = []
    for csv_path in sorted(cell_dir.glob("chain_*.csv")):
        data = np.genfromtxt(csv_path, delimiter=",", names=True)
        names = data.dtype.names
        q_cols = [n for n in names if n.startswith("q")]
        draws = np.column_stack([data[n] for n in q_cols])
        with open(csv_path.with_suffix(".json")) as handle:
            sidecar = json.load(handle)
        results.append(ChainResult(
            draws=draws,
            stage_tags=data["stage"].astype(np.int64),
            stages_tried=data["tried"].astype(np.int64),
            eval_counts=data["evals"].astype(np.int64),
            seed=sidecar["seed"],
            config=sidecar["config"],
            model_name=sidecar["model"],
            n_warmup=sidecar["n_warmup"],
            warmup_evals=sidecar["warmup_evals"],
            adapted=sidecar["adapted"],
        ))
    return results


def _cmd_schema(args) -> int:
    text = json.dumps(config_schema(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="drhmc",
                                     description="Delayed rejection HMC experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configuration grid")
    _add_common(run_p)

    audit_p = sub.add_parser("audit", help="involution, volume, and energy-scaling probes")
    audit_p.add_argument("--model", choices=MODEL_NAMES, default="funnel")
    audit_p.add_argument("--dim", type=int, default=None)
    audit_p.add_argument("--step", type=float, default=0.05)
    audit_p.add_argument("--n-steps", type=int, default=5)
    audit_p.add_argument("--shrink", type=int, default=2)
    audit_p.add_argument("--max-stage", type=int, default=4)
    audit_p.add_argument("--points", type=int, default=100)
    audit_p.add_argument("--seed", type=int, default=20240810)

    grad_p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    grad_p.add_argument("--model", choices=MODEL_NAMES, default="funnel")
    grad_p.add_argument("--dim", type=int, default=None)
    grad_p.add_argument("--points", type=int, default=100)
    grad_p.add_argument("--h", type=float, default=1e-5)
    grad_p.add_argument("--tol", type=float, default=1e-5)
    grad_p.add_argument("--seed", type=int, default=20240810)

    fig_p = sub.add_parser("figure-data", help="plot-ready CSV bundles")
    fig_p.add_argument("--figure", required=True,
                       help="funnel-marginal, stage-histogram, or cost-ratio")
    _add_common(fig_p)

    schema_p = sub.add_parser("schema", help="emit the config schema with defaults")
    schema_p.add_argument("--out", type=Path, default=None)

    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "audit": _cmd_audit,
        "gradcheck": _cmd_gradcheck,
        "figure-data": _cmd_figure_data,
        "schema": _cmd_schema,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

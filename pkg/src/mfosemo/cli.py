"""Experiment runner.

``mfosemo run`` executes one problem across seeds in either multi-fidelity or
single-fidelity mode, writing one trace CSV per seed plus an aggregate CSV
and a convergence figure.  ``mfosemo summarize`` compares finished run
directories and reports the cost-reduction factor: one minus the ratio of the
worst multi-fidelity convergence cost to the best single-fidelity one.

Exit codes: 0 success, 1 argument/configuration error, 2 numerical failure,
3 I/O failure.  ``MFOSEMO_OUT`` supplies the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys

from .benchmarks import make_problem, problem_names, single_fidelity_view
from .campaign import CampaignConfig, run_campaign
from .errors import ConfigurationError, MfosemoError, NumericalError
from .traces import (RunManifest, aggregate_traces, default_output_dir, first_crossing,
                     read_trace, trace_filename, trace_from_result, write_aggregate,
                     write_trace)

log = logging.getLogger(__name__)

AGGREGATE_FILE = "aggregate.csv"
MANIFEST_FILE = "manifest.json"
RUN_FIGURE = "phv_vs_cost.png"
SUMMARY_FILE = "cost_reduction.csv"
SUMMARY_FIGURE = "comparison.png"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mfosemo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run campaigns across seeds")
    run.add_argument("--config", help="JSON manifest; flags override its fields")
    run.add_argument("--problem", choices=[n.lower() for n in problem_names()] + problem_names())
    run.add_argument("--budget", type=float, help="total normalized cost budget")
    run.add_argument("--mc-samples", type=int, help="Pareto-front samples per iteration")
    run.add_argument("--approximation", choices=["tg", "ni"], help="conditional-entropy scheme")
    run.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2")
    run.add_argument("--grid-size", type=int, help="acquisition candidate grid size")
    run.add_argument("--mode", choices=["mf", "sf"], help="multi- or single-fidelity")
    run.add_argument("--out", help="output directory (default: $MFOSEMO_OUT)")
    run.add_argument("--refit-interval", type=int)
    run.add_argument("--n-features", type=int)
    run.add_argument("--recommend-grid-size", type=int)
    run.add_argument("--moo-population", type=int)
    run.add_argument("--moo-generations", type=int)
    run.add_argument("--fit-restarts", type=int)
    run.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    summ = sub.add_parser("summarize", help="cost-reduction table from run directories")
    summ.add_argument("run_dirs", nargs="+", help="directories produced by `mfosemo run`")
    summ.add_argument("--out", help="also write CSV and figure into this directory")
    summ.add_argument("--no-figures", action="store_true")
    return parser


def _manifest_from_args(args) -> RunManifest:
    payload: dict = {}
    if args.config:
        with open(args.config) as fh:
            import json
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"malformed config {args.config}: {exc}")
    overrides = {
        "problem": args.problem,
        "budget": args.budget,
        "mc_samples": args.mc_samples,
        "approximation": args.approximation,
        "grid_size": args.grid_size,
        "mode": args.mode,
        "out": args.out,
        "refit_interval": args.refit_interval,
        "n_features": args.n_features,
        "recommend_grid_size": args.recommend_grid_size,
        "moo_population": args.moo_population,
        "moo_generations": args.moo_generations,
        "fit_restarts": args.fit_restarts,
    }
    if args.seeds is not None:
        overrides["seeds"] = [int(s) for s in str(args.seeds).split(",") if s.strip() != ""]
    payload.update({k: v for k, v in overrides.items() if v is not None})
    if "problem" not in payload:
        raise ConfigurationError("--problem (or a config file naming one) is required")
    payload.setdefault("out", default_output_dir())
    return RunManifest.from_dict(payload)


def run(manifest: RunManifest, render_figures: bool = True) -> int:
    """Execute every seed of a manifest and persist traces plus aggregate."""
    manifest.validate()
    out_dir = manifest.out_dir
    os.makedirs(out_dir, exist_ok=True)
    problem = make_problem(manifest.problem)
    if manifest.mode == "sf":
        problem = single_fidelity_view(problem)
    traces = []
    for seed in manifest.seeds:
        config = dataclasses.replace(manifest.config, seed=seed)
        log.info("running %s mode=%s seed=%d", manifest.problem, manifest.mode, seed)
        result = run_campaign(problem, config)
        trace = trace_from_result(result)
        write_trace(os.path.join(out_dir, trace_filename(seed)), trace)
        traces.append(trace)
    grid, mean, var, n = aggregate_traces(traces)
    write_aggregate(os.path.join(out_dir, AGGREGATE_FILE), grid, mean, var, n)
    manifest.write(os.path.join(out_dir, MANIFEST_FILE))
    if render_figures:
        from .plots import plot_run
        plot_run(os.path.join(out_dir, RUN_FIGURE), traces, grid, mean,
                 title=f"{manifest.problem} ({manifest.mode}, {manifest.config.approximation})")
    return 0


def _load_run_dir(path: str):
    manifest = RunManifest.read(os.path.join(path, MANIFEST_FILE))
    traces = []
    for seed in manifest.seeds:
        traces.append(read_trace(os.path.join(path, trace_filename(seed))))
    return manifest, traces


def summarize(run_dirs: list[str], out_dir: str | None = None,
              render_figures: bool = True) -> list[dict]:
    """Cost-reduction rows, one per problem present in the run directories.

    For each problem: the worst seed cost at which any multi-fidelity run
    reaches the convergence threshold, the best seed cost among the
    single-fidelity runs, and the reduction factor between them.
    """
    loaded = [(_load_run_dir(d), d) for d in run_dirs]
    problems = sorted({m.problem for (m, _), _ in loaded})
    rows = []
    curves: dict[str, tuple] = {}
    for name in problems:
        threshold = make_problem(name).convergence_threshold()
        mf_crossings, sf_crossings = [], []
        mf_converged = sf_converged = True
        for (manifest, traces), d in loaded:
            if manifest.problem != name:
                continue
            label = f"{name}-{manifest.mode}-{manifest.config.approximation}-{os.path.basename(os.path.normpath(d))}"
            curves[label] = aggregate_traces(traces)[:3]
            for trace in traces:
                cross = first_crossing(trace.costs, trace.phv_diff, threshold)
                if manifest.mode == "mf":
                    mf_converged &= cross is not None
                    if cross is not None:
                        mf_crossings.append(cross)
                else:
                    sf_converged &= cross is not None
                    if cross is not None:
                        sf_crossings.append(cross)
        if not mf_crossings or not sf_crossings:
            raise ConfigurationError(
                f"problem {name}: need at least one multi-fidelity and one "
                f"single-fidelity run directory to summarize")
        lam = max(mf_crossings) if mf_converged else None
        lam_b = min(sf_crossings) if sf_crossings else None
        if lam is None or lam_b is None:
            reduction = "not converged"
        else:
            reduction = f"{100.0 * (1.0 - lam / lam_b):.2f}%"
        rows.append({
            "problem": name,
            "threshold": threshold,
            "lambda_mf_worst": lam if lam is not None else "not converged",
            "lambda_sf_best": lam_b if lam_b is not None else "not converged",
            "cost_reduction": reduction,
        })
    _print_summary(rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, SUMMARY_FILE), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        if render_figures:
            from .plots import plot_comparison
            plot_comparison(os.path.join(out_dir, SUMMARY_FIGURE), curves)
    return rows


def _print_summary(rows) -> None:
    header = f"{'problem':<8} {'threshold':>12} {'lambda_mf':>12} {'lambda_sf':>12} {'reduction':>14}"
    print(header)
    print("-" * len(header))
    for row in rows:
        lam = row["lambda_mf_worst"]
        lam_b = row["lambda_sf_best"]
        lam = f"{lam:.4g}" if isinstance(lam, float) else lam
        lam_b = f"{lam_b:.4g}" if isinstance(lam_b, float) else lam_b
        print(f"{row['problem']:<8} {row['threshold']:>12.4g} {lam:>12} {lam_b:>12} "
              f"{row['cost_reduction']:>14}")


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MFOSEMO_LOGLEVEL", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return run(_manifest_from_args(args), render_figures=not args.no_figures)
        rows = summarize(args.run_dirs, out_dir=args.out,
                         render_figures=not args.no_figures)
        return 0 if rows else 1
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    except MfosemoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

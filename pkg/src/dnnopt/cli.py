"""Command-line front end: seeded runs, variable screening, comparisons."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .baselines import differential_evolution, random_search
from .config import ConfigError, RunConfig, load_config
from .evaluators import EvaluationLog, Evaluator
from .external import ProtocolError
from .optimizer import RunResult, initial_sample, run as run_dnnopt
from .problem import ProblemDefinition, denormalize, resolve_objective_weight
from .reports import (
    padded_best_fom,
    summarize_runs,
    write_compare_csv,
    write_run_csv,
    write_sensitivity_report,
    write_summary_json,
)
from .sensitivity import FrozenSubspaceEvaluator, failing_specs, screen


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed_override:
        cfg.seeds = [int(s) for s in args.seed_override.split(",")]
    if args.budget_override:
        cfg.budget = int(args.budget_override)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return cfg


def _run_one(
    cfg: RunConfig,
    problem: ProblemDefinition,
    evaluator: Evaluator,
    algorithm: str,
    seed: int,
    budget: int | None = None,
    stop_on_feasible: bool | None = None,
    w0: float | None = None,
) -> RunResult:
    sof = cfg.stop_on_feasible if stop_on_feasible is None else stop_on_feasible
    w0 = cfg.objective_weight if w0 is None else w0
    if algorithm == "dnnopt":
        dcfg = cfg.dnnopt_config(seed, budget=budget, stop_on_feasible=sof)
        if w0 is not None:
            dcfg.w0 = w0
        return run_dnnopt(problem, evaluator, dcfg)
    if algorithm == "de":
        decfg = cfg.de_config(seed, budget=budget, stop_on_feasible=sof)
        if w0 is not None:
            decfg.w0 = w0
        return differential_evolution(problem, evaluator, decfg)
    return random_search(
        problem,
        evaluator,
        budget=cfg.budget if budget is None else budget,
        seed=seed,
        stop_on_feasible=sof,
        w0=w0,
        cache=cfg.cache,
    )


def _execute_runs(
    cfg: RunConfig,
    problem: ProblemDefinition,
    evaluator: Evaluator,
    out_dir: str,
    label: str = "",
) -> list[RunResult]:
    results = []
    for seed in cfg.seeds:
        result = _run_one(cfg, problem, evaluator, cfg.algorithm, seed)
        csv_path = os.path.join(out_dir, f"{cfg.algorithm}{label}_seed{seed}.csv")
        write_run_csv(csv_path, result)
        status = f"feasible at eval {result.first_feasible}" if result.feasible else "no feasible design"
        print(
            f"[{cfg.algorithm} seed {seed}] {result.evaluations} evaluations, "
            f"best objective {result.best_spec[0]:.6g}, {status}"
        )
        results.append(result)
    return results


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    evaluator = cfg.make_evaluator()
    try:
        results = _execute_runs(cfg, cfg.problem, evaluator, cfg.output_dir)
        summary = summarize_runs(results, cfg.budget)
        summary_path = os.path.join(cfg.output_dir, f"{cfg.algorithm}_summary.json")
        write_summary_json(summary_path, summary)
        print(f"summary: success rate {summary['success_rate']} -> {summary_path}")
        return 0
    finally:
        evaluator.close()


def _shared_objective_weight(cfg: RunConfig, problem: ProblemDefinition, evaluator: Evaluator) -> float:
    """One objective weight for all compared algorithms.

    Uses the configured override when given; otherwise resolves the usual
    initial-population rule on a fixed reference sample so every algorithm
    scores designs identically.
    """
    if cfg.objective_weight is not None:
        return cfg.objective_weight
    U = initial_sample(problem, 50, seed=cfg.seeds[0])
    F = np.array([evaluator.evaluate(denormalize(u, problem)) for u in U])
    return resolve_objective_weight(F, problem.specs)


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    evaluator = cfg.make_evaluator()
    try:
        w0 = _shared_objective_weight(cfg, cfg.problem, evaluator)
        mean_curves: dict[str, np.ndarray] = {}
        summaries = {}
        for algorithm in cfg.compare_algorithms:
            curves = []
            results = []
            for seed in cfg.seeds:
                result = _run_one(
                    cfg, cfg.problem, evaluator, algorithm, seed,
                    stop_on_feasible=False, w0=w0,
                )
                write_run_csv(os.path.join(cfg.output_dir, f"{algorithm}_seed{seed}.csv"), result)
                curves.append(padded_best_fom(result, cfg.budget))
                results.append(result)
                print(f"[{algorithm} seed {seed}] best FoM {curves[-1][-1]:.6g}")
            mean_curves[algorithm] = np.mean(curves, axis=0)
            summaries[algorithm] = summarize_runs(results, cfg.budget)
        compare_path = os.path.join(cfg.output_dir, "compare.csv")
        write_compare_csv(compare_path, mean_curves, cfg.budget)
        write_summary_json(os.path.join(cfg.output_dir, "compare_summary.json"), summaries)
        print(f"aligned mean-FoM curves -> {compare_path}")
        return 0
    finally:
        evaluator.close()


def cmd_sensitivity(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    evaluator = cfg.make_evaluator()
    try:
        problem = cfg.problem
        settings = cfg.sensitivity
        nominal = settings.nominal if settings.nominal is not None else (problem.lb + problem.ub) / 2.0
        log = EvaluationLog(evaluator, cache=cfg.cache)
        nominal_spec = log.evaluate(nominal)
        if settings.screened_specs == "all":
            screened = list(range(len(problem.specs)))
        elif settings.screened_specs == "failing":
            screened = failing_specs(nominal_spec)
            if not screened:
                screened = list(range(len(problem.specs)))
        else:
            screened = list(settings.screened_specs)
        report = screen(log, problem, nominal, settings.rel_step, screened, settings.thresh)
        report_path = os.path.join(cfg.output_dir, "sensitivity.json")
        write_sensitivity_report(report_path, report, problem)
        names = problem.var_names or tuple(f"x{j}" for j in range(problem.d))
        kept = [names[j] for j in report.active_set]
        print(f"screened specs {screened}; active variables {report.active_set} ({', '.join(kept)})")
        print(f"report -> {report_path} ({log.count} probe evaluations)")

        if args.run:
            sub = FrozenSubspaceEvaluator(evaluator, report.active_set, nominal)
            results = _execute_runs(cfg, sub.problem, sub, cfg.output_dir, label="_pruned")
            summary = summarize_runs(results, cfg.budget)
            summary["pruned_from"] = problem.d
            summary["active_set"] = report.active_set
            summary["best_design_full"] = {
                str(r.seed): [float(v) for v in sub.embed(r.best_design)] for r in results
            }
            write_summary_json(os.path.join(cfg.output_dir, f"{cfg.algorithm}_pruned_summary.json"), summary)
        return 0
    finally:
        evaluator.close()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dnnopt",
        description="Surrogate-guided constrained black-box optimization with DE and random-search baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML run configuration file")
        p.add_argument("--seed-override", help="comma-separated seed list replacing the config's seeds")
        p.add_argument("--budget-override", type=int, help="evaluation budget replacing the config's budget")
        p.add_argument("--output-dir", help="directory for CSV/JSON outputs")

    p_run = sub.add_parser("run", help="execute one optimization run per seed")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sens = sub.add_parser("sensitivity", help="screen variables by finite-difference sensitivity")
    common(p_sens)
    p_sens.add_argument("--run", action="store_true", help="optimize the pruned problem afterwards")
    p_sens.set_defaults(func=cmd_sensitivity)

    p_cmp = sub.add_parser("compare", help="run every listed algorithm over the shared seeds")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"fatal evaluator protocol error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

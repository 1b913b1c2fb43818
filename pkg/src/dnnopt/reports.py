"""Machine-readable run artifacts: FoM-history CSVs, summaries, comparisons.

All files are written atomically (temp file then rename) and every emitted
format has a loader here, so outputs can be re-read by the package itself.
Floats are serialized with ``repr`` for byte-stable, round-trippable output.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np

from .optimizer import RunResult
from .problem import ProblemDefinition
from .sensitivity import SensitivityReport

RUN_CSV_HEADER = "eval_index,fom_best,objective_best,feasible"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _fmt(x: float) -> str:
    return repr(float(x))


def run_curves(result: RunResult) -> dict[str, np.ndarray]:
    """Per-evaluation best-so-far curves backing the run CSV."""
    fom_best = result.best_fom_history
    n = result.evaluations
    objective_best = np.full(n, np.nan)
    feasible_so_far = np.zeros(n, dtype=int)
    best_obj = np.nan
    seen_feasible = False
    for k, rec in enumerate(result.records):
        spec = rec.spec
        if np.all(np.isfinite(spec[1:])) and np.all(spec[1:] <= 0.0):
            obj = float(spec[0])
            best_obj = obj if not seen_feasible else min(best_obj, obj)
            seen_feasible = True
        objective_best[k] = best_obj
        feasible_so_far[k] = int(seen_feasible)
    return {
        "eval_index": np.arange(1, n + 1),
        "fom_best": fom_best,
        "objective_best": objective_best,
        "feasible": feasible_so_far,
    }


def write_run_csv(path: str, result: RunResult) -> None:
    """One row per evaluation: best-so-far FoM/objective and feasibility flag."""
    curves = run_curves(result)
    lines = [RUN_CSV_HEADER]
    for k in range(result.evaluations):
        lines.append(
            f"{curves['eval_index'][k]},{_fmt(curves['fom_best'][k])},"
            f"{_fmt(curves['objective_best'][k])},{curves['feasible'][k]}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def read_run_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != RUN_CSV_HEADER:
            raise ValueError(f"unexpected run CSV header: {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return {
        "eval_index": np.array([int(r[0]) for r in rows]),
        "fom_best": np.array([float(r[1]) for r in rows]),
        "objective_best": np.array([float(r[2]) for r in rows]),
        "feasible": np.array([int(r[3]) for r in rows]),
    }


def _stats(values: list[float]) -> dict:
    if not values:
        return {"min": None, "max": None, "mean": None}
    return {
        "min": float(min(values)),
        "max": float(max(values)),
        "mean": float(sum(values) / len(values)),
    }


def summarize_runs(results: list[RunResult], budget: int) -> dict:
    """Success rate, evaluations-to-first-feasible and best-objective statistics."""
    successes = [r for r in results if r.feasible]
    ff = [int(r.first_feasible) for r in successes]
    best_obj = [float(r.best_spec[0]) for r in successes]
    return {
        "algorithm": results[0].algorithm if results else None,
        "budget": budget,
        "seeds": [r.seed for r in results],
        "success_rate": f"{len(successes)}/{len(results)}",
        "first_feasible": {
            "per_seed": {str(r.seed): (int(r.first_feasible) if r.feasible else None) for r in results},
            **_stats(ff),
        },
        "best_objective": {
            "per_seed": {str(r.seed): (float(r.best_spec[0]) if r.feasible else None) for r in results},
            **_stats(best_obj),
        },
        "evaluations": {str(r.seed): r.evaluations for r in results},
    }


def write_summary_json(path: str, summary: dict) -> None:
    _atomic_write(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_summary_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def padded_best_fom(result: RunResult, budget: int) -> np.ndarray:
    """Best-FoM curve extended to full budget length with its final value."""
    curve = result.best_fom_history
    if curve.size >= budget:
        return curve[:budget]
    return np.concatenate([curve, np.full(budget - curve.size, curve[-1])])


def write_compare_csv(path: str, mean_curves: dict[str, np.ndarray], budget: int) -> None:
    """Aligned mean best-FoM per evaluation index, one column per algorithm."""
    algos = list(mean_curves)
    lines = ["eval_index," + ",".join(algos)]
    for k in range(budget):
        lines.append(f"{k + 1}," + ",".join(_fmt(mean_curves[a][k]) for a in algos))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_compare_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    out: dict[str, np.ndarray] = {}
    for col, name in enumerate(header):
        if name == "eval_index":
            out[name] = np.array([int(r[col]) for r in rows])
        else:
            out[name] = np.array([float(r[col]) for r in rows])
    return out


def sensitivity_report_dict(report: SensitivityReport, prob: ProblemDefinition) -> dict:
    from .sensitivity import normalized_sensitivity

    def listify(arr):
        return [None if (isinstance(v, float) and math.isnan(v)) else v for v in arr]

    norm = normalized_sensitivity(report, prob)
    return {
        "problem": prob.name,
        "spec_names": [s.name for s in prob.specs],
        "var_names": list(prob.var_names) if prob.var_names else [f"x{j}" for j in range(prob.d)],
        "nominal": [float(v) for v in report.nominal],
        "nominal_spec": listify([float(v) for v in report.nominal_spec]),
        "steps": [float(v) for v in report.steps],
        "sensitivity": [listify([float(v) for v in row]) for row in report.S],
        "normalized_sensitivity": [listify([float(v) for v in row]) for row in norm],
        "thresh": report.thresh,
        "screened_specs": report.screened_specs,
        "active_set": report.active_set,
    }


def write_sensitivity_report(path: str, report: SensitivityReport, prob: ProblemDefinition) -> None:
    _atomic_write(path, json.dumps(sensitivity_report_dict(report, prob), indent=2, sort_keys=True) + "\n")


def load_sensitivity_report(path: str) -> dict:
    """Parse an emitted sensitivity report back into arrays."""
    with open(path) as fh:
        data = json.load(fh)

    def unlistify(rows):
        return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)

    data["sensitivity"] = unlistify(data["sensitivity"])
    data["normalized_sensitivity"] = unlistify(data["normalized_sensitivity"])
    data["nominal"] = np.asarray(data["nominal"], dtype=float)
    data["steps"] = np.asarray(data["steps"], dtype=float)
    return data

"""Finite-difference variable screening and subspace restriction.

Each design variable is perturbed around a nominal design to estimate how
strongly every spec responds to it.  Variables whose normalized sensitivity
stays below a threshold for all screened specs are frozen at their nominal
values, shrinking the search space before optimization; the frozen values
are re-attached to any design produced in the reduced space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluators import Evaluator
from .problem import ProblemDefinition


@dataclass
class SensitivityReport:
    """Per-spec, per-variable finite-difference slopes around a nominal design.

    ``S[i, j]`` approximates the derivative of canonical spec i with respect
    to raw variable j.  A NaN column marks a variable whose probes failed;
    such variables are conservatively kept active.  ``active_set`` and
    ``thresh`` are filled in by :func:`prune_variables`.
    """

    S: np.ndarray  # (m+1, d)
    nominal: np.ndarray  # raw design the probes were centered on
    nominal_spec: np.ndarray  # canonical spec vector at the nominal design
    steps: np.ndarray  # realized probe separation per variable (raw units)
    active_set: list[int] | None = None
    thresh: float | None = None
    screened_specs: list[int] | None = None


def compute_sensitivity(
    evaluator: Evaluator,
    prob: ProblemDefinition,
    nominal: np.ndarray,
    rel_step: float = 0.05,
) -> SensitivityReport:
    """Central-difference sensitivities using 2d probe evaluations plus one nominal.

    Probes are clipped to the global box, which degrades gracefully to a
    one-sided difference when the nominal design sits on a bound.
    """
    if not (0.0 < rel_step < 0.5):
        raise ValueError("rel_step must lie in (0, 0.5)")
    nominal = prob.clip(np.asarray(nominal, dtype=float))
    nominal_spec = np.asarray(evaluator.evaluate(nominal), dtype=float)
    n_specs = len(prob.specs)
    S = np.empty((n_specs, prob.d))
    steps = np.empty(prob.d)
    h = rel_step * (prob.ub - prob.lb)
    for j in range(prob.d):
        xp = nominal.copy()
        xm = nominal.copy()
        xp[j] = min(nominal[j] + h[j], prob.ub[j])
        xm[j] = max(nominal[j] - h[j], prob.lb[j])
        fp = np.asarray(evaluator.evaluate(xp), dtype=float)
        fm = np.asarray(evaluator.evaluate(xm), dtype=float)
        steps[j] = xp[j] - xm[j]
        with np.errstate(invalid="ignore"):
            S[:, j] = (fp - fm) / steps[j]
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            S[:, j] = np.nan  # unknown column; retained by prune_variables
    return SensitivityReport(S=S, nominal=nominal, nominal_spec=nominal_spec, steps=steps)


def normalized_sensitivity(report: SensitivityReport, prob: ProblemDefinition) -> np.ndarray:
    """Dimensionless sensitivity: |S| scaled by variable range and spec magnitude.

    Entry (i, j) is the full-range swing of spec i caused by variable j,
    relative to the spec's nominal magnitude (floored at 1), so one threshold
    is meaningful across specs with different units.
    """
    scale = np.maximum(np.abs(report.nominal_spec), 1.0)
    return np.abs(report.S) * (prob.ub - prob.lb)[None, :] / scale[:, None]


def prune_variables(
    report: SensitivityReport,
    prob: ProblemDefinition,
    screened_specs: list[int],
    thresh: float,
) -> list[int]:
    """Indices of variables whose normalized sensitivity exceeds ``thresh``.

    Screening is restricted to ``screened_specs`` (0 is the objective).
    Never returns an empty set: if everything falls below the threshold, the
    single most sensitive variable is kept.  Variables with unknown (NaN)
    sensitivities are always retained.
    """
    if len(screened_specs) == 0:
        raise ValueError("screened_specs must be non-empty")
    screened = sorted(set(int(i) for i in screened_specs))
    if screened[0] < 0 or screened[-1] >= len(prob.specs):
        raise ValueError(f"screened spec indices must lie in 0..{len(prob.specs) - 1}")
    norm = normalized_sensitivity(report, prob)[screened, :]
    unknown = np.any(np.isnan(norm), axis=0)
    with np.errstate(invalid="ignore"):
        score = np.nanmax(np.where(np.isnan(norm), -np.inf, norm), axis=0)
    active = (score > thresh) | unknown
    if not active.any():
        active[int(np.argmax(score))] = True
    return [int(j) for j in np.flatnonzero(active)]


def screen(
    evaluator: Evaluator,
    prob: ProblemDefinition,
    nominal: np.ndarray,
    rel_step: float,
    screened_specs: list[int],
    thresh: float,
) -> SensitivityReport:
    """Compute sensitivities and fill in the pruning decision."""
    report = compute_sensitivity(evaluator, prob, nominal, rel_step)
    report.active_set = prune_variables(report, prob, screened_specs, thresh)
    report.thresh = float(thresh)
    report.screened_specs = sorted(set(int(i) for i in screened_specs))
    return report


def failing_specs(nominal_spec: np.ndarray) -> list[int]:
    """Constraint indices violated (or unknown) at the nominal design."""
    cons = np.asarray(nominal_spec, dtype=float)[1:]
    return [int(i) + 1 for i in range(cons.size) if not (cons[i] <= 0.0)]


class FrozenSubspaceEvaluator(Evaluator):
    """Evaluator over the active variables only, the rest pinned at nominal."""

    def __init__(self, inner: Evaluator, active_set: list[int], nominal: np.ndarray) -> None:
        self.inner = inner
        self.active_set = list(active_set)
        full = inner.problem
        self.nominal = full.clip(np.asarray(nominal, dtype=float))
        idx = np.asarray(self.active_set, dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= full.d or len(set(self.active_set)) != idx.size:
            raise ValueError("active_set must be distinct valid variable indices")
        self.problem = ProblemDefinition(
            lb=full.lb[idx],
            ub=full.ub[idx],
            specs=full.specs,
            name=f"{full.name}_sub{idx.size}",
            var_names=tuple(full.var_names[j] for j in idx) if full.var_names else None,
            integer=full.integer[idx] if full.integer is not None else None,
        )
        self.deterministic = inner.deterministic
        self.concurrency_safe = inner.concurrency_safe

    def embed(self, sub_design: np.ndarray) -> np.ndarray:
        """Re-attach frozen nominal values around a reduced-space design."""
        full = self.nominal.copy()
        full[self.active_set] = np.asarray(sub_design, dtype=float)
        return full

    def evaluate(self, design: np.ndarray) -> np.ndarray:
        return self.inner.evaluate(self.embed(design))

    def close(self) -> None:
        self.inner.close()

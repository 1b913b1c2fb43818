"""Constrained problem definitions, canonical specs, and the figure of merit.

Conventions used across the package:

* a *design* is a length-d float array in raw (physical) units;
* a *unit design* is the same point mapped affinely into [0, 1]^d;
* a *spec vector* is a length-(m+1) float array whose first entry is the
  objective value and whose remaining entries are constraints in canonical
  ``f_i <= 0`` form.  A spec vector with non-finite entries marks a failed
  evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

OBJECTIVE_MIN = "objective-min"
CONSTRAINT_LE = "constraint-le"
CONSTRAINT_GE = "constraint-ge"

SPEC_KINDS = (OBJECTIVE_MIN, CONSTRAINT_LE, CONSTRAINT_GE)


@dataclass(frozen=True)
class SpecDefinition:
    """One performance metric: the objective or a single constraint.

    ``bound`` is the constraint target (unused for the objective) and
    ``weight`` is the FoM weighting factor for this metric.
    """

    name: str
    kind: str
    bound: float = 0.0
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in SPEC_KINDS:
            raise ValueError(f"unknown spec kind {self.kind!r} for {self.name!r}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError(f"spec {self.name!r}: weight must be positive, got {self.weight}")
        if not math.isfinite(self.bound):
            raise ValueError(f"spec {self.name!r}: bound must be finite")


@dataclass(frozen=True)
class ProblemDefinition:
    """Search box plus the ordered spec list (objective first)."""

    lb: np.ndarray
    ub: np.ndarray
    specs: tuple[SpecDefinition, ...]
    name: str = "problem"
    var_names: tuple[str, ...] | None = None
    integer: np.ndarray | None = None  # boolean mask of integer-valued variables

    def __post_init__(self) -> None:
        lb = np.asarray(self.lb, dtype=float)
        ub = np.asarray(self.ub, dtype=float)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        object.__setattr__(self, "specs", tuple(self.specs))
        if lb.ndim != 1 or lb.shape != ub.shape:
            raise ValueError("lb and ub must be 1-d arrays of equal length")
        if not np.all(np.isfinite(lb)) or not np.all(np.isfinite(ub)):
            raise ValueError("bounds must be finite")
        if not np.all(lb < ub):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if not self.specs:
            raise ValueError("spec list must be non-empty")
        if self.specs[0].kind != OBJECTIVE_MIN:
            raise ValueError("first spec must be the objective")
        if any(s.kind == OBJECTIVE_MIN for s in self.specs[1:]):
            raise ValueError("exactly one objective spec allowed")
        if self.var_names is not None and len(self.var_names) != lb.size:
            raise ValueError("var_names length must equal dimensionality")
        if self.integer is not None:
            mask = np.asarray(self.integer, dtype=bool)
            if mask.shape != lb.shape:
                raise ValueError("integer mask length must equal dimensionality")
            object.__setattr__(self, "integer", mask)

    @property
    def d(self) -> int:
        return int(self.lb.size)

    @property
    def m(self) -> int:
        return len(self.specs) - 1

    def clip(self, x: np.ndarray) -> np.ndarray:
        """Clip a raw design into the global box."""
        return np.clip(np.asarray(x, dtype=float), self.lb, self.ub)

    def round_integers(self, x: np.ndarray) -> np.ndarray:
        """Round integer-valued variables of a raw design to the nearest integer."""
        if self.integer is None or not self.integer.any():
            return np.asarray(x, dtype=float)
        out = np.array(x, dtype=float)
        out[self.integer] = np.rint(out[self.integer])
        return np.clip(out, self.lb, self.ub)

    def with_objective_weight(self, w0: float) -> "ProblemDefinition":
        """Return a copy whose objective spec carries weight ``w0``."""
        specs = (replace(self.specs[0], weight=float(w0)),) + self.specs[1:]
        return replace(self, specs=specs)


def canonicalize_spec(raw_value: float, spec: SpecDefinition) -> float:
    """Map a raw metric value into canonical ``f_i <= 0`` form.

    A ``constraint-ge`` spec maps to ``(bound - raw) / scale``, a
    ``constraint-le`` spec to ``(raw - bound) / scale`` and the objective
    passes through unchanged.  ``scale`` is ``|bound|`` (1 when the bound is
    zero) so a unit of canonical violation means a full bound's worth of miss
    regardless of physical units.
    """
    if not math.isfinite(raw_value):
        raise ValueError(f"cannot canonicalize non-finite value for spec {spec.name!r}")
    if spec.kind == OBJECTIVE_MIN:
        return float(raw_value)
    scale = abs(spec.bound) if spec.bound != 0.0 else 1.0
    if spec.kind == CONSTRAINT_GE:
        return float((spec.bound - raw_value) / scale)
    return float((raw_value - spec.bound) / scale)


def _weights(specs: Sequence[SpecDefinition]) -> np.ndarray:
    return np.array([s.weight for s in specs], dtype=float)


def fom(values: np.ndarray, specs: Sequence[SpecDefinition], *, failure_fom: float = math.inf) -> float:
    """Scalar figure of merit: weighted objective plus clipped constraint terms.

    Each constraint contributes ``min(1, max(0, w_i * f_i))``; the clipping
    keeps a single badly violated constraint from dominating the total.
    Lower is better.  A spec vector with any non-finite entry marks a failed
    evaluation and returns ``failure_fom`` (callers with run context pass a
    value strictly worse than any real design, see :func:`fom_population`).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (len(specs),):
        raise ValueError(f"spec vector length {values.shape} does not match {len(specs)} specs")
    if not np.all(np.isfinite(values)):
        return float(failure_fom)
    w = _weights(specs)
    contrib = np.clip(w[1:] * values[1:], 0.0, 1.0)
    return float(w[0] * values[0] + contrib.sum())


def fom_values(F: np.ndarray, specs: Sequence[SpecDefinition], *, failure_fom: float = math.inf) -> np.ndarray:
    """Vectorized :func:`fom` over the rows of an (n, m+1) spec matrix."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[1] != len(specs):
        raise ValueError(f"spec matrix shape {F.shape} does not match {len(specs)} specs")
    w = _weights(specs)
    contrib = np.clip(w[1:] * F[:, 1:], 0.0, 1.0)
    out = w[0] * F[:, 0] + contrib.sum(axis=1)
    out[~np.all(np.isfinite(F), axis=1)] = failure_fom
    return out


def failure_fom_value(F: np.ndarray, specs: Sequence[SpecDefinition]) -> float:
    """FoM assigned to failed evaluations: strictly worse than any real design.

    Uses the worst finite objective seen in ``F`` so the value stays above
    ``w0 * f0 + m`` for every successfully evaluated design.
    """
    F = np.asarray(F, dtype=float)
    m = len(specs) - 1
    w0 = specs[0].weight
    f0 = F[:, 0] if F.size else np.array([])
    finite = f0[np.isfinite(f0)]
    worst = float(finite.max()) if finite.size else 0.0
    return w0 * worst + m + 1.0


def fom_population(F: np.ndarray, specs: Sequence[SpecDefinition]) -> np.ndarray:
    """FoM of every design in a population, failed evaluations ranked last."""
    return fom_values(F, specs, failure_fom=failure_fom_value(F, specs))


def is_feasible(values: np.ndarray) -> bool:
    """True iff every canonical constraint entry satisfies ``f_i <= 0``."""
    values = np.asarray(values, dtype=float)
    cons = values[1:]
    return bool(np.all(np.isfinite(cons)) and np.all(cons <= 0.0))


def normalize(x: np.ndarray, prob: ProblemDefinition) -> np.ndarray:
    """Map a raw design into the unit cube."""
    return (np.asarray(x, dtype=float) - prob.lb) / (prob.ub - prob.lb)


def denormalize(u: np.ndarray, prob: ProblemDefinition) -> np.ndarray:
    """Map a unit-cube design back to raw units."""
    return prob.lb + np.asarray(u, dtype=float) * (prob.ub - prob.lb)


def resolve_objective_weight(
    F_init: np.ndarray,
    specs: Sequence[SpecDefinition],
    override: float | None = None,
    eps: float = 1e-12,
) -> float:
    """Objective weight used for a whole run.

    Defaults to ``1 / (max f0 - min f0 + eps)`` over the initial population so
    that a full sweep of the initially observed objective range weighs about
    as much as one fully violated constraint.  Frozen once per run.
    """
    if override is not None:
        if not (override > 0 and math.isfinite(override)):
            raise ValueError("objective weight override must be positive and finite")
        return float(override)
    F_init = np.asarray(F_init, dtype=float)
    f0 = F_init[:, 0]
    f0 = f0[np.isfinite(f0)]
    if f0.size == 0:
        return 1.0
    return float(1.0 / (f0.max() - f0.min() + eps))

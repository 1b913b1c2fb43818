"""Black-box evaluation boundary: built-in analytic benchmarks and bookkeeping.

Built-in evaluators are pure closed-form functions standing in for an
expensive external simulator.  All evaluators return canonical spec vectors
(objective first, constraints in ``f_i <= 0`` form); a row of NaN marks a
failed evaluation and never aborts a run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .problem import (
    CONSTRAINT_GE,
    CONSTRAINT_LE,
    OBJECTIVE_MIN,
    ProblemDefinition,
    SpecDefinition,
    normalize,
)


@dataclass(frozen=True)
class EvaluatorDescriptor:
    """Static facts a driver needs before calling an evaluator."""

    d: int
    m: int
    lb: np.ndarray
    ub: np.ndarray
    specs: tuple[SpecDefinition, ...]
    concurrency_safe: bool
    deterministic: bool


class Evaluator:
    """Interface: a problem definition plus a design -> spec-vector map."""

    problem: ProblemDefinition
    deterministic: bool = True
    concurrency_safe: bool = True

    def evaluate(self, design: np.ndarray) -> np.ndarray:
        """Canonical (m+1,) spec vector for one raw design; NaN row on failure."""
        raise NotImplementedError

    def descriptor(self) -> EvaluatorDescriptor:
        p = self.problem
        return EvaluatorDescriptor(
            d=p.d,
            m=p.m,
            lb=p.lb,
            ub=p.ub,
            specs=p.specs,
            concurrency_safe=self.concurrency_safe,
            deterministic=self.deterministic,
        )

    def close(self) -> None:
        """Release external resources, if any."""

    def failure_vector(self) -> np.ndarray:
        return np.full(len(self.problem.specs), np.nan)


def canonicalize_rows(raw: np.ndarray, specs: Sequence[SpecDefinition]) -> np.ndarray:
    """Vectorized canonicalization of an (n, m+1) matrix of raw metric values."""
    raw = np.asarray(raw, dtype=float)
    out = np.empty_like(raw)
    for i, s in enumerate(specs):
        col = raw[:, i]
        if s.kind == OBJECTIVE_MIN:
            out[:, i] = col
        else:
            scale = abs(s.bound) if s.bound != 0.0 else 1.0
            if s.kind == CONSTRAINT_GE:
                out[:, i] = (s.bound - col) / scale
            else:
                out[:, i] = (col - s.bound) / scale
    return out


class AnalyticEvaluator(Evaluator):
    """Base for builtins defined by a vectorized raw-metric function."""

    def raw_metrics(self, X: np.ndarray) -> np.ndarray:
        """Raw metric matrix for an (n, d) block of raw designs."""
        raise NotImplementedError

    def evaluate(self, design: np.ndarray) -> np.ndarray:
        X = np.asarray(design, dtype=float)[None, :]
        if X.shape[1] != self.problem.d:
            raise ValueError(f"design length {X.shape[1]} != problem dimension {self.problem.d}")
        return canonicalize_rows(self.raw_metrics(X), self.problem.specs)[0]

    def evaluate_block(self, X: np.ndarray) -> np.ndarray:
        """Canonical spec matrix for many designs at once (reference oracles)."""
        return canonicalize_rows(self.raw_metrics(np.asarray(X, dtype=float)), self.problem.specs)


class ToyAmp(AnalyticEvaluator):
    """Closed-form two-stage amplifier sizing benchmark (d=6, m=6).

    Minimizes supply power subject to DC gain, gain-bandwidth, phase margin,
    slew rate and two transconductance-efficiency constraints.  Variables in
    order: gm1, gm2 [S], I1, I2 [A], Cc, CL [F].
    """

    VDD = 1.8
    CHANNEL_LAMBDA = 0.1  # 1/V
    GM_OVER_I_MAX = 25.0

    def __init__(self) -> None:
        self.problem = ProblemDefinition(
            lb=np.array([0.1e-3, 0.1e-3, 10e-6, 10e-6, 0.1e-12, 0.5e-12]),
            ub=np.array([5e-3, 5e-3, 500e-6, 500e-6, 5e-12, 10e-12]),
            specs=(
                SpecDefinition("power_w", OBJECTIVE_MIN),
                SpecDefinition("dc_gain_db", CONSTRAINT_GE, 60.0),
                SpecDefinition("gbw_hz", CONSTRAINT_GE, 30e6),
                SpecDefinition("phase_margin_deg", CONSTRAINT_GE, 60.0),
                SpecDefinition("slew_rate_v_per_s", CONSTRAINT_GE, 20e6),
                SpecDefinition("gm1_over_i1", CONSTRAINT_LE, self.GM_OVER_I_MAX),
                SpecDefinition("gm2_over_i2", CONSTRAINT_LE, self.GM_OVER_I_MAX),
            ),
            name="toy_amp",
            var_names=("gm1", "gm2", "i1", "i2", "cc", "cl"),
        )

    def raw_metrics(self, X: np.ndarray) -> np.ndarray:
        gm1, gm2, i1, i2, cc, cl = (X[:, j] for j in range(6))
        power = self.VDD * (i1 + i2)
        gain_db = 20.0 * np.log10(
            (gm1 / (self.CHANNEL_LAMBDA * i1)) * (gm2 / (self.CHANNEL_LAMBDA * i2))
        )
        gbw = gm1 / (2.0 * np.pi * cc)
        p2 = gm2 / (2.0 * np.pi * cl)
        pm = 90.0 - np.degrees(np.arctan(gbw / p2))
        sr = i1 / cc
        return np.column_stack([power, gain_db, gbw, pm, sr, gm1 / i1, gm2 / i2])


class ConstrainedQuadratic(AnalyticEvaluator):
    """Sphere objective with random linear constraints, fixed per instance id.

    ``f0 = ||x - c||^2`` on [0, 1]^d subject to ``a_k . x <= b_k``.  By
    construction the center c is strictly feasible, so the optimum sits at c
    with objective 0.  Explicit ``center``/``a``/``b`` override the seeded
    geometry for hand-built cases.
    """

    def __init__(
        self,
        d: int = 5,
        m: int = 2,
        instance: int = 0,
        center: np.ndarray | None = None,
        a: np.ndarray | None = None,
        b: np.ndarray | None = None,
    ) -> None:
        rng = np.random.default_rng(instance)
        self.center = np.asarray(center, dtype=float) if center is not None else rng.uniform(0.2, 0.8, size=d)
        if self.center.shape != (d,):
            raise ValueError("center length must equal d")
        if a is not None or b is not None:
            self.a = np.atleast_2d(np.asarray(a, dtype=float))
            self.b = np.atleast_1d(np.asarray(b, dtype=float))
            if self.a.shape != (m, d) or self.b.shape != (m,):
                raise ValueError("constraint arrays must have shapes (m, d) and (m,)")
        else:
            self.a = rng.normal(size=(m, d))
            if m:
                self.a /= np.linalg.norm(self.a, axis=1, keepdims=True)
            self.b = self.a @ self.center + rng.uniform(0.05, 0.3, size=m)
        specs = [SpecDefinition("sq_distance", OBJECTIVE_MIN)]
        specs += [SpecDefinition(f"halfspace_{k}", CONSTRAINT_LE, float(self.b[k])) for k in range(m)]
        self.problem = ProblemDefinition(
            lb=np.zeros(d), ub=np.ones(d), specs=tuple(specs), name=f"constrained_quadratic_{instance}"
        )

    def raw_metrics(self, X: np.ndarray) -> np.ndarray:
        f0 = np.sum((X - self.center) ** 2, axis=1)
        if self.a.size:
            return np.column_stack([f0, X @ self.a.T])
        return f0[:, None]


class InertPlateau(AnalyticEvaluator):
    """Separable benchmark whose objective ignores its trailing variables.

    ``f0 = max(0, sum_active (x_j - c)^2 - r2)`` on [0, 1]^d: an exact-zero
    plateau around the active-subspace center, and ``d_inert`` variables with
    no influence at all.  Used to validate variable screening: sensitivities
    of the inert block are identically zero, and optimizing with them frozen
    must reach the same (exactly zero) plateau objective.
    """

    def __init__(self, d_active: int = 5, d_inert: int = 3, center: float = 0.3, r2: float = 0.05) -> None:
        if d_active < 1 or d_inert < 0:
            raise ValueError("need d_active >= 1 and d_inert >= 0")
        self.d_active = d_active
        self.center = center
        self.r2 = r2
        d = d_active + d_inert
        self.problem = ProblemDefinition(
            lb=np.zeros(d),
            ub=np.ones(d),
            specs=(SpecDefinition("plateau_distance", OBJECTIVE_MIN),),
            name=f"inert_plateau_{d_active}a{d_inert}i",
        )

    def raw_metrics(self, X: np.ndarray) -> np.ndarray:
        bowl = np.sum((X[:, : self.d_active] - self.center) ** 2, axis=1)
        return np.maximum(0.0, bowl - self.r2)[:, None]


BUILTIN_EVALUATORS = {
    "toy_amp": ToyAmp,
    "constrained_quadratic": ConstrainedQuadratic,
    "inert_plateau": InertPlateau,
}


def make_evaluator(name: str, params: dict | None = None) -> Evaluator:
    """Instantiate a built-in evaluator by name."""
    try:
        cls = BUILTIN_EVALUATORS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_EVALUATORS))
        raise ValueError(f"unknown builtin evaluator {name!r} (known: {known})") from None
    return cls(**(params or {}))


@dataclass
class EvaluationRecord:
    """One true evaluator call."""

    index: int  # 1-based, contiguous per run
    design: np.ndarray  # raw units, after integer rounding
    spec: np.ndarray  # canonical, NaN row for failures
    wall_time: float


class EvaluationLog:
    """Counting + caching wrapper around an evaluator.

    Rounds integer-valued variables before dispatch, counts true calls
    exactly, and (optionally) serves repeated requests for the same design
    from a cache keyed by the design's unit-cube coordinates rounded to 12
    decimal places, without consuming budget.
    """

    def __init__(self, evaluator: Evaluator, cache: bool = True) -> None:
        self.evaluator = evaluator
        self.problem = evaluator.problem
        self.records: list[EvaluationRecord] = []
        self._cache: dict[tuple, np.ndarray] | None = {} if cache else None

    @property
    def count(self) -> int:
        return len(self.records)

    def _key(self, design: np.ndarray) -> tuple:
        u = normalize(design, self.problem)
        return tuple(np.round(u, 12).tolist())

    def evaluate(self, design: np.ndarray) -> np.ndarray:
        design = self.problem.round_integers(self.problem.clip(design))
        if self._cache is not None:
            key = self._key(design)
            hit = self._cache.get(key)
            if hit is not None:
                return hit.copy()
        t0 = time.perf_counter()
        try:
            spec = np.asarray(self.evaluator.evaluate(design), dtype=float)
        except Exception:
            spec = np.full(len(self.problem.specs), np.nan)
        if spec.shape != (len(self.problem.specs),):
            spec = np.full(len(self.problem.specs), np.nan)
        self.records.append(
            EvaluationRecord(
                index=len(self.records) + 1,
                design=design.copy(),
                spec=spec.copy(),
                wall_time=time.perf_counter() - t0,
            )
        )
        if self._cache is not None:
            self._cache[key] = spec.copy()
        return spec

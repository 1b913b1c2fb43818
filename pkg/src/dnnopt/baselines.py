"""Reference optimizers: classic differential evolution and random search.

Both run in unit-cube coordinates, score designs with the same figure of
merit as the surrogate-guided optimizer (one shared implementation), and
return the same :class:`~dnnopt.optimizer.RunResult` shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluators import EvaluationLog, Evaluator
from .optimizer import RunResult, build_result
from .problem import (
    ProblemDefinition,
    denormalize,
    fom_population,
    is_feasible,
    resolve_objective_weight,
)


@dataclass
class DEConfig:
    """DE/rand/1/bin settings."""

    budget: int
    np_size: int = 30  # population size, >= 4 for rand/1 mutation
    f: float = 0.5  # differential weight
    cr: float = 0.9  # crossover rate
    seed: int = 0
    stop_on_feasible: bool = True
    w0: float | None = None
    cache: bool = True

    def __post_init__(self) -> None:
        if self.np_size < 4:
            raise ValueError("population size must be >= 4")
        if not (0 < self.f <= 2):
            raise ValueError("differential weight must lie in (0, 2]")
        if not (0 <= self.cr <= 1):
            raise ValueError("crossover rate must lie in [0, 1]")


def _reflect_unit(v: np.ndarray) -> np.ndarray:
    """Fold components back into [0, 1] by reflection at the faces."""
    v = np.mod(v, 2.0)
    return np.where(v > 1.0, 2.0 - v, v)


def differential_evolution(prob: ProblemDefinition, evaluator: Evaluator, cfg: DEConfig) -> RunResult:
    """Generational DE/rand/1/bin with greedy selection by figure of merit."""
    if cfg.budget < cfg.np_size:
        raise ValueError(f"budget {cfg.budget} is below the population size {cfg.np_size}")
    rng = np.random.default_rng(cfg.seed)
    log = EvaluationLog(evaluator, cache=cfg.cache)
    n, d = cfg.np_size, prob.d

    def evaluate(u: np.ndarray) -> np.ndarray:
        return log.evaluate(denormalize(u, prob))

    pop = rng.random((n, d))
    F = np.array([evaluate(u) for u in pop])
    w0 = resolve_objective_weight(F, prob.specs, cfg.w0)
    specs_eff = prob.with_objective_weight(w0).specs
    foms = fom_population(F, specs_eff)

    def done() -> bool:
        if log.count >= cfg.budget:
            return True
        return cfg.stop_on_feasible and any(is_feasible(f) for f in F)

    while not done():
        for i in range(n):
            if done():
                break
            choices = [j for j in range(n) if j != i]
            r1, r2, r3 = rng.choice(choices, size=3, replace=False)
            v = _reflect_unit(pop[r1] + cfg.f * (pop[r2] - pop[r3]))
            mask = rng.random(d) <= cfg.cr
            mask[rng.integers(d)] = True
            trial = np.where(mask, v, pop[i])
            spec = evaluate(trial)
            trial_fom = fom_population(np.vstack([F, spec[None, :]]), specs_eff)[-1]
            if trial_fom <= foms[i]:
                pop[i] = trial
                F[i] = spec
                foms = fom_population(F, specs_eff)

    return build_result(log.records, specs_eff, "de", cfg.seed)


def random_search(
    prob: ProblemDefinition,
    evaluator: Evaluator,
    budget: int,
    seed: int = 0,
    *,
    stop_on_feasible: bool = True,
    w0: float | None = None,
    w0_sample: int = 20,
    cache: bool = True,
) -> RunResult:
    """Uniform sampling of the unit cube with best-by-FoM tracking.

    The objective weight is resolved from the first ``min(w0_sample, budget)``
    evaluations, mirroring the other algorithms' initial-population rule.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    log = EvaluationLog(evaluator, cache=cache)
    specs: list[np.ndarray] = []
    while log.count < budget:
        spec = log.evaluate(denormalize(rng.random(prob.d), prob))
        specs.append(spec)
        if stop_on_feasible and is_feasible(spec):
            break
    head = min(w0_sample, len(specs))
    w0_val = resolve_objective_weight(np.asarray(specs[:head]), prob.specs, w0)
    specs_eff = prob.with_objective_weight(w0_val).specs
    return build_result(log.records, specs_eff, "random", int(seed))

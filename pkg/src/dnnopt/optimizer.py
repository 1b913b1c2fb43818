"""Sequential surrogate-guided optimization loop.

Each iteration retrains the critic on pairwise pseudo-samples of everything
evaluated so far, trains the actor through the frozen critic inside the
elite box, proposes one noisy candidate per elite, and sends the candidate
with the best predicted figure of merit to the real evaluator.  Exactly one
true evaluation is spent per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .actor import (
    ActorConfig,
    init_actor,
    propose_candidates,
    restricted_bounds,
    train_actor,
)
from .critic import (
    DEFAULT_HIDDEN as CRITIC_HIDDEN,
    DEFAULT_PSEUDO_CAP,
    CriticModel,
    generate_pseudo_samples,
    train_critic,
)
from .actor import DEFAULT_HIDDEN as ACTOR_HIDDEN
from .evaluators import EvaluationLog, EvaluationRecord, Evaluator
from .nn import MLP, TrainConfig
from .problem import (
    ProblemDefinition,
    SpecDefinition,
    denormalize,
    fom_population,
    fom_values,
    is_feasible,
    normalize,
    resolve_objective_weight,
)

DUPLICATE_TOL = 1e-9  # infinity-norm distance (unit cube) below which a query is a duplicate


@dataclass
class DnnOptConfig:
    """All knobs of the surrogate-guided optimizer."""

    budget: int
    seed: int = 0
    n_init: int | None = None  # None: 20, clamped to >= 2d when d > 10
    n_es: int = 10
    pseudo_cap: int = DEFAULT_PSEUDO_CAP
    critic_hidden: tuple[int, ...] = CRITIC_HIDDEN
    critic_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=200))
    actor_hidden: tuple[int, ...] = ACTOR_HIDDEN
    actor: ActorConfig = field(default_factory=ActorConfig)
    stop_on_feasible: bool = True
    warm_start: bool = False
    w0: float | None = None
    cache: bool = True

    def resolve_n_init(self, d: int) -> int:
        if self.n_init is not None:
            return self.n_init
        return max(20, 2 * d) if d > 10 else 20


@dataclass
class OptimizerState:
    """Evolving population and counters of one optimization run."""

    X: list[np.ndarray]  # evaluated designs, unit coordinates
    F: list[np.ndarray]  # their canonical spec vectors
    t: int
    t_max: int
    n_init: int
    n_es: int
    rng: np.random.Generator
    best_index: int = 0
    critic: CriticModel | None = None
    actor: MLP | None = None


@dataclass
class RunResult:
    """Outcome of one optimization run, shared by all algorithms.

    ``best_design`` is the feasible design with the lowest FoM when any
    feasible design was found, otherwise the lowest-FoM design overall.
    ``first_feasible`` is a 1-based evaluation index (the "number of
    evaluations to first feasible" metric) or None.
    """

    algorithm: str
    seed: int
    best_design: np.ndarray
    best_spec: np.ndarray
    feasible: bool
    evaluations: int
    first_feasible: int | None
    fom_history: np.ndarray  # per-evaluation FoM, in evaluation order
    objective_weight: float
    records: list[EvaluationRecord] = field(repr=False, default_factory=list)

    @property
    def best_fom_history(self) -> np.ndarray:
        return np.minimum.accumulate(self.fom_history)


def initial_sample(prob: ProblemDefinition, n_init: int, seed: int = 0) -> np.ndarray:
    """Latin-hypercube sample of the unit cube: one stratum per point per axis."""
    if n_init < 2:
        raise ValueError("need at least 2 initial samples")
    rng = np.random.default_rng(seed)
    u = np.empty((n_init, prob.d))
    for j in range(prob.d):
        u[:, j] = (rng.permutation(n_init) + rng.random(n_init)) / n_init
    return u


def select_elites(X: np.ndarray, F: np.ndarray, specs: Sequence[SpecDefinition], n_es: int) -> np.ndarray:
    """Indices of the ``n_es`` lowest-FoM designs, earliest-evaluation ties first."""
    X = np.asarray(X)
    if n_es < 1 or n_es > X.shape[0]:
        raise ValueError(f"n_es={n_es} out of range for population of {X.shape[0]}")
    foms = fom_population(np.asarray(F), specs)
    return np.argsort(foms, kind="stable")[:n_es]


def predicted_query_foms(
    elites: np.ndarray,
    candidates: np.ndarray,
    critic: CriticModel,
    specs: Sequence[SpecDefinition],
) -> np.ndarray:
    """Critic-predicted FoM of moving each elite to its paired candidate."""
    elites = np.asarray(elites, dtype=float)
    candidates = np.asarray(candidates, dtype=float)
    if elites.shape != candidates.shape or elites.size == 0:
        raise ValueError("elites and candidates must be equal-shaped and non-empty")
    pred = critic.predict_batch(elites, candidates - elites)
    return fom_values(pred, specs)


def select_query(
    elites: np.ndarray,
    candidates: np.ndarray,
    critic: CriticModel,
    specs: Sequence[SpecDefinition],
) -> np.ndarray:
    """The candidate with the lowest predicted FoM (smallest index on ties)."""
    pf = predicted_query_foms(elites, candidates, critic, specs)
    return np.asarray(candidates, dtype=float)[int(np.argmin(pf))]


def _is_duplicate(query: np.ndarray, X: np.ndarray) -> bool:
    return bool(np.any(np.max(np.abs(X - query), axis=1) < DUPLICATE_TOL))


def _evaluate_into_state(
    state: OptimizerState,
    query_unit: np.ndarray,
    prob: ProblemDefinition,
    log: EvaluationLog,
) -> None:
    raw = prob.round_integers(prob.clip(denormalize(np.clip(query_unit, 0.0, 1.0), prob)))
    spec = log.evaluate(raw)
    state.X.append(normalize(raw, prob))
    state.F.append(np.asarray(spec, dtype=float))


def step(
    state: OptimizerState,
    prob: ProblemDefinition,
    log: EvaluationLog,
    cfg: DnnOptConfig,
    specs_eff: tuple[SpecDefinition, ...],
) -> OptimizerState:
    """One outer iteration: retrain both networks, pick and evaluate one query."""
    X = np.asarray(state.X)
    F = np.asarray(state.F)
    seeds = state.rng.integers(0, 2**31 - 1, size=6)

    finite = np.all(np.isfinite(F), axis=1)
    if finite.sum() < 2:
        # Not enough usable data to fit a surrogate; spend the evaluation on
        # a uniform random probe so the run can recover.
        query = state.rng.random(prob.d)
        _evaluate_into_state(state, query, prob, log)
        state.t += 1
        _update_best(state, specs_eff)
        return state

    n_es = min(state.n_es, X.shape[0])
    elite_idx = select_elites(X, F, specs_eff, n_es)
    elites = X[elite_idx]
    rb = restricted_bounds(elites)

    samples = generate_pseudo_samples(X[finite], F[finite], cap=cfg.pseudo_cap, seed=int(seeds[0]))
    warm_net = state.critic.net if (cfg.warm_start and state.critic is not None) else None
    critic = train_critic(
        samples,
        replace(cfg.critic_train, seed=int(seeds[2])),
        hidden_sizes=cfg.critic_hidden,
        init_seed=int(seeds[1]),
        net=warm_net,
    )

    if cfg.warm_start and state.actor is not None:
        actor_net = state.actor
    else:
        actor_net = init_actor(prob.d, cfg.actor_hidden, seed=int(seeds[3]))
    actor_cfg = replace(cfg.actor, train=replace(cfg.actor.train, seed=int(seeds[4])))
    actor_net, _ = train_actor(actor_net, critic, elites, rb, specs_eff, actor_cfg)

    candidates = propose_candidates(actor_net, elites, rb, actor_cfg, seed=int(seeds[5]))
    pf = predicted_query_foms(elites, candidates, critic, specs_eff)

    query = None
    for k in np.argsort(pf, kind="stable"):
        if not _is_duplicate(candidates[k], X):
            query = candidates[k]
            break
    if query is None:
        # Every candidate collides with an already-evaluated design.
        query = state.rng.uniform(rb.lb, rb.ub)

    _evaluate_into_state(state, query, prob, log)
    state.critic = critic
    state.actor = actor_net
    state.t += 1
    _update_best(state, specs_eff)
    return state


def _update_best(state: OptimizerState, specs_eff: tuple[SpecDefinition, ...]) -> None:
    foms = fom_population(np.asarray(state.F), specs_eff)
    state.best_index = int(np.argmin(foms))


def build_result(
    records: list[EvaluationRecord],
    specs_eff: tuple[SpecDefinition, ...],
    algorithm: str,
    seed: int,
) -> RunResult:
    """Assemble the common run summary from an evaluation log."""
    m = len(specs_eff) - 1
    w0 = specs_eff[0].weight
    foms = np.empty(len(records))
    worst_f0 = 0.0
    have_f0 = False
    first_feasible = None
    for k, rec in enumerate(records):
        f0 = rec.spec[0]
        if np.isfinite(f0):
            worst_f0 = f0 if not have_f0 else max(worst_f0, f0)
            have_f0 = True
        failure = w0 * worst_f0 + m + 1.0
        foms[k] = fom_values(rec.spec[None, :], specs_eff, failure_fom=failure)[0]
        if first_feasible is None and is_feasible(rec.spec):
            first_feasible = rec.index
    feasible_mask = np.array([is_feasible(r.spec) for r in records])
    if feasible_mask.any():
        pool = np.flatnonzero(feasible_mask)
    else:
        pool = np.arange(len(records))
    best = int(pool[np.argmin(foms[pool])]) if len(records) else 0
    return RunResult(
        algorithm=algorithm,
        seed=seed,
        best_design=records[best].design.copy(),
        best_spec=records[best].spec.copy(),
        feasible=bool(feasible_mask.any()),
        evaluations=len(records),
        first_feasible=first_feasible,
        fom_history=foms,
        objective_weight=float(w0),
        records=records,
    )


def run(prob: ProblemDefinition, evaluator: Evaluator, cfg: DnnOptConfig) -> RunResult:
    """Full optimization run: initial sampling then one query per iteration.

    Stops on the first feasible design (default) or when the evaluation
    budget is exhausted.  Fully deterministic for a deterministic evaluator.
    """
    n_init = cfg.resolve_n_init(prob.d)
    if cfg.budget < n_init:
        raise ValueError(f"budget {cfg.budget} is below the initial sample count {n_init}")
    rng = np.random.default_rng(cfg.seed)
    log = EvaluationLog(evaluator, cache=cfg.cache)

    U = initial_sample(prob, n_init, seed=int(rng.integers(0, 2**31 - 1)))
    state = OptimizerState(
        X=[],
        F=[],
        t=0,
        t_max=cfg.budget - n_init,
        n_init=n_init,
        n_es=cfg.n_es,
        rng=rng,
    )
    for u in U:
        _evaluate_into_state(state, u, prob, log)

    w0 = resolve_objective_weight(np.asarray(state.F), prob.specs, cfg.w0)
    specs_eff = prob.with_objective_weight(w0).specs
    _update_best(state, specs_eff)

    def done() -> bool:
        if log.count >= cfg.budget:
            return True
        return cfg.stop_on_feasible and any(is_feasible(f) for f in state.F)

    while not done():
        step(state, prob, log, cfg, specs_eff)

    return build_result(log.records, specs_eff, "dnnopt", cfg.seed)

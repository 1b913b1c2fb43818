"""Run configuration: a single YAML file validated into typed objects.

Every schema violation raises :class:`ConfigError` naming the offending key
path, so a bad file fails fast with an actionable diagnostic instead of a
stack trace from deep inside a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import yaml

from .actor import DEFAULT_HIDDEN as ACTOR_HIDDEN
from .actor import ActorConfig
from .baselines import DEConfig
from .critic import DEFAULT_HIDDEN as CRITIC_HIDDEN
from .critic import DEFAULT_PSEUDO_CAP
from .evaluators import BUILTIN_EVALUATORS, Evaluator, make_evaluator
from .external import DEFAULT_TIMEOUT, ExternalProcessEvaluator
from .nn import TrainConfig
from .optimizer import DnnOptConfig
from .problem import (
    CONSTRAINT_GE,
    CONSTRAINT_LE,
    OBJECTIVE_MIN,
    ProblemDefinition,
    SpecDefinition,
)

ALGORITHMS = ("dnnopt", "de", "random")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


def _fail(path: str, message: str) -> None:
    raise ConfigError(f"config error at {path}: {message}")


def _expect_map(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        _fail(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _get(mapping: dict, key: str, path: str, kind: Callable, default: Any = None, required: bool = False):
    if key not in mapping or mapping[key] is None:
        if required:
            _fail(f"{path}.{key}" if path else key, "required key is missing")
        return default
    try:
        return kind(mapping[key])
    except (TypeError, ValueError):
        _fail(f"{path}.{key}" if path else key, f"cannot interpret {mapping[key]!r}")


def _positive_int(value: Any) -> int:
    out = int(value)
    if out < 1 or out != value:
        raise ValueError
    return out


def _check_unknown(mapping: dict, known: set[str], path: str) -> None:
    for key in mapping:
        if key not in known:
            _fail(f"{path}.{key}" if path else key, "unknown key")


@dataclass
class SensitivitySettings:
    nominal: np.ndarray | None  # None: box center
    rel_step: float = 0.05
    thresh: float = 0.01
    screened_specs: str | list[int] = "all"  # "all" | "failing" | explicit indices


@dataclass
class RunConfig:
    """Everything one invocation needs, fully validated."""

    problem: ProblemDefinition
    make_evaluator: Callable[[], Evaluator]
    algorithm: str
    budget: int
    seeds: list[int]
    stop_on_feasible: bool
    output_dir: str
    objective_weight: float | None
    cache: bool
    dnnopt: dict
    de: DEConfig | None
    sensitivity: SensitivitySettings
    compare_algorithms: list[str]

    def dnnopt_config(self, seed: int, budget: int | None = None, stop_on_feasible: bool | None = None) -> DnnOptConfig:
        kw = dict(self.dnnopt)
        return DnnOptConfig(
            budget=self.budget if budget is None else budget,
            seed=seed,
            stop_on_feasible=self.stop_on_feasible if stop_on_feasible is None else stop_on_feasible,
            w0=self.objective_weight,
            cache=self.cache,
            **kw,
        )

    def de_config(self, seed: int, budget: int | None = None, stop_on_feasible: bool | None = None) -> DEConfig:
        base = self.de or DEConfig(budget=self.budget)
        return DEConfig(
            budget=self.budget if budget is None else budget,
            np_size=base.np_size,
            f=base.f,
            cr=base.cr,
            seed=seed,
            stop_on_feasible=self.stop_on_feasible if stop_on_feasible is None else stop_on_feasible,
            w0=self.objective_weight,
            cache=self.cache,
        )


def _parse_problem(section: dict, path: str) -> tuple[ProblemDefinition | None, str | None, dict]:
    _check_unknown(section, {"builtin", "params", "name", "variables", "specs"}, path)
    builtin = section.get("builtin")
    if builtin is not None:
        if builtin not in BUILTIN_EVALUATORS:
            _fail(f"{path}.builtin", f"unknown builtin {builtin!r} (known: {', '.join(sorted(BUILTIN_EVALUATORS))})")
        if "variables" in section or "specs" in section:
            _fail(path, "give either 'builtin' or an explicit variables/specs block, not both")
        params = _expect_map(section.get("params"), f"{path}.params")
        return None, builtin, params

    variables = section.get("variables")
    specs_raw = section.get("specs")
    if not isinstance(variables, list) or not variables:
        _fail(f"{path}.variables", "expected a non-empty list of variable definitions")
    if not isinstance(specs_raw, list) or not specs_raw:
        _fail(f"{path}.specs", "expected a non-empty list of spec definitions")

    names, lb, ub, integer = [], [], [], []
    for k, var in enumerate(variables):
        vpath = f"{path}.variables[{k}]"
        var = _expect_map(var, vpath)
        _check_unknown(var, {"name", "lb", "ub", "integer"}, vpath)
        names.append(_get(var, "name", vpath, str, default=f"x{k}"))
        lb.append(_get(var, "lb", vpath, float, required=True))
        ub.append(_get(var, "ub", vpath, float, required=True))
        integer.append(_get(var, "integer", vpath, bool, default=False))

    kinds = {"objective-min": OBJECTIVE_MIN, "constraint-le": CONSTRAINT_LE, "constraint-ge": CONSTRAINT_GE}
    specs = []
    for k, raw in enumerate(specs_raw):
        spath = f"{path}.specs[{k}]"
        raw = _expect_map(raw, spath)
        _check_unknown(raw, {"name", "kind", "bound", "weight"}, spath)
        kind = _get(raw, "kind", spath, str, required=True)
        if kind not in kinds:
            _fail(f"{spath}.kind", f"expected one of {sorted(kinds)}, got {kind!r}")
        specs.append(
            SpecDefinition(
                name=_get(raw, "name", spath, str, default=f"spec{k}"),
                kind=kinds[kind],
                bound=_get(raw, "bound", spath, float, default=0.0),
                weight=_get(raw, "weight", spath, float, default=1.0),
            )
        )
    try:
        prob = ProblemDefinition(
            lb=np.array(lb),
            ub=np.array(ub),
            specs=tuple(specs),
            name=_get(section, "name", path, str, default="problem"),
            var_names=tuple(names),
            integer=np.array(integer, dtype=bool),
        )
    except ValueError as exc:
        _fail(path, str(exc))
    return prob, None, {}


def _parse_train(section: dict, path: str, defaults: TrainConfig) -> TrainConfig:
    _check_unknown(
        section, {"epochs", "batch_size", "learning_rate", "patience", "min_improvement", "lr_decay"}, path
    )
    try:
        return TrainConfig(
            epochs=_get(section, "epochs", path, _positive_int, default=defaults.epochs),
            batch_size=_get(section, "batch_size", path, _positive_int, default=defaults.batch_size),
            learning_rate=_get(section, "learning_rate", path, float, default=defaults.learning_rate),
            patience=_get(section, "patience", path, int, default=defaults.patience),
            min_improvement=_get(section, "min_improvement", path, float, default=defaults.min_improvement),
            lr_decay=_get(section, "lr_decay", path, float, default=defaults.lr_decay),
        )
    except ValueError as exc:
        _fail(path, str(exc))


def _hidden(value: Any, path: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty list of layer widths")
    try:
        return tuple(_positive_int(v) for v in value)
    except ValueError:
        _fail(path, "layer widths must be positive integers")


def load_config(path: str) -> RunConfig:
    """Parse and validate a YAML run configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config error in {path}: invalid YAML ({exc})") from None
    raw = _expect_map(raw, "<root>")
    _check_unknown(
        raw,
        {
            "problem",
            "evaluator",
            "algorithm",
            "budget",
            "seeds",
            "termination",
            "objective_weight",
            "output_dir",
            "dnnopt",
            "de",
            "sensitivity",
            "compare",
        },
        "",
    )

    problem_section = _expect_map(raw.get("problem"), "problem")
    if not problem_section:
        _fail("problem", "required section is missing")
    explicit_prob, builtin, builtin_params = _parse_problem(problem_section, "problem")

    eval_section = _expect_map(raw.get("evaluator"), "evaluator")
    _check_unknown(eval_section, {"kind", "command", "timeout_s", "pool_size", "cache"}, "evaluator")
    eval_kind = _get(eval_section, "kind", "evaluator", str, default="builtin" if builtin else "external")
    cache = _get(eval_section, "cache", "evaluator", bool, default=True)

    if eval_kind == "builtin":
        if builtin is None:
            _fail("evaluator.kind", "builtin evaluator requires problem.builtin")
        prototype = make_evaluator(builtin, builtin_params)
        problem = prototype.problem

        def factory() -> Evaluator:
            return make_evaluator(builtin, builtin_params)

    elif eval_kind == "external":
        if explicit_prob is None:
            _fail("problem", "an external evaluator needs an explicit variables/specs block")
        command = eval_section.get("command")
        if not isinstance(command, list) or not all(isinstance(c, str) for c in command) or not command:
            _fail("evaluator.command", "expected a non-empty list of strings")
        timeout = _get(eval_section, "timeout_s", "evaluator", float, default=DEFAULT_TIMEOUT)
        pool = _get(eval_section, "pool_size", "evaluator", _positive_int, default=1)
        problem = explicit_prob

        def factory() -> Evaluator:
            return ExternalProcessEvaluator(problem, command, timeout=timeout, pool_size=pool)

    else:
        _fail("evaluator.kind", f"expected 'builtin' or 'external', got {eval_kind!r}")

    algorithm = _get(raw, "algorithm", "", str, default="dnnopt")
    if algorithm not in ALGORITHMS:
        _fail("algorithm", f"expected one of {ALGORITHMS}, got {algorithm!r}")

    budget = _get(raw, "budget", "", _positive_int, required=True)
    seeds_raw = raw.get("seeds", [0])
    if not isinstance(seeds_raw, list) or not seeds_raw:
        _fail("seeds", "expected a non-empty list of integers")
    try:
        seeds = [int(s) for s in seeds_raw]
    except (TypeError, ValueError):
        _fail("seeds", "expected a non-empty list of integers")

    termination = _get(raw, "termination", "", str, default="stop_on_feasible")
    if termination not in ("stop_on_feasible", "budget"):
        _fail("termination", f"expected 'stop_on_feasible' or 'budget', got {termination!r}")

    objective_weight = _get(raw, "objective_weight", "", float, default=None)
    if objective_weight is not None and objective_weight <= 0:
        _fail("objective_weight", "must be positive when given")

    output_dir = _get(raw, "output_dir", "", str, default="runs")

    dn = _expect_map(raw.get("dnnopt"), "dnnopt")
    _check_unknown(
        dn, {"n_init", "n_es", "pseudo_cap", "warm_start", "critic", "actor", "critic_hidden", "actor_hidden"}, "dnnopt"
    )
    critic_section = _expect_map(dn.get("critic"), "dnnopt.critic")
    actor_section = _expect_map(dn.get("actor"), "dnnopt.actor")
    _check_unknown(
        actor_section,
        {"epochs", "batch_size", "learning_rate", "patience", "min_improvement", "lr_decay", "lambda", "noise_sigma_frac", "delta_scale"},
        "dnnopt.actor",
    )
    actor_train = _parse_train(
        {k: v for k, v in actor_section.items() if k not in ("lambda", "noise_sigma_frac", "delta_scale")},
        "dnnopt.actor",
        TrainConfig(epochs=100),
    )
    try:
        actor_cfg = ActorConfig(
            lam=_get(actor_section, "lambda", "dnnopt.actor", float, default=1e4),
            noise_sigma_frac=_get(actor_section, "noise_sigma_frac", "dnnopt.actor", float, default=0.1),
            delta_scale=_get(actor_section, "delta_scale", "dnnopt.actor", float, default=1.0),
            train=actor_train,
        )
    except ValueError as exc:
        _fail("dnnopt.actor", str(exc))
    dnnopt_kw = dict(
        n_init=_get(dn, "n_init", "dnnopt", _positive_int, default=None),
        n_es=_get(dn, "n_es", "dnnopt", _positive_int, default=10),
        pseudo_cap=_get(dn, "pseudo_cap", "dnnopt", _positive_int, default=DEFAULT_PSEUDO_CAP),
        warm_start=_get(dn, "warm_start", "dnnopt", bool, default=False),
        critic_hidden=_hidden(dn.get("critic_hidden", list(CRITIC_HIDDEN)), "dnnopt.critic_hidden"),
        actor_hidden=_hidden(dn.get("actor_hidden", list(ACTOR_HIDDEN)), "dnnopt.actor_hidden"),
        critic_train=_parse_train(critic_section, "dnnopt.critic", TrainConfig(epochs=200)),
        actor=actor_cfg,
    )
    if algorithm == "dnnopt" and budget < (dnnopt_kw["n_init"] or 20):
        _fail("budget", f"must be at least dnnopt.n_init ({dnnopt_kw['n_init'] or 20})")

    de_section = _expect_map(raw.get("de"), "de")
    _check_unknown(de_section, {"np", "f", "cr"}, "de")
    try:
        de_cfg = DEConfig(
            budget=budget,
            np_size=_get(de_section, "np", "de", _positive_int, default=30),
            f=_get(de_section, "f", "de", float, default=0.5),
            cr=_get(de_section, "cr", "de", float, default=0.9),
        )
    except ValueError as exc:
        _fail("de", str(exc))

    sens_section = _expect_map(raw.get("sensitivity"), "sensitivity")
    _check_unknown(sens_section, {"nominal", "rel_step", "thresh", "screened_specs"}, "sensitivity")
    nominal_raw = sens_section.get("nominal")
    if nominal_raw is None or nominal_raw == "center":
        nominal = None
    elif isinstance(nominal_raw, list):
        try:
            nominal = np.array([float(v) for v in nominal_raw])
        except (TypeError, ValueError):
            _fail("sensitivity.nominal", "expected 'center' or a list of reals")
        if nominal.size != problem.d:
            _fail("sensitivity.nominal", f"expected {problem.d} values, got {nominal.size}")
    else:
        _fail("sensitivity.nominal", "expected 'center' or a list of reals")
    screened_raw = sens_section.get("screened_specs", "all")
    if screened_raw in ("all", "failing"):
        screened: str | list[int] = screened_raw
    elif isinstance(screened_raw, list):
        try:
            screened = [int(v) for v in screened_raw]
        except (TypeError, ValueError):
            _fail("sensitivity.screened_specs", "expected 'all', 'failing' or a list of spec indices")
    else:
        _fail("sensitivity.screened_specs", "expected 'all', 'failing' or a list of spec indices")
    sensitivity = SensitivitySettings(
        nominal=nominal,
        rel_step=_get(sens_section, "rel_step", "sensitivity", float, default=0.05),
        thresh=_get(sens_section, "thresh", "sensitivity", float, default=0.01),
        screened_specs=screened,
    )
    if not (0 < sensitivity.rel_step < 0.5):
        _fail("sensitivity.rel_step", "must lie in (0, 0.5)")

    compare_section = _expect_map(raw.get("compare"), "compare")
    _check_unknown(compare_section, {"algorithms"}, "compare")
    compare_raw = compare_section.get("algorithms", list(ALGORITHMS))
    if not isinstance(compare_raw, list) or not compare_raw:
        _fail("compare.algorithms", "expected a non-empty list")
    for a in compare_raw:
        if a not in ALGORITHMS:
            _fail("compare.algorithms", f"unknown algorithm {a!r}")

    return RunConfig(
        problem=problem,
        make_evaluator=factory,
        algorithm=algorithm,
        budget=budget,
        seeds=seeds,
        stop_on_feasible=(termination == "stop_on_feasible"),
        output_dir=output_dir,
        objective_weight=objective_weight,
        cache=cache,
        dnnopt=dnnopt_kw,
        de=de_cfg,
        sensitivity=sensitivity,
        compare_algorithms=[str(a) for a in compare_raw],
    )

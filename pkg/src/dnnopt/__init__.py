"""Sample-efficient surrogate-guided optimizer for constrained black boxes."""

from .problem import (
    CONSTRAINT_GE,
    CONSTRAINT_LE,
    OBJECTIVE_MIN,
    ProblemDefinition,
    SpecDefinition,
    canonicalize_spec,
    denormalize,
    fom,
    fom_population,
    fom_values,
    is_feasible,
    normalize,
    resolve_objective_weight,
)
from .nn import MLP, TrainConfig, TrainingError, init_network, input_gradient, train_regression
from .critic import CriticModel, PseudoSamples, generate_pseudo_samples, train_critic
from .actor import (
    ActorConfig,
    RestrictedBounds,
    boundary_violation,
    propose_candidates,
    restricted_bounds,
    train_actor,
)
from .optimizer import (
    DnnOptConfig,
    OptimizerState,
    RunResult,
    initial_sample,
    run,
    select_elites,
    select_query,
    step,
)
from .sensitivity import (
    FrozenSubspaceEvaluator,
    SensitivityReport,
    compute_sensitivity,
    prune_variables,
    screen,
)
from .evaluators import (
    EvaluationLog,
    EvaluationRecord,
    Evaluator,
    EvaluatorDescriptor,
    make_evaluator,
)
from .external import ExternalProcessEvaluator, ProtocolError
from .baselines import DEConfig, differential_evolution, random_search

__version__ = "0.1.0"

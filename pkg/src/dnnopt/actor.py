"""Policy network: proposes parameter changes that improve the surrogate FoM.

The actor maps a design to a bounded move vector and is trained by gradient
descent through the *frozen* critic: the loss is the critic-predicted figure
of merit of the moved design plus a large penalty for leaving the box spanned
by the current elite population.  Gradients reach the actor only through the
critic's inputs, never its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .critic import CriticModel
from .nn import MLP, AdamOptimizer, TrainConfig, TrainingError, init_network
from .problem import SpecDefinition

DEFAULT_HIDDEN = (64, 64)


@dataclass(frozen=True)
class RestrictedBounds:
    """Componentwise envelope of the elite population, in unit coordinates."""

    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self) -> None:
        lb = np.asarray(self.lb, dtype=float)
        ub = np.asarray(self.ub, dtype=float)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise ValueError("restricted bounds must be 1-d arrays of equal length")
        if np.any(lb > ub):
            raise ValueError("restricted lower bound exceeds upper bound")

    @property
    def width(self) -> np.ndarray:
        return self.ub - self.lb


@dataclass
class ActorConfig:
    """Penalty weight, exploration noise and move scaling for the actor."""

    lam: float = 1e4  # boundary penalty weight, must be >> 1
    noise_sigma_frac: float = 0.1  # exploration noise as a fraction of restricted range
    delta_scale: float = 1.0  # max |move| as a multiple of restricted range
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=100))

    def __post_init__(self) -> None:
        if self.lam < 100:
            raise ValueError("boundary penalty weight must be >= 100")
        if self.noise_sigma_frac < 0:
            raise ValueError("noise_sigma_frac must be non-negative")
        if not self.delta_scale > 0:
            raise ValueError("delta_scale must be positive")


def restricted_bounds(elites: np.ndarray) -> RestrictedBounds:
    """Componentwise min/max over a non-empty (N_es, d) elite population."""
    elites = np.asarray(elites, dtype=float)
    if elites.ndim != 2 or elites.shape[0] == 0:
        raise ValueError("elite population must be a non-empty (N, d) array")
    return RestrictedBounds(lb=elites.min(axis=0), ub=elites.max(axis=0))


def boundary_violation(x: np.ndarray, dx: np.ndarray, rb: RestrictedBounds) -> np.ndarray:
    """Componentwise distance of ``x + dx`` outside the restricted box."""
    y = np.asarray(x, dtype=float) + np.asarray(dx, dtype=float)
    return np.maximum(0.0, rb.lb - y) + np.maximum(0.0, y - rb.ub)


def init_actor(d: int, hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN, seed: int = 0) -> MLP:
    """Fresh policy network with a bounded (tanh) output head."""
    return init_network([d, *hidden_sizes, d], "tanh", "tanh", seed=seed)


def actor_moves(actor: MLP, X: np.ndarray, rb: RestrictedBounds, cfg: ActorConfig) -> np.ndarray:
    """Proposed move vectors: tanh output scaled per-dimension to the elite box."""
    scale = cfg.delta_scale * rb.width
    return scale * actor.forward(np.asarray(X, dtype=float))


def _fom_cotangent(pred: np.ndarray, specs: tuple[SpecDefinition, ...]) -> tuple[np.ndarray, np.ndarray]:
    """FoM values and their gradient with respect to predicted specs."""
    w = np.array([s.weight for s in specs])
    scaled = w[1:] * pred[:, 1:]
    g = w[0] * pred[:, 0] + np.clip(scaled, 0.0, 1.0).sum(axis=1)
    dg = np.empty_like(pred)
    dg[:, 0] = w[0]
    dg[:, 1:] = w[1:] * ((scaled > 0.0) & (scaled < 1.0))
    return g, dg


def _loss_and_move_grad(
    X: np.ndarray,
    delta: np.ndarray,
    critic: CriticModel,
    rb: RestrictedBounds,
    specs: tuple[SpecDefinition, ...],
    lam: float,
) -> tuple[float, np.ndarray]:
    """Mean loss over a batch and its gradient with respect to the moves."""
    n = X.shape[0]
    pred_std = critic.net.forward(np.hstack([X, delta]))
    pred = critic.target_mean + critic.target_std * pred_std
    g, dg = _fom_cotangent(pred, specs)

    y = X + delta
    below = rb.lb - y
    above = y - rb.ub
    viol = np.maximum(0.0, below) + np.maximum(0.0, above)
    norm = np.linalg.norm(viol, axis=1)
    pen = lam * norm

    # FoM term: cotangent flows through the frozen critic into its move inputs.
    _, dinp = critic.net.backward(np.hstack([X, delta]), dg * critic.target_std / n)
    d_delta = dinp[:, X.shape[1] :]
    # Penalty term: d||viol||/dy with sign for which side of the box was left.
    safe = np.where(norm > 0, norm, 1.0)
    side = (above > 0).astype(float) - (below > 0).astype(float)
    d_delta = d_delta + (lam / n) * (viol / safe[:, None]) * side

    return float(np.mean(g + pen)), d_delta


def actor_loss(
    actor: MLP,
    critic: CriticModel,
    X: np.ndarray,
    rb: RestrictedBounds,
    specs: tuple[SpecDefinition, ...],
    cfg: ActorConfig,
) -> float:
    """Mean training loss of the actor over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    delta = actor_moves(actor, X, rb, cfg)
    loss, _ = _loss_and_move_grad(X, delta, critic, rb, specs, cfg.lam)
    return loss


def actor_loss_gradients(
    actor: MLP,
    critic: CriticModel,
    X: np.ndarray,
    rb: RestrictedBounds,
    specs: tuple[SpecDefinition, ...],
    cfg: ActorConfig,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss and its gradients with respect to the actor's parameters."""
    X = np.asarray(X, dtype=float)
    scale = cfg.delta_scale * rb.width
    delta = scale * actor.forward(X)
    loss, d_delta = _loss_and_move_grad(X, delta, critic, rb, specs, cfg.lam)
    grads, _ = actor.backward(X, d_delta * scale)
    return loss, grads


def train_actor(
    actor: MLP,
    critic: CriticModel,
    elites: np.ndarray,
    rb: RestrictedBounds,
    specs: tuple[SpecDefinition, ...],
    cfg: ActorConfig,
) -> tuple[MLP, list[float]]:
    """Train the actor on batches drawn from the elite population.

    The critic stays frozen throughout.  Returns the trained network and the
    per-epoch mean loss history.
    """
    X = np.asarray(elites, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("elite population must be a non-empty (N, d) array")
    tc = cfg.train
    n = X.shape[0]
    batch = min(tc.batch_size, n)
    rng = np.random.default_rng(tc.seed)
    adam = AdamOptimizer(actor, tc.learning_rate)
    history: list[float] = []
    best = np.inf
    stale = 0
    for epoch in range(tc.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            loss, grads = actor_loss_gradients(actor, critic, X[idx], rb, specs, cfg)
            total += loss * idx.size
            adam.step(actor, grads)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite actor loss at epoch {epoch}: {epoch_loss}")
        history.append(epoch_loss)
        if best - epoch_loss >= tc.min_improvement:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if tc.patience and stale >= tc.patience:
                break
    return actor, history


def propose_candidates(
    actor: MLP,
    elites: np.ndarray,
    rb: RestrictedBounds,
    cfg: ActorConfig,
    seed: int = 0,
) -> np.ndarray:
    """One noisy candidate per elite, clipped to the global unit cube."""
    X = np.asarray(elites, dtype=float)
    delta = actor_moves(actor, X, rb, cfg)
    rng = np.random.default_rng(seed)
    sigma = cfg.noise_sigma_frac * rb.width
    noise = rng.standard_normal(X.shape) * sigma
    return np.clip(X + delta + noise, 0.0, 1.0)

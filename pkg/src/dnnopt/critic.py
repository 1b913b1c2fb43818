"""Surrogate spec predictor trained on pairwise pseudo-samples.

From N evaluated designs, every ordered pair (i, j) yields a training point
``[x_i, x_j - x_i] -> f(x_j)``: the model learns to predict the specs of the
design reached by applying a parameter change to a known starting point.
This squares the effective training-set size and gives the surrogate a
(point, move) input signature the policy network can be trained through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MLP, TrainConfig, init_network, train_regression

DEFAULT_HIDDEN = (128, 128, 128)
DEFAULT_PSEUDO_CAP = 40000


@dataclass(frozen=True)
class PseudoSamples:
    """Batch of pairwise training points in unit-cube coordinates."""

    inputs: np.ndarray  # (n, 2d) rows [x_i, x_j - x_i]
    targets: np.ndarray  # (n, m+1) rows f(x_j)
    pairs: np.ndarray  # (n, 2) int rows (i, j)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def generate_pseudo_samples(
    X: np.ndarray,
    F: np.ndarray,
    cap: int = DEFAULT_PSEUDO_CAP,
    seed: int = 0,
) -> PseudoSamples:
    """All N^2 ordered-pair samples, uniformly subsampled above ``cap``.

    The N diagonal pairs (i, i) are always kept so every evaluated design is
    represented with a zero move.  Targets are bit-for-bit copies of the
    endpoint evaluations.
    """
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("population must be a non-empty (N, d) array")
    if F.shape[0] != X.shape[0]:
        raise ValueError("population and spec matrix row counts differ")
    if cap < X.shape[0]:
        raise ValueError("cap must be at least the population size (diagonal pairs are kept)")
    n = X.shape[0]
    total = n * n
    if total <= cap:
        i_idx = np.repeat(np.arange(n), n)
        j_idx = np.tile(np.arange(n), n)
    else:
        off = np.arange(total)
        off = off[off // n != off % n]  # drop diagonals, re-added below
        rng = np.random.default_rng(seed)
        picked = rng.choice(off, size=cap - n, replace=False)
        flat = np.concatenate([np.arange(n) * (n + 1), picked])
        i_idx = flat // n
        j_idx = flat % n
    inputs = np.hstack([X[i_idx], X[j_idx] - X[i_idx]])
    targets = F[j_idx].copy()
    return PseudoSamples(inputs=inputs, targets=targets, pairs=np.column_stack([i_idx, j_idx]))


@dataclass
class CriticModel:
    """Trained surrogate with its target standardization statistics."""

    net: MLP
    target_mean: np.ndarray
    target_std: np.ndarray
    loss_history: list[float]
    n_samples: int

    @property
    def d(self) -> int:
        return self.net.input_size // 2

    def predict(self, x: np.ndarray, dx: np.ndarray) -> np.ndarray:
        """De-standardized spec prediction for one (design, move) pair."""
        x = np.asarray(x, dtype=float)
        dx = np.asarray(dx, dtype=float)
        if x.shape != (self.d,) or dx.shape != (self.d,):
            raise ValueError(f"expected two arrays of length {self.d}")
        out = self.net.forward(np.concatenate([x, dx]))
        return self.target_mean + self.target_std * out

    def predict_batch(self, X: np.ndarray, DX: np.ndarray) -> np.ndarray:
        """De-standardized predictions for (n, d) blocks of designs and moves."""
        X = np.asarray(X, dtype=float)
        DX = np.asarray(DX, dtype=float)
        if X.shape != DX.shape or X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError("expected matching (n, d) arrays")
        out = self.net.forward(np.hstack([X, DX]))
        return self.target_mean + self.target_std * out


def train_critic(
    samples: PseudoSamples,
    cfg: TrainConfig,
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN,
    init_seed: int | None = None,
    net: MLP | None = None,
    final_scale: float = 1.0,
) -> CriticModel:
    """Train a fresh surrogate on pseudo-samples (MSE over all outputs).

    Targets are z-scored per output dimension so specs of wildly different
    magnitudes contribute comparably to the loss; predictions are
    de-standardized on the way out.  Pass ``net`` to warm-start instead of
    re-initializing.
    """
    if len(samples) < 2:
        raise ValueError("need at least two pseudo-samples to train")
    inputs = samples.inputs
    targets = samples.targets
    mean = targets.mean(axis=0)
    std = targets.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    z = (targets - mean) / std
    if net is None:
        sizes = [inputs.shape[1], *hidden_sizes, targets.shape[1]]
        net = init_network(
            sizes,
            "tanh",
            "identity",
            seed=cfg.seed if init_seed is None else init_seed,
            final_scale=final_scale,
        )
    net, history = train_regression(net, inputs, z, cfg)
    return CriticModel(
        net=net,
        target_mean=mean,
        target_std=std,
        loss_history=history,
        n_samples=len(samples),
    )


def constant_critic(d: int, value: np.ndarray) -> CriticModel:
    """Surrogate that predicts the same spec vector everywhere (for tests)."""
    value = np.asarray(value, dtype=float)
    net = MLP([2 * d, 4, value.size], "tanh", "identity")
    net.biases[-1] = value.copy()
    return CriticModel(
        net=net,
        target_mean=np.zeros(value.size),
        target_std=np.ones(value.size),
        loss_history=[],
        n_samples=0,
    )

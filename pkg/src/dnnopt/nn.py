"""Minimal feed-forward network engine: forward, backprop, Adam regression.

Everything is plain float64 numpy, deterministic under a fixed seed.  The
engine exposes vector-Jacobian products with respect to both parameters and
inputs; the latter is what lets a frozen surrogate pass gradients back into
a second network during policy training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class TrainingError(RuntimeError):
    """Raised when training encounters invalid data or diverges."""


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z), overflow-safe: ~z for large z
    return np.log1p(np.exp(np.minimum(z, 30.0))) + np.maximum(z - 30.0, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (f, df/dz as a function of the pre-activation z)
ACTIVATIONS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]] = {
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "softplus": (_softplus, _sigmoid),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


@dataclass
class TrainConfig:
    """Gradient-descent settings shared by all network training loops."""

    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 20
    min_improvement: float = 1e-6
    lr_decay: float = 1.0  # per-epoch geometric decay; 1.0 = constant rate

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr_decay must lie in (0, 1]")


class MLP:
    """Fully connected network with one activation for all hidden layers."""

    def __init__(
        self,
        layer_sizes: Sequence[int],
        hidden_activation: str = "softplus",
        output_activation: str = "identity",
        *,
        weights: list[np.ndarray] | None = None,
        biases: list[np.ndarray] | None = None,
    ) -> None:
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {layer_sizes}")
        for name in (hidden_activation, output_activation):
            if name not in ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        if weights is None:
            self.weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
            self.biases = [np.zeros(b) for b in sizes[1:]]
        else:
            assert biases is not None
            self.weights = weights
            self.biases = biases
            for i, (W, b) in enumerate(zip(weights, biases)):
                if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                    raise ValueError("parameter shapes disagree with layer_sizes")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MLP":
        return MLP(
            self.layer_sizes,
            self.hidden_activation,
            self.output_activation,
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def _activation(self, layer: int) -> tuple[Callable, Callable]:
        name = self.output_activation if layer == len(self.weights) - 1 else self.hidden_activation
        return ACTIVATIONS[name]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network on a single input vector or an (n, in) batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.input_size:
            raise ValueError(f"input width {a.shape[1]} != network input size {self.input_size}")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            f, _ = self._activation(i)
            a = f(a @ W + b)
        return a[0] if single else a

    def _forward_trace(self, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Forward pass keeping pre-activations and activations for backprop."""
        activations = [X]
        pre = []
        a = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            pre.append(z)
            f, _ = self._activation(i)
            a = f(z)
            activations.append(a)
        return pre, activations

    def backward(
        self, X: np.ndarray, cotangent: np.ndarray
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Vector-Jacobian products of ``cotangent . output`` for a batch.

        Returns per-layer ``(dW, db)`` grads and the gradient with respect to
        the inputs, all summed over the batch rows.
        """
        X = np.asarray(X, dtype=float)
        cot = np.asarray(cotangent, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
            cot = cot[None, :]
        if cot.shape != (X.shape[0], self.output_size):
            raise ValueError("cotangent shape must be (batch, output_size)")
        pre, acts = self._forward_trace(X)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)  # type: ignore
        d = cot
        for i in range(len(self.weights) - 1, -1, -1):
            _, df = self._activation(i)
            d = d * df(pre[i])
            grads[i] = (acts[i].T @ d, d.sum(axis=0))
            d = d @ self.weights[i].T
        dX = d[0] if single else d
        return grads, dX


def init_network(
    layer_sizes: Sequence[int],
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    seed: int = 0,
    final_scale: float = 1.0,
) -> MLP:
    """Fresh network with zero-mean, fan-in-scaled Gaussian weights.

    ``final_scale`` optionally shrinks the last layer so the initial output
    starts near the (zero) output bias.
    """
    net = MLP(layer_sizes, hidden_activation, output_activation)
    rng = np.random.default_rng(seed)
    last = len(net.weights) - 1
    for i, (fan_in, fan_out) in enumerate(zip(net.layer_sizes[:-1], net.layer_sizes[1:])):
        scale = (final_scale if i == last else 1.0) / np.sqrt(fan_in)
        net.weights[i] = rng.normal(0.0, scale, size=(fan_in, fan_out))
        net.biases[i] = np.zeros(fan_out)
    return net


def input_gradient(net: MLP, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """d(cotangent . output)/d(input) for a single input vector."""
    x = np.asarray(x, dtype=float)
    cot = np.asarray(cotangent, dtype=float)
    if cot.shape != (net.output_size,):
        raise ValueError(f"cotangent length {cot.shape} != output size {net.output_size}")
    _, dX = net.backward(x, cot)
    return dX


def get_flat_params(net: MLP) -> np.ndarray:
    """All parameters concatenated into one vector (for gradient checks)."""
    parts = []
    for W, b in zip(net.weights, net.biases):
        parts.append(W.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def set_flat_params(net: MLP, vec: np.ndarray) -> None:
    """Inverse of :func:`get_flat_params`."""
    pos = 0
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        net.weights[i] = vec[pos : pos + W.size].reshape(W.shape).copy()
        pos += W.size
        net.biases[i] = vec[pos : pos + b.size].copy()
        pos += b.size
    if pos != vec.size:
        raise ValueError("parameter vector length mismatch")


class AdamOptimizer:
    """Adaptive moment estimation over an MLP's parameter list."""

    def __init__(self, net: MLP, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(net.weights, net.biases)]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(net.weights, net.biases)]

    def step(self, net: MLP, grads: list[tuple[np.ndarray, np.ndarray]]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, (gW, gb) in enumerate(grads):
            mW, mb = self.m[i]
            vW, vb = self.v[i]
            mW += (1 - self.beta1) * (gW - mW)
            mb += (1 - self.beta1) * (gb - mb)
            vW += (1 - self.beta2) * (gW * gW - vW)
            vb += (1 - self.beta2) * (gb * gb - vb)
            net.weights[i] -= self.lr * (mW / c1) / (np.sqrt(vW / c2) + self.eps)
            net.biases[i] -= self.lr * (mb / c1) / (np.sqrt(vb / c2) + self.eps)


def train_regression(
    net: MLP,
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
) -> tuple[MLP, list[float]]:
    """Fit ``net`` to ``targets`` by mini-batch Adam on mean squared error.

    The loss is averaged over the batch and over all output components.
    Trains in place and returns the network with its per-epoch loss history.
    Stops early once the epoch loss has failed to improve by
    ``cfg.min_improvement`` for ``cfg.patience`` consecutive epochs.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise TrainingError("inputs and targets must be non-empty 2-d arrays with equal row counts")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise TrainingError("training data contains non-finite values")
    if X.shape[1] != net.input_size or Y.shape[1] != net.output_size:
        raise TrainingError("training data width disagrees with network layer sizes")

    n = X.shape[0]
    batch = min(cfg.batch_size, n)
    rng = np.random.default_rng(cfg.seed)
    if net.output_activation == "identity":
        # warm-start the output bias at the mean residual; exact shift for an
        # identity head, and leaves the fit far better conditioned
        net.biases[-1] = net.biases[-1] + (Y.mean(axis=0) - net.forward(X).mean(axis=0))
    adam = AdamOptimizer(net, cfg.learning_rate)
    history: list[float] = []
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        adam.lr = cfg.learning_rate * cfg.lr_decay**epoch
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            Xb, Yb = X[idx], Y[idx]
            pre, acts = net._forward_trace(Xb)
            resid = acts[-1] - Yb
            loss = float(np.mean(resid**2))
            total += loss * idx.size
            cot = (2.0 / resid.size) * resid
            d = cot
            grads: list = [None] * len(net.weights)
            for i in range(len(net.weights) - 1, -1, -1):
                _, df = net._activation(i)
                d = d * df(pre[i])
                grads[i] = (acts[i].T @ d, d.sum(axis=0))
                d = d @ net.weights[i].T
            adam.step(net, grads)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}: {epoch_loss}")
        history.append(epoch_loss)
        if best - epoch_loss >= cfg.min_improvement:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                break
    return net, history


FORMAT_VERSION = 1


def save_mlp(net: MLP, path: str) -> None:
    """Persist parameters to an .npz archive with a versioned header."""
    arrays = {
        "version": np.array([FORMAT_VERSION]),
        "layer_sizes": np.array(net.layer_sizes),
        "hidden_activation": np.array(net.hidden_activation),
        "output_activation": np.array(net.output_activation),
    }
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_mlp(path: str) -> MLP:
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported network file version {version}")
        sizes = [int(s) for s in data["layer_sizes"]]
        weights = [data[f"W{i}"] for i in range(len(sizes) - 1)]
        biases = [data[f"b{i}"] for i in range(len(sizes) - 1)]
        return MLP(
            sizes,
            str(data["hidden_activation"]),
            str(data["output_activation"]),
            weights=weights,
            biases=biases,
        )

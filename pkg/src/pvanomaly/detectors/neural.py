"""Feed-forward networks trained with numpy backprop and Adam.

Two models share the machinery: a one-step state estimator that maps a
flattened window of past measurements to the next timestep, and a
denoising autoencoder that reconstructs a clean input from a noisy copy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, NonFiniteLoss, TooFewSamples
from .base import dump_model, load_model

log = logging.getLogger(__name__)

MAX_RESTARTS = 3


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class Mlp:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[str, ...]  # "relu" or "linear", one per layer

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, X: np.ndarray) -> np.ndarray:
        return forward(self.weights, self.biases, self.activations, X)[-1]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], activations: Sequence[str]) -> "Mlp":
        n = len(activations)
        return cls(tuple(arrays[f"W{i}"] for i in range(n)),
                   tuple(arrays[f"b{i}"] for i in range(n)), tuple(activations))


def forward(weights, biases, activations, X) -> list[np.ndarray]:
    """Layer outputs, input first."""
    outs = [X]
    h = X
    for W, b, act in zip(weights, biases, activations):
        h = h @ W + b
        if act == "relu":
            h = np.maximum(h, 0.0)
        outs.append(h)
    return outs


def loss_and_grads(weights, biases, activations, X, Y):
    """Mean squared error over all outputs and its parameter gradients."""
    outs = forward(weights, biases, activations, X)
    diff = outs[-1] - Y
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / diff.size
    gW, gb = [None] * len(weights), [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        if activations[layer] == "relu":
            delta = delta * (outs[layer + 1] > 0)
        gW[layer] = outs[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer:
            delta = delta @ weights[layer].T
    return loss, gW, gb


def init_params(sizes: Sequence[int], rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _train_once(sizes, activations, X, Y, cfg: TrainConfig, lr: float, noise_std: float):
    rng = np.random.default_rng(cfg.seed)
    weights, biases = init_params(sizes, rng)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n = X.shape[0]
    t = 0
    loss = np.inf
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            if noise_std > 0:
                xb = xb + rng.normal(0.0, noise_std, size=xb.shape)
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gW, gb = loss_and_grads(weights, biases, activations, xb, Y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at step {t}")
            t += 1
            for i, g in enumerate(gW + gb):
                m[i] = beta1 * m[i] + (1 - beta1) * g
                v[i] = beta2 * v[i] + (1 - beta2) * g * g
                step = lr * (m[i] / (1 - beta1**t)) / (np.sqrt(v[i] / (1 - beta2**t)) + eps)
                params[i] -= step  # in place, so weights/biases see it
    final = loss_and_grads(weights, biases, activations, X, Y)[0]
    if not np.isfinite(final):
        raise NonFiniteLoss(f"final loss is {final}")
    return Mlp(tuple(weights), tuple(biases), tuple(activations)), final


def train_network(sizes, activations, X, Y, cfg: TrainConfig, noise_std: float = 0.0):
    """Adam on mean squared error; on divergence halve the step and restart."""
    lr = cfg.learning_rate
    for attempt in range(MAX_RESTARTS + 1):
        try:
            return _train_once(sizes, activations, X, Y, cfg, lr, noise_std)
        except NonFiniteLoss:
            if attempt == MAX_RESTARTS:
                raise
            lr /= 2.0
            log.warning("training diverged; restarting with learning rate %g", lr)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class MlpEstimator:
    net: Mlp
    window_len: int
    n_channels: int
    train_mse: float
    config: TrainConfig = field(default_factory=TrainConfig)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        W = np.asarray(windows, dtype=np.float64)
        if W.shape[-2:] != (self.window_len, self.n_channels):
            raise DimensionMismatch(
                f"expected windows of shape (*, {self.window_len}, {self.n_channels}), got {W.shape}"
            )
        return self.net.forward(W.reshape(W.shape[0], -1))

    def to_json(self) -> str:
        return dump_model(
            "nn",
            {"layer_sizes": self.net.layer_sizes, "activations": list(self.net.activations),
             "window_len": self.window_len, "n_channels": self.n_channels,
             "train_mse": self.train_mse, "learning_rate": self.config.learning_rate,
             "epochs": self.config.epochs, "batch_size": self.config.batch_size},
            self.net.arrays(), seed=self.config.seed,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "MlpEstimator":
        doc = load_model(text, "nn")
        hp = doc["hyperparameters"]
        cfg = TrainConfig(hp["learning_rate"], hp["epochs"], hp["batch_size"], doc["seed"])
        return cls(Mlp.from_arrays(doc["arrays"], hp["activations"]),
                   hp["window_len"], hp["n_channels"], hp["train_mse"], cfg)


def mlp_fit(
    windows: np.ndarray,
    targets: np.ndarray,
    hidden: Sequence[int] = (64, 32, 16),
    config: TrainConfig = TrainConfig(),
) -> MlpEstimator:
    """Train a ReLU network mapping a flattened window to the next timestep."""
    W = np.asarray(windows, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if W.ndim != 3 or Y.ndim != 2 or W.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"bad shapes: windows {W.shape}, targets {Y.shape}")
    if W.shape[0] < 1:
        raise TooFewSamples("no training windows")
    _, w, c = W.shape
    sizes = [w * c, *hidden, Y.shape[1]]
    acts = ["relu"] * len(hidden) + ["linear"]
    net, mse = train_network(sizes, acts, W.reshape(W.shape[0], -1), Y, config)
    return MlpEstimator(net, w, c, mse, config)


@dataclass(frozen=True)
class DaeModel:
    net: Mlp
    code_width: int
    noise_std: float
    train_mse: float
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def input_width(self) -> int:
        return self.net.layer_sizes[0]

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_width:
            raise DimensionMismatch(f"expected {self.input_width} inputs, got {X.shape[1]}")
        return self.net.forward(X)

    def to_json(self) -> str:
        return dump_model(
            "dae",
            {"layer_sizes": self.net.layer_sizes, "activations": list(self.net.activations),
             "code_width": self.code_width, "noise_std": self.noise_std,
             "train_mse": self.train_mse, "learning_rate": self.config.learning_rate,
             "epochs": self.config.epochs, "batch_size": self.config.batch_size},
            self.net.arrays(), seed=self.config.seed,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "DaeModel":
        doc = load_model(text, "dae")
        hp = doc["hyperparameters"]
        cfg = TrainConfig(hp["learning_rate"], hp["epochs"], hp["batch_size"], doc["seed"])
        return cls(Mlp.from_arrays(doc["arrays"], hp["activations"]),
                   hp["code_width"], hp["noise_std"], hp["train_mse"], cfg)


def dae_layers(input_width: int, hidden: Sequence[int], code_width: int) -> tuple[list[int], list[str]]:
    """Mirror-image encoder/decoder sizes; the code layer is linear."""
    sizes = [input_width, *hidden, code_width, *reversed(hidden), input_width]
    acts = ["relu"] * len(hidden) + ["linear"] + ["relu"] * len(hidden) + ["linear"]
    return sizes, acts


def dae_fit(
    X: np.ndarray,
    noise_std: float = 0.1,
    hidden: Sequence[int] = (32,),
    code_width: int | None = None,
    config: TrainConfig = TrainConfig(),
) -> DaeModel:
    """Train to reconstruct clean rows of ``X`` from noise-corrupted copies."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = X.shape[1]
    if code_width is None:
        code_width = max(1, min(16, d // 2))
    if not 1 <= code_width < d:
        raise ValueError(f"code width must be in [1, {d - 1}], got {code_width}")
    sizes, acts = dae_layers(d, hidden, code_width)
    net, mse = train_network(sizes, acts, X, X, config, noise_std=noise_std)
    return DaeModel(net, code_width, noise_std, mse, config)


def dae_score(model: DaeModel, x: np.ndarray) -> np.ndarray | float:
    """Per-sample mean squared reconstruction error."""
    x = np.asarray(x, dtype=np.float64)
    r = model.reconstruct(x) - np.atleast_2d(x)
    e = np.mean(r * r, axis=1)
    return float(e[0]) if x.ndim == 1 else e

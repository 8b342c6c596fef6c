"""Adam optimization and the training loops: early stopping with patience,
and fixed-epoch training for the retrain-on-everything regime.

Determinism contract: for a fixed (seed, data, config) a run is bitwise
reproducible. Epoch e shuffles with ``seed + e`` and the dropout seed of
step s within epoch e is ``step_dropout_seed(seed, e, s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .corpus import Batch, batches
from .model import (
    ModelConfig,
    ModelParams,
    backward,
    cross_entropy,
    forward,
    init_params,
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization regime. The Adam defaults are the standard ones."""

    batch_size: int = 16
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 10
    max_epochs: int = 500
    seed: int = 42
    fixed_epochs: int | None = None  # set for the fixed-epoch regime

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.fixed_epochs is not None and self.fixed_epochs < 1:
            raise ValueError("fixed_epochs must be >= 1")


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step counter."""

    m: ModelParams
    v: ModelParams
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0)


@dataclass
class TrainHistory:
    """Per-epoch losses and the stopping bookkeeping (epochs are 1-based)."""

    train_losses: list[float] = field(default_factory=list)
    dev_losses: list[float] = field(default_factory=list)
    dev_accuracies: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def adam_step(
    params: ModelParams, grads: ModelParams, state: AdamState, config: TrainConfig
) -> tuple[ModelParams, AdamState]:
    """One Adam update, in place:

    t <- t+1; m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
    """
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for (name, theta), (_, g), (_, m), (_, v) in zip(
        params.tensors(), grads.tensors(), state.m.tensors(), state.v.tensors()
    ):
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in tensor {name}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= config.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + config.epsilon)
    return params, state


def epoch_shuffle_seed(seed: int, epoch: int) -> int:
    """Seed of the mini-batch shuffle of 1-based ``epoch``."""
    return seed + epoch


def step_dropout_seed(seed: int, epoch: int, step: int) -> int:
    """Deterministic dropout seed for optimizer step ``step`` of ``epoch``."""
    return int(np.random.SeedSequence(entropy=(seed, epoch, step)).generate_state(1)[0])


def _emit(log_streams: Sequence[IO[str]], *fields) -> None:
    line = "\t".join(str(f) for f in fields)
    for stream in log_streams:
        stream.write(line + "\n")
        stream.flush()


def _train_one_epoch(
    params: ModelParams,
    state: AdamState,
    data: Sequence[tuple[np.ndarray, int]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: int,
) -> float:
    """Shuffle, iterate batches, update. Returns the mean train loss."""
    total = 0.0
    for step, batch in enumerate(batches(data, train_config.batch_size, epoch_shuffle_seed(train_config.seed, epoch))):
        probs, cache = forward(
            params,
            model_config,
            batch,
            train_mode=True,
            dropout_seed=step_dropout_seed(train_config.seed, epoch, step),
        )
        loss = cross_entropy(probs, batch.labels)
        grads = backward(params, model_config, cache, batch.labels)
        adam_step(params, grads, state, train_config)
        total += loss * len(batch)
    return total / len(data)


def dataset_metrics(
    params: ModelParams,
    config: ModelConfig,
    data: Sequence[tuple[np.ndarray, int]],
    batch_size: int = 256,
) -> tuple[float, float]:
    """Inference-mode (mean loss, accuracy) over a dataset."""
    if not data:
        raise ValueError("cannot evaluate an empty dataset")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(data), batch_size):
        chunk = data[start : start + batch_size]
        inputs = np.stack([enc for enc, _ in chunk])
        labels = np.array([lab for _, lab in chunk], dtype=np.int64)
        probs, _ = forward(params, config, Batch(inputs=inputs, labels=labels))
        total_loss += cross_entropy(probs, labels) * len(chunk)
        correct += int((np.argmax(probs, axis=1) == labels).sum())
    return total_loss / len(data), correct / len(data)


def train_model(
    train_data: Sequence[tuple[np.ndarray, int]],
    dev_data: Sequence[tuple[np.ndarray, int]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_streams: Sequence[IO[str]] = (),
) -> tuple[ModelParams, TrainHistory]:
    """Train with early stopping on the dev loss.

    The best-epoch snapshot is tracked on strict improvement of the dev loss;
    training stops after ``patience`` consecutive epochs without improvement
    (or at ``max_epochs``) and the snapshot is returned. Each log line is
    ``epoch TAB train_loss TAB dev_loss TAB dev_accuracy``.
    """
    if not train_data:
        raise ValueError("training data is empty")
    if not dev_data:
        raise ValueError("dev data is empty (early stopping needs a dev set)")

    params = init_params(model_config, train_config.seed)
    state = AdamState.for_params(params)
    history = TrainHistory()
    best_params = params.copy()
    best_loss = np.inf
    epochs_since_best = 0

    for epoch in range(1, train_config.max_epochs + 1):
        train_loss = _train_one_epoch(params, state, train_data, model_config, train_config, epoch)
        dev_loss, dev_acc = dataset_metrics(params, model_config, dev_data)
        history.train_losses.append(train_loss)
        history.dev_losses.append(dev_loss)
        history.dev_accuracies.append(dev_acc)
        _emit(log_streams, epoch, f"{train_loss:.6f}", f"{dev_loss:.6f}", f"{dev_acc:.4f}")

        if dev_loss < best_loss:
            best_loss = dev_loss
            best_params = params.copy()
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        history.stopped_epoch = epoch
        if epochs_since_best >= train_config.patience:
            break

    return best_params, history


def train_fixed_epochs(
    train_data: Sequence[tuple[np.ndarray, int]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_streams: Sequence[IO[str]] = (),
) -> ModelParams:
    """Train on all data for exactly ``train_config.fixed_epochs`` epochs,
    with no dev evaluation, and return the final parameters."""
    if not train_data:
        raise ValueError("training data is empty")
    if train_config.fixed_epochs is None:
        raise ValueError("train_config.fixed_epochs is not set")

    params = init_params(model_config, train_config.seed)
    state = AdamState.for_params(params)
    for epoch in range(1, train_config.fixed_epochs + 1):
        train_loss = _train_one_epoch(params, state, train_data, model_config, train_config, epoch)
        _emit(log_streams, epoch, f"{train_loss:.6f}", "-", "-")
    return params

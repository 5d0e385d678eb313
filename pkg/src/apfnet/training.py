"""Supervised training of the field predictor against ideal potential maps.

The loss per frame is the mean squared difference over the 36x9 cells; a
sequence scores the mean of its frame losses.  Updates happen once per
sequence (the recurrence ties frames together), in a seeded shuffled order,
so a fixed seed reproduces the split, the updates and every loss record
bit for bit.  Training is single-threaded by contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .apf import ApfParams, build_ideal_sequence
from .errors import NumericError
from .network import ModelParameters, model_backward, model_forward
from .scenario import GridSpec, Scenario, rasterize


@dataclass(frozen=True)
class TrainingSequence:
    """One scenario prepared for training: binary inputs and ideal targets."""

    inputs: np.ndarray  # (T, 36, 9) binary
    targets: np.ndarray  # (T, 36, 9) in [0, 1]


def make_training_sequences(
    scenarios: Sequence[Scenario],
    spec: GridSpec | None = None,
    params: ApfParams | None = None,
) -> list[TrainingSequence]:
    """Rasterize scenarios and build their ideal supervision sequences."""
    spec = spec or GridSpec()
    params = params or ApfParams()
    prepared = []
    for s in scenarios:
        inputs = np.stack([rasterize(s, t, spec).values for t in range(s.horizon_steps)])
        frames = build_ideal_sequence(s, spec, params)
        targets = np.stack([f.grid.values for f in frames])
        prepared.append(TrainingSequence(inputs=inputs, targets=targets))
    return prepared


@dataclass
class TrainConfig:
    dataset: Sequence[TrainingSequence]
    epochs: int = 20
    learning_rate: float = 1e-3
    seed: int = 0
    train_fraction: float = 0.8
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: int = 128

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    train_loss: float
    test_loss: float


def mse_loss(predicted, ideal):
    """Mean squared cell difference plus its gradient w.r.t. the prediction."""
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(ideal, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    diff = p - y
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def sequence_loss(outputs, targets):
    """Mean of per-frame mean squared errors plus the output gradient."""
    o = np.asarray(outputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if o.shape != y.shape:
        raise ValueError(f"shape mismatch: {o.shape} vs {y.shape}")
    diff = o - y
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def _check_finite_grads(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")


class SgdOptimizer:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def apply_update(self, params: ModelParameters, grads: dict[str, np.ndarray]):
        _check_finite_grads(grads)
        for name, arr in params.arrays().items():
            arr -= self.learning_rate * grads[name]
        return params


class AdamOptimizer:
    """Bias-corrected first/second moment update; one shared step counter."""

    def __init__(self, learning_rate: float, beta1: float, beta2: float, eps: float):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def apply_update(self, params: ModelParameters, grads: dict[str, np.ndarray]):
        _check_finite_grads(grads)
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step
        bias2 = 1.0 - b2**self.step
        for name, arr in params.arrays().items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(arr)
                self.v[name] = np.zeros_like(arr)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            arr -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return params


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SgdOptimizer(config.learning_rate)
    return AdamOptimizer(config.learning_rate, config.beta1, config.beta2, config.eps)


def train_epoch(params: ModelParameters, sequences, config: TrainConfig, rng, optimizer) -> float:
    """One pass over a partition in seeded shuffled order; returns mean loss."""
    if len(sequences) == 0:
        raise ValueError("training partition is empty")
    losses = []
    for idx in rng.permutation(len(sequences)):
        seq = sequences[idx]
        output, trace = model_forward(seq.inputs, params)
        loss, grad = sequence_loss(output, seq.targets)
        if not math.isfinite(loss):
            raise NumericError("non-finite training loss")
        grads = model_backward(trace, grad)
        optimizer.apply_update(params, grads)
        losses.append(loss)
    return float(np.mean(losses))


def _partition_loss(params: ModelParameters, sequences) -> float:
    losses = []
    for seq in sequences:
        output, _ = model_forward(seq.inputs, params, record_trace=False)
        loss, _ = sequence_loss(output, seq.targets)
        losses.append(loss)
    return float(np.mean(losses))


def fit(config: TrainConfig):
    """Split, train, and report per-epoch train/held-out losses.

    The dataset is split by a seeded permutation (train_fraction to the
    training side, at least one sequence per side).  Returns the final
    parameters and one LossRecord per epoch, in epoch order.
    """
    n = len(config.dataset)
    if n < 2:
        raise ValueError(f"dataset must hold at least 2 sequences, got {n}")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_train = min(max(int(config.train_fraction * n), 1), n - 1)
    train_set = [config.dataset[i] for i in perm[:n_train]]
    test_set = [config.dataset[i] for i in perm[n_train:]]

    params = ModelParameters.init(config.seed, hidden=config.hidden)
    optimizer = make_optimizer(config)

    records = []
    for epoch in range(1, config.epochs + 1):
        train_loss = train_epoch(params, train_set, config, rng, optimizer)
        test_loss = _partition_loss(params, test_set)
        if not (math.isfinite(train_loss) and math.isfinite(test_loss)):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        records.append(LossRecord(epoch=epoch, train_loss=train_loss, test_loss=test_loss))
    return params, records


def write_loss_csv(records: Sequence[LossRecord], path) -> None:
    lines = ["epoch,train_loss,test_loss"]
    for r in records:
        lines.append(f"{r.epoch},{r.train_loss:.17g},{r.test_loss:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

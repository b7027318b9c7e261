"""The training loop: epoch shuffling, early stopping, plateau LR decay.

Everything here is deterministic given the seed: batch order per epoch is
drawn from ``seed ^ epoch``, dropout noise from the same per-epoch stream,
and the loop restores the best-validation-epoch weights before returning,
so a finished run can never hand back parameters worse than the best it
observed.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .batching import BatchSet
from .exceptions import ConfigError, TrainingError
from .losses import ClassWeights, make_loss
from .models import SequenceModel
from .optim import make_optimizer


class EarlyStopping:
    """Stop after `patience` consecutive epochs without a new best loss.

    Improvement is strict (<); the epoch index of the best loss is kept so
    the caller can restore those weights.
    """

    def __init__(self, patience: int = 10):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self.counter = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.counter = 0
            return False
        self.counter += 1
        return self.counter >= self.patience


class PlateauScheduler:
    """Multiply the learning rate by `factor` after a validation plateau.

    The counter resets on improvement or on a reduction, and the rate
    never drops below `min_lr`.
    """

    def __init__(self, patience: int = 6, factor: float = 0.1, min_lr: float = 1e-6):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        if not 0.0 < factor < 1.0:
            raise ConfigError(f"factor must be in (0, 1), got {factor}")
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best_loss = np.inf
        self.counter = 0

    def update(self, val_loss: float, lr: float) -> float:
        """Returns the (possibly reduced) learning rate for the next epoch."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.counter = 0
            return lr
        self.counter += 1
        if self.counter >= self.patience:
            self.counter = 0
            return max(lr * self.factor, self.min_lr)
        return lr


@dataclass
class TrainConfig:
    epochs: int = 100
    loss: str = "bce"  # "bce" | "focal"
    gamma: float = 2.0
    optimizer: str = "adam"  # "adam" | "rmsprop"
    lr: float = 1e-3
    early_stop_patience: int = 10
    plateau_patience: int = 6
    plateau_factor: float = 0.1
    min_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def to_jsonl(self) -> str:
        """One epoch per line, plus a final summary line."""
        lines = [json.dumps(asdict(rec), sort_keys=True) for rec in self.epochs]
        lines.append(
            json.dumps(
                {"best_epoch": self.best_epoch, "stopped_early": self.stopped_early},
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _epoch_loss(model: SequenceModel, batches: BatchSet, loss_fn) -> float:
    """Sample-weighted mean loss over a batch set, evaluation mode."""
    total = 0.0
    count = 0
    for batch in batches:
        probs, _ = model.forward(batch.features, batch.mask, training=False)
        loss, _ = loss_fn(probs, batch.labels)
        total += loss * batch.n_samples
        count += batch.n_samples
    if count == 0:
        raise ConfigError("cannot compute a loss over an empty batch set")
    return total / count


def train(
    model: SequenceModel,
    train_batches: BatchSet,
    val_batches: BatchSet,
    config: TrainConfig,
    weights: ClassWeights | None = None,
) -> TrainHistory:
    """Fit the model in place and return the per-epoch history.

    Each epoch shuffles the batch order (seed ^ epoch), then runs
    forward -> loss -> backward -> optimizer step per batch. Validation
    loss drives both early stopping and the plateau scheduler. A NaN or
    infinite training loss aborts with the offending epoch/batch.
    """
    loss_fn = make_loss(config.loss, weights, config.gamma)
    optimizer = make_optimizer(config.optimizer, config.lr)
    stopper = EarlyStopping(config.early_stop_patience)
    scheduler = PlateauScheduler(config.plateau_patience, config.plateau_factor, config.min_lr)
    history = TrainHistory()

    params = model.parameters()
    best_params = model.copy_parameters()
    n_batches = len(train_batches.batches)

    for epoch in range(config.epochs):
        started = time.perf_counter()
        rng = np.random.default_rng(config.seed ^ epoch)
        order = rng.permutation(n_batches)

        total = 0.0
        count = 0
        for pos, batch_idx in enumerate(order):
            batch = train_batches.batches[batch_idx]
            probs, cache = model.forward(batch.features, batch.mask, training=True, rng=rng)
            loss, dprobs = loss_fn(probs, batch.labels)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}, batch {pos}",
                    epoch=epoch,
                    batch=pos,
                )
            grads = model.backward(cache, dprobs)
            optimizer.step(params, grads)
            total += loss * batch.n_samples
            count += batch.n_samples

        val_loss = _epoch_loss(model, val_batches, loss_fn)
        history.epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=total / max(count, 1),
                val_loss=val_loss,
                lr=optimizer.lr,
                seconds=time.perf_counter() - started,
            )
        )

        improved = val_loss < stopper.best_loss
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = model.copy_parameters()
        optimizer.lr = scheduler.update(val_loss, optimizer.lr)
        if stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    if stopper.best_epoch >= 0:
        model.set_parameters(best_params)
    return history

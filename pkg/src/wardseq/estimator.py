"""scikit-learn style facade over model building, training and scoring.

``SequenceClassifier`` keeps its constructor arguments verbatim (so
``get_params``/``set_params``/``clone`` work), builds the network lazily
at fit time from the training batches' feature width, and exposes the
fitted network and history through trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .batching import BatchSet
from .exceptions import ConfigError
from .losses import ClassWeights, compute_class_weights
from .metrics import MetricsReport, evaluate, score_batches
from .models import ModelConfig, SequenceModel
from .training import TrainConfig, train


class SequenceClassifier(BaseEstimator):
    """Binary deterioration classifier over masked sequence batches.

    Parameters mirror the model and training knobs one-to-one. The
    estimator consumes :class:`BatchSet` objects (labels travel inside),
    so the signature is ``fit(train_batches, validation_batches)`` rather
    than the (X, y) of flat-table estimators.
    """

    def __init__(
        self,
        architecture: str = "lstm",
        blocks: int = 2,
        hidden_size: int = 32,
        head_size: int = 16,
        heads: int = 2,
        ff_dim: int = 32,
        dropout: float = 0.2,
        pooling: str | None = None,
        loss: str = "bce",
        gamma: float = 2.0,
        class_weighting: str = "auto",  # "auto" | "none"
        optimizer: str = "adam",
        lr: float = 1e-3,
        epochs: int = 100,
        early_stop_patience: int = 10,
        plateau_patience: int = 6,
        plateau_factor: float = 0.1,
        min_lr: float = 1e-6,
        seed: int = 0,
    ):
        self.architecture = architecture
        self.blocks = blocks
        self.hidden_size = hidden_size
        self.head_size = head_size
        self.heads = heads
        self.ff_dim = ff_dim
        self.dropout = dropout
        self.pooling = pooling
        self.loss = loss
        self.gamma = gamma
        self.class_weighting = class_weighting
        self.optimizer = optimizer
        self.lr = lr
        self.epochs = epochs
        self.early_stop_patience = early_stop_patience
        self.plateau_patience = plateau_patience
        self.plateau_factor = plateau_factor
        self.min_lr = min_lr
        self.seed = seed

    def _model_config(self, n_features: int) -> ModelConfig:
        return ModelConfig(
            architecture=self.architecture,
            n_features=n_features,
            blocks=self.blocks,
            hidden_size=self.hidden_size,
            head_size=self.head_size,
            heads=self.heads,
            ff_dim=self.ff_dim,
            dropout=self.dropout,
            pooling=self.pooling,
            seed=self.seed,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            loss=self.loss,
            gamma=self.gamma,
            optimizer=self.optimizer,
            lr=self.lr,
            early_stop_patience=self.early_stop_patience,
            plateau_patience=self.plateau_patience,
            plateau_factor=self.plateau_factor,
            min_lr=self.min_lr,
            seed=self.seed,
        )

    def fit(self, train_batches: BatchSet, validation_batches: BatchSet):
        """Train on one batch set while monitoring another."""
        if not train_batches.batches or not validation_batches.batches:
            raise ConfigError("fit needs non-empty train and validation batch sets")
        if self.class_weighting == "auto":
            weights: ClassWeights | None = compute_class_weights(train_batches.all_labels())
        elif self.class_weighting == "none":
            weights = None
        else:
            raise ConfigError(f"unknown class_weighting {self.class_weighting!r}")

        self.class_weights_ = weights
        self.model_ = SequenceModel(self._model_config(train_batches.n_features))
        self.history_ = train(self.model_, train_batches, validation_batches,
                              self._train_config(), weights)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("SequenceClassifier is not fitted yet")

    def predict_proba(self, batches: BatchSet) -> np.ndarray:
        """Per-sample event probabilities, in batch-set order."""
        self._check_fitted()
        scored = score_batches(self.model_, batches)
        return np.array([obs.score for obs in scored])

    def predict(self, batches: BatchSet, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(batches) >= threshold).astype(np.int64)

    def evaluate(self, batches: BatchSet, aggregate: str = "max") -> MetricsReport:
        """Observation- and encounter-level AUROC/AUPRC/event rates."""
        self._check_fitted()
        return evaluate(self.model_, batches, aggregate)

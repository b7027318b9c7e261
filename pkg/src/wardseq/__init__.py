"""Deterioration prediction over irregular clinical time series.

The pipeline: long-format records -> 8-hour windows -> encoded
per-encounter sequences -> masked [batch, time, feature] blocks ->
from-scratch LSTM / transformer-encoder classifiers -> observation- and
encounter-level AUROC/AUPRC.
"""

from .batching import (
    Batch,
    BatchSet,
    EncounterSequence,
    dense_sliding_window,
    rebatch,
    sliding_window,
    smart_batch,
    to_sequences,
)
from .estimator import SequenceClassifier
from .exceptions import (
    ConfigError,
    MetricUndefinedError,
    RowParseError,
    SchemaError,
    ShapeError,
    TrainingError,
    WardseqError,
)
from .ingest import (
    FeatureSchema,
    FeatureSpec,
    add_time_diff,
    partition_by_split,
    read_granular_csv,
    split_patientwise,
    windowize,
    write_granular_csv,
)
from .losses import ClassWeights, compute_class_weights, focal_loss, weighted_bce
from .metrics import MetricsReport, auprc, auroc, encounter_aggregate, evaluate
from .models import ModelConfig, SequenceModel, grad_check
from .optim import Adam, RmsProp
from .preprocess import CategoryEncoder, FeaturePipeline, Standardizer
from .synth import SynthConfig, generate, quantile_check
from .training import EarlyStopping, PlateauScheduler, TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Batch",
    "BatchSet",
    "CategoryEncoder",
    "ClassWeights",
    "ConfigError",
    "EarlyStopping",
    "EncounterSequence",
    "FeaturePipeline",
    "FeatureSchema",
    "FeatureSpec",
    "MetricsReport",
    "MetricUndefinedError",
    "ModelConfig",
    "PlateauScheduler",
    "RmsProp",
    "RowParseError",
    "SchemaError",
    "SequenceClassifier",
    "SequenceModel",
    "ShapeError",
    "Standardizer",
    "SynthConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingError",
    "WardseqError",
    "add_time_diff",
    "auprc",
    "auroc",
    "compute_class_weights",
    "dense_sliding_window",
    "encounter_aggregate",
    "evaluate",
    "focal_loss",
    "generate",
    "grad_check",
    "partition_by_split",
    "quantile_check",
    "read_granular_csv",
    "rebatch",
    "sliding_window",
    "smart_batch",
    "split_patientwise",
    "to_sequences",
    "train",
    "weighted_bce",
    "windowize",
    "write_granular_csv",
]

"""Class weighting and the two imbalance-aware losses.

Both losses return the mean per-sample loss together with the analytic
dL/dp vector (p = predicted probability), which is the contract the
training loop and the finite-difference gradient check rely on.
Probabilities are clamped to [1e-12, 1 - 1e-12] before any log, which
bounds the worst per-sample loss at about 27.6 nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ClassWeights:
    """Inverse-frequency weights; w0*n0 + w1*n1 = n_total by construction."""

    w0: float
    w1: float

    def __post_init__(self):
        if self.w0 <= 0 or self.w1 <= 0:
            raise ConfigError(f"class weights must be positive, got {self.w0}, {self.w1}")

    @classmethod
    def unit(cls) -> "ClassWeights":
        return cls(1.0, 1.0)


def compute_class_weights(labels) -> ClassWeights:
    """weight of class c = n_total / (n_c * 2), for c in {0, 1}."""
    labels = np.asarray(labels)
    n_total = labels.size
    n_one = int(np.count_nonzero(labels))
    n_zero = n_total - n_one
    if n_zero == 0 or n_one == 0:
        raise ConfigError("class weights are undefined when only one class is present")
    return ClassWeights(w0=n_total / (n_zero * 2.0), w1=n_total / (n_one * 2.0))


def _clamped(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _check_pair(p, y):
    if p.shape != y.shape:
        raise ShapeError(f"predictions {p.shape} and labels {y.shape} differ in length")


def weighted_bce(p, y, weights: ClassWeights | None = None):
    """Class-weighted binary cross-entropy.

    mean over samples of -[w1*y*log(p) + w0*(1-y)*log(1-p)]; returns the
    loss and dL/dp evaluated at the clamped probabilities.
    """
    w = weights if weights is not None else ClassWeights.unit()
    pc = _clamped(p)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(pc, y)
    n = pc.size
    per_sample = -(w.w1 * y * np.log(pc) + w.w0 * (1.0 - y) * np.log1p(-pc))
    grad = (-(w.w1 * y / pc) + w.w0 * (1.0 - y) / (1.0 - pc)) / n
    return float(per_sample.mean()), grad


def focal_loss(p, y, gamma: float = 2.0, weights: ClassWeights | None = None):
    """Focal binary cross-entropy with focusing parameter gamma >= 0.

    Per sample: -(1-p)^gamma * y * log(p) - p^gamma * (1-y) * log(1-p),
    optionally scaled per class by (w1, w0). The modulating factors damp
    easy examples (confident, correct) and leave hard ones dominant. At
    gamma = 0 this reduces exactly to the (weighted) cross-entropy.
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    w = weights if weights is not None else ClassWeights.unit()
    pc = _clamped(p)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(pc, y)
    n = pc.size

    one_m = 1.0 - pc
    log_p = np.log(pc)
    log_1m = np.log1p(-pc)
    pos = -(one_m**gamma) * log_p
    neg = -(pc**gamma) * log_1m
    per_sample = w.w1 * y * pos + w.w0 * (1.0 - y) * neg

    # d/dp of the positive and negative terms; gamma=0 kills the power-rule
    # parts exactly because the factor multiplies out to zero.
    dpos = gamma * one_m ** (gamma - 1.0) * log_p - one_m**gamma / pc if gamma > 0 else -1.0 / pc
    dneg = -gamma * pc ** (gamma - 1.0) * log_1m + pc**gamma / one_m if gamma > 0 else 1.0 / one_m
    grad = (w.w1 * y * dpos + w.w0 * (1.0 - y) * dneg) / n
    return float(per_sample.mean()), grad


def make_loss(kind: str, weights: ClassWeights | None = None, gamma: float = 2.0):
    """Bind a loss configuration into a (p, y) -> (loss, dL/dp) callable."""
    if kind == "bce":
        return lambda p, y: weighted_bce(p, y, weights)
    if kind == "focal":
        if gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {gamma}")
        return lambda p, y: focal_loss(p, y, gamma, weights)
    raise ConfigError(f"unknown loss {kind!r}")

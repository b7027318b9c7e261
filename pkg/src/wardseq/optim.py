"""RMSProp and Adam, updating parameter dicts in place.

State is keyed by parameter name and allocated lazily on the first step,
so an optimizer can be constructed before the model. ``lr`` is a plain
mutable attribute; the plateau scheduler adjusts it between epochs.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, ShapeError


class RmsProp:
    """Keeps a decaying average of squared gradients per weight.

    s <- rho*s + (1-rho)*g^2 ; theta <- theta - lr * g / (sqrt(s) + eps)
    """

    def __init__(self, lr: float = 1e-3, rho: float = 0.9, eps: float = 1e-8):
        if lr <= 0 or not 0.0 < rho < 1.0:
            raise ConfigError(f"invalid RMSProp hyperparameters lr={lr}, rho={rho}")
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.sq_avg: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, theta in params.items():
            g = grads[name]
            if g.shape != theta.shape:
                raise ShapeError(f"gradient {name}: shape {g.shape} != parameter {theta.shape}")
            s = self.sq_avg.setdefault(name, np.zeros_like(theta))
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            theta -= self.lr * g / (np.sqrt(s) + self.eps)


class Adam:
    """First/second moment estimates with bias correction.

    m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ;
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0 or not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
            raise ConfigError(f"invalid Adam hyperparameters lr={lr}, beta1={beta1}, beta2={beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, theta in params.items():
            g = grads[name]
            if g.shape != theta.shape:
                raise ShapeError(f"gradient {name}: shape {g.shape} != parameter {theta.shape}")
            m = self.m.setdefault(name, np.zeros_like(theta))
            v = self.v.setdefault(name, np.zeros_like(theta))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            theta -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(kind: str, lr: float = 1e-3):
    if kind == "rmsprop":
        return RmsProp(lr=lr)
    if kind == "adam":
        return Adam(lr=lr)
    raise ConfigError(f"unknown optimizer {kind!r}")

"""Classifier assembly: masked LSTM stacks and transformer encoders.

A model is a stack of identical blocks followed by a pooling step and a
sigmoid dense head emitting one probability per sample:

* ``lstm``        -- blocks of LSTM -> LayerNorm -> Dropout (width =
  hidden_size after the first block); default pooling takes the last
  (always unmasked, by the left-padding convention) step.
* ``transformer`` -- encoder blocks at the input width; default pooling
  averages over unmasked steps.

``forward`` returns probabilities plus a cache; ``backward`` consumes the
cache and a per-sample dL/dp to produce one gradient per parameter, which
is what the optimizers and the finite-difference check consume.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass

import numpy as np

from .arrays import as_mask, as_tensor3
from .batching import Batch
from .exceptions import ConfigError, ShapeError
from .layers import Dense, EncoderBlock, LayerNorm, LstmLayer, dropout_backward, dropout_forward

CHECKPOINT_FORMAT = "wardseq-checkpoint-v1"


@dataclass
class ModelConfig:
    """Everything needed to rebuild a classifier, seed included."""

    architecture: str  # "lstm" | "transformer"
    n_features: int
    blocks: int = 2
    hidden_size: int = 32  # lstm block width
    head_size: int = 16  # transformer per-head key dimension
    heads: int = 2
    ff_dim: int = 32
    dropout: float = 0.2
    pooling: str | None = None  # None = architecture default
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ("lstm", "transformer"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.blocks < 1:
            raise ConfigError(f"blocks must be >= 1, got {self.blocks}")
        if self.n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {self.n_features}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pooling not in (None, "last_unmasked", "masked_mean"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")

    @property
    def resolved_pooling(self) -> str:
        if self.pooling is not None:
            return self.pooling
        return "last_unmasked" if self.architecture == "lstm" else "masked_mean"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


class SequenceModel:
    """A configured classifier with explicit forward/backward passes."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.blocks: list = []
        if config.architecture == "lstm":
            width = config.n_features
            for _ in range(config.blocks):
                lstm = LstmLayer(width, config.hidden_size, rng)
                norm = LayerNorm(config.hidden_size)
                self.blocks.append((lstm, norm))
                width = config.hidden_size
            self.head = Dense(width, 1, "sigmoid", rng)
        else:
            for _ in range(config.blocks):
                self.blocks.append(
                    EncoderBlock(
                        config.n_features,
                        config.heads,
                        config.head_size,
                        config.ff_dim,
                        config.dropout,
                        rng,
                    )
                )
            self.head = Dense(config.n_features, 1, "sigmoid", rng)

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable parameter."""
        out: dict[str, np.ndarray] = {}
        if self.config.architecture == "lstm":
            for i, (lstm, norm) in enumerate(self.blocks):
                for name, arr in lstm.params.items():
                    out[f"block{i}.lstm.{name}"] = arr
                for name, arr in norm.params.items():
                    out[f"block{i}.norm.{name}"] = arr
        else:
            for i, block in enumerate(self.blocks):
                for sub_name, sub in block.sublayers.items():
                    for name, arr in sub.params.items():
                        out[f"block{i}.{sub_name}.{name}"] = arr
        for name, arr in self.head.params.items():
            out[f"head.{name}"] = arr
        return out

    @property
    def param_count(self) -> int:
        return int(sum(arr.size for arr in self.parameters().values()))

    def forward(self, features, mask, training: bool = False, rng=None):
        """Score a batch; returns (probabilities [B], cache for backward)."""
        x = as_tensor3(features, "model input")
        if x.shape[2] != self.config.n_features:
            raise ShapeError(
                f"model expects {self.config.n_features} features, batch has {x.shape[2]}"
            )
        mask = as_mask(mask, x.shape[0], x.shape[1])
        if rng is None:
            rng = np.random.default_rng(0)

        caches = []
        if self.config.architecture == "lstm":
            m3 = mask[:, :, None]
            for lstm, norm in self.blocks:
                h, _, c_lstm = lstm.forward(x, mask)
                y, c_norm = norm.forward(h)
                y = y * m3
                y, c_drop = dropout_forward(y, self.config.dropout, training, rng)
                caches.append((c_lstm, c_norm, c_drop))
                x = y
        else:
            for block in self.blocks:
                x, c_block = block.forward(x, mask, training, rng)
                caches.append(c_block)

        pooled, pool_cache = self._pool(x, mask)
        probs2d, c_head = self.head.forward(pooled)
        probs = probs2d[:, 0]
        return probs, (mask, caches, pool_cache, c_head)

    def _pool(self, x: np.ndarray, mask: np.ndarray):
        if self.config.resolved_pooling == "last_unmasked":
            # left-padding guarantees the final step of every row is real
            return x[:, -1, :], (x.shape, mask)
        counts = mask.sum(axis=1, keepdims=True).astype(np.float64)
        pooled = (x * mask[:, :, None]).sum(axis=1) / counts
        return pooled, (x.shape, mask, counts)

    def _pool_backward(self, pool_cache, dpooled: np.ndarray) -> np.ndarray:
        if self.config.resolved_pooling == "last_unmasked":
            shape, _ = pool_cache
            dx = np.zeros(shape)
            dx[:, -1, :] = dpooled
            return dx
        shape, mask, counts = pool_cache
        return dpooled[:, None, :] * mask[:, :, None] / counts[:, :, None]

    def backward(self, cache, dprobs: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the per-sample loss sum w.r.t. every parameter."""
        mask, caches, pool_cache, c_head = cache
        grads: dict[str, np.ndarray] = {}

        g_head, dpooled = self.head.backward(c_head, np.asarray(dprobs, dtype=np.float64)[:, None])
        for name, grad in g_head.items():
            grads[f"head.{name}"] = grad
        dx = self._pool_backward(pool_cache, dpooled)

        if self.config.architecture == "lstm":
            m3 = mask[:, :, None]
            for i in range(len(self.blocks) - 1, -1, -1):
                lstm, norm = self.blocks[i]
                c_lstm, c_norm, c_drop = caches[i]
                dx = dropout_backward(c_drop, dx)
                g_norm, dx = norm.backward(c_norm, dx * m3)
                g_lstm, dx = lstm.backward(c_lstm, dx)
                for name, grad in g_norm.items():
                    grads[f"block{i}.norm.{name}"] = grad
                for name, grad in g_lstm.items():
                    grads[f"block{i}.lstm.{name}"] = grad
        else:
            for i in range(len(self.blocks) - 1, -1, -1):
                g_block, dx = self.blocks[i].backward(caches[i], dx)
                for name, grad in g_block.items():
                    grads[f"block{i}.{name}"] = grad
        return grads

    def score_batch(self, batch: Batch) -> np.ndarray:
        """Evaluation-mode probabilities for one batch."""
        probs, _ = self.forward(batch.features, batch.mask, training=False)
        return probs

    # -- checkpoint serialization -----------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    def to_json(self) -> str:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "params": {
                name: {
                    "shape": list(arr.shape),
                    "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode(),
                }
                for name, arr in sorted(self.parameters().items())
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SequenceModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    @classmethod
    def from_json(cls, text: str) -> "SequenceModel":
        payload = json.loads(text)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"unknown checkpoint format: {payload.get('format')!r}")
        model = cls(ModelConfig.from_dict(payload["config"]))
        params = model.parameters()
        stored = payload["params"]
        if set(stored) != set(params):
            raise ConfigError("checkpoint parameters do not match the configured model")
        for name, arr in params.items():
            item = stored[name]
            data = np.frombuffer(base64.b64decode(item["data"]), dtype=np.float64)
            arr[...] = data.reshape(item["shape"])
        return model

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(values) != set(params):
            raise ConfigError("parameter names do not match the configured model")
        for name, arr in params.items():
            if values[name].shape != arr.shape:
                raise ShapeError(f"parameter {name}: shape {values[name].shape} != {arr.shape}")
            arr[...] = values[name]

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.parameters().items()}


def grad_check(
    model: SequenceModel,
    features,
    mask,
    labels,
    loss_fn,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(probs, labels) -> (loss, dL/dprobs)`` is evaluated with the
    model in evaluation mode (dropout off) so the comparison is
    deterministic. Every parameter element is perturbed by +-step, so keep
    the model small (a few thousand parameters).
    """
    labels = np.asarray(labels, dtype=np.float64)
    probs, cache = model.forward(features, mask, training=False)
    _, dprobs = loss_fn(probs, labels)
    analytic = model.backward(cache, dprobs)

    worst = 0.0
    for name, arr in model.parameters().items():
        grad = analytic[name]
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            hi, _ = loss_fn(model.forward(features, mask, training=False)[0], labels)
            flat[idx] = original - step
            lo, _ = loss_fn(model.forward(features, mask, training=False)[0], labels)
            flat[idx] = original
            numeric = (hi - lo) / (2.0 * step)
            denom = max(abs(gflat[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[idx] - numeric) / denom)
    return worst

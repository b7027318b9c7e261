"""Model-ready [batch, time, feature] blocks from per-encounter sequences.

Three strategies are provided:

* ``sliding_window``       -- fixed-length slices, one sample per valid
  ending position; encounters shorter than the window yield a single
  left-padded sample.
* ``dense_sliding_window`` -- one sample per observation, holding that
  observation's left-padded history.
* ``smart_batch``          -- whole encounters grouped by length into
  fixed-count batches, each padded only to its own maximum length.

Padding is always on the left and padded positions hold feature value 0;
the boolean mask records which steps are real. Every builder is a pure
function and deterministic for a given seed.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .arrays import as_mask, as_tensor3
from .exceptions import ConfigError, ShapeError
from .ingest import TARGET_COLUMN


@dataclass
class EncounterSequence:
    """One encounter's time-ordered encoded features and per-step targets."""

    encounter_id: str
    features: np.ndarray  # [T, F] float64
    targets: np.ndarray  # [T] int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.features.ndim != 2 or len(self.targets) != self.features.shape[0]:
            raise ShapeError(
                f"encounter {self.encounter_id!r}: features {self.features.shape} "
                f"do not match {len(self.targets)} targets"
            )
        if self.features.shape[0] < 1:
            raise ShapeError(f"encounter {self.encounter_id!r} is empty")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def encounter_label(self) -> int:
        return int(self.targets.max())


@dataclass
class Batch:
    """One feature block with its mask, per-sample labels and provenance."""

    features: np.ndarray  # [B, T, F]
    mask: np.ndarray  # [B, T] bool
    labels: np.ndarray  # [B] float64
    sample_refs: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.features = as_tensor3(self.features, "batch features")
        self.mask = as_mask(self.mask, self.features.shape[0], self.features.shape[1])
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match batch {self.features.shape[0]}"
            )
        if len(self.sample_refs) != self.features.shape[0]:
            raise ShapeError("one sample_ref per sample is required")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


@dataclass
class BatchSet:
    """An ordered collection of batches produced by one strategy."""

    batches: list[Batch]

    def __iter__(self):
        return iter(self.batches)

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def n_samples(self) -> int:
        return sum(b.n_samples for b in self.batches)

    @property
    def n_features(self) -> int:
        if not self.batches:
            raise ShapeError("empty batch set has no feature width")
        return self.batches[0].features.shape[2]

    def all_labels(self) -> np.ndarray:
        if not self.batches:
            return np.zeros(0)
        return np.concatenate([b.labels for b in self.batches])

    def all_refs(self) -> list[tuple[str, int]]:
        return [ref for b in self.batches for ref in b.sample_refs]


def to_sequences(frame: pd.DataFrame, feature_columns: list[str]) -> list[EncounterSequence]:
    """Group an encoded table into per-encounter sequences (id-sorted)."""
    sequences = []
    for eid, group in frame.groupby("encounter_id", sort=True):
        sequences.append(
            EncounterSequence(
                encounter_id=str(eid),
                features=group[feature_columns].to_numpy(np.float64),
                targets=group[TARGET_COLUMN].to_numpy(np.int64),
            )
        )
    return sequences


def _left_pad(rows: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pad a [T, F] block to [width, F] with leading zero rows + step mask."""
    n = rows.shape[0]
    if n == width:
        return rows, np.ones(width, dtype=bool)
    padded = np.zeros((width, rows.shape[1]), dtype=np.float64)
    padded[width - n :] = rows
    mask = np.zeros(width, dtype=bool)
    mask[width - n :] = True
    return padded, mask


def sliding_window(sequences: list[EncounterSequence], window_steps: int) -> BatchSet:
    """Fixed-window slices; one batch per encounter.

    An encounter with N >= W rows yields N-W+1 consecutive W-row slices,
    each labeled with the target of its last step. Shorter encounters
    yield a single sample left-padded with W-N masked zero rows, labeled
    with the final step's target. sample_refs record (encounter, ending
    step).
    """
    if window_steps < 1:
        raise ConfigError(f"window_steps must be >= 1, got {window_steps}")
    w = int(window_steps)
    batches = []
    for seq in sequences:
        n = len(seq)
        if n < w:
            rows, mask = _left_pad(seq.features, w)
            features = rows[None]
            masks = mask[None]
            labels = np.array([seq.targets[-1]], dtype=np.float64)
            refs = [(seq.encounter_id, n - 1)]
        else:
            count = n - w + 1
            windows = np.lib.stride_tricks.sliding_window_view(seq.features, w, axis=0)
            features = np.ascontiguousarray(np.swapaxes(windows, 1, 2), dtype=np.float64)
            masks = np.ones((count, w), dtype=bool)
            labels = seq.targets[w - 1 :].astype(np.float64)
            refs = [(seq.encounter_id, j) for j in range(w - 1, n)]
        batches.append(Batch(features, masks, labels, refs))
    return BatchSet(batches)


def dense_sliding_window(sequences: list[EncounterSequence], window_steps: int) -> BatchSet:
    """One sample per observation with its left-padded W-step history.

    Sample i of an encounter holds rows max(0, i-W+1)..i, padded at the
    front when fewer than W rows exist yet, and is labeled with the target
    of row i. Short and long encounters are handled uniformly, so an
    encounter with N rows always yields exactly N samples.
    """
    if window_steps < 1:
        raise ConfigError(f"window_steps must be >= 1, got {window_steps}")
    w = int(window_steps)
    batches = []
    for seq in sequences:
        n = len(seq)
        f = seq.features.shape[1]
        features = np.zeros((n, w, f), dtype=np.float64)
        masks = np.zeros((n, w), dtype=bool)
        for i in range(n):
            start = max(0, i - w + 1)
            rows = seq.features[start : i + 1]
            features[i, w - rows.shape[0] :] = rows
            masks[i, w - rows.shape[0] :] = True
        labels = seq.targets.astype(np.float64)
        refs = [(seq.encounter_id, i) for i in range(n)]
        batches.append(Batch(features, masks, labels, refs))
    return BatchSet(batches)


def smart_batch(sequences: list[EncounterSequence], batch_size: int, seed: int = 0) -> BatchSet:
    """Length-sorted whole-encounter batches, padded per batch.

    Encounters are sorted ascending by length (ties broken by id), runs of
    ``batch_size`` form batches (the last may be smaller) and each batch
    is left-padded to its own maximum length, so the padding cost depends
    only on the within-batch length spread. One label per encounter: the
    max over its step targets. The batch order is shuffled by seed; the
    membership of each batch is not.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not sequences:
        return BatchSet([])
    ordered = sorted(sequences, key=lambda s: (len(s), s.encounter_id))
    batches = []
    for lo in range(0, len(ordered), batch_size):
        group = ordered[lo : lo + batch_size]
        width = max(len(s) for s in group)
        features = np.zeros((len(group), width, group[0].features.shape[1]), dtype=np.float64)
        masks = np.zeros((len(group), width), dtype=bool)
        for i, seq in enumerate(group):
            rows, mask = _left_pad(seq.features, width)
            features[i] = rows
            masks[i] = mask
        labels = np.array([s.encounter_label for s in group], dtype=np.float64)
        refs = [(s.encounter_id, len(s) - 1) for s in group]
        batches.append(Batch(features, masks, labels, refs))
    order = np.random.default_rng(seed).permutation(len(batches))
    return BatchSet([batches[i] for i in order])


def rebatch(batch_set: BatchSet, batch_size: int, seed: int | None = None) -> BatchSet:
    """Re-chunk samples into fixed-size batches (uniform time length only).

    The per-encounter batches emitted by the sliding strategies are often
    tiny; re-chunking them amortizes per-batch overhead during training.
    With a seed, the sample order is shuffled before chunking.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not batch_set.batches:
        return BatchSet([])
    widths = {b.features.shape[1] for b in batch_set.batches}
    if len(widths) > 1:
        raise ShapeError(f"cannot rebatch mixed time lengths: {sorted(widths)}")
    features = np.concatenate([b.features for b in batch_set.batches])
    masks = np.concatenate([b.mask for b in batch_set.batches])
    labels = np.concatenate([b.labels for b in batch_set.batches])
    refs = batch_set.all_refs()
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(labels))
        features, masks, labels = features[order], masks[order], labels[order]
        refs = [refs[i] for i in order]
    batches = []
    for lo in range(0, len(labels), batch_size):
        hi = lo + batch_size
        batches.append(Batch(features[lo:hi], masks[lo:hi], labels[lo:hi], refs[lo:hi]))
    return BatchSet(batches)


def total_padding(batch_set: BatchSet) -> int:
    """Number of padded (masked-out) positions across all batches."""
    return int(sum((~b.mask).sum() for b in batch_set.batches))


def batchset_to_json(batch_set: BatchSet) -> str:
    """Serialize shapes, features, masks and labels for offline inspection."""
    payload = {
        "format": "wardseq-batches-v1",
        "batches": [
            {
                "shape": list(b.features.shape),
                "features": base64.b64encode(np.ascontiguousarray(b.features).tobytes()).decode(),
                "mask": base64.b64encode(np.packbits(b.mask).tobytes()).decode(),
                "labels": b.labels.tolist(),
                "sample_refs": [[eid, int(step)] for eid, step in b.sample_refs],
            }
            for b in batch_set.batches
        ],
    }
    return json.dumps(payload, indent=2)


def batchset_from_json(text: str) -> BatchSet:
    payload = json.loads(text)
    if payload.get("format") != "wardseq-batches-v1":
        raise ConfigError(f"unknown batch payload format: {payload.get('format')!r}")
    batches = []
    for item in payload["batches"]:
        shape = tuple(item["shape"])
        features = np.frombuffer(base64.b64decode(item["features"]), dtype=np.float64).reshape(shape)
        bits = np.unpackbits(
            np.frombuffer(base64.b64decode(item["mask"]), dtype=np.uint8),
            count=shape[0] * shape[1],
        )
        mask = bits.astype(bool).reshape(shape[0], shape[1])
        labels = np.asarray(item["labels"], dtype=np.float64)
        refs = [(str(eid), int(step)) for eid, step in item["sample_refs"]]
        batches.append(Batch(features.copy(), mask, labels, refs))
    return BatchSet(batches)

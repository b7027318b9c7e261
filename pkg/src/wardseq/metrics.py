"""Threshold-independent evaluation at the observation and encounter level.

AUROC follows the Mann-Whitney convention (ties count half), computed
from average ranks after a single sort. AUPRC is average precision with
tied scores entering as one block. Encounter-level scores aggregate the
per-observation scores of each hospital stay (max by default, so an alert
anywhere in the stay marks the encounter), and encounter labels are the
max over observation labels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .batching import BatchSet
from .exceptions import ConfigError, MetricUndefinedError


@dataclass(frozen=True)
class ScoredObservation:
    encounter_id: str
    step: int
    score: float
    label: int


@dataclass(frozen=True)
class LevelMetrics:
    auroc: float
    auprc: float
    event_rate: float
    n: int
    n_pos: int


@dataclass(frozen=True)
class MetricsReport:
    observation: LevelMetrics
    encounter: LevelMetrics

    def to_dict(self) -> dict:
        return {"observation": asdict(self.observation), "encounter": asdict(self.encounter)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their ordinal ranks."""
    n = scores.size
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    new_group = np.r_[True, sorted_scores[1:] != sorted_scores[:-1]]
    group_id = np.cumsum(new_group) - 1
    counts = np.bincount(group_id)
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    mean_rank = starts + (counts + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = mean_rank[group_id]
    return ranks


def auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties worth half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.count_nonzero(labels))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC needs both classes present")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[np.asarray(labels) != 0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision over descending-score prefixes, tie-blocked.

    Each distinct score forms one block; precision is evaluated at the
    block end and weighted by the block's recall gain.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = (np.asarray(labels) != 0).astype(np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricUndefinedError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    block_end = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    cum_tp = np.cumsum(sorted_labels)
    cum_n = np.arange(1, labels.size + 1)
    tp_at_end = cum_tp[block_end]
    n_at_end = cum_n[block_end]
    tp_gain = np.diff(np.r_[0, tp_at_end])
    precision = tp_at_end / n_at_end
    return float((tp_gain / n_pos * precision).sum())


def encounter_aggregate(
    observations: list[ScoredObservation], how: str = "max"
) -> list[tuple[str, float, int]]:
    """Collapse observations to one (encounter_id, score, label) each."""
    if not observations:
        raise MetricUndefinedError("no observations to aggregate")
    if how not in ("max", "mean", "last"):
        raise ConfigError(f"unknown encounter aggregation {how!r}")
    grouped: dict[str, list[ScoredObservation]] = {}
    for obs in observations:
        grouped.setdefault(obs.encounter_id, []).append(obs)
    out = []
    for eid in sorted(grouped):
        group = sorted(grouped[eid], key=lambda o: o.step)
        scores = np.array([o.score for o in group])
        if how == "max":
            score = float(scores.max())
        elif how == "mean":
            score = float(scores.mean())
        else:
            score = float(scores[-1])
        label = int(max(o.label for o in group))
        out.append((eid, score, label))
    return out


def _level_metrics(scores: np.ndarray, labels: np.ndarray) -> LevelMetrics:
    n = int(labels.size)
    n_pos = int(np.count_nonzero(labels))
    return LevelMetrics(
        auroc=auroc(scores, labels),
        auprc=auprc(scores, labels),
        event_rate=n_pos / n,
        n=n,
        n_pos=n_pos,
    )


def score_batches(model, batches: BatchSet) -> list[ScoredObservation]:
    """Run the model in evaluation mode over every sample."""
    out = []
    for batch in batches:
        probs = model.score_batch(batch)
        for (eid, step), score, label in zip(batch.sample_refs, probs, batch.labels):
            out.append(ScoredObservation(eid, int(step), float(score), int(label)))
    return out


def report_from_observations(
    observations: list[ScoredObservation], aggregate: str = "max"
) -> MetricsReport:
    obs_scores = np.array([o.score for o in observations])
    obs_labels = np.array([o.label for o in observations])
    per_encounter = encounter_aggregate(observations, aggregate)
    enc_scores = np.array([score for _, score, _ in per_encounter])
    enc_labels = np.array([label for _, _, label in per_encounter])
    return MetricsReport(
        observation=_level_metrics(obs_scores, obs_labels),
        encounter=_level_metrics(enc_scores, enc_labels),
    )


def evaluate(model, batches: BatchSet, aggregate: str = "max") -> MetricsReport:
    """Score a batch set and report both evaluation levels."""
    return report_from_observations(score_batches(model, batches), aggregate)

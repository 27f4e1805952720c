"""Per-client aggregation weights and weighted model mixing.

Every strategy produces, for a target client i, a simplex of weights over
the other participants of the round; the aggregated model is the weighted
sum of their parameter snapshots. The target itself is never part of its
own mixture: self-knowledge re-enters only through the proximal term of
local training (the engine composes the FedAvg self-share separately).

The dynamic strategy combines the static affinity prefactor with a model
gap kernel:

    theta_ij = (c_ij / sum_j' c_ij') * (1 - exp(-(||w_i - w_j||^2 + eps) / sigma))
    alpha_ij = theta_ij / sum_j theta_ij

so peers whose parameters still differ from the target's, i.e. hold
knowledge the target has not absorbed yet, are weighted up, scaled by how
complementary their data is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .affinity import AffinityMatrix, ClassStats
from .errors import ConfigurationError
from .model import ParamVector, squared_distance

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class AggregationWeights:
    """Normalized non-negative weights over peers of a target client."""

    target: int
    weights: dict[int, float]

    def __post_init__(self) -> None:
        if self.target in self.weights:
            raise ConfigurationError("target client cannot weight itself")
        if not self.weights:
            raise ConfigurationError("weight map is empty")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigurationError("aggregation weights must be non-negative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > _SIMPLEX_TOL:
            raise ConfigurationError(f"weights sum to {total}, expected 1")


def _peers(target: int, participants: Iterable[int]) -> list[int]:
    ids = sorted(set(participants))
    if target not in ids:
        raise ConfigurationError(f"target {target} is not a participant")
    if len(ids) < 2:
        raise ConfigurationError("need at least 2 participants")
    return [j for j in ids if j != target]


def dynamic_theta(
    target: int,
    participants: Iterable[int],
    affinity: AffinityMatrix,
    models: Mapping[int, ParamVector],
    sigma: float,
    epsilon: float,
) -> dict[int, float]:
    """Affinity-weighted model-gap scores; uniform when the affinity row is 0."""
    peers = _peers(target, participants)
    row = affinity.row(target)
    affinity_sum = float(sum(row[j] for j in peers))
    if affinity_sum == 0.0:
        return {j: 1.0 / len(peers) for j in peers}
    theta = {}
    for j in peers:
        gap = squared_distance(models[target], models[j])
        kernel = 1.0 - math.exp(-(gap + epsilon) / sigma)
        theta[j] = (row[j] / affinity_sum) * kernel
    return theta


def normalize_weights(target: int, theta: Mapping[int, float]) -> AggregationWeights:
    """Scale scores onto the simplex; an all-zero map falls back to uniform."""
    if any(v < 0 for v in theta.values()):
        raise ConfigurationError("theta scores must be non-negative")
    total = sum(theta.values())
    if total == 0.0:
        return AggregationWeights(target, {j: 1.0 / len(theta) for j in sorted(theta)})
    return AggregationWeights(target, {j: theta[j] / total for j in sorted(theta)})


def aggregate(
    weights: AggregationWeights, models: Mapping[int, ParamVector]
) -> ParamVector:
    """Weighted parameter sum over the weight map, in ascending peer order."""
    missing = [j for j in weights.weights if j not in models]
    if missing:
        raise ConfigurationError(f"no model snapshot for weighted clients {missing}")
    ids = sorted(weights.weights)
    layout = models[ids[0]].layout
    mixed = np.zeros(models[ids[0]].size, dtype=np.float64)
    for j in ids:
        if models[j].layout != layout:
            raise ConfigurationError("cannot aggregate models of different layout")
        mixed += weights.weights[j] * models[j].values
    return ParamVector(mixed, layout)


def fedavg_weights(
    target: int, participants: Iterable[int], stats: Sequence[ClassStats]
) -> AggregationWeights:
    """Sample-count weights over peers; the engine folds the self share back in."""
    peers = _peers(target, participants)
    totals = {j: float(stats[j].total) for j in peers}
    return normalize_weights(target, totals)


def similarity_weights(
    target: int,
    participants: Iterable[int],
    models: Mapping[int, ParamVector],
    sigma: float,
) -> AggregationWeights:
    """Gaussian kernel on parameter distance: closer models weigh more."""
    peers = _peers(target, participants)
    theta = {
        j: math.exp(-squared_distance(models[target], models[j]) / sigma)
        for j in peers
    }
    return normalize_weights(target, theta)


def static_affinity_weights(
    target: int, participants: Iterable[int], affinity: AffinityMatrix
) -> AggregationWeights:
    """Affinity-proportional weights with no model-gap term."""
    peers = _peers(target, participants)
    row = affinity.row(target)
    return normalize_weights(target, {j: float(row[j]) for j in peers})

"""Synthetic classification data and Dirichlet class-imbalance partitioning."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .affinity import ClassStats
from .errors import ConfigurationError, PartitionError

# Sub-stream salts so means, train draws, and test draws never overlap.
_MEANS_SALT = 11
_TRAIN_SALT = 12
_TEST_SALT = 13

MIN_CLASSES_PER_CLIENT = 2
MIN_SAMPLES_PER_CLIENT = 10
_MAX_PARTITION_ATTEMPTS = 100
TEST_FRACTION = 0.1


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian-cluster classification task: one seeded cluster per class."""

    n_classes: int
    feature_dim: int
    samples_per_class: int
    cluster_spread: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be at least 2")
        if self.feature_dim < 2:
            raise ConfigurationError("feature_dim must be at least 2")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be positive")
        if self.cluster_spread <= 0:
            raise ConfigurationError("cluster_spread must be positive")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass(frozen=True)
class Partition:
    """Per-client train/test index lists into one master dataset."""

    train_shards: tuple[np.ndarray, ...]
    test_shards: tuple[np.ndarray, ...]
    labels: np.ndarray
    n_classes: int
    dirichlet_alpha: float

    @property
    def n_clients(self) -> int:
        return len(self.train_shards)


def _class_means(spec: SyntheticTaskSpec) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _MEANS_SALT]))
    return rng.standard_normal((spec.n_classes, spec.feature_dim))


def generate_synthetic(spec: SyntheticTaskSpec) -> tuple[np.ndarray, np.ndarray]:
    """Training pool: samples_per_class draws around each class mean."""
    means = _class_means(spec)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _TRAIN_SALT]))
    blocks = []
    labels = []
    for k in range(spec.n_classes):
        noise = rng.standard_normal((spec.samples_per_class, spec.feature_dim))
        blocks.append(means[k] + spec.cluster_spread * noise)
        labels.append(np.full(spec.samples_per_class, k, dtype=np.int64))
    return np.concatenate(blocks), np.concatenate(labels)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation matching `total` exactly, order-independent rounding."""
    scaled = proportions * total
    counts = np.floor(scaled).astype(np.int64)
    shortfall = total - int(counts.sum())
    if shortfall > 0:
        # Ties go to the lower client index: stable sort on descending fraction.
        order = np.argsort(-(scaled - counts), kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def dirichlet_partition(
    labels: np.ndarray, n_clients: int, alpha: float, seed: int
) -> Partition:
    """Allocate each class across clients by Dir(alpha) proportions.

    Lower alpha concentrates a class on fewer clients, raising imbalance.
    Draws are retried until every client ends with at least
    MIN_CLASSES_PER_CLIENT classes and MIN_SAMPLES_PER_CLIENT samples; test
    shards stay empty here and are filled by attach_test_shards.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if n_clients < 2:
        raise ConfigurationError("need at least 2 clients")
    if alpha <= 0:
        raise ConfigurationError("dirichlet_alpha must be positive")
    if seed < 0:
        raise ConfigurationError("seed must be non-negative")
    n_classes = int(labels.max()) + 1

    failure = ""
    for attempt in range(_MAX_PARTITION_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        for k in range(n_classes):
            class_idx = np.flatnonzero(labels == k)
            if class_idx.size == 0:
                continue
            class_idx = rng.permutation(class_idx)
            proportions = rng.dirichlet(np.full(n_clients, alpha))
            counts = _largest_remainder(proportions, class_idx.size)
            start = 0
            for client, count in enumerate(counts):
                if count > 0:
                    shards[client].append(class_idx[start : start + count])
                start += count

        merged = [
            np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
            for parts in shards
        ]
        failure = _check_minimums(merged, labels)
        if not failure:
            return Partition(
                train_shards=tuple(merged),
                test_shards=tuple(np.empty(0, dtype=np.int64) for _ in merged),
                labels=labels.copy(),
                n_classes=n_classes,
                dirichlet_alpha=float(alpha),
            )
    raise PartitionError(
        f"no valid partition after {_MAX_PARTITION_ATTEMPTS} attempts: {failure}"
    )


def _check_minimums(shards: list[np.ndarray], labels: np.ndarray) -> str:
    for client, shard in enumerate(shards):
        if shard.size < MIN_SAMPLES_PER_CLIENT:
            return (
                f"client {client} holds {shard.size} samples "
                f"(minimum {MIN_SAMPLES_PER_CLIENT})"
            )
        distinct = np.unique(labels[shard]).size
        if distinct < MIN_CLASSES_PER_CLIENT:
            return (
                f"client {client} holds {distinct} classes "
                f"(minimum {MIN_CLASSES_PER_CLIENT})"
            )
    return ""


def attach_test_shards(
    features: np.ndarray,
    labels: np.ndarray,
    partition: Partition,
    spec: SyntheticTaskSpec,
) -> tuple[np.ndarray, np.ndarray, Partition]:
    """Generate held-out per-client test samples and append them to the dataset.

    Each client receives fresh draws, never train rows, covering exactly the
    classes it trains on, ceil(TEST_FRACTION * train count) per class.
    """
    means = _class_means(spec)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _TEST_SALT]))
    new_features = [features]
    new_labels = [labels]
    next_index = labels.shape[0]
    test_shards: list[np.ndarray] = []
    for shard in partition.train_shards:
        counts = np.bincount(labels[shard], minlength=partition.n_classes)
        indices: list[int] = []
        for k in range(partition.n_classes):
            if counts[k] == 0:
                continue
            n_test = max(1, math.ceil(TEST_FRACTION * counts[k]))
            noise = rng.standard_normal((n_test, spec.feature_dim))
            new_features.append(means[k] + spec.cluster_spread * noise)
            new_labels.append(np.full(n_test, k, dtype=np.int64))
            indices.extend(range(next_index, next_index + n_test))
            next_index += n_test
        test_shards.append(np.asarray(indices, dtype=np.int64))

    all_features = np.concatenate(new_features)
    all_labels = np.concatenate(new_labels)
    updated = replace(
        partition, test_shards=tuple(test_shards), labels=all_labels.copy()
    )
    return all_features, all_labels, updated


def build_client_data(
    spec: SyntheticTaskSpec, n_clients: int, alpha: float, partition_seed: int
) -> tuple[np.ndarray, np.ndarray, Partition]:
    """Full pipeline: generate the pool, partition it, attach test shards."""
    features, labels = generate_synthetic(spec)
    partition = dirichlet_partition(labels, n_clients, alpha, partition_seed)
    return attach_test_shards(features, labels, partition, spec)


def class_stats(partition: Partition, client: int) -> ClassStats:
    """Per-class train-sample counts of one client; test shards never count."""
    if not 0 <= client < partition.n_clients:
        raise ConfigurationError(f"unknown client id {client}")
    shard = partition.train_shards[client]
    counts = np.bincount(partition.labels[shard], minlength=partition.n_classes)
    return ClassStats(tuple(int(c) for c in counts))


def partition_heatmap_csv(partition: Partition) -> str:
    """Client-by-class train-count table, one row per client."""
    header = "client," + ",".join(f"class_{k}" for k in range(partition.n_classes))
    lines = [header]
    for client in range(partition.n_clients):
        counts = class_stats(partition, client).counts
        lines.append(f"{client}," + ",".join(str(c) for c in counts))
    return "\n".join(lines) + "\n"

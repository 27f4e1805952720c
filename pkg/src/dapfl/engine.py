"""Federated round loop: sampling, weighting, aggregation, local updates.

One experiment runs as: build the synthetic dataset and its Dirichlet
partition, compute class statistics and the affinity matrix once up front,
start every client from one shared seeded model, then iterate rounds. Each
round snapshots the sampled participants' models, computes strategy weights
from the snapshot only, hands every participant its aggregated model, and
runs local SGD with that model as the proximal target. All randomness is
derived from the experiment seed through fixed sub-stream salts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import aggregation, data, metrics, model
from .affinity import AffinityMatrix, ClassStats, build_affinity_matrix
from .errors import ConfigurationError

STRATEGIES = ("dapfl", "static_affinity", "fedavg", "fedavg_prox", "similarity")

_TASK_SALT = 21
_PARTITION_SALT = 22
_INIT_SALT = 23
_SAMPLE_SALT = 24
_BATCH_SALT = 25
_UPDATE_SALT = 26


def child_seed(seed: int, *salts: int) -> int:
    """Stable derived integer seed for an independent random sub-stream."""
    return int(np.random.SeedSequence([seed, *salts]).generate_state(1)[0])


def _rng(seed: int, *salts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *salts]))


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one run; see config.KEYS for the file keys."""

    n_clients: int
    participation_rate: float
    rounds: int
    strategy: str
    hyper: model.HyperParams
    task: data.SyntheticTaskSpec
    hidden_units: int
    dirichlet_alpha: float
    eval_every: int
    seed: int
    target_accuracies: tuple[float, ...] = (0.4, 0.5)
    scale_sigma_by_params: bool = False
    dump_weights: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"strategy: unknown strategy {self.strategy!r}, "
                f"expected one of {', '.join(STRATEGIES)}"
            )
        if self.n_clients < 2:
            raise ConfigurationError("n_clients must be at least 2")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be at least 1")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be at least 1")
        if self.hidden_units < 1:
            raise ConfigurationError("hidden_units must be at least 1")
        if self.dirichlet_alpha <= 0:
            raise ConfigurationError("dirichlet_alpha must be positive")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        m = self.participants_per_round
        if m < 2 or m > self.n_clients:
            raise ConfigurationError(
                f"participation_rate: yields {m} participants per round, "
                f"need between 2 and {self.n_clients}"
            )

    @property
    def participants_per_round(self) -> int:
        return int(round(self.n_clients * self.participation_rate))


@dataclass
class ClientState:
    """One client's private data, current model, and last received aggregate."""

    client_id: int
    params: model.ParamVector
    agg_model: model.ParamVector | None
    train_batches: list[model.Batch]
    test_batch: model.Batch


@dataclass
class RoundState:
    """Participants of one round and their round-start model snapshots."""

    round_index: int
    participants: tuple[int, ...]
    snapshots: dict[int, model.ParamVector]
    targets: dict[int, model.ParamVector] = field(default_factory=dict)


@dataclass
class ExperimentLog:
    """Everything a run produced, ready for the report writers."""

    config: ExperimentConfig
    history: list[metrics.EvalRecord]
    stats: dict[int, ClassStats]
    partition: data.Partition
    weight_rows: list[tuple[int, int, int, float]]

    def last10_average(self) -> float | None:
        return metrics.last_k_average(self.history, 10)

    def rounds_to(self, target: float) -> int | None:
        return metrics.rounds_to_target(self.history, target)


def sample_clients(
    n_clients: int, m: int, round_index: int, seed: int
) -> tuple[int, ...]:
    """Uniform m-subset of clients, fixed by (seed, round_index)."""
    if not 2 <= m <= n_clients:
        raise ConfigurationError(f"cannot sample {m} of {n_clients} clients")
    rng = _rng(seed, _SAMPLE_SALT, round_index)
    picked = rng.choice(n_clients, size=m, replace=False)
    return tuple(sorted(int(c) for c in picked))


def _effective_sigma(config: ExperimentConfig) -> float:
    sigma = config.hyper.sigma
    if config.scale_sigma_by_params:
        layout = model.mlp_layout(
            config.task.feature_dim, config.hidden_units, config.task.n_classes
        )
        sigma *= model.layout_size(layout)
    return sigma


def _aggregation_target(
    config: ExperimentConfig,
    target: int,
    state: RoundState,
    affinity: AffinityMatrix,
    stats: dict[int, ClassStats],
    sigma: float,
) -> tuple[model.ParamVector, aggregation.AggregationWeights]:
    participants = state.participants
    snapshots = state.snapshots
    if config.strategy == "dapfl":
        theta = aggregation.dynamic_theta(
            target, participants, affinity, snapshots, sigma, config.hyper.epsilon
        )
        weights = aggregation.normalize_weights(target, theta)
        return aggregation.aggregate(weights, snapshots), weights
    if config.strategy == "static_affinity":
        weights = aggregation.static_affinity_weights(target, participants, affinity)
        return aggregation.aggregate(weights, snapshots), weights
    if config.strategy == "similarity":
        weights = aggregation.similarity_weights(target, participants, snapshots, sigma)
        return aggregation.aggregate(weights, snapshots), weights
    # fedavg and fedavg_prox: one shared sample-count average over the round,
    # self included; the peers-only module weights are folded back together
    # with the target's own snapshot share here.
    stats_list = [stats[i] for i in range(config.n_clients)]
    weights = aggregation.fedavg_weights(target, participants, stats_list)
    peer_mix = aggregation.aggregate(weights, snapshots)
    total = float(sum(stats[j].total for j in participants))
    self_share = stats[target].total / total
    mixed = self_share * snapshots[target].values + (1.0 - self_share) * peer_mix.values
    return model.ParamVector(mixed, peer_mix.layout), weights


def run_round(
    state: RoundState,
    config: ExperimentConfig,
    affinity: AffinityMatrix,
    stats: dict[int, ClassStats],
    client_states: Sequence[ClientState],
    weight_rows: list[tuple[int, int, int, float]] | None = None,
) -> None:
    """Aggregate for every participant from the snapshot, then train locally."""
    sigma = _effective_sigma(config)
    for target in state.participants:
        state.targets[target], weights = _aggregation_target(
            config, target, state, affinity, stats, sigma
        )
        if weight_rows is not None:
            weight_rows.extend(
                (state.round_index, target, source, weights.weights[source])
                for source in sorted(weights.weights)
            )

    hyper = config.hyper
    if config.strategy == "fedavg":
        # Pure baseline: clients adopt the shared average and train plainly.
        hyper = replace(hyper, prox_lambda=0.0)
    for target in state.participants:
        client = client_states[target]
        client.agg_model = state.targets[target]
        start = state.targets[target] if config.strategy == "fedavg" else client.params
        client.params = model.sgd_local_update(
            start,
            client.train_batches,
            state.targets[target],
            hyper,
            np.random.SeedSequence(
                [config.seed, _UPDATE_SALT, state.round_index, target]
            ),
        )


def _make_batches(
    shard: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
) -> list[model.Batch]:
    order = rng.permutation(shard.size)
    shuffled = shard[order]
    return [
        model.Batch(features[chunk], labels[chunk])
        for chunk in (
            shuffled[i : i + batch_size] for i in range(0, shuffled.size, batch_size)
        )
    ]


def init_clients(
    config: ExperimentConfig,
    features: np.ndarray,
    labels: np.ndarray,
    partition: data.Partition,
) -> list[ClientState]:
    """Shared seeded starting model; per-client fixed batching of train shards."""
    layout = model.mlp_layout(
        config.task.feature_dim, config.hidden_units, config.task.n_classes
    )
    start = model.init_params(
        layout, np.random.SeedSequence([config.seed, _INIT_SALT])
    )
    clients = []
    for cid in range(config.n_clients):
        batches = _make_batches(
            partition.train_shards[cid],
            features,
            labels,
            config.hyper.batch_size,
            _rng(config.seed, _BATCH_SALT, cid),
        )
        test_shard = partition.test_shards[cid]
        clients.append(
            ClientState(
                client_id=cid,
                params=start,
                agg_model=None,
                train_batches=batches,
                test_batch=model.Batch(features[test_shard], labels[test_shard]),
            )
        )
    return clients


def run_experiment(config: ExperimentConfig) -> ExperimentLog:
    """Run the full round loop and return the evaluation history."""
    task = replace(config.task, seed=child_seed(config.seed, _TASK_SALT))
    features, labels, partition = data.build_client_data(
        task,
        config.n_clients,
        config.dirichlet_alpha,
        child_seed(config.seed, _PARTITION_SALT),
    )
    stats = {i: data.class_stats(partition, i) for i in range(config.n_clients)}
    affinity = build_affinity_matrix(
        [stats[i] for i in range(config.n_clients)], task.n_classes
    )

    clients = init_clients(config, features, labels, partition)
    history: list[metrics.EvalRecord] = []
    weight_rows: list[tuple[int, int, int, float]] = []
    for round_index in range(1, config.rounds + 1):
        participants = sample_clients(
            config.n_clients,
            config.participants_per_round,
            round_index,
            config.seed,
        )
        state = RoundState(
            round_index=round_index,
            participants=participants,
            snapshots={i: clients[i].params for i in participants},
        )
        run_round(
            state,
            config,
            affinity,
            stats,
            clients,
            weight_rows if config.dump_weights else None,
        )
        if round_index % config.eval_every == 0:
            history.append(metrics.evaluate(round_index, clients))

    return ExperimentLog(
        config=config,
        history=history,
        stats=stats,
        partition=partition,
        weight_rows=weight_rows,
    )

"""Desk-scale personalized federated learning simulator.

Implements affinity-driven dynamic aggregation together with static
affinity, FedAvg, proximal FedAvg, and similarity-kernel baselines over a
Dirichlet class-imbalance partition of synthetic data.
"""

from .affinity import (
    AffinityMatrix,
    ClassStats,
    OverlapPair,
    build_affinity_matrix,
    overlapping_vectors,
    raw_affinity,
)
from .data import Partition, SyntheticTaskSpec, dirichlet_partition, generate_synthetic
from .engine import ExperimentConfig, ExperimentLog, run_experiment
from .metrics import EvalRecord, class_group_report, rounds_to_target
from .model import Batch, HyperParams, ParamVector

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "Batch",
    "ClassStats",
    "EvalRecord",
    "ExperimentConfig",
    "ExperimentLog",
    "HyperParams",
    "OverlapPair",
    "ParamVector",
    "Partition",
    "SyntheticTaskSpec",
    "build_affinity_matrix",
    "class_group_report",
    "dirichlet_partition",
    "generate_synthetic",
    "overlapping_vectors",
    "raw_affinity",
    "rounds_to_target",
    "run_experiment",
]

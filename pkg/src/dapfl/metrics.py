"""Per-client evaluation, class-group accuracy, and run-level reporting.

Classes are grouped per client by train-sample count: Few holds fewer than
30 samples, Medium 30 to 80 inclusive, Many more than 80. Group accuracies
pool correct/total across all (client, class) pairs of the group; the fleet
average gives each client one vote regardless of test-set size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from . import model
from .affinity import ClassStats

if TYPE_CHECKING:
    from .engine import ClientState

MEDIUM_MIN_SAMPLES = 30
MEDIUM_MAX_SAMPLES = 80

GROUP_FEW = "few"
GROUP_MEDIUM = "medium"
GROUP_MANY = "many"


@dataclass(frozen=True)
class EvalRecord:
    """Accuracy and per-class tallies of every client at one round."""

    round_index: int
    accuracy: dict[int, float]
    class_tallies: dict[int, dict[int, tuple[int, int]]]

    @property
    def fleet_average(self) -> float:
        return float(np.mean([self.accuracy[c] for c in sorted(self.accuracy)]))


@dataclass(frozen=True)
class ClassGroupReport:
    """Pooled Many/Medium/Few accuracies; None marks an empty group."""

    many_acc: float | None
    medium_acc: float | None
    few_acc: float | None
    avg_acc: float
    group_of: dict[tuple[int, int], str]


def evaluate(round_index: int, client_states: Iterable["ClientState"]) -> EvalRecord:
    """Argmax accuracy of each client's model on its own test batch."""
    accuracy: dict[int, float] = {}
    tallies: dict[int, dict[int, tuple[int, int]]] = {}
    for state in client_states:
        batch = state.test_batch
        predictions = model.forward(state.params, batch).argmax(axis=1)
        hits = predictions == batch.labels
        per_class: dict[int, tuple[int, int]] = {}
        for k in np.unique(batch.labels):
            mask = batch.labels == k
            per_class[int(k)] = (int(hits[mask].sum()), int(mask.sum()))
        accuracy[state.client_id] = float(hits.mean())
        tallies[state.client_id] = per_class
    return EvalRecord(round_index, accuracy, tallies)


def class_group(train_count: int) -> str:
    if train_count < MEDIUM_MIN_SAMPLES:
        return GROUP_FEW
    if train_count <= MEDIUM_MAX_SAMPLES:
        return GROUP_MEDIUM
    return GROUP_MANY


def class_group_report(
    record: EvalRecord, stats: Mapping[int, ClassStats]
) -> ClassGroupReport:
    """Pool the record's tallies into Many/Medium/Few by train counts."""
    pooled = {GROUP_MANY: [0, 0], GROUP_MEDIUM: [0, 0], GROUP_FEW: [0, 0]}
    group_of: dict[tuple[int, int], str] = {}
    for client in sorted(record.class_tallies):
        counts = stats[client].counts
        for k, (correct, total) in sorted(record.class_tallies[client].items()):
            if counts[k] == 0:
                continue
            group = class_group(counts[k])
            group_of[(client, k)] = group
            pooled[group][0] += correct
            pooled[group][1] += total

    def _ratio(group: str) -> float | None:
        correct, total = pooled[group]
        return None if total == 0 else correct / total

    all_correct = sum(c for c, _ in pooled.values())
    all_total = sum(t for _, t in pooled.values())
    return ClassGroupReport(
        many_acc=_ratio(GROUP_MANY),
        medium_acc=_ratio(GROUP_MEDIUM),
        few_acc=_ratio(GROUP_FEW),
        avg_acc=all_correct / all_total,
        group_of=group_of,
    )


def rounds_to_target(history: Sequence[EvalRecord], target: float) -> int | None:
    """First round at which the fleet average reaches the target, else None."""
    for record in history:
        if record.fleet_average >= target:
            return record.round_index
    return None


def last_k_average(history: Sequence[EvalRecord], k: int = 10) -> float | None:
    """Mean fleet-average accuracy over the final k evaluations."""
    if not history:
        return None
    tail = history[-k:]
    return float(np.mean([r.fleet_average for r in tail]))


def _cell(value: float | None) -> str:
    return "na" if value is None else f"{value:.6f}"


def round_metrics_csv(
    history: Sequence[EvalRecord], stats: Mapping[int, ClassStats]
) -> str:
    """Per-round fleet metrics table. avg_acc is the per-client mean; the
    group columns are pooled across clients."""
    lines = ["round,avg_acc,many,medium,few"]
    for record in history:
        report = class_group_report(record, stats)
        lines.append(
            f"{record.round_index},{_cell(record.fleet_average)},"
            f"{_cell(report.many_acc)},{_cell(report.medium_acc)},"
            f"{_cell(report.few_acc)}"
        )
    return "\n".join(lines) + "\n"


def target_column(target: float) -> str:
    return "rounds_to_" + f"{target * 100:g}".replace(".", "_") + "pct"


def summary_csv(
    strategy: str,
    dirichlet_alpha: float,
    seed: int,
    history: Sequence[EvalRecord],
    targets: Sequence[float],
) -> str:
    """One-row run summary: last-10 average plus rounds-to-target columns."""
    columns = ["strategy", "dirichlet_alpha", "seed", "last10_avg_acc"]
    columns += [target_column(t) for t in targets]
    reached = [rounds_to_target(history, t) for t in targets]
    row = [strategy, f"{dirichlet_alpha:g}", str(seed), _cell(last_k_average(history))]
    row += ["na" if r is None else str(r) for r in reached]
    return ",".join(columns) + "\n" + ",".join(row) + "\n"

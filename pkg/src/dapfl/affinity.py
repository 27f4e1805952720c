"""Pairwise client affinity from per-class sample counts.

Two clients have high affinity when their sample counts on the classes they
share are anti-correlated: one is rich exactly where the other is poor.
Mixing such complementary peers balances class representation, whereas
similarity-driven mixing piles up the classes both clients already dominate.

For clients i and j the overlapping-count vectors hold each side's counts
restricted to the classes both possess. The raw affinity is

    c_ij = (|E| / K) * (2 - rho)

where rho is the cosine of both vectors centered on their single shared mean
(not per-vector means, so large count gaps are not washed out). rho is 1 for
identically shaped overlaps and -1 for perfectly complementary ones, putting
c_ij in [|E|/K, 3|E|/K]; the |E|/K factor rewards broader class overlap.

Pairs with no shared class inherit the minimum raw affinity found among the
overlapping pairs, then all off-diagonal entries are min-max normalized into
[0, 1]. The diagonal is fixed at zero: a client never aggregates itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ClassStats:
    """Per-class train-sample counts of a single client."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) == 0:
            raise ConfigurationError("class stats need at least one class")
        if any(c < 0 for c in self.counts):
            raise ConfigurationError("class counts must be non-negative")
        if not any(c > 0 for c in self.counts):
            raise ConfigurationError("client holds no samples at all")

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class OverlapPair:
    """Counts of both clients restricted to their shared classes."""

    left: tuple[int, ...]
    right: tuple[int, ...]
    class_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.left) == len(self.right) == len(self.class_ids)):
            raise ConfigurationError("overlap vectors must have equal length")
        if any(c <= 0 for c in self.left) or any(c <= 0 for c in self.right):
            raise ConfigurationError("overlap counts must be strictly positive")
        if any(a >= b for a, b in zip(self.class_ids, self.class_ids[1:])):
            raise ConfigurationError("overlap class ids must be strictly increasing")

    def __len__(self) -> int:
        return len(self.left)


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric normalized affinities; entry (i, j) in [0, 1], diagonal zero."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigurationError("affinity matrix must be square")
        object.__setattr__(self, "values", values)

    @property
    def n_clients(self) -> int:
        return self.values.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


def overlapping_vectors(si: ClassStats, sj: ClassStats) -> OverlapPair:
    """Extract both clients' counts over the classes where both have samples."""
    if si.n_classes != sj.n_classes:
        raise ConfigurationError(
            f"class stats length mismatch: {si.n_classes} != {sj.n_classes}"
        )
    shared = [k for k in range(si.n_classes) if si.counts[k] > 0 and sj.counts[k] > 0]
    return OverlapPair(
        left=tuple(si.counts[k] for k in shared),
        right=tuple(sj.counts[k] for k in shared),
        class_ids=tuple(shared),
    )


def raw_affinity(pair: OverlapPair, k_total: int) -> float | None:
    """Unnormalized affinity of one pair, or None when nothing overlaps.

    A zero centered norm (all of one side's overlap counts equal the shared
    mean) carries no correlation information, so the cosine term is taken as
    0 there and the result degrades to the neutral 2*|E|/K.
    """
    if k_total < 1:
        raise ConfigurationError("k_total must be at least 1")
    if k_total < len(pair):
        raise ConfigurationError("k_total smaller than the overlap size")
    if len(pair) == 0:
        return None
    left = np.asarray(pair.left, dtype=np.float64)
    right = np.asarray(pair.right, dtype=np.float64)
    shared_mean = (left.sum() + right.sum()) / (2.0 * len(pair))
    a = left - shared_mean
    b = right - shared_mean
    denom = np.sqrt(a @ a) * np.sqrt(b @ b)
    rho = 0.0 if denom == 0.0 else float(a @ b) / float(denom)
    rho = min(1.0, max(-1.0, rho))
    return (len(pair) / k_total) * (2.0 - rho)


def build_affinity_matrix(stats, k_total: int) -> AffinityMatrix:
    """Raw affinities for every unordered pair, no-overlap fallback, min-max.

    Pairs without any shared class receive the global minimum raw affinity of
    the overlapping pairs before normalization, so they land at 0 afterwards.
    If no pair overlaps at all there is no signal to rank clients and every
    off-diagonal entry becomes 1.
    """
    stats = list(stats)
    n = len(stats)
    if n < 2:
        raise ConfigurationError("affinity needs at least 2 clients")
    for idx, s in enumerate(stats):
        if s.n_classes != k_total:
            raise ConfigurationError(
                f"client {idx} has {s.n_classes} classes, expected {k_total}"
            )

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    raw: dict[tuple[int, int], float | None] = {
        (i, j): raw_affinity(overlapping_vectors(stats[i], stats[j]), k_total)
        for i, j in pairs
    }

    overlapping = [v for v in raw.values() if v is not None]
    values = np.zeros((n, n), dtype=np.float64)
    if not overlapping:
        values[:] = 1.0
        np.fill_diagonal(values, 0.0)
        return AffinityMatrix(values)

    fallback = min(overlapping)
    filled = {key: (v if v is not None else fallback) for key, v in raw.items()}

    lo = min(filled.values())
    hi = max(filled.values())
    for (i, j), v in filled.items():
        norm = 1.0 if hi == lo else (v - lo) / (hi - lo)
        values[i, j] = norm
        values[j, i] = norm
    return AffinityMatrix(values)


def load_class_stats(path: str | Path) -> list[ClassStats]:
    """Parse a plain-text stats table: one client per row, K integer counts."""
    rows: list[ClassStats] = []
    width: int | None = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        try:
            counts = [int(f) for f in fields]
        except ValueError:
            raise ConfigurationError(f"line {lineno}: non-integer count") from None
        if width is None:
            width = len(counts)
        elif len(counts) != width:
            raise ConfigurationError(
                f"line {lineno}: expected {width} counts, got {len(counts)}"
            )
        try:
            rows.append(ClassStats(tuple(counts)))
        except ConfigurationError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ConfigurationError("stats table is empty")
    return rows

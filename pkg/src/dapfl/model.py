"""Flat-parameter MLP classifier with analytic gradients and seeded SGD.

Parameters live in a single float64 vector plus a layout describing the
weight and bias segments, which keeps model mixing, distances, and
checkpointing simple array arithmetic. The training objective is softmax
cross-entropy plus an optional proximal pull (lambda/2)*||w - w_ref||^2
toward a reference parameter vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

# (rows, cols) per segment; cols == 0 marks a bias vector of length rows.
Shape = tuple[int, int]

_MAGIC = b"DAPV"
_FORMAT_VERSION = 1


def mlp_layout(n_features: int, hidden_units: int, n_classes: int) -> tuple[Shape, ...]:
    """Layout of a one-hidden-layer ReLU MLP: input -> hidden -> class scores."""
    return (
        (n_features, hidden_units),
        (hidden_units, 0),
        (hidden_units, n_classes),
        (n_classes, 0),
    )


def layout_size(layout: Sequence[Shape]) -> int:
    return sum(rows * cols if cols > 0 else rows for rows, cols in layout)


@dataclass(frozen=True)
class ParamVector:
    """Flat model parameters; treated as immutable everywhere."""

    values: np.ndarray
    layout: tuple[Shape, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        layout = tuple((int(r), int(c)) for r, c in self.layout)
        if values.size != layout_size(layout):
            raise ConfigurationError(
                f"parameter vector has {values.size} values, layout implies "
                f"{layout_size(layout)}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Batch:
    """A minibatch of feature rows and integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ConfigurationError("batch features must be a non-empty 2d array")
        if labels.shape[0] != features.shape[0]:
            raise ConfigurationError("batch labels do not match feature rows")
        if labels.size and labels.min() < 0:
            raise ConfigurationError("labels must be non-negative class ids")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class HyperParams:
    """Local-training knobs shared by every strategy."""

    prox_lambda: float
    learning_rate: float
    local_epochs: int
    batch_size: int
    sigma: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.prox_lambda < 0:
            raise ConfigurationError("lambda must be non-negative")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if self.local_epochs < 1:
            raise ConfigurationError("local_epochs must be a positive integer")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be a positive integer")
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        # epsilon is meant as an infinitesimal offset, far below sigma.
        if self.epsilon > self.sigma * 1e-3:
            raise ConfigurationError("epsilon must be at most sigma * 1e-3")


def _layers(params: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into (weight, bias) views per layer."""
    segments: list[np.ndarray] = []
    offset = 0
    for rows, cols in params.layout:
        size = rows * cols if cols > 0 else rows
        seg = params.values[offset : offset + size]
        segments.append(seg.reshape(rows, cols) if cols > 0 else seg)
        offset += size
    if len(segments) % 2 != 0:
        raise ConfigurationError("layout must alternate weight and bias segments")
    return [(segments[i], segments[i + 1]) for i in range(0, len(segments), 2)]


def init_params(layout: Sequence[Shape], seed) -> ParamVector:
    """Seeded uniform init, half-width sqrt(6/(fan_in+fan_out)); biases zero."""
    rng = np.random.default_rng(seed)
    chunks = []
    for rows, cols in layout:
        if cols == 0:
            chunks.append(np.zeros(rows, dtype=np.float64))
        else:
            half_width = np.sqrt(6.0 / (rows + cols))
            chunks.append(rng.uniform(-half_width, half_width, size=rows * cols))
    return ParamVector(np.concatenate(chunks), tuple(layout))


def forward(params: ParamVector, batch: Batch) -> np.ndarray:
    """Class log-scores, one row per batch sample. ReLU between layers."""
    layers = _layers(params)
    if batch.features.shape[1] != layers[0][0].shape[0]:
        raise ConfigurationError(
            f"feature width {batch.features.shape[1]} does not match model "
            f"input width {layers[0][0].shape[0]}"
        )
    h = batch.features
    for li, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.maximum(z, 0.0) if li < len(layers) - 1 else z
    return h


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(
    params: ParamVector,
    batch: Batch,
    prox_target: ParamVector | None = None,
    prox_lambda: float = 0.0,
) -> float:
    """Mean cross-entropy, plus the proximal term when a target is given."""
    log_probs = _log_softmax(forward(params, batch))
    ce = -float(log_probs[np.arange(len(batch)), batch.labels].mean())
    if prox_target is not None:
        if prox_target.layout != params.layout:
            raise ConfigurationError("proximal target layout mismatch")
        diff = params.values - prox_target.values
        ce += 0.5 * prox_lambda * float(diff @ diff)
    return ce


def gradient(
    params: ParamVector,
    batch: Batch,
    prox_target: ParamVector | None = None,
    prox_lambda: float = 0.0,
) -> ParamVector:
    """Analytic gradient of the loss in the same flat layout as params."""
    layers = _layers(params)
    if batch.features.shape[1] != layers[0][0].shape[0]:
        raise ConfigurationError("feature width does not match model input width")

    activations = [batch.features]
    pre_acts: list[np.ndarray] = []
    h = batch.features
    for li, (w, b) in enumerate(layers):
        z = h @ w + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0) if li < len(layers) - 1 else z
        activations.append(h)

    n = len(batch)
    shifted = pre_acts[-1] - pre_acts[-1].max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    delta = probs
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    grads: list[np.ndarray] = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads.append(delta.sum(axis=0))
        grads.append((activations[li].T @ delta).reshape(-1))
        if li > 0:
            delta = (delta @ w.T) * (pre_acts[li - 1] > 0.0)
    flat = np.concatenate(grads[::-1])

    if prox_target is not None:
        if prox_target.layout != params.layout:
            raise ConfigurationError("proximal target layout mismatch")
        flat = flat + prox_lambda * (params.values - prox_target.values)
    return ParamVector(flat, params.layout)


def sgd_local_update(
    params: ParamVector,
    shard: Sequence[Batch],
    prox_target: ParamVector | None,
    hp: HyperParams,
    rng_seed,
) -> ParamVector:
    """Minibatch SGD over the shard, batch order reshuffled every epoch."""
    if len(shard) == 0:
        raise ConfigurationError("local update needs at least one batch")
    rng = np.random.default_rng(rng_seed)
    values = params.values
    for _ in range(hp.local_epochs):
        for idx in rng.permutation(len(shard)):
            g = gradient(
                ParamVector(values, params.layout),
                shard[idx],
                prox_target,
                hp.prox_lambda,
            )
            values = values - hp.learning_rate * g.values
    return ParamVector(values, params.layout)


def squared_distance(a: ParamVector, b: ParamVector) -> float:
    """Sum of squared element-wise parameter differences."""
    if a.layout != b.layout:
        raise ConfigurationError("cannot compare parameter vectors of different layout")
    diff = a.values - b.values
    return float(diff @ diff)


def to_bytes(params: ParamVector) -> bytes:
    """Serialize to the little-endian record documented in the README."""
    head = _MAGIC + struct.pack("<HH", _FORMAT_VERSION, len(params.layout))
    head += b"".join(struct.pack("<II", rows, cols) for rows, cols in params.layout)
    return head + np.ascontiguousarray(params.values, dtype="<f8").tobytes()


def from_bytes(raw: bytes) -> ParamVector:
    if raw[:4] != _MAGIC:
        raise ConfigurationError("bad parameter record magic")
    version, n_segments = struct.unpack_from("<HH", raw, 4)
    if version != _FORMAT_VERSION:
        raise ConfigurationError(f"unsupported parameter record version {version}")
    offset = 8
    layout = []
    for _ in range(n_segments):
        rows, cols = struct.unpack_from("<II", raw, offset)
        layout.append((rows, cols))
        offset += 8
    count = layout_size(layout)
    if len(raw) != offset + 8 * count:
        raise ConfigurationError("parameter record length does not match layout")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return ParamVector(values.astype(np.float64), tuple(layout))

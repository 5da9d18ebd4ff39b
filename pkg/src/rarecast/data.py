"""Window construction, labelling, splitting, standardization, synthesis.

Everything here is a pure function of its inputs plus an explicit seed, so
batches can be rebuilt bit-identically for reproducible runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import read_container, write_container

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8

LabelRule = str  # "first-step" | "any-step"


class DataError(ValueError):
    """Raised for malformed window/series inputs."""


@dataclass
class WindowBatch:
    """A batch of fixed-length multivariate windows with binary labels.

    values: (N, T, F) float array, labels: (N,) in {0,1}, group_ids: (N,)
    integer stratification keys (active-region id, valve scenario, ...).
    """

    values: np.ndarray
    labels: np.ndarray
    group_ids: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        self.group_ids = np.asarray(self.group_ids, dtype=np.int64)
        if self.values.ndim != 3:
            raise DataError(f"values must be (N, T, F), got shape {self.values.shape}")
        n = self.values.shape[0]
        if self.labels.shape != (n,) or self.group_ids.shape != (n,):
            raise DataError("labels and group_ids must be 1-D with one entry per window")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be binary")
        self.labels = self.labels.astype(np.int64)
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
            if self.timestamps.shape != (n,):
                raise DataError("timestamps must be 1-D with one entry per window")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def window_len(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def subset(self, idx: np.ndarray) -> "WindowBatch":
        ts = self.timestamps[idx] if self.timestamps is not None else None
        return WindowBatch(self.values[idx], self.labels[idx], self.group_ids[idx], ts)

    def save(self, path: str | Path) -> None:
        arrays = {"values": self.values, "labels": self.labels, "group_ids": self.group_ids}
        if self.timestamps is not None:
            arrays["timestamps"] = self.timestamps
        write_container(path, arrays, meta={"kind": "window_batch"})

    @classmethod
    def load(cls, path: str | Path) -> "WindowBatch":
        arrays, meta = read_container(path)
        if meta.get("kind") != "window_batch":
            raise DataError(f"{path}: not a window-batch container")
        return cls(
            arrays["values"], arrays["labels"], arrays["group_ids"], arrays.get("timestamps")
        )


def window_count(total_len: int, window_len: int, stride: int) -> int:
    """Number of windows produced by a sliding window over ``total_len`` steps."""
    if total_len <= 0:
        raise DataError("series is empty")
    if window_len > total_len:
        raise DataError(f"window_len {window_len} exceeds series length {total_len}")
    if stride < 1:
        raise DataError("stride must be >= 1")
    return (total_len - window_len) // stride + 1


def make_windows(
    series: np.ndarray,
    labels_per_step: np.ndarray,
    window_len: int,
    stride: int,
    label_rule: LabelRule = "first-step",
    group_id: int = 0,
) -> WindowBatch:
    """Slice a (L, F) series into overlapping windows with per-window labels.

    ``first-step`` labels a window by the step label at its first index;
    ``any-step`` labels it positive when any step inside the window is.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    labels_per_step = np.asarray(labels_per_step)
    total = series.shape[0]
    if labels_per_step.shape[0] != total:
        raise DataError("labels_per_step length must match series length")
    n = window_count(total, window_len, stride)
    starts = np.arange(n) * stride
    windows = series[starts[:, None] + np.arange(window_len)]
    if label_rule == "first-step":
        labels = labels_per_step[starts]
    elif label_rule == "any-step":
        step_labels = labels_per_step[starts[:, None] + np.arange(window_len)]
        labels = step_labels.max(axis=1)
    else:
        raise DataError(f"unknown label_rule {label_rule!r}")
    group_ids = np.full(n, group_id, dtype=np.int64)
    return WindowBatch(windows, labels.astype(np.int64), group_ids, starts.astype(np.float64))


@dataclass
class Standardizer:
    """Per-feature moments fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray
    clamped_features: tuple[int, ...] = ()

    @classmethod
    def fit(cls, train: WindowBatch) -> "Standardizer":
        if train.n == 0:
            raise DataError("cannot fit standardizer on an empty batch")
        flat = train.values.reshape(-1, train.n_features)
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        clamped = tuple(int(i) for i in np.flatnonzero(std < STD_FLOOR))
        if clamped:
            logger.warning("standardizer: clamping zero-variance features %s", clamped)
        std = np.maximum(std, STD_FLOOR)
        return cls(mean=mean, std=std, clamped_features=clamped)

    def apply(self, batch: WindowBatch) -> WindowBatch:
        if batch.n_features != self.mean.shape[0]:
            raise DataError("feature count does not match fitted moments")
        values = (batch.values - self.mean) / self.std
        return WindowBatch(values, batch.labels, batch.group_ids, batch.timestamps)


def fit_standardizer(train: WindowBatch) -> Standardizer:
    return Standardizer.fit(train)


def apply_standardizer(s: Standardizer, batch: WindowBatch) -> WindowBatch:
    return s.apply(batch)


def group_stratified_split(
    batch: WindowBatch,
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> tuple[WindowBatch, WindowBatch, WindowBatch]:
    """Partition windows into train/val/test so each group lands in one split.

    Groups are shuffled under ``seed`` and assigned greedily: each split takes
    whole groups until its window-count quota is met, holding back enough
    groups so every later nonempty split receives at least one.
    """
    fractions = tuple(float(f) for f in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    groups = np.unique(batch.group_ids)
    n_nonempty = sum(1 for f in fractions if f > 0)
    if len(groups) < n_nonempty:
        raise DataError(f"need at least {n_nonempty} groups, got {len(groups)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(groups))
    shuffled = groups[order]
    sizes = {g: int((batch.group_ids == g).sum()) for g in groups}
    quotas = [f * batch.n for f in fractions]

    assignments: list[list[int]] = [[], [], []]
    remaining = list(shuffled)
    for split_idx in range(3):
        if fractions[split_idx] == 0:
            continue
        later_nonempty = sum(1 for f in fractions[split_idx + 1 :] if f > 0)
        filled = 0.0
        while remaining and filled < quotas[split_idx] and len(remaining) > later_nonempty:
            g = remaining.pop(0)
            assignments[split_idx].append(g)
            filled += sizes[g]
    # leftovers go to the last nonempty split
    last = max(i for i, f in enumerate(fractions) if f > 0)
    assignments[last].extend(remaining)

    out = []
    for members in assignments:
        mask = np.isin(batch.group_ids, np.asarray(members, dtype=batch.group_ids.dtype))
        out.append(batch.subset(np.flatnonzero(mask)))
    return out[0], out[1], out[2]


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Planted-precursor task: AR(1) noise plus a ramp on two features.

    Positives carry a linear ramp rising to ``precursor_amplitude`` on the
    first ``min(2, F)`` features over the final ``precursor_length`` steps.
    ``n_windows / 297`` positives mirror the heavy imbalance of the target
    domain; the count is placed exactly, not sampled.
    """

    n_windows: int = 59400
    window_len: int = 10
    n_features: int = 6
    positive_rate: float = 1.0 / 297.0
    precursor_amplitude: float = 3.0
    precursor_length: int = 5
    noise_persistence: float = 0.3
    seed: int = 0
    n_groups: int = 24

    def __post_init__(self) -> None:
        if not 0.0 < self.positive_rate < 1.0:
            raise DataError(f"positive_rate must be in (0,1), got {self.positive_rate}")
        if self.precursor_length > self.window_len:
            raise DataError("precursor_length must not exceed window_len")
        if not 0.0 <= self.noise_persistence < 1.0:
            raise DataError("noise_persistence must be in [0,1)")


def synth_generate(spec: SyntheticTaskSpec) -> WindowBatch:
    """Generate the planted-precursor batch deterministically from the seed."""
    rng = np.random.default_rng(spec.seed)
    n, t, f = spec.n_windows, spec.window_len, spec.n_features
    rho = spec.noise_persistence
    innovations = rng.standard_normal((n, t, f))
    values = np.empty((n, t, f))
    scale = np.sqrt(1.0 - rho * rho)
    values[:, 0, :] = innovations[:, 0, :]
    for step in range(1, t):
        values[:, step, :] = rho * values[:, step - 1, :] + scale * innovations[:, step, :]

    n_pos = int(round(n * spec.positive_rate))
    pos_idx = rng.permutation(n)[:n_pos]
    labels = np.zeros(n, dtype=np.int64)
    labels[pos_idx] = 1
    ramp_feats = list(range(min(2, f)))
    ramp = np.linspace(0.0, spec.precursor_amplitude, spec.precursor_length)
    for feat in ramp_feats:
        values[pos_idx, t - spec.precursor_length :, feat] += ramp

    group_ids = np.arange(n, dtype=np.int64) % spec.n_groups
    return WindowBatch(values, labels, group_ids)

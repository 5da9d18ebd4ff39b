"""Valve-sensor CSV ingestion: raw + first-difference channels, windowed.

Input schema (per file): a header row; one non-numeric timestamp column
(ignored); numeric sensor columns; an integer ``anomaly`` column. A column
named ``changepoint`` is ignored when present. Comma and semicolon separators
are both accepted.

Each trace is split chronologically 70/15/15 on raw rows, then windowed per
segment so no window spans a split boundary. Training windows use the given
stride; validation and test segments are windowed at stride 1 for full
coverage. Windows are labelled by their first step. Each file becomes one
group id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import DataError, WindowBatch, make_windows

IGNORED_COLUMNS = ("changepoint",)
ANOMALY_COLUMN = "anomaly"


class SkabParseError(DataError):
    """Raised when a trace CSV does not match the documented schema."""


@dataclass
class TraceSplit:
    """Row-index boundaries of the chronological 70/15/15 split of one file."""

    path: str
    n_rows: int
    train_end: int
    val_end: int


@dataclass
class SkabDataset:
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch
    boundaries: list[TraceSplit]
    sensor_columns: list[str]


def _load_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Return (sensor matrix, per-step anomaly flags, sensor column names)."""
    frame = pd.read_csv(path, sep=None, engine="python")
    if ANOMALY_COLUMN not in frame.columns:
        raise SkabParseError(f"{path}: missing required column {ANOMALY_COLUMN!r}")
    labels_raw = pd.to_numeric(frame[ANOMALY_COLUMN], errors="coerce")
    if labels_raw.isna().any():
        row = int(labels_raw.index[labels_raw.isna()][0])
        raise SkabParseError(f"{path}: non-numeric anomaly flag at row {row}")
    labels = labels_raw.to_numpy()
    if not np.isin(labels, (0, 1)).all():
        raise SkabParseError(f"{path}: anomaly column must be binary")

    sensor_cols = []
    for col in frame.columns:
        if col == ANOMALY_COLUMN or col in IGNORED_COLUMNS:
            continue
        numeric = pd.to_numeric(frame[col], errors="coerce")
        if numeric.notna().all():
            sensor_cols.append(col)
        # non-numeric column = timestamp, ignored for features
    if not sensor_cols:
        raise SkabParseError(f"{path}: no numeric sensor columns found")
    sensors = frame[sensor_cols].copy()
    for col in sensor_cols:
        vals = pd.to_numeric(sensors[col], errors="coerce")
        if vals.isna().any():
            row = int(vals.index[vals.isna()][0])
            raise SkabParseError(f"{path}: non-numeric cell in column {col!r} at row {row}")
        sensors[col] = vals
    return sensors.to_numpy(dtype=np.float64), labels.astype(np.int64), sensor_cols


def stack_diff_channels(sensors: np.ndarray) -> np.ndarray:
    """Append first-difference velocity channels; the step-0 diff is 0."""
    diffs = np.zeros_like(sensors)
    diffs[1:] = np.diff(sensors, axis=0)
    return np.concatenate([sensors, diffs], axis=1)


def _concat(batches: list[WindowBatch], window_len: int, n_features: int) -> WindowBatch:
    if not batches:
        empty = np.zeros((0, window_len, n_features))
        return WindowBatch(empty, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    return WindowBatch(
        np.concatenate([b.values for b in batches]),
        np.concatenate([b.labels for b in batches]),
        np.concatenate([b.group_ids for b in batches]),
    )


def skab_ingest(
    csv_paths: list[str | Path],
    window_len: int = 24,
    stride: int = 2,
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
) -> SkabDataset:
    """Ingest one or more trace CSVs into train/val/test window batches."""
    if not csv_paths:
        raise SkabParseError("no input files given")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    train_parts: list[WindowBatch] = []
    val_parts: list[WindowBatch] = []
    test_parts: list[WindowBatch] = []
    boundaries: list[TraceSplit] = []
    sensor_names: list[str] | None = None
    n_features = 0
    for group_id, path in enumerate(csv_paths):
        sensors, labels, cols = _load_trace(path)
        if sensor_names is None:
            sensor_names = cols
        elif cols != sensor_names:
            raise SkabParseError(f"{path}: sensor columns differ from first file")
        features = stack_diff_channels(sensors)
        n_features = features.shape[1]
        n_rows = features.shape[0]
        train_end = int(n_rows * fractions[0])
        val_end = int(n_rows * (fractions[0] + fractions[1]))
        boundaries.append(TraceSplit(str(path), n_rows, train_end, val_end))
        segments = (
            (features[:train_end], labels[:train_end], stride, train_parts),
            (features[train_end:val_end], labels[train_end:val_end], 1, val_parts),
            (features[val_end:], labels[val_end:], 1, test_parts),
        )
        for seg_values, seg_labels, seg_stride, sink in segments:
            if seg_values.shape[0] >= window_len:
                sink.append(
                    make_windows(
                        seg_values, seg_labels, window_len, seg_stride, "first-step", group_id
                    )
                )
    return SkabDataset(
        train=_concat(train_parts, window_len, n_features),
        val=_concat(val_parts, window_len, n_features),
        test=_concat(test_parts, window_len, n_features),
        boundaries=boundaries,
        sensor_columns=sensor_names or [],
    )

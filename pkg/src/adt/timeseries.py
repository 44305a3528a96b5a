"""Time-series containers, min-max scaling, sliding windows, and CSV I/O.

Everything downstream (scorer, thresholding, baselines) consumes the types
defined here.  Values are always two-dimensional ``(n_points, n_channels)``
float64 arrays; labels, when present, are per-point 0/1 integers.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._io import atomic_write_text
from .validation import (
    as_float_array,
    as_label_array,
    check_positive_int,
    check_same_length,
)


@dataclass
class TimeSeries:
    """A real-valued multichannel series with optional point labels.

    Parameters
    ----------
    values : ndarray of shape (n_points, n_channels)
        Finite float64 readings.  One-dimensional input is promoted to a
        single channel.
    labels : ndarray of shape (n_points,), optional
        Per-point anomaly labels, 0 = normal, 1 = anomalous.
    """

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        arr = as_float_array(self.values, "values")
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError(f"values must be 1- or 2-dimensional, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ValueError("values must contain at least one point")
        self.values = arr
        if self.labels is not None:
            lab = as_label_array(self.labels, "labels")
            check_same_length(lab, arr, "labels", "values")
            self.labels = lab

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]

    def __len__(self):
        return self.n_points


class MinMaxNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel min-max scaler that clamps held-out data into [0, 1].

    A constant channel maps to all zeros instead of dividing by zero.
    """

    def fit(self, X, y=None):
        arr = as_float_array(X, "X")
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError(f"X must be a non-empty 2-dimensional array, got shape {arr.shape}")
        self.low_ = arr.min(axis=0)
        self.high_ = arr.max(axis=0)
        self.n_channels_ = arr.shape[1]
        return self

    def transform(self, X):
        if not hasattr(self, "low_"):
            raise NotFittedError("MinMaxNormalizer is not fitted; call fit first")
        arr = as_float_array(X, "X")
        squeeze = arr.ndim == 1
        if squeeze:
            arr = arr.reshape(-1, 1)
        if arr.shape[1] != self.n_channels_:
            raise ValueError(
                f"X has {arr.shape[1]} channels, normalizer was fitted on {self.n_channels_}"
            )
        span = self.high_ - self.low_
        out = np.zeros_like(arr)
        live = span > 0
        out[:, live] = (arr[:, live] - self.low_[live]) / span[live]
        np.clip(out, 0.0, 1.0, out=out)
        return out[:, 0] if squeeze else out


def minmax_normalize(series):
    """Scale a series into [0, 1] per channel.

    Returns the normalized series (labels carried over) and the fitted
    :class:`MinMaxNormalizer` so held-out data can be transformed with the
    same statistics.
    """
    normalizer = MinMaxNormalizer().fit(series.values)
    return TimeSeries(normalizer.transform(series.values), series.labels), normalizer


@dataclass
class Window:
    """One fixed-length slice of a series starting at ``start_index``."""

    data: np.ndarray
    start_index: int
    label: int | None = None


@dataclass
class WindowSequence:
    """Stride-1 sliding windows sharing one length, in series order.

    ``data`` has shape (n_windows, window_size, n_channels); ``labels`` is the
    per-window 0/1 vector when the source series was labeled, else None.
    """

    data: np.ndarray
    window_size: int
    start_indices: np.ndarray = field(repr=False)
    labels: np.ndarray | None = None

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i):
        label = None if self.labels is None else int(self.labels[i])
        return Window(self.data[i], int(self.start_indices[i]), label)

    @property
    def n_channels(self):
        return self.data.shape[2]

    @property
    def flat(self):
        """Windows flattened to (n_windows, window_size * n_channels)."""
        return self.data.reshape(len(self), -1)

    def slice(self, start, stop):
        labels = None if self.labels is None else self.labels[start:stop]
        return WindowSequence(
            self.data[start:stop], self.window_size, self.start_indices[start:stop], labels
        )


def point_adjust_label(point_labels, start, window_size):
    """A window is anomalous iff any point inside it is anomalous."""
    segment = point_labels[start : start + window_size]
    return int(np.any(segment == 1))


def make_windows(series, window_size):
    """Cut a series into stride-1 windows of ``window_size`` points.

    Produces exactly ``n_points - window_size + 1`` windows.  When the series
    carries point labels each window gets the point-adjust label: 1 iff any
    contained point is labeled 1.
    """
    window_size = check_positive_int(window_size, "window_size")
    n = series.n_points
    if window_size > n:
        raise ValueError(
            f"window_size {window_size} exceeds series length {n}"
        )
    n_windows = n - window_size + 1
    view = np.lib.stride_tricks.sliding_window_view(series.values, window_size, axis=0)
    data = np.ascontiguousarray(np.swapaxes(view, 1, 2))
    starts = np.arange(n_windows, dtype=np.int64)
    labels = None
    if series.labels is not None:
        lab_view = np.lib.stride_tricks.sliding_window_view(series.labels, window_size)
        labels = lab_view.max(axis=1).astype(np.int64)
    return WindowSequence(data, window_size, starts, labels)


@dataclass
class CsvSchema:
    """How to read a series out of a CSV file.

    feature_columns: names of value columns; None means every column except
    the label column.  label_column: name of the 0/1 column, or None for an
    unlabeled series.  label_map: optional mapping from raw cell text to 0/1
    for datasets with symbolic labels.
    """

    feature_columns: list[str] | None = None
    label_column: str | None = "label"
    label_map: dict[str, int] | None = None


def load_csv(path, schema=None):
    """Read a :class:`TimeSeries` from a headed CSV file.

    Raises ValueError naming the offending row (1-based, header = row 1) on
    malformed numbers or labels.
    """
    schema = schema or CsvSchema()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty, expected a header row") from None
        rows = list(reader)

    columns = {name: i for i, name in enumerate(header)}
    label_idx = None
    if schema.label_column is not None:
        if schema.label_column in columns:
            label_idx = columns[schema.label_column]
        elif schema.feature_columns is None and schema.label_column == "label":
            label_idx = None  # default schema tolerates an unlabeled file
        else:
            raise ValueError(f"{path}: label column {schema.label_column!r} not in header")
    if schema.feature_columns is None:
        feature_names = [c for c in header if columns[c] != label_idx]
    else:
        missing = [c for c in schema.feature_columns if c not in columns]
        if missing:
            raise ValueError(f"{path}: feature columns {missing} not in header")
        feature_names = list(schema.feature_columns)
    if not feature_names:
        raise ValueError(f"{path}: no feature columns to read")
    feat_idx = [columns[c] for c in feature_names]

    n = len(rows)
    values = np.empty((n, len(feat_idx)), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64) if label_idx is not None else None
    for r, row in enumerate(rows):
        rownum = r + 2
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {rownum} has {len(row)} cells, header has {len(header)}"
            )
        for j, ci in enumerate(feat_idx):
            try:
                values[r, j] = float(row[ci])
            except ValueError:
                raise ValueError(
                    f"{path}: row {rownum}, column {feature_names[j]!r}: "
                    f"cannot parse {row[ci]!r} as a number"
                ) from None
        if labels is not None:
            cell = row[label_idx]
            if schema.label_map is not None:
                if cell not in schema.label_map:
                    raise ValueError(
                        f"{path}: row {rownum}: label {cell!r} not in label_map"
                    )
                labels[r] = schema.label_map[cell]
            else:
                try:
                    labels[r] = int(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {rownum}: cannot parse label {cell!r} as 0/1"
                    ) from None
    if n == 0:
        raise ValueError(f"{path}: no data rows")
    if not np.all(np.isfinite(values)):
        r = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise ValueError(f"{path}: row {r + 2} contains a non-finite value")
    return TimeSeries(values, labels)


def save_csv(series, path):
    """Write a series as CSV with repr-precision floats.

    Channel columns are named c0..c{m-1}; the label column is written only
    for labeled series.  Values survive a load/save round trip bit-for-bit.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [f"c{j}" for j in range(series.n_channels)]
    if series.labels is not None:
        writer.writerow(names + ["label"])
        for i in range(series.n_points):
            writer.writerow([repr(float(v)) for v in series.values[i]] + [int(series.labels[i])])
    else:
        writer.writerow(names)
        for i in range(series.n_points):
            writer.writerow([repr(float(v)) for v in series.values[i]])
    atomic_write_text(path, buf.getvalue())

"""Domain types and dataset plumbing: channels, windows, tables, splits.

All containers here are immutable after construction; downstream stages
produce new tables instead of mutating shared state.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_CHANNEL_NAME_RE = re.compile(r"^[a-z][a-z0-9]*$")

DESCRIPTOR_SOURCES = ("direct-llm", "contextual", "operator", "initial")


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    """One named signal channel: sample rate plus an ordered series of finite reals."""

    name: str
    sample_rate: float
    values: np.ndarray

    def __post_init__(self):
        if not _CHANNEL_NAME_RE.match(self.name):
            raise DataError(f"bad channel name {self.name!r}: must match [a-z][a-z0-9]*")
        if not (self.sample_rate > 0):
            raise DataError(f"channel {self.name!r}: sample_rate must be > 0")
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError(f"channel {self.name!r}: values must be a non-empty 1-d series")
        if not np.isfinite(arr).all():
            raise DataError(f"channel {self.name!r}: non-finite value")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True, eq=False)
class SignalWindow:
    """One labeled sample: a map of channel name to its series."""

    id: str
    label: str
    channels: dict[str, ChannelSeries]

    def __post_init__(self):
        if not self.channels:
            raise DataError(f"window {self.id!r}: needs at least one channel")
        for key, series in self.channels.items():
            if key != series.name:
                raise DataError(f"window {self.id!r}: channel key {key!r} != series name {series.name!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered windows sharing one channel schema and a fixed label space."""

    windows: tuple[SignalWindow, ...]
    channel_schema: tuple[str, ...] = field(init=False)
    label_space: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        windows = tuple(self.windows)
        object.__setattr__(self, "windows", windows)
        if not windows:
            raise DataError("dataset has no windows")
        schema = tuple(sorted(windows[0].channels))
        seen_ids = set()
        for w in windows:
            if w.id in seen_ids:
                raise DataError(f"duplicate window id {w.id!r}")
            seen_ids.add(w.id)
            if tuple(sorted(w.channels)) != schema:
                missing = set(schema) - set(w.channels)
                extra = set(w.channels) - set(schema)
                what = f"missing channel(s) {sorted(missing)}" if missing else f"unexpected channel(s) {sorted(extra)}"
                raise DataError(f"window {w.id!r}: {what} (schema is {list(schema)})")
        labels = tuple(sorted({w.label for w in windows}))
        if len(labels) < 2:
            raise DataError(f"dataset needs at least 2 classes, found {list(labels)}")
        object.__setattr__(self, "channel_schema", schema)
        object.__setattr__(self, "label_space", labels)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(w.label for w in self.windows)

    def __len__(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class FeatureDescriptor:
    """A realized feature: name, provenance text, and the channels it consumes."""

    name: str
    description: str
    rationale: str
    channels: tuple[str, ...]
    source: str
    origin_iteration: int = 0

    def __post_init__(self):
        if self.source not in DESCRIPTOR_SOURCES:
            raise DataError(f"descriptor {self.name!r}: unknown source {self.source!r}")
        if self.origin_iteration < 0:
            raise DataError(f"descriptor {self.name!r}: origin_iteration must be >= 0")
        object.__setattr__(self, "channels", tuple(self.channels))


@dataclass(frozen=True)
class DroppedColumn:
    """A column rejected at append time, with the policy that rejected it."""

    name: str
    reason: str


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Samples-by-features matrix aligned to a dataset's window order.

    Every stored cell is finite; finiteness and name uniqueness are enforced
    when columns are appended, never retro-checked.
    """

    window_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (len(self.window_ids), len(self.column_names)):
            raise DataError(
                f"table shape {arr.shape} does not match {len(self.window_ids)} windows x "
                f"{len(self.column_names)} columns"
            )
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names in table")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "window_ids", tuple(self.window_ids))
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @classmethod
    def empty(cls, window_ids) -> "FeatureTable":
        ids = tuple(window_ids)
        return cls(ids, (), np.zeros((len(ids), 0)))

    @property
    def n_rows(self) -> int:
        return len(self.window_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def select(self, names) -> np.ndarray:
        idx = [self.column_names.index(n) for n in names]
        return self.values[:, idx]


def load_dataset(path) -> Dataset:
    """Read an NDJSON dataset file: one window object per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    windows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path.name}:{lineno}: malformed JSON: {exc.msg}") from exc
            try:
                windows.append(_window_from_obj(obj))
            except DataError as exc:
                raise DataError(f"{path.name}:{lineno}: {exc}") from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path.name}:{lineno}: bad window object: {exc}") from exc
    return Dataset(tuple(windows))


def _window_from_obj(obj) -> SignalWindow:
    if not isinstance(obj, dict):
        raise DataError("window line is not a JSON object")
    channels = {}
    for name, chan in obj["channels"].items():
        channels[name] = ChannelSeries(
            name=name,
            sample_rate=float(chan["fs"]),
            values=np.asarray(chan["values"], dtype=np.float64),
        )
    return SignalWindow(id=str(obj["id"]), label=str(obj["label"]), channels=channels)


def save_dataset(dataset: Dataset, path) -> None:
    """Write NDJSON that load_dataset reads back bit-exactly (repr round-trip floats)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for w in dataset.windows:
            obj = {
                "id": w.id,
                "label": w.label,
                "channels": {
                    name: {"fs": series.sample_rate, "values": series.values.tolist()}
                    for name, series in sorted(w.channels.items())
                },
            }
            fh.write(json.dumps(obj) + "\n")


def split_train_validation(dataset: Dataset, fraction: float, seed: int):
    """Class-stratified validation split: floor(fraction * n_c) per class, at least 1.

    Returns (train_indices, validation_indices), both sorted tuples. The same
    (dataset, fraction, seed) always produce the same partition.
    """
    if not (0.0 < fraction < 1.0):
        raise DataError(f"validation fraction must be in (0, 1), got {fraction}")
    by_class: dict[str, list[int]] = {label: [] for label in dataset.label_space}
    for i, w in enumerate(dataset.windows):
        by_class[w.label].append(i)
    rng = np.random.default_rng(seed)
    val: list[int] = []
    for label in dataset.label_space:
        members = by_class[label]
        if len(members) < 2:
            raise DataError(f"class {label!r} has {len(members)} window(s); need at least 2 to split")
        take = max(1, math.floor(fraction * len(members)))
        chosen = rng.choice(np.asarray(members), size=take, replace=False)
        val.extend(int(i) for i in chosen)
    val_set = set(val)
    train = tuple(i for i in range(len(dataset.windows)) if i not in val_set)
    return train, tuple(sorted(val_set))


def append_feature_columns(table: FeatureTable, names, columns):
    """Append columns in order, dropping (and reporting) name collisions and non-finite columns.

    Returns (new_table, dropped) where dropped lists DroppedColumn records.
    """
    names = list(names)
    cols = np.asarray(columns, dtype=np.float64)
    if cols.ndim == 1:
        cols = cols.reshape(-1, 1)
    if cols.shape[0] != table.n_rows and cols.size > 0:
        raise DataError(f"column row count {cols.shape[0]} != table row count {table.n_rows}")
    if cols.size == 0:
        cols = cols.reshape(table.n_rows, len(names)) if names else cols.reshape(table.n_rows, 0)
    if cols.shape[1] != len(names):
        raise DataError(f"{len(names)} names for {cols.shape[1]} columns")
    if len(set(names)) != len(names):
        raise DataError("incoming column names are not unique")

    existing = set(table.column_names)
    kept_names, kept_cols, dropped = [], [], []
    for j, name in enumerate(names):
        if name in existing:
            dropped.append(DroppedColumn(name, "duplicate name"))
            continue
        col = cols[:, j]
        if not np.isfinite(col).all():
            dropped.append(DroppedColumn(name, "non-finite value"))
            continue
        kept_names.append(name)
        kept_cols.append(col)
    if not kept_names:
        return table, dropped
    new_values = np.column_stack([table.values] + kept_cols) if table.column_names else np.column_stack(kept_cols)
    new_table = FeatureTable(table.window_ids, table.column_names + tuple(kept_names), new_values)
    return new_table, dropped


def write_table_csv(table: FeatureTable, labels, path) -> None:
    """Persist a table as CSV: window_id, label, then one column per feature."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window_id", "label"] + list(table.column_names))
        for i, wid in enumerate(table.window_ids):
            writer.writerow([wid, labels[i]] + [repr(float(v)) for v in table.values[i]])


def read_table_csv(path):
    """Read a CSV written by write_table_csv. Returns (table, labels)."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path.name}: empty table file") from None
        if header[:2] != ["window_id", "label"]:
            raise DataError(f"{path.name}: expected header to start with window_id,label")
        names = tuple(header[2:])
        ids, labels, rows = [], [], []
        for row in reader:
            ids.append(row[0])
            labels.append(row[1])
            rows.append([float(v) for v in row[2:]])
    values = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(names)))
    if values.size == 0:
        values = values.reshape(len(ids), len(names))
    return FeatureTable(tuple(ids), names, values), tuple(labels)


@dataclass
class IterationState:
    """The loop's live state: candidate set, best feature set, table, counters."""

    candidates: dict[str, FeatureDescriptor]
    table: FeatureTable
    stride: int
    iteration: int
    max_iterations: int
    rng_seed: int
    best_names: tuple[str, ...] = ()
    best_auroc: float | None = None
    best_report: dict | None = None
    best_model_blob: bytes | None = None

    def check_invariants(self) -> None:
        cols = set(self.table.column_names)
        names = set(self.candidates)
        if cols != names:
            raise DataError(
                f"table/descriptor bijection broken: {sorted(cols ^ names)[:5]} mismatch"
            )
        if not set(self.best_names) <= names:
            raise DataError("best feature set is not a subset of the candidate set")
        if self.iteration > self.max_iterations:
            raise DataError("iteration counter exceeded max_iterations")

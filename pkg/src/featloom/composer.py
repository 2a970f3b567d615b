"""Operator-based composite features over table columns ranked by mutual information."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureTable
from .errors import DataError

OPERATORS = ("add", "sub", "mul", "div")

def _div_total(a, b):
    # Elementwise counterpart of the DSL rule: x/0 -> NaN.
    out = np.divide(a, np.where(b == 0.0, 1.0, b))
    return np.where(b == 0.0, np.nan, out)


_OP_FUNCS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": _div_total,
}


@dataclass(frozen=True)
class ColumnImportance:
    name: str
    mi: float


@dataclass(frozen=True)
class CompositeSpec:
    left: str
    right: str
    operator: str

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise DataError(f"unknown operator {self.operator!r}")
        if self.left == self.right:
            raise DataError("composite needs two distinct columns")

    @property
    def name(self) -> str:
        return f"{self.operator}({self.left},{self.right})"

    def to_record(self) -> dict:
        return {"name": self.name, "operator": self.operator, "left": self.left, "right": self.right}


def equal_frequency_bins(column: np.ndarray, bins: int) -> np.ndarray:
    """Assign each value a bin index using equal-frequency edges.

    Ties share a bin; duplicate quantile edges are merged, so a constant
    column lands in a single bin.
    """
    if bins < 2:
        raise DataError(f"bins must be >= 2, got {bins}")
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    edges = np.unique(np.quantile(column, qs, method="linear"))
    return np.searchsorted(edges, column, side="right")


def mutual_information(column, labels, bins: int = 10) -> float:
    """Plug-in mutual information (nats) between a binned column and labels."""
    column = np.asarray(column, dtype=np.float64)
    n = column.size
    if n < 2 or n != len(labels):
        raise DataError("column and labels must have equal length >= 2")
    binned = equal_frequency_bins(column, bins)
    label_ids = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    y = np.array([label_ids[lab] for lab in labels])
    joint = np.zeros((int(binned.max()) + 1, len(label_ids)))
    for b, lab in zip(binned, y):
        joint[b, lab] += 1.0
    joint /= n
    pb = joint.sum(axis=1)
    pl = joint.sum(axis=0)
    mi = 0.0
    for b in range(joint.shape[0]):
        for lab in range(joint.shape[1]):
            p = joint[b, lab]
            if p > 0.0:
                mi += p * math.log(p / (pb[b] * pl[lab]))
    return max(mi, 0.0)


def rank_columns(table: FeatureTable, labels, train_indices, bins: int = 10) -> list[ColumnImportance]:
    """Importance ranking on training rows only: MI descending, then name ascending."""
    if not table.column_names:
        return []
    rows = np.asarray(train_indices, dtype=int)
    y = [labels[i] for i in rows]
    ranked = [
        ColumnImportance(name, mutual_information(table.values[rows, j], y, bins))
        for j, name in enumerate(table.column_names)
    ]
    ranked.sort(key=lambda ci: (-ci.mi, ci.name))
    return ranked


@dataclass
class ComposeResult:
    columns: np.ndarray
    specs: list[CompositeSpec]
    dropped: list[tuple[CompositeSpec, str]]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]


def compose_pairs(table: FeatureTable, ranking, budget: int) -> ComposeResult:
    """Build composite columns from the top-ranked pairs.

    Takes the smallest k with C(k,2) >= budget, orders the pairs by summed
    importance (ties by name pair), keeps the first `budget` pairs not yet
    materialized in the table, and applies all four operators to each.
    Columns with any non-finite entry are dropped and reported. k grows when
    already-materialized pairs would otherwise starve the budget.
    """
    if len(table.column_names) < 2:
        raise DataError("composition needs at least 2 columns")
    if budget < 1:
        raise DataError(f"budget must be >= 1, got {budget}")

    existing = set(table.column_names)

    def novel(pair) -> bool:
        return any(CompositeSpec(pair[0], pair[1], op).name not in existing for op in OPERATORS)

    mi_of = {ci.name: ci.mi for ci in ranking}
    k = 2
    while k * (k - 1) // 2 < budget and k < len(ranking):
        k += 1
    pairs: list[tuple[str, str]] = []
    while True:
        top = ranking[:k]
        pairs = [
            (top[i].name, top[j].name)
            for i in range(len(top))
            for j in range(i + 1, len(top))
        ]
        pairs.sort(key=lambda p: (-(mi_of[p[0]] + mi_of[p[1]]), p[0], p[1]))
        pairs = [p for p in pairs if novel(p)]
        if len(pairs) >= budget or k >= len(ranking):
            break
        k += 1
    pairs = pairs[:budget]

    specs: list[CompositeSpec] = []
    kept_cols: list[np.ndarray] = []
    dropped: list[tuple[CompositeSpec, str]] = []
    for left, right in pairs:
        a = table.column(left)
        b = table.column(right)
        for op in OPERATORS:
            spec = CompositeSpec(left, right, op)
            with np.errstate(all="ignore"):
                col = _OP_FUNCS[op](a, b)
            if not np.isfinite(col).all():
                dropped.append((spec, "non-finite value"))
                continue
            specs.append(spec)
            kept_cols.append(col)
    columns = np.column_stack(kept_cols) if kept_cols else np.zeros((table.n_rows, 0))
    return ComposeResult(columns, specs, dropped)


def compute_composite(spec: CompositeSpec, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Recompute one composite column from its parents (used for held-out data)."""
    with np.errstate(all="ignore"):
        return _OP_FUNCS[spec.operator](left, right)

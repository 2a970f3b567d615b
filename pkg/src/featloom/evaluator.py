"""Downstream model, validation metrics, and ranking-based feature elimination."""

from __future__ import annotations

import logging
import math
import pickle
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier

from .core import FeatureTable, IterationState
from .errors import DataError

logger = logging.getLogger(__name__)

MODEL_BLOB_FORMAT = "featloom-model"
MODEL_BLOB_VERSION = 1


class DownstreamModel(Protocol):
    """What the selection loop needs from any classifier."""

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> "DownstreamModel": ...

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...

    def feature_importances(self) -> np.ndarray: ...


class ReferenceEnsemble:
    """Bagged decision-tree ensemble: 100 trees, Gini, depth 12, min leaf 2.

    Per-split candidate features are ceil(sqrt(d)); importances are the
    normalized total impurity decrease. Backed by scikit-learn's forest,
    which implements exactly this estimator family, pinned to these
    hyperparameters and a fixed seed for determinism.
    """

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self._rf: RandomForestClassifier | None = None
        self._classes_seen: np.ndarray | None = None

    def fit(self, X, y, seed: int) -> "ReferenceEnsemble":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError("X and y shapes disagree")
        if not np.isfinite(X).all():
            raise DataError("non-finite cell in training matrix")
        if np.unique(y).size < 2:
            raise DataError("training labels contain a single class")
        d = X.shape[1]
        self._rf = RandomForestClassifier(
            n_estimators=100,
            criterion="gini",
            max_depth=12,
            min_samples_leaf=2,
            max_features=max(1, math.ceil(math.sqrt(d))),
            bootstrap=True,
            random_state=seed,
            n_jobs=1,
        )
        self._rf.fit(X, y)
        self._classes_seen = self._rf.classes_
        return self

    def predict_proba(self, X) -> np.ndarray:
        if self._rf is None:
            raise DataError("model not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.zeros((0, self.n_classes))
        if X.shape[1] != self._rf.n_features_in_:
            raise DataError(f"expected {self._rf.n_features_in_} columns, got {X.shape[1]}")
        raw = self._rf.predict_proba(X)
        full = np.zeros((X.shape[0], self.n_classes))
        for j, cls in enumerate(self._classes_seen):
            full[:, int(cls)] = raw[:, j]
        return full

    def feature_importances(self) -> np.ndarray:
        if self._rf is None:
            raise DataError("model not fitted")
        imp = self._rf.feature_importances_
        total = imp.sum()
        if total <= 0.0:
            return np.full(imp.shape, 1.0 / imp.size)
        return imp / total


class MajorityClassBaseline:
    """Predicts training class frequencies everywhere; uniform importances."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self._freq: np.ndarray | None = None
        self._d = 0

    def fit(self, X, y, seed: int) -> "MajorityClassBaseline":
        y = np.asarray(y, dtype=int)
        counts = np.bincount(y, minlength=self.n_classes).astype(float)
        self._freq = counts / counts.sum()
        self._d = np.asarray(X).shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        if self._freq is None:
            raise DataError("model not fitted")
        return np.tile(self._freq, (np.asarray(X).shape[0], 1))

    def feature_importances(self) -> np.ndarray:
        return np.full(self._d, 1.0 / self._d) if self._d else np.zeros(0)


def fit_reference_ensemble(X, y, seed: int, n_classes: int | None = None) -> ReferenceEnsemble:
    y = np.asarray(y, dtype=int)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    return ReferenceEnsemble(k).fit(X, y, seed)


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # rows = truth, cols = predicted

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_record(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.astype(int).tolist()}

    @classmethod
    def from_record(cls, rec) -> "ConfusionMatrix":
        return cls(tuple(rec["labels"]), np.asarray(rec["counts"], dtype=int))


def confusion_matrix(y_true, y_pred, labels) -> ConfusionMatrix:
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    if len(y_true) != len(y_pred):
        raise DataError("y_true and y_pred lengths differ")
    for t, p in zip(y_true, y_pred):
        if t not in index or p not in index:
            raise DataError(f"label outside label space: {t!r} / {p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels, counts)


def _rank_auc(scores_pos, scores_neg) -> float:
    # Mann-Whitney with midranks for ties.
    ranks = rankdata(np.concatenate([scores_pos, scores_neg]))
    n_pos, n_neg = len(scores_pos), len(scores_neg)
    rank_sum = float(ranks[:n_pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc_ovo_macro(proba, y_true, labels) -> float:
    """One-vs-one macro AUROC (Hand-Till): for every unordered class pair,
    average the two directed rank AUCs, then average over pairs.

    Pairs with an absent class are skipped (and logged); if every pair is
    skipped, raises DataError. The binary case reduces to the standard AUC.
    """
    proba = np.asarray(proba, dtype=np.float64)
    labels = tuple(labels)
    y = np.asarray([labels.index(t) for t in y_true])
    present = [i for i in range(len(labels)) if np.any(y == i)]
    pair_values = []
    skipped = []
    for a in range(len(labels)):
        for b in range(a + 1, len(labels)):
            if a not in present or b not in present:
                skipped.append((labels[a], labels[b]))
                continue
            mask = (y == a) | (y == b)
            sub_y = y[mask]
            a_given_b = _rank_auc(proba[mask][sub_y == a, a], proba[mask][sub_y == b, a])
            b_given_a = _rank_auc(proba[mask][sub_y == b, b], proba[mask][sub_y == a, b])
            pair_values.append((a_given_b + b_given_a) / 2.0)
    if skipped:
        logger.warning("auroc: skipped %d pair(s) with absent classes: %s", len(skipped), skipped)
    if not pair_values:
        raise DataError("no class pair present in validation labels")
    return float(np.mean(pair_values))


@dataclass
class EvalReport:
    auroc: float
    accuracy: float
    cm: ConfusionMatrix
    selected: tuple[str, ...]
    target_count: int
    model_seed: int

    def to_record(self) -> dict:
        return {
            "auroc": self.auroc,
            "accuracy": self.accuracy,
            "confusion": self.cm.to_record(),
            "selected": list(self.selected),
            "target_count": self.target_count,
            "model_seed": self.model_seed,
        }

    @classmethod
    def from_record(cls, rec) -> "EvalReport":
        return cls(
            auroc=rec["auroc"],
            accuracy=rec["accuracy"],
            cm=ConfusionMatrix.from_record(rec["confusion"]),
            selected=tuple(rec["selected"]),
            target_count=rec["target_count"],
            model_seed=rec["model_seed"],
        )


def _predict_labels(proba, labels) -> list[str]:
    return [labels[int(i)] for i in np.argmax(proba, axis=1)]


def rfe_select(table: FeatureTable, labels, train_idx, val_idx, target: int, seed: int,
               label_space=None, model_factory=None):
    """Recursive feature elimination down to `target` columns.

    Each round drops the ceil(10%) lowest-importance survivors (ties drop
    lexicographically later names first), never dipping below the target.
    Returns (selected names, fitted model, EvalReport on the validation rows).
    """
    if label_space is None:
        label_space = tuple(sorted(set(labels)))
    d = len(table.column_names)
    if not (1 <= target <= d):
        raise DataError(f"target count {target} outside [1, {d}]")
    train_idx = np.asarray(train_idx, dtype=int)
    val_idx = np.asarray(val_idx, dtype=int)
    label_to_id = {lab: i for i, lab in enumerate(label_space)}
    y_all = np.array([label_to_id[lab] for lab in labels])
    factory = model_factory or (lambda: ReferenceEnsemble(len(label_space)))

    current = list(table.column_names)
    while len(current) > target:
        model = factory().fit(table.select(current)[train_idx], y_all[train_idx], seed)
        importances = model.feature_importances()
        n_drop = min(math.ceil(0.10 * len(current)), len(current) - target)
        order = sorted(range(len(current)), key=lambda j: current[j], reverse=True)
        order = sorted(order, key=lambda j: importances[j])  # stable: ties keep name-desc order
        drop = {current[j] for j in order[:n_drop]}
        current = [c for c in current if c not in drop]

    model = factory().fit(table.select(current)[train_idx], y_all[train_idx], seed)
    proba = model.predict_proba(table.select(current)[val_idx])
    y_val = [labels[i] for i in val_idx]
    preds = _predict_labels(proba, label_space)
    cm = confusion_matrix(y_val, preds, label_space)
    report = EvalReport(
        auroc=auroc_ovo_macro(proba, y_val, label_space),
        accuracy=cm.accuracy(),
        cm=cm,
        selected=tuple(current),
        target_count=target,
        model_seed=seed,
    )
    return tuple(current), model, report


DEFAULT_TARGET_GRID = (8, 16, 32, 64)


def serialize_model(model, selected, label_space) -> bytes:
    payload = {
        "format": MODEL_BLOB_FORMAT,
        "version": MODEL_BLOB_VERSION,
        "model": model,
        "selected": tuple(selected),
        "label_space": tuple(label_space),
    }
    return pickle.dumps(payload, protocol=4)


def deserialize_model(blob: bytes) -> dict:
    try:
        payload = pickle.loads(blob)
    except Exception as exc:
        raise DataError(f"corrupt model blob: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_BLOB_FORMAT:
        raise DataError("not a featloom model blob")
    return payload


def assess_iteration(state: IterationState, labels, train_idx, val_idx, seed: int,
                     label_space=None, grid=DEFAULT_TARGET_GRID):
    """Sweep the target-count grid, pick the best by validation AUROC, and
    replace the stored best state only on a strict improvement.

    Returns (state, EvalReport of this sweep's winner, improved flag).
    """
    d = len(state.table.column_names)
    if d == 0:
        raise DataError("cannot assess an empty table")
    targets = [t for t in sorted(grid) if 1 <= t <= d] or [d]
    best: tuple[EvalReport, object] | None = None
    for t in targets:
        _, model, report = rfe_select(
            state.table, labels, train_idx, val_idx, t, seed, label_space=label_space
        )
        if best is None or report.auroc > best[0].auroc:
            best = (report, model)
    report, model = best
    improved = state.best_auroc is None or report.auroc > state.best_auroc
    if improved:
        state.best_auroc = report.auroc
        state.best_names = report.selected
        state.best_report = report.to_record()
        state.best_model_blob = serialize_model(model, report.selected, label_space or sorted(set(labels)))
    return state, report, improved

import math

import numpy as np
import pytest

from featloom.core import FeatureTable
from featloom.errors import DataError
from featloom.evaluator import (
    ConfusionMatrix,
    MajorityClassBaseline,
    ReferenceEnsemble,
    auroc_ovo_macro,
    confusion_matrix,
    deserialize_model,
    fit_reference_ensemble,
    rfe_select,
    serialize_model,
)


def oracle_ovo_auroc(proba, y_true, labels):
    """Exhaustive pairwise rank oracle with half-credit ties."""
    labels = list(labels)
    idx = {lab: i for i, lab in enumerate(labels)}
    y = [idx[t] for t in y_true]

    def directed(a, b):
        pos = [proba[i][a] for i, t in enumerate(y) if t == a]
        neg = [proba[i][a] for i, t in enumerate(y) if t == b]
        wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
        return wins / (len(pos) * len(neg))

    values = []
    present = set(y)
    for a in range(len(labels)):
        for b in range(a + 1, len(labels)):
            if a not in present or b not in present:
                continue
            a_b = directed(a, b)
            # swap roles: positive class b scored by column b
            pos = [proba[i][b] for i, t in enumerate(y) if t == b]
            neg = [proba[i][b] for i, t in enumerate(y) if t == a]
            wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
            b_a = wins / (len(pos) * len(neg))
            values.append((a_b + b_a) / 2.0)
    return sum(values) / len(values)


def test_auroc_perfect_binary():
    proba = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.3, 0.7]])
    assert auroc_ovo_macro(proba, ["a", "a", "b", "b"], ["a", "b"]) == 1.0


def test_auroc_all_ties_is_half():
    proba = np.full((6, 2), 0.5)
    assert auroc_ovo_macro(proba, ["a", "a", "a", "b", "b", "b"], ["a", "b"]) == 0.5


def test_auroc_hand_table_is_0875():
    # Hand-traced three-class table: pair AUCs 1.0, 0.875, 0.75 -> macro 0.875.
    proba = np.array(
        [
            [0.80, 0.10, 0.10],
            [0.60, 0.30, 0.10],
            [0.35, 0.60, 0.05],
            [0.55, 0.40, 0.05],
            [0.30, 0.60, 0.10],
            [0.40, 0.40, 0.20],
        ]
    )
    y = ["a", "a", "b", "b", "c", "c"]
    got = auroc_ovo_macro(proba, y, ["a", "b", "c"])
    assert got == pytest.approx(0.875, abs=1e-12)
    assert oracle_ovo_auroc(proba.tolist(), y, ["a", "b", "c"]) == pytest.approx(0.875, abs=1e-12)


def test_auroc_matches_oracle_random_instances():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(6, 40))
        proba = rng.dirichlet(np.ones(3), size=n)
        y = [np.random.default_rng(int(rng.integers(0, 10**6))).choice(["a", "b", "c"]) for _ in range(n)]
        while len(set(y)) < 2:
            y[0] = "a" if y[0] != "a" else "b"
        got = auroc_ovo_macro(proba, y, ["a", "b", "c"])
        want = oracle_ovo_auroc(proba.tolist(), y, ["a", "b", "c"])
        assert got == pytest.approx(want, abs=1e-12)


def test_auroc_binary_equals_mann_whitney():
    rng = np.random.default_rng(13)
    scores = rng.normal(size=20)
    y = ["a"] * 10 + ["b"] * 10
    proba = np.column_stack([scores, 1 - scores])
    wins = 0.0
    for p in scores[:10]:
        for q in scores[10:]:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    assert auroc_ovo_macro(proba, y, ["a", "b"]) == pytest.approx(wins / 100.0, abs=1e-12)


def test_auroc_monotone_transform_invariance():
    rng = np.random.default_rng(14)
    scores = rng.normal(size=30)
    proba = np.column_stack([scores, -scores])
    y = [str(x) for x in rng.integers(0, 2, size=30)]
    proba2 = np.column_stack([np.exp(scores) + 3, -np.exp(scores)])
    a1 = auroc_ovo_macro(proba, y, ["0", "1"])
    a2 = auroc_ovo_macro(proba2, y, ["0", "1"])
    assert a1 == pytest.approx(a2, abs=1e-12)


def test_auroc_pair_with_absent_class_skipped():
    proba = np.array([[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.3, 0.6, 0.1], [0.6, 0.3, 0.1]])
    y = ["a", "b", "b", "a"]
    got = auroc_ovo_macro(proba, y, ["a", "b", "c"])
    assert got == 1.0
    with pytest.raises(DataError):
        auroc_ovo_macro(np.array([[1.0, 0.0]]), ["a"], ["a", "b"])


def test_confusion_matrix_examples():
    cm = confusion_matrix(["a", "b", "a", "b"], ["a", "b", "a", "b"], ["a", "b"])
    assert np.array_equal(cm.counts, [[2, 0], [0, 2]])
    assert cm.accuracy() == 1.0
    cm = confusion_matrix(["a", "b", "a"], ["b", "b", "b"], ["a", "b"])
    assert np.array_equal(cm.counts, [[0, 2], [0, 1]])
    cm = confusion_matrix(["a", "a", "b", "c"], ["a", "b", "b", "a"], ["a", "b", "c"])
    assert np.array_equal(cm.counts, [[1, 1, 0], [0, 1, 0], [1, 0, 0]])
    with pytest.raises(DataError):
        confusion_matrix(["z"], ["a"], ["a", "b"])


def _separable_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] > 0).astype(int)
    X[:, 0] += np.where(y == 1, 2.0, -2.0)
    return X, y


def test_reference_ensemble_separable_training_accuracy():
    X, y = _separable_data()
    model = fit_reference_ensemble(X, y, seed=0)
    proba = model.predict_proba(X)
    assert np.array_equal(np.argmax(proba, axis=1), y)


def test_reference_ensemble_deterministic():
    X, y = _separable_data(seed=3)
    p1 = fit_reference_ensemble(X, y, seed=5).predict_proba(X)
    p2 = fit_reference_ensemble(X, y, seed=5).predict_proba(X)
    assert np.array_equal(p1, p2)


def test_probability_rows_sum_to_one():
    X, y = _separable_data(seed=4)
    model = fit_reference_ensemble(X, y, seed=1)
    proba = model.predict_proba(np.random.default_rng(0).normal(size=(25, 2)))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)


def test_importances_sum_to_one():
    X, y = _separable_data(seed=5)
    model = fit_reference_ensemble(X, y, seed=2)
    imp = model.feature_importances()
    assert imp.shape == (2,)
    assert imp.sum() == pytest.approx(1.0, abs=1e-9)
    assert (imp >= 0).all()


def test_single_class_labels_rejected():
    with pytest.raises(DataError):
        fit_reference_ensemble(np.ones((10, 2)), np.zeros(10, dtype=int), seed=0)


def test_predict_proba_empty_and_mismatch():
    X, y = _separable_data(seed=6)
    model = fit_reference_ensemble(X, y, seed=0)
    assert model.predict_proba(np.zeros((0, 2))).shape == (0, 2)
    with pytest.raises(DataError):
        model.predict_proba(np.zeros((3, 5)))


def test_majority_baseline():
    model = MajorityClassBaseline(2).fit(np.zeros((4, 3)), np.array([0, 0, 0, 1]), seed=0)
    proba = model.predict_proba(np.zeros((2, 3)))
    np.testing.assert_allclose(proba, [[0.75, 0.25], [0.75, 0.25]])
    assert model.feature_importances().sum() == pytest.approx(1.0)


def _planted_table(seed, n=120, informative=2, noise=8):
    """Labels depend only on the first two columns."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, informative + noise))
    score = X[:, 0] + 1.5 * X[:, 1]
    labels = tuple("pos" if s > 0 else "neg" for s in score)
    names = tuple([f"inf{i}" for i in range(informative)] + [f"noise{i}" for i in range(noise)])
    table = FeatureTable(tuple(f"w{i}" for i in range(n)), names, X)
    return table, labels


def test_rfe_recovers_planted_columns():
    table, labels = _planted_table(seed=0)
    train = tuple(range(0, 96))
    val = tuple(range(96, 120))
    selected, model, report = rfe_select(table, labels, train, val, target=2, seed=0)
    assert set(selected) == {"inf0", "inf1"}
    assert report.auroc > 0.8


def test_rfe_target_equals_d_single_fit():
    table, labels = _planted_table(seed=1, n=60, noise=3)
    selected, _, report = rfe_select(table, labels, range(40), range(40, 60), target=5, seed=0)
    assert set(selected) == set(table.column_names)
    assert report.target_count == 5


def test_rfe_matches_exhaustive_single_column_search():
    # With one clearly informative column, RFE down to t=1 finds the same
    # column as brute force over all single-column fits.
    rng = np.random.default_rng(7)
    n = 80
    X = rng.normal(size=(n, 3))
    labels = tuple("a" if x > 0 else "b" for x in X[:, 1])
    table = FeatureTable(tuple(f"w{i}" for i in range(n)), ("c0", "c1", "c2"), X)
    train, val = tuple(range(60)), tuple(range(60, 80))
    selected, _, _ = rfe_select(table, labels, train, val, target=1, seed=3)

    best_name, best_auc = None, -1.0
    for name in table.column_names:
        sub = FeatureTable(table.window_ids, (name,), table.values[:, [table.column_names.index(name)]])
        _, _, rep = rfe_select(sub, labels, train, val, target=1, seed=3)
        if rep.auroc > best_auc:
            best_name, best_auc = name, rep.auroc
    assert selected == (best_name,)


def test_rfe_deterministic():
    table, labels = _planted_table(seed=2)
    args = (table, labels, tuple(range(90)), tuple(range(90, 120)))
    s1 = rfe_select(*args, target=3, seed=11)
    s2 = rfe_select(*args, target=3, seed=11)
    assert s1[0] == s2[0]
    assert s1[2].auroc == s2[2].auroc


def test_rfe_bad_target():
    table, labels = _planted_table(seed=3, n=40)
    with pytest.raises(DataError):
        rfe_select(table, labels, range(30), range(30, 40), target=0, seed=0)
    with pytest.raises(DataError):
        rfe_select(table, labels, range(30), range(30, 40), target=99, seed=0)


def test_assess_iteration_best_update_rules():
    from featloom.core import IterationState
    from featloom.evaluator import assess_iteration

    table, labels = _planted_table(seed=4, n=80, noise=4)
    train, val = tuple(range(60)), tuple(range(60, 80))
    state = IterationState(
        candidates={}, table=table, stride=1, iteration=0, max_iterations=3, rng_seed=0
    )
    # first assessment: best set unconditionally
    state, report, improved = assess_iteration(state, labels, train, val, seed=0, grid=(4,))
    assert improved and state.best_auroc == report.auroc
    first = state.best_auroc

    # artificially raise the bar: a weaker re-assessment must not replace it
    state.best_auroc = 1.0
    state, report2, improved2 = assess_iteration(state, labels, train, val, seed=0, grid=(4,))
    assert not improved2
    assert state.best_auroc == 1.0

    # equal AUROC is not an improvement (strict inequality)
    state.best_auroc = report2.auroc
    state, report3, improved3 = assess_iteration(state, labels, train, val, seed=0, grid=(4,))
    assert report3.auroc == report2.auroc and not improved3
    assert first > 0.5


def test_assess_iteration_grid_fallback_small_table():
    from featloom.core import IterationState
    from featloom.evaluator import assess_iteration

    table, labels = _planted_table(seed=5, n=60, informative=2, noise=1)
    state = IterationState(
        candidates={}, table=table, stride=1, iteration=0, max_iterations=1, rng_seed=0
    )
    # grid entries all exceed d=3, so assessment falls back to t=d
    state, report, _ = assess_iteration(
        state, labels, tuple(range(45)), tuple(range(45, 60)), seed=1, grid=(8, 16)
    )
    assert report.target_count == 3
    assert set(report.selected) == set(table.column_names)


def test_model_blob_roundtrip():
    X, y = _separable_data(seed=8)
    model = fit_reference_ensemble(X, y, seed=0)
    blob = serialize_model(model, ("a", "b"), ("neg", "pos"))
    payload = deserialize_model(blob)
    assert payload["selected"] == ("a", "b")
    np.testing.assert_array_equal(payload["model"].predict_proba(X), model.predict_proba(X))
    with pytest.raises(DataError):
        deserialize_model(serialize_model(model, (), ())[:-4] + b"XXXX")

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphlaunder.errors import DimensionMismatch, EmptyDataset
from graphlaunder.trees import (DecisionTree, EnsembleKind, TreeEnsemble, decompose_contributions, fit_ensemble,
                                fit_ert, fit_gbt, fit_rf, fit_tree, predict_ensemble, predict_proba, raw_score)


def _xor(n=30, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    return X, ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)


def _oracle_tree(X, y, rows=None):
    """Recursive partition with exact rational Gini; returns a predict(x) closure."""
    rows = list(range(len(X))) if rows is None else rows
    labels = [int(y[r]) for r in rows]
    counts = [labels.count(c) for c in (0, 1)]
    if min(counts) == 0:
        return lambda x: counts[1] / len(rows)
    best = None
    for f in range(X.shape[1]):
        vals = sorted({float(X[r, f]) for r in rows})
        for a, b in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (a + b)
            L = [r for r in rows if X[r, f] <= thr]
            R = [r for r in rows if X[r, f] > thr]
            score = Fraction(0)
            for part in (L, R):
                c1 = sum(int(y[r]) for r in part)
                c0 = len(part) - c1
                score += len(part) - Fraction(c0 * c0 + c1 * c1, len(part))
            if best is None or score < best[0]:
                best = (score, f, thr, L, R)
    if best is None:
        return lambda x: counts[1] / len(rows)
    _, f, thr, L, R = best
    left, right = _oracle_tree(X, y, L), _oracle_tree(X, y, R)
    return lambda x: left(x) if x[f] <= thr else right(x)


def test_separable_pair_single_split():
    t = fit_tree(np.array([[0.0], [1.0]]), [0, 1], max_depth=1)
    assert t.n_nodes == 3 and t.feature[0] == 0
    assert predict_proba(TreeEnsemble([t], "random_forest", n_features=1), [[0.0], [1.0]]).tolist() == [0.0, 1.0]


def test_constant_labels_single_leaf():
    t = fit_tree(np.random.default_rng(0).normal(size=(10, 3)), np.ones(10, int))
    assert t.n_nodes == 1 and t.depth == 0


def test_xor_matches_oracle():
    X, y = _xor()
    t = fit_tree(X, y)
    oracle = _oracle_tree(X, y)
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 41)), -1).reshape(-1, 2)
    pts = np.vstack([X, grid])
    ours = t.predict_value(pts)[:, 1]
    assert (ours[:len(X)] == y).all()
    np.testing.assert_array_equal(ours, [oracle(p) for p in pts])


def _leaf_boxes(t):
    """Per-leaf list of (feature, threshold, goes_left) constraints from its root path."""
    boxes, stack = {}, [(0, [])]
    while stack:
        node, path = stack.pop()
        if t.feature[node] < 0:
            boxes[node] = path
            continue
        f, thr = t.feature[node], t.threshold[node]
        stack.append((t.left[node], path + [(f, thr, True)]))
        stack.append((t.right[node], path + [(f, thr, False)]))
    return boxes


def test_routing_reaches_one_leaf_and_leaves_normalised():
    X, y = _xor(60, 3)
    t = fit_tree(X, y, max_depth=4)
    assert np.allclose(t.value.sum(axis=1), 1.0, atol=1e-12)
    grid = np.stack(np.meshgrid(np.linspace(-1.5, 1.5, 61), np.linspace(-1.5, 1.5, 61)), -1).reshape(-1, 2)
    leaves = t.apply(grid)
    boxes = _leaf_boxes(t)
    for p, leaf in zip(grid, leaves):
        inside = [n for n, path in boxes.items()
                  if all((p[f] <= thr) == left for f, thr, left in path)]
        assert inside == [leaf]


def test_monotone_root_feature():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 4))
    t = fit_tree(X, (X[:, 0] > 0).astype(int))
    assert t.feature[0] == 0


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        fit_tree(np.empty((0, 2)), [])
    with pytest.raises(EmptyDataset):
        fit_rf(np.empty((0, 2)), [], n_trees=2)


def test_identical_trees_forest_equals_tree():
    X, y = _xor(40, 2)
    t = fit_tree(X, y, max_depth=3)
    one = TreeEnsemble([t], "random_forest", n_features=2)
    many = TreeEnsemble([t] * 5, "random_forest", n_features=2)
    np.testing.assert_array_equal(predict_proba(one, X), predict_proba(many, X))


def test_zero_tree_gbt_is_prior():
    m = TreeEnsemble([], "gradient_boosted", base_score=-1.3, learning_rate=0.3, n_features=2)
    assert predict_ensemble(m, np.zeros(2)) == pytest.approx(1 / (1 + np.exp(1.3)), rel=1e-15)


def test_rf_hand_averaged_leaves():
    X, y = _xor(50, 4)
    m = fit_rf(X, y, n_trees=5, max_depth=3, seed=2)
    x = np.array([0.3, -0.4])
    hand = []
    for t in m.trees:
        node = 0
        while t.feature[node] >= 0:
            node = t.left[node] if x[t.feature[node]] <= t.threshold[node] else t.right[node]
        hand.append(t.value[node, 1])
    assert predict_ensemble(m, x) == pytest.approx(sum(hand) / 5, abs=1e-15)


def test_rf_invariant_to_tree_order():
    X, y = _xor(50, 5)
    m = fit_rf(X, y, n_trees=6, seed=1)
    r = TreeEnsemble(m.trees[::-1], m.kind, n_features=2)
    np.testing.assert_allclose(predict_proba(m, X), predict_proba(r, X), rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", ["rf", "ert", "gbt"])
def test_separable_blobs_fit_perfectly(kind):
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-2, 0.5, (40, 3)), rng.normal(2, 0.5, (40, 3))])
    y = np.r_[np.zeros(40, int), np.ones(40, int)]
    m = fit_ensemble(kind, X, y, n_trees=50, max_depth=2, seed=1)
    assert ((predict_proba(m, X) >= 0.5) == y).all()


def test_gbt_loss_strictly_decreasing():
    X, y = _xor(200, 6)
    X = np.hstack([X, np.random.default_rng(0).normal(size=(200, 2))])
    m = fit_gbt(X, y, n_trees=10, max_depth=3, seed=0)
    h = m.loss_history
    assert all(b < a for a, b in zip(h[:10], h[1:10]))


@pytest.mark.parametrize("kind", ["rf", "ert", "gbt"])
def test_seed_determinism(kind):
    X, y = _xor(60, 7)
    a = predict_proba(fit_ensemble(kind, X, y, n_trees=8, seed=3), X)
    b = predict_proba(fit_ensemble(kind, X, y, n_trees=8, seed=3, workers=3), X)
    np.testing.assert_array_equal(a, b)


def test_dimension_mismatch():
    X, y = _xor()
    m = fit_rf(X, y, n_trees=2)
    with pytest.raises(DimensionMismatch):
        predict_ensemble(m, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        decompose_contributions(m, np.zeros(3))


def test_single_leaf_contributions_zero():
    m = TreeEnsemble([fit_tree(np.zeros((5, 3)), np.ones(5, int))], "random_forest", n_features=3)
    d = decompose_contributions(m, np.array([1.0, 2.0, 3.0]))
    assert (d.contributions == 0).all() and d.prediction == d.c_full


def test_single_split_feature_three():
    X = np.zeros((6, 5))
    X[:, 3] = np.arange(6)
    t = fit_tree(X, [0, 0, 0, 1, 1, 1], max_depth=1)
    d = decompose_contributions(TreeEnsemble([t], "random_forest", n_features=5), X[4])
    assert np.flatnonzero(d.contributions).tolist() == [3]


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["rf", "ert", "gbt"]), st.integers(0, 2**16))
def test_contribution_identity_property(kind, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 5))
    y = (X[:, 0] + X[:, 1] * X[:, 2] > 0).astype(int)
    m = fit_ensemble(kind, X, y, n_trees=5, max_depth=4, seed=seed)
    pts = rng.normal(size=(10, 5))
    for d, r in zip(decompose_contributions(m, pts), raw_score(m, pts)):
        assert abs(d.prediction - r) < 1e-12
        assert abs(d.residual) < 1e-9


def test_gbt_c_full_is_base_plus_roots():
    X, y = _xor(80, 8)
    m = fit_gbt(X, y, n_trees=4)
    d = decompose_contributions(m, X[0])
    assert d.c_full == pytest.approx(m.base_score + m.learning_rate * sum(t.value[0, 0] for t in m.trees), abs=1e-15)


def test_ensemble_roundtrip(tmp_path):
    X, y = _xor(50, 9)
    for kind in ("rf", "gbt"):
        m = fit_ensemble(kind, X, y, n_trees=3, seed=0)
        m.save(tmp_path / "m.json")
        np.testing.assert_array_equal(predict_proba(TreeEnsemble.load(tmp_path / "m.json"), X), predict_proba(m, X))

"""Decision trees, random forests, extremely randomised trees and gradient boosting.

Trees are stored as flat arrays.  Every node (internal or leaf) keeps its
value: the class-probability vector for classification trees or the mean
target for regression trees.  Keeping internal values is what makes the
per-feature contribution decomposition possible: walking a sample from the
root to its leaf, each split hands the change ``value[child] - value[parent]``
to the feature it split on, so the leaf value equals the root value plus the
sum of those changes.

Samples with ``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyDataset


class SplitMode(str, enum.Enum):
    EXHAUSTIVE = "exhaustive"
    RANDOM_THRESHOLD = "random_threshold"


class EnsembleKind(str, enum.Enum):
    RANDOM_FOREST = "random_forest"
    EXTRA_TREES = "extra_trees"
    GRADIENT_BOOSTED = "gradient_boosted"


@dataclass
class DecisionTree:
    feature: np.ndarray      # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray         # -1 at leaves
    right: np.ndarray
    value: np.ndarray        # (n_nodes, n_outputs)
    n_samples: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always come after their parent
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = _check_X(X, self.n_features)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": [float(t) for t in self.threshold],
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": [[float(v) for v in row] for row in self.value],
                "n_samples": self.n_samples.tolist(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
                   np.array(d["n_samples"], dtype=np.int64), int(d["n_features"]))


def _check_X(X, n_features=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"input has {X.shape[1]} features, model was trained on {n_features}")
    return X


def _best_split_exhaustive(Xn, stats, features, min_leaf, regression):
    """Lowest-impurity ``(feature, threshold)``; ties go to the lower feature, then lower threshold."""
    n = len(Xn)
    best = (np.inf, -1, 0.0)
    for f in features:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if len(valid) == 0:
            continue
        n_left = valid + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        valid, n_left = valid[ok], n_left[ok]
        if len(valid) == 0:
            continue
        csum = np.cumsum(stats[order], axis=0)
        left = csum[valid]
        right = csum[-1] - left
        n_right = n - n_left
        if regression:
            # sum of squared errors minus the constant sum of y^2
            score = -(left[:, 0] ** 2 / n_left + right[:, 0] ** 2 / n_right)
        else:
            # weighted Gini: n_c - sum_k count_k^2 / n_c per child
            score = (n_left - (left ** 2).sum(axis=1) / n_left) + (n_right - (right ** 2).sum(axis=1) / n_right)
        i = int(np.argmin(score))
        if score[i] < best[0]:
            best = (score[i], int(f), 0.5 * (xs[valid[i]] + xs[valid[i] + 1]))
    return best


def _best_split_random(Xn, stats, features, min_leaf, regression, rng, k):
    """Uniform threshold on each of ``k`` randomly chosen non-constant features; best impurity wins."""
    n = len(Xn)
    lo, hi = Xn.min(axis=0), Xn.max(axis=0)
    cands = [f for f in rng.permutation(features) if hi[f] > lo[f]][:k]
    best = (np.inf, -1, 0.0)
    for f in sorted(int(c) for c in cands):
        thr = float(rng.uniform(lo[f], hi[f]))
        if not lo[f] <= thr < hi[f]:
            thr = lo[f]
        go = Xn[:, f] <= thr
        nl = int(go.sum())
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        left, right = stats[go].sum(axis=0), stats[~go].sum(axis=0)
        if regression:
            score = -(left[0] ** 2 / nl + right[0] ** 2 / nr)
        else:
            score = (nl - (left ** 2).sum() / nl) + (nr - (right ** 2).sum() / nr)
        if score < best[0]:
            best = (score, f, thr)
    return best


def _grow(X, stats, max_depth, min_samples_leaf, split_mode, feature_subsample, rng, regression, n_outputs):
    n_features = X.shape[1]
    feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

    def node_value(idx):
        s = stats[idx].sum(axis=0)
        return s / len(idx)

    def add(idx):
        feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
        value.append(node_value(idx)); n_samples.append(len(idx))
        return len(feature) - 1

    root = add(np.arange(len(X)))
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        nid, idx, depth = stack.pop(0)
        if max_depth is not None and depth >= max_depth:
            continue
        if len(idx) < 2 * min_samples_leaf:
            continue
        sub = stats[idx]
        pure = np.all(sub == sub[0]) if regression else np.count_nonzero(sub.sum(axis=0)) <= 1
        if pure:
            continue
        if split_mode is SplitMode.EXHAUSTIVE:
            feats = np.arange(n_features)
            if feature_subsample < n_features:
                feats = np.sort(rng.choice(n_features, size=feature_subsample, replace=False))
            _, f, thr = _best_split_exhaustive(X[idx], sub, feats, min_samples_leaf, regression)
        else:
            _, f, thr = _best_split_random(X[idx], sub, np.arange(n_features), min_samples_leaf,
                                           regression, rng, feature_subsample)
        if f < 0:
            continue
        go = X[idx, f] <= thr
        li, ri = idx[go], idx[~go]
        feature[nid], threshold[nid] = f, thr
        left[nid] = add(li)
        right[nid] = add(ri)
        stack.append((left[nid], li, depth + 1))
        stack.append((right[nid], ri, depth + 1))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(value, dtype=np.float64).reshape(len(feature), n_outputs),
                        np.array(n_samples, dtype=np.int64), n_features)


def fit_tree(X, y, max_depth: int | None = None, min_samples_leaf: int = 1, split_mode="exhaustive",
             feature_subsample: int | None = None, seed: int = 0, n_classes: int | None = None) -> DecisionTree:
    """Gini classification tree on integer labels ``0..n_classes-1``; leaves hold class frequencies."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64).reshape(-1)
    if X.ndim != 2 or len(X) == 0 or len(y) != len(X):
        raise EmptyDataset("need a non-empty sample matrix with one label per row")
    if y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    k = max(int(y.max()) + 1, 2) if n_classes is None else n_classes
    stats = np.eye(k)[y]
    m = X.shape[1] if feature_subsample is None else max(1, min(feature_subsample, X.shape[1]))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _grow(X, stats, max_depth, max(1, min_samples_leaf), SplitMode(split_mode), m, rng, False, k)


def fit_regression_tree(X, target, max_depth: int | None = 3, min_samples_leaf: int = 1, split_mode="exhaustive",
                        feature_subsample: int | None = None, seed=0) -> DecisionTree:
    """Squared-error regression tree; node values are target means."""
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if X.ndim != 2 or len(X) == 0 or len(t) != len(X):
        raise EmptyDataset("need a non-empty sample matrix with one target per row")
    m = X.shape[1] if feature_subsample is None else max(1, min(feature_subsample, X.shape[1]))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _grow(X, t, max_depth, max(1, min_samples_leaf), SplitMode(split_mode), m, rng, True, 1)


@dataclass
class TreeEnsemble:
    trees: list[DecisionTree]
    kind: EnsembleKind
    base_score: float = 0.0
    learning_rate: float = 1.0
    n_features: int = 0
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.kind = EnsembleKind(self.kind)
        if not self.trees and self.kind is not EnsembleKind.GRADIENT_BOOSTED:
            raise ValueError("a forest needs at least one tree")

    def to_dict(self) -> dict:
        return {"format": "graphlaunder.trees", "version": 1, "kind": self.kind.value,
                "base_score": self.base_score, "learning_rate": self.learning_rate,
                "n_features": self.n_features, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("format") != "graphlaunder.trees":
            raise ValueError("not a tree-ensemble file")
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], d["kind"], float(d["base_score"]),
                   float(d["learning_rate"]), int(d["n_features"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _tree_seeds(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _check_fit_input(X, y, n_trees):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64).reshape(-1)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise EmptyDataset("need a non-empty sample matrix with one label per row")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    return X, y


def _sqrt_features(m: int) -> int:
    return max(1, int(np.sqrt(m)))


def fit_rf(X, y, n_trees: int = 100, max_depth: int | None = None, min_samples_leaf: int = 1,
           feature_subsample: int | None = None, seed: int = 0, workers: int = 1) -> TreeEnsemble:
    """Bootstrap rows per tree and draw ``sqrt(M)`` candidate features per split."""
    X, y = _check_fit_input(X, y, n_trees)
    m = _sqrt_features(X.shape[1]) if feature_subsample is None else feature_subsample
    k = max(int(y.max()) + 1, 2)

    def one(rng):
        rows = rng.integers(0, len(X), size=len(X))
        return fit_tree(X[rows], y[rows], max_depth, min_samples_leaf, "exhaustive", m, rng, k)

    return TreeEnsemble(_map(one, _tree_seeds(seed, n_trees), workers), EnsembleKind.RANDOM_FOREST,
                        n_features=X.shape[1])


def fit_ert(X, y, n_trees: int = 100, max_depth: int | None = None, min_samples_leaf: int = 1,
            feature_subsample: int | None = None, seed: int = 0, workers: int = 1) -> TreeEnsemble:
    """All rows per tree, uniform random thresholds over ``sqrt(M)`` candidate features per split."""
    X, y = _check_fit_input(X, y, n_trees)
    m = _sqrt_features(X.shape[1]) if feature_subsample is None else feature_subsample
    k = max(int(y.max()) + 1, 2)

    def one(rng):
        return fit_tree(X, y, max_depth, min_samples_leaf, "random_threshold", m, rng, k)

    return TreeEnsemble(_map(one, _tree_seeds(seed, n_trees), workers), EnsembleKind.EXTRA_TREES,
                        n_features=X.shape[1])


def logistic_loss(y, raw) -> float:
    """Mean binary log-loss of raw scores (log-odds)."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def fit_gbt(X, y, n_trees: int = 100, max_depth: int | None = 3, min_samples_leaf: int = 1,
            learning_rate: float = 0.3, feature_subsample: int | None = None, seed: int = 0,
            workers: int = 1) -> TreeEnsemble:
    """Stagewise regression trees on the logistic-loss negative gradient ``y - p``.

    Starts from the prior log-odds; each stage adds ``learning_rate`` times the
    tree's leaf means.  ``loss_history`` holds the training loss after every stage.
    ``workers`` is accepted for a uniform signature; stages are sequential.
    """
    X, y = _check_fit_input(X, y, n_trees)
    if set(np.unique(y).tolist()) - {0, 1}:
        raise ValueError("gradient boosting here is binary; labels must be 0/1")
    prior = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    base = float(np.log(prior / (1 - prior)))
    raw = np.full(len(X), base)
    trees, history = [], []
    for rng in _tree_seeds(seed, n_trees):
        resid = y - _sigmoid(raw)
        tree = fit_regression_tree(X, resid, max_depth, min_samples_leaf, "exhaustive", feature_subsample, rng)
        raw = raw + learning_rate * tree.predict_value(X)[:, 0]
        trees.append(tree)
        history.append(logistic_loss(y, raw))
    return TreeEnsemble(trees, EnsembleKind.GRADIENT_BOOSTED, base, learning_rate, X.shape[1], history)


def raw_score(model: TreeEnsemble, X) -> np.ndarray:
    """Pre-link output: mean class-1 probability for forests, log-odds for boosting."""
    X = _check_X(X, model.n_features)
    if model.kind is EnsembleKind.GRADIENT_BOOSTED:
        out = np.full(len(X), model.base_score)
        for t in model.trees:
            out += model.learning_rate * t.predict_value(X)[:, 0]
        return out
    return np.mean([t.predict_value(X)[:, 1] for t in model.trees], axis=0)


def predict_proba(model: TreeEnsemble, X) -> np.ndarray:
    """Probability of the illicit class for every row of ``X``."""
    r = raw_score(model, X)
    return _sigmoid(r) if model.kind is EnsembleKind.GRADIENT_BOOSTED else r


def predict_ensemble(model: TreeEnsemble, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    p = predict_proba(model, x)
    return float(p[0]) if x.ndim == 1 else p


@dataclass
class ContributionDecomposition:
    c_full: float
    contributions: np.ndarray
    prediction: float

    @property
    def residual(self) -> float:
        return self.prediction - self.c_full - float(self.contributions.sum())


def _tree_contributions(tree: DecisionTree, X: np.ndarray, col: int):
    n = len(X)
    contrib = np.zeros((n, tree.n_features))
    node = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(tree.feature[node] >= 0)
    while len(active):
        nd = node[active]
        f = tree.feature[nd]
        child = np.where(X[active, f] <= tree.threshold[nd], tree.left[nd], tree.right[nd])
        np.add.at(contrib, (active, f), tree.value[child, col] - tree.value[nd, col])
        node[active] = child
        active = active[tree.feature[child] >= 0]
    return tree.value[0, col], contrib, tree.value[node, col]


def decompose_contributions(model: TreeEnsemble, x) -> ContributionDecomposition | list[ContributionDecomposition]:
    """Split the pre-link prediction into root-value average plus per-feature contributions.

    Forests: values are class-1 probabilities averaged over trees.  Boosting:
    the log-odds, with ``c_full = base_score + lr * sum(root values)``.
    """
    xa = np.asarray(x, dtype=np.float64)
    X = _check_X(xa, model.n_features)
    boosted = model.kind is EnsembleKind.GRADIENT_BOOSTED
    col = 0 if boosted else 1
    c_full = np.full(len(X), model.base_score if boosted else 0.0)
    contrib = np.zeros((len(X), model.n_features))
    pred = np.full(len(X), model.base_score if boosted else 0.0)
    scale = model.learning_rate if boosted else 1.0 / len(model.trees)
    for t in model.trees:
        root, c, leaf = _tree_contributions(t, X, col)
        c_full += scale * root
        contrib += scale * c
        pred += scale * leaf
    out = [ContributionDecomposition(float(c_full[i]), contrib[i], float(pred[i])) for i in range(len(X))]
    return out[0] if xa.ndim == 1 else out


def fit_ensemble(kind, X, y, n_trees: int = 100, max_depth: int | None = None, seed: int = 0, workers: int = 1,
                 **kw) -> TreeEnsemble:
    """Dispatch on ``kind`` (``rf``/``ert``/``gbt`` or the full enum names)."""
    aliases = {"rf": EnsembleKind.RANDOM_FOREST, "ert": EnsembleKind.EXTRA_TREES, "gbt": EnsembleKind.GRADIENT_BOOSTED}
    k = aliases.get(kind, None) or EnsembleKind(kind)
    fn = {EnsembleKind.RANDOM_FOREST: fit_rf, EnsembleKind.EXTRA_TREES: fit_ert,
          EnsembleKind.GRADIENT_BOOSTED: fit_gbt}[k]
    if k is EnsembleKind.GRADIENT_BOOSTED and max_depth is None:
        max_depth = 3
    return fn(X, y, n_trees=n_trees, max_depth=max_depth, seed=seed, workers=workers, **kw)

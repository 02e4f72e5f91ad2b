"""Cross-validation, random search and the two holdout experiment protocols.

Pipeline protocol: hold out a stratified node fraction, fit an embedder on
the reduced graph, fit a tree ensemble on the reduced graph's labelled
embeddings, re-insert the held-out nodes and score them.

End-to-end protocol: same holdout, but a GCN is trained directly on the
reduced graph's labelled mask and then run over the full graph with frozen
weights.

Nodes with unknown labels stay in the graph structure but are never used as
training targets or evaluation samples.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import AttentionLayer, DgtConfig, dgt_node_embeddings
from .embedding import EmbeddingMatrix
from .errors import EmptyEvaluation, TooFewSamples
from .gcn import default_class_weights, gcn_forward, normalize_adjacency, train_gcn
from .graph import ILLICIT, UNKNOWN, TransactionGraph, holdout_split, node_feature_matrix
from .metrics import MetricsReport, aggregate_reports, compute_metrics
from .sage import SageModel, embed_graph, neighbor_lists, sample_negative_pairs, train_sage_unsup
from .skipgram import Activation, attri_embed_forward, train_attri2vec, train_skipgram
from .trees import TreeEnsemble, fit_ensemble, predict_proba
from .walks import biased_walks, window_pairs


class Embedder(str, enum.Enum):
    NODE2VEC = "node2vec"
    ATTRI2VEC = "attri2vec"
    SAGE = "sage"
    DGT = "dgt"


class Classifier(str, enum.Enum):
    RF = "rf"
    ERT = "ert"
    GBT = "gbt"


class E2eModel(str, enum.Enum):
    GCN = "gcn"
    SKIP_GCN = "skip_gcn"


class FeatureSource(str, enum.Enum):
    RAW = "raw"
    EMBEDDING = "embedding"
    CONCAT = "concat"


@dataclass
class ExperimentConfig:
    # embedding
    d: int = 32
    walk_length: int = 20
    walks_per_node: int = 5
    window: int = 3
    p: float = 1.0
    q: float = 1.0
    negatives: int = 5
    max_pairs: int = 40000
    embed_epochs: int = 3
    embed_lr: float = 0.01
    sage_layers: int = 2
    sage_activation: str = "linear"
    fanouts: tuple = (10, 5)
    dgt_layers: int = 2
    dgt_tau: int = 3
    dgt_context: int = 5
    dgt_edges_per_node: int = 3
    # classifier
    n_trees: int = 100
    max_depth: int | None = None
    gbt_learning_rate: float = 0.3
    include_features: bool = False
    # end-to-end
    hidden: int = 128
    gcn_lr: float = 0.05
    gcn_epochs: int = 200
    gcn_batch_size: int | None = None
    e2e_embedder: str = "sage"
    e2e_d: int = 16
    class_weight_cap: float = 50.0
    threshold: float = 0.5
    workers: int = 1

    def __post_init__(self):
        self.fanouts = tuple(int(f) for f in self.fanouts)
        if len(self.fanouts) != self.sage_layers:
            self.fanouts = tuple((list(self.fanouts) + [self.fanouts[-1]] * self.sage_layers)[:self.sage_layers])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fanouts"] = list(self.fanouts)
        return d


# -- features ---------------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean, sd = X.mean(axis=0), X.std(axis=0)
        # constant columns can show rounding-level spread; leave those unscaled
        const = sd <= 1e-9 * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(const, 1.0, sd))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


def binary_labels(graph: TransactionGraph) -> tuple[np.ndarray, np.ndarray]:
    """Positions of labelled nodes and their 0/1 illicit indicator."""
    pos = np.flatnonzero(graph.labels != UNKNOWN)
    return pos, (graph.labels[pos] == ILLICIT).astype(np.int64)


# -- embedders ----------------------------------------------------------------

class FittedEmbedder:
    """An embedder trained on one graph that can embed nodes of a larger graph."""

    kind: Embedder

    def embed(self, graph: TransactionGraph, X: np.ndarray) -> EmbeddingMatrix:
        raise NotImplementedError


@dataclass
class Node2vecEmbedder(FittedEmbedder):
    vectors: EmbeddingMatrix
    kind: Embedder = Embedder.NODE2VEC

    def embed(self, graph, X=None):
        # unseen nodes: mean of the trained vectors of their first neighbours
        out = np.zeros((graph.n_nodes, self.vectors.dim))
        nbrs = None
        for i, v in enumerate(graph.node_ids.tolist()):
            if v in self.vectors:
                out[i] = self.vectors[v]
                continue
            if nbrs is None:
                nbrs = neighbor_lists(graph)
            known = [int(graph.node_ids[j]) for j in nbrs[i] if int(graph.node_ids[j]) in self.vectors]
            if known:
                out[i] = self.vectors.lookup(known).mean(axis=0)
        return EmbeddingMatrix(graph.node_ids, out)


@dataclass
class Attri2vecEmbedder(FittedEmbedder):
    W_in: np.ndarray
    activation: Activation
    kind: Embedder = Embedder.ATTRI2VEC

    def embed(self, graph, X):
        return EmbeddingMatrix(graph.node_ids, attri_embed_forward(X, self.W_in, self.activation))


@dataclass
class SageEmbedder(FittedEmbedder):
    model: SageModel
    kind: Embedder = Embedder.SAGE

    def embed(self, graph, X):
        return embed_graph(self.model, graph, X)


@dataclass
class DgtEmbedder(FittedEmbedder):
    config: DgtConfig
    layers: list
    seed: int
    edges_per_node: int
    kind: Embedder = Embedder.DGT

    def embed(self, graph, X=None):
        return dgt_node_embeddings(graph, self.config, self.layers, self.seed, self.edges_per_node)


@dataclass
class ZeroEmbedder(FittedEmbedder):
    kind: Embedder = Embedder.SAGE

    def embed(self, graph, X=None):
        return EmbeddingMatrix(graph.node_ids, np.zeros((graph.n_nodes, 0)))


def _walk_pairs(graph, cfg: ExperimentConfig, seed: int):
    corpus = biased_walks(graph, cfg.p, cfg.q, cfg.walk_length, cfg.walks_per_node, seed, cfg.workers)
    cen, ctx = window_pairs(corpus, cfg.window)
    if len(cen) > cfg.max_pairs:
        keep = np.sort(np.random.default_rng(seed).choice(len(cen), size=cfg.max_pairs, replace=False))
        cen, ctx = cen[keep], ctx[keep]
    return corpus, cen, ctx


def fit_embedder(kind, graph: TransactionGraph, X: np.ndarray, cfg: ExperimentConfig, seed: int) -> FittedEmbedder:
    kind = Embedder(kind)
    if cfg.d == 0:
        return ZeroEmbedder()
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]
    if kind is Embedder.DGT:
        dcfg = DgtConfig(cfg.dgt_layers, cfg.d, cfg.dgt_tau, cfg.dgt_context)
        rng = np.random.default_rng(seeds[0])
        layers = [AttentionLayer.init(cfg.d, rng) for _ in range(cfg.dgt_layers)]
        return DgtEmbedder(dcfg, layers, seeds[1], cfg.dgt_edges_per_node)
    corpus, cen, ctx = _walk_pairs(graph, cfg, seeds[0])
    if kind is Embedder.NODE2VEC:
        vecs = train_skipgram(corpus, d=cfg.d, window=cfg.window, k=cfg.negatives, epochs=cfg.embed_epochs,
                              seed=seeds[1])
        return Node2vecEmbedder(vecs)
    if kind is Embedder.ATTRI2VEC:
        W, _ = train_attri2vec(graph.replace(features=X), (cen, ctx), d=cfg.d, k=cfg.negatives, lr=cfg.embed_lr,
                               epochs=cfg.embed_epochs, seed=seeds[1])
        return Attri2vecEmbedder(W, Activation.SIGMOID)
    model = SageModel.init(X.shape[1], [cfg.d] * cfg.sage_layers, cfg.fanouts, cfg.sage_activation, seeds[1])
    neg = sample_negative_pairs(graph, cen, cfg.negatives, seeds[2])
    train_sage_unsup(graph, X, (cen, ctx), neg, model, lr=cfg.embed_lr, epochs=cfg.embed_epochs, seed=seeds[2])
    return SageEmbedder(model)


# -- cross-validation and search ------------------------------------------------

@dataclass
class CvResult:
    folds: list[MetricsReport]
    mean: dict
    std: dict
    fold_assignment: np.ndarray = field(repr=False, default=None)


def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        if len(idx) < k:
            raise TooFewSamples(f"class {c} has {len(idx)} samples, fewer than k={k}")
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


def kfold_cv(X, y, trainer, k: int = 5, seed: int = 0, threshold: float = 0.5, workers: int = 1) -> CvResult:
    """Stratified k-fold; ``trainer(X_train, y_train, X_test, fold)`` returns test scores."""
    X = np.asarray(X)
    y = np.asarray(y).astype(np.int64)
    fold = stratified_folds(y, k, seed)

    def run(f):
        te = fold == f
        return compute_metrics(trainer(X[~te], y[~te], X[te], f), y[te], threshold)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            reports = list(ex.map(run, range(k)))
    else:
        reports = [run(f) for f in range(k)]
    mean, std = aggregate_reports(reports)
    return CvResult(reports, mean, std, fold)


DEFAULT_SPACE = {
    "d": [32, 64, 128, 256, 300],
    "layers": [1, 2, 3, 4, 5],
    "lr": [0.001, 0.005, 0.01, 0.05, 0.1],
    "n_trees": [50, 100, 200],
    "max_depth": [2, 3, 4, 6, 8],
}


def sample_config(space: dict, rng: np.random.Generator) -> dict:
    """Lists are sampled uniformly; ``(low, high)`` tuples uniformly on the interval."""
    out = {}
    for key in sorted(space):
        choices = space[key]
        if isinstance(choices, tuple) and len(choices) == 2:
            out[key] = float(rng.uniform(*choices))
        else:
            out[key] = list(choices)[int(rng.integers(len(choices)))]
            if isinstance(out[key], np.generic):
                out[key] = out[key].item()
    return out


@dataclass
class SearchResult:
    best_config: dict
    best: CvResult
    trials: list[tuple[dict, CvResult]]


def random_search(space: dict, budget: int, objective: str, evaluate, seed: int = 0) -> SearchResult:
    """Evaluate ``budget`` uniformly sampled configs; highest mean ``objective`` wins, earliest on ties.

    ``evaluate(config, trial_seed)`` returns a :class:`CvResult` (typically from :func:`kfold_cv`).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    best_i, best_v = 0, -math.inf
    for i in range(budget):
        cfg = sample_config(space, rng)
        res = evaluate(cfg, int(rng.integers(2**31)))
        v = res.mean.get(objective)
        v = -math.inf if v is None or (isinstance(v, float) and math.isnan(v)) else v
        trials.append((cfg, res))
        if v > best_v:
            best_i, best_v = i, v
    return SearchResult(trials[best_i][0], trials[best_i][1], trials)


# -- holdout protocols ------------------------------------------------------

@dataclass
class ExperimentResult:
    report: MetricsReport
    held_out: list[int]
    scores: np.ndarray
    labels: np.ndarray
    model: object = None
    embedder: FittedEmbedder | None = None


def _split(graph, holdout_fraction, seed):
    reduced, held = holdout_split(graph, holdout_fraction, seed)
    held_pos = np.array(sorted(graph.index[v] for v in held), dtype=np.int64)
    held_pos = held_pos[graph.labels[held_pos] != UNKNOWN] if len(held_pos) else held_pos
    if len(held_pos) == 0:
        raise EmptyEvaluation("no labelled nodes were held out")
    return reduced, held_pos


def _features(reduced, full):
    scaler = Standardizer.fit(node_feature_matrix(reduced))
    return scaler.transform(node_feature_matrix(reduced)), scaler.transform(node_feature_matrix(full))


def run_pipeline_experiment(graph: TransactionGraph, embedder, classifier, holdout_fraction: float = 0.2,
                            config: ExperimentConfig | None = None, seed: int = 0, detail: bool = False):
    """Embed, classify and score held-out nodes; returns a :class:`MetricsReport` (or full result)."""
    cfg = config or ExperimentConfig()
    embedder, classifier = Embedder(embedder), Classifier(classifier)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]
    reduced, held_pos = _split(graph, holdout_fraction, seed)
    X_red, X_full = _features(reduced, graph)
    fitted = fit_embedder(embedder, reduced, X_red, cfg, seeds[0])
    E_red = fitted.embed(reduced, X_red).vectors
    E_full = fitted.embed(graph, X_full).vectors
    if cfg.include_features:
        E_red, E_full = np.hstack([X_red, E_red]), np.hstack([X_full, E_full])
    tr_pos, y_tr = binary_labels(reduced)
    kw = {"learning_rate": cfg.gbt_learning_rate} if classifier is Classifier.GBT else {}
    model = fit_ensemble(classifier.value, E_red[tr_pos], y_tr, n_trees=cfg.n_trees, max_depth=cfg.max_depth,
                         seed=seeds[1], workers=cfg.workers, **kw)
    scores = predict_proba(model, E_full[held_pos])
    y_te = (graph.labels[held_pos] == ILLICIT).astype(np.int64)
    report = compute_metrics(scores, y_te, cfg.threshold)
    if detail:
        return ExperimentResult(report, graph.node_ids[held_pos].tolist(), scores, y_te, model, fitted)
    return report


def run_e2e_experiment(graph: TransactionGraph, model, features, holdout_fraction: float = 0.2,
                       config: ExperimentConfig | None = None, seed: int = 0, detail: bool = False):
    """Train a (skip-)GCN on the reduced graph's labelled nodes and score re-inserted held-out nodes."""
    cfg = config or ExperimentConfig()
    model, features = E2eModel(model), FeatureSource(features)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]
    reduced, held_pos = _split(graph, holdout_fraction, seed)
    X_red, X_full = _features(reduced, graph)
    fitted = None
    if features is not FeatureSource.RAW:
        ecfg = ExperimentConfig(**{**cfg.to_dict(), "d": cfg.e2e_d})
        fitted = fit_embedder(cfg.e2e_embedder, reduced, X_red, ecfg, seeds[0])
        E_red = fitted.embed(reduced, X_red).vectors
        E_full = fitted.embed(graph, X_full).vectors
        if E_red.shape[1]:
            sc = Standardizer.fit(E_red)
            E_red, E_full = sc.transform(E_red), sc.transform(E_full)
        if features is FeatureSource.EMBEDDING:
            X_red, X_full = E_red, E_full
        else:
            X_red, X_full = np.hstack([X_red, E_red]), np.hstack([X_full, E_full])
    tr_pos, _ = binary_labels(reduced)
    labels_red = reduced.labels.astype(np.int64)
    cw = default_class_weights(labels_red, tr_pos, cfg.class_weight_cap)
    net = train_gcn(reduced, X_red, labels_red, tr_pos, hidden=cfg.hidden, skip=model is E2eModel.SKIP_GCN,
                    lr=cfg.gcn_lr, epochs=cfg.gcn_epochs, batch_size=cfg.gcn_batch_size, class_weights=cw,
                    seed=seeds[1])
    probs = gcn_forward(X_full, normalize_adjacency(graph), net)
    scores = probs[held_pos]
    y_te = (graph.labels[held_pos] == ILLICIT).astype(np.int64)
    report = compute_metrics(scores, y_te, cfg.threshold)
    if detail:
        return ExperimentResult(report, graph.node_ids[held_pos].tolist(), scores, y_te, net, fitted)
    return report

"""Sample-and-aggregate inductive node embeddings with mean aggregation.

Layer ``l`` computes ``act(h_self @ W_self[l] + mean(h_neighbors) @ W_neigh[l])``.
Neighbors are the distinct in- or out-neighbors of a node (direction is not a
sampling constraint); a node with no neighbors aggregates a zero vector.

Two equivalent evaluation paths exist: :func:`sage_forward` walks an explicit
sampled tree for one node, and :func:`sage_forward_full` evaluates all nodes at
once with (optionally sampled) row-normalized adjacency matrices.  Training
uses the latter with hand-written backpropagation.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .embedding import EmbeddingMatrix
from .errors import DimensionMismatch, MissingFeatures
from .graph import TransactionGraph
from .optim import Adagrad
from .skipgram import log_sigmoid, sigmoid


class SageActivation(str, enum.Enum):
    RELU = "relu"
    LINEAR = "linear"


@dataclass
class SageModel:
    W_self: list[np.ndarray]
    W_neigh: list[np.ndarray]
    fanouts: list[int]
    activation: SageActivation = SageActivation.RELU
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.activation = SageActivation(self.activation)
        if not (len(self.W_self) == len(self.W_neigh) == len(self.fanouts)):
            raise ValueError("layer count must equal len(fanouts)")
        prev = None
        for ws, wn in zip(self.W_self, self.W_neigh):
            if ws.shape != wn.shape or (prev is not None and ws.shape[0] != prev):
                raise DimensionMismatch("layer weight shapes do not chain")
            prev = ws.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.fanouts)

    @property
    def d(self) -> int:
        return self.W_self[-1].shape[1]

    @property
    def in_dim(self) -> int:
        return self.W_self[0].shape[0]

    @classmethod
    def init(cls, in_dim: int, dims, fanouts, activation="relu", seed: int = 0) -> "SageModel":
        """Glorot-uniform weights for layers of widths ``dims``."""
        rng = np.random.default_rng(seed)
        ws, wn = [], []
        prev = in_dim
        for out in dims:
            lim = np.sqrt(6.0 / (prev + out))
            ws.append(rng.uniform(-lim, lim, (prev, out)))
            wn.append(rng.uniform(-lim, lim, (prev, out)))
            prev = out
        return cls(ws, wn, list(fanouts), activation)

    def to_dict(self) -> dict:
        return {
            "format": "graphlaunder.sage", "version": 1,
            "activation": self.activation.value, "fanouts": list(self.fanouts),
            "layers": [{"W_self": _mat(a), "W_neigh": _mat(b)} for a, b in zip(self.W_self, self.W_neigh)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SageModel":
        return cls([_unmat(l["W_self"]) for l in data["layers"]],
                   [_unmat(l["W_neigh"]) for l in data["layers"]],
                   data["fanouts"], data["activation"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SageModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _mat(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "values": [float(x) for x in np.asarray(a).ravel()]}


def _unmat(d: dict) -> np.ndarray:
    return np.array(d["values"], dtype=np.float64).reshape(d["shape"])


def _act(a, activation):
    return np.maximum(a, 0.0) if activation is SageActivation.RELU else a


def _act_grad(a, activation):
    return (a > 0).astype(np.float64) if activation is SageActivation.RELU else np.ones_like(a)


def neighbor_lists(graph: TransactionGraph) -> list[np.ndarray]:
    """Sorted distinct in/out neighbor positions of every node, self excluded."""
    n = graph.n_nodes
    a = np.concatenate([graph.src, graph.dst])
    b = np.concatenate([graph.dst, graph.src])
    keep = a != b
    keys = np.unique(a[keep] * n + b[keep])
    owner, nbr = keys // n, keys % n
    cuts = np.searchsorted(owner, np.arange(n + 1))
    return [nbr[cuts[i]:cuts[i + 1]] for i in range(n)]


@dataclass
class SampledTree:
    node_id: int
    children: list["SampledTree"] = field(default_factory=list)

    def layers(self, depth: int) -> list[list[int]]:
        """Node ids at depths ``1..depth`` below the root; missing depths are empty."""
        out, frontier = [], [self]
        for _ in range(depth):
            frontier = [c for t in frontier for c in t.children]
            out.append([c.node_id for c in frontier])
        return out


def sample_neighborhood(graph: TransactionGraph, node_id: int, fanouts, seed: int = 0,
                        neighbors: list[np.ndarray] | None = None) -> SampledTree:
    """Sample a depth-``len(fanouts)`` tree; depth ``l`` nodes keep at most ``fanouts[l]`` neighbors."""
    if any(f < 1 for f in fanouts):
        raise ValueError("fanouts must be positive")
    nbrs = neighbors if neighbors is not None else neighbor_lists(graph)
    rng = np.random.default_rng(seed)
    ids = graph.node_ids

    def grow(pos: int, depth: int) -> SampledTree:
        tree = SampledTree(int(ids[pos]))
        if depth < len(fanouts):
            cand = nbrs[pos]
            if len(cand) > fanouts[depth]:
                cand = rng.choice(cand, size=fanouts[depth], replace=False)
            tree.children = [grow(int(c), depth + 1) for c in cand]
        return tree

    return grow(graph.index[int(node_id)], 0)


def sage_forward(tree: SampledTree, features, model: SageModel) -> np.ndarray:
    """Embedding of ``tree.node_id``; ``features`` maps node id -> raw feature vector."""

    def feat(nid):
        try:
            x = np.asarray(features[nid], dtype=np.float64)
        except (KeyError, IndexError):
            raise MissingFeatures(f"no features for node {nid}") from None
        if x.shape != (model.in_dim,):
            raise DimensionMismatch(f"node {nid} has {x.shape} features, model expects {model.in_dim}")
        return x

    def h(t: SampledTree, level: int) -> np.ndarray:
        if level == 0:
            return feat(t.node_id)
        self_h = h(t, level - 1)
        if t.children:
            agg = np.mean([h(c, level - 1) for c in t.children], axis=0)
        else:
            agg = np.zeros_like(self_h)
        pre = self_h @ model.W_self[level - 1] + agg @ model.W_neigh[level - 1]
        return _act(pre, model.activation)

    return h(tree, model.n_layers)


def mean_matrix(neighbors: list[np.ndarray], fanout: int | None = None, rng=None) -> sp.csr_matrix:
    """Row-normalized neighbor matrix; rows sample at most ``fanout`` neighbors when given."""
    n = len(neighbors)
    rows, cols, vals = [], [], []
    for i, nb in enumerate(neighbors):
        if fanout is not None and len(nb) > fanout:
            nb = rng.choice(nb, size=fanout, replace=False)
        if len(nb):
            rows.append(np.full(len(nb), i))
            cols.append(nb)
            vals.append(np.full(len(nb), 1.0 / len(nb)))
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def sage_forward_full(X: np.ndarray, mats: list, model: SageModel, cache: bool = False):
    """All-node forward; ``mats[l]`` is the mean matrix used by layer ``l``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise DimensionMismatch(f"features have shape {X.shape}, model expects width {model.in_dim}")
    hs, pres = [X], []
    h = X
    for l in range(model.n_layers):
        agg = mats[l] @ h
        pre = h @ model.W_self[l] + agg @ model.W_neigh[l]
        pres.append(pre)
        h = _act(pre, model.activation)
        hs.append(h)
    return (h, (hs, pres)) if cache else h


def _layer_mats(neighbors, model: SageModel, rng=None, sample=True):
    # the last layer aggregates depth-1 neighbors, which are sampled with fanouts[0]
    L = model.n_layers
    return [mean_matrix(neighbors, model.fanouts[L - 1 - l] if sample else None, rng) for l in range(L)]


def sage_pair_loss_grad(X, mats, model: SageModel, pos_pairs, neg_pairs):
    """Mean binary logistic loss over pair scores ``sigmoid(z_u . z_v)`` and exact weight gradients.

    ``pos_pairs``/``neg_pairs`` are ``(u_positions, v_positions)``.  Returns
    ``(loss, grads_self, grads_neigh)``.
    """
    Z, (hs, pres) = sage_forward_full(X, mats, model, cache=True)
    pu, pv = pos_pairs
    nu, nv = neg_pairs
    total = len(pu) + len(nu)
    s_pos = np.einsum("bd,bd->b", Z[pu], Z[pv])
    s_neg = np.einsum("bd,bd->b", Z[nu], Z[nv])
    loss = (-log_sigmoid(s_pos).sum() - log_sigmoid(-s_neg).sum()) / total
    g_pos = (sigmoid(s_pos) - 1.0) / total
    g_neg = sigmoid(s_neg) / total
    dZ = np.zeros_like(Z)
    np.add.at(dZ, pu, g_pos[:, None] * Z[pv])
    np.add.at(dZ, pv, g_pos[:, None] * Z[pu])
    np.add.at(dZ, nu, g_neg[:, None] * Z[nv])
    np.add.at(dZ, nv, g_neg[:, None] * Z[nu])
    g_self, g_neigh = [None] * model.n_layers, [None] * model.n_layers
    dh = dZ
    for l in reversed(range(model.n_layers)):
        dpre = dh * _act_grad(pres[l], model.activation)
        h_in = hs[l]
        agg = mats[l] @ h_in
        g_self[l] = h_in.T @ dpre
        g_neigh[l] = agg.T @ dpre
        dh = dpre @ model.W_self[l].T + mats[l].T @ (dpre @ model.W_neigh[l].T)
    return float(loss), g_self, g_neigh


def train_sage_unsup(
    graph: TransactionGraph,
    X: np.ndarray,
    pos_pairs: tuple[np.ndarray, np.ndarray],
    neg_pairs: tuple[np.ndarray, np.ndarray],
    model: SageModel,
    lr: float = 0.01,
    epochs: int = 5,
    seed: int = 0,
    batch_size: int = 1024,
) -> SageModel:
    """Fit the model so walk co-occurring pairs score high and sampled negatives low.

    Pairs are node ids.  Neighbor samples are redrawn every batch.  The model
    is updated in place (Adagrad) and returned; mean loss per epoch is appended
    to ``model.loss_history``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != graph.n_nodes:
        raise MissingFeatures("feature matrix must have one row per node")
    rng = np.random.default_rng(seed)
    nbrs = neighbor_lists(graph)
    pu, pv = graph.positions(pos_pairs[0]), graph.positions(pos_pairs[1])
    nu, nv = graph.positions(neg_pairs[0]), graph.positions(neg_pairs[1])
    params = {f"s{l}": w for l, w in enumerate(model.W_self)}
    params.update({f"n{l}": w for l, w in enumerate(model.W_neigh)})
    opt = Adagrad(params, lr=lr)
    n_pos, n_neg = len(pu), len(nu)
    steps = max(1, int(np.ceil(max(n_pos, 1) / batch_size)))
    neg_per = max(1, int(np.ceil(n_neg / steps)))
    for _ in range(epochs):
        po, no = rng.permutation(n_pos), rng.permutation(n_neg)
        epoch_loss = 0.0
        for s in range(steps):
            bp = po[s * batch_size:(s + 1) * batch_size]
            bn = no[s * neg_per:(s + 1) * neg_per]
            mats = _layer_mats(nbrs, model, rng)
            loss, gs, gn = sage_pair_loss_grad(X, mats, model, (pu[bp], pv[bp]), (nu[bn], nv[bn]))
            grads = {f"s{l}": g for l, g in enumerate(gs)}
            grads.update({f"n{l}": g for l, g in enumerate(gn)})
            opt.step(grads)
            epoch_loss += loss
        model.loss_history.append(epoch_loss / steps)
    return model


def sample_negative_pairs(graph: TransactionGraph, centers, k: int, seed: int, power: float = 0.75):
    """``k`` negatives per center drawn from degree**power; returns id arrays."""
    rng = np.random.default_rng(seed)
    deg = np.bincount(np.concatenate([graph.src, graph.dst]), minlength=graph.n_nodes).astype(float) + 1.0
    p = deg ** power
    p /= p.sum()
    centers = np.asarray(centers, dtype=np.int64)
    u = np.repeat(centers, k)
    v = graph.node_ids[rng.choice(graph.n_nodes, size=len(u), p=p)]
    return u, v


def embed_graph(model: SageModel, graph: TransactionGraph, X: np.ndarray, sample: bool = False,
                seed: int = 0) -> EmbeddingMatrix:
    """Embeddings for every node of ``graph`` with frozen weights (full neighborhoods by default)."""
    nbrs = neighbor_lists(graph)
    mats = _layer_mats(nbrs, model, np.random.default_rng(seed), sample=sample)
    return EmbeddingMatrix(graph.node_ids, sage_forward_full(X, mats, model))


def infer_unseen(model: SageModel, graph: TransactionGraph, node_id: int, features=None, seed: int = 0) -> np.ndarray:
    """Embed a node absent from training using its sampled neighborhood in ``graph``.

    ``features`` maps node id -> vector and defaults to ``graph.features``.
    Model weights are not modified.
    """
    if features is None:
        if graph.features is None:
            raise MissingFeatures(f"node {node_id} has no features")
        features = {int(v): graph.features[i] for i, v in enumerate(graph.node_ids.tolist())}
    if int(node_id) not in graph.index:
        raise MissingFeatures(f"node {node_id} is not in the graph")
    tree = sample_neighborhood(graph, node_id, model.fanouts, seed)
    return sage_forward(tree, features, model)

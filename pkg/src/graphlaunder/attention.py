"""Scaled dot-product self-attention layers and the dynamic edge-substructure embedding.

One layer maps ``H`` (rows = substructure nodes) to
``softmax((H W_Q)(H W_K)^T / sqrt(d)) (H W_V)``.  There is no positional term
inside the layer, so it is permutation-equivariant in its rows.

:func:`build_edge_encoding` turns a target transfer into the input matrix with
``tau * (k + 2)`` rows: for each of the ``tau`` most recent time bins up to
the target's bin, the two endpoints followed by the ``k`` nearest nodes (hop
distance in that bin's snapshot, either direction), padded when the snapshot
has fewer.  A row encodes the node's hashed-id base vector, its hop distance
(one-hot) and how many bins ago it last transacted (one-hot), linearly
projected to ``d_enc``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InsufficientHistory
from .graph import TransactionGraph
from .xbank import hash_init_embedding


@dataclass
class AttentionLayer:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray

    def __post_init__(self):
        self.W_Q, self.W_K, self.W_V = (np.asarray(w, dtype=np.float64) for w in (self.W_Q, self.W_K, self.W_V))
        shapes = {w.shape for w in (self.W_Q, self.W_K, self.W_V)}
        if len(shapes) != 1 or self.W_Q.ndim != 2 or self.W_Q.shape[0] != self.W_Q.shape[1]:
            raise DimensionMismatch("W_Q, W_K, W_V must be square matrices of equal size")

    @property
    def d(self) -> int:
        return self.W_Q.shape[0]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, scale: float | None = None) -> "AttentionLayer":
        s = 1.0 / np.sqrt(d) if scale is None else scale
        return cls(rng.normal(0, s, (d, d)), rng.normal(0, s, (d, d)), rng.normal(0, s, (d, d)))


@dataclass
class DgtConfig:
    layers: int = 2
    d_enc: int = 32
    tau: int = 3
    context_k: int = 5

    def __post_init__(self):
        if not 1 <= self.layers:
            raise ValueError("layers must be >= 1")
        if self.tau < 1 or self.context_k < 0 or self.d_enc < 1:
            raise ValueError("tau >= 1, context_k >= 0 and d_enc >= 1 required")

    @property
    def rows(self) -> int:
        return self.tau * (self.context_k + 2)


def softmax_rows(S: np.ndarray) -> np.ndarray:
    E = np.exp(S - S.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def attention_forward(H: np.ndarray, layer: AttentionLayer, return_cache: bool = False):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != layer.d:
        raise DimensionMismatch(f"input has shape {H.shape}, layer expects {layer.d} columns")
    # evaluate on lexicographically sorted rows so floating-point summation
    # order does not depend on the input row order (exact equivariance)
    canon = np.lexsort(H.T[::-1])
    inv = np.empty_like(canon)
    inv[canon] = np.arange(len(canon))
    Hc = H[canon]
    Q, K, V = Hc @ layer.W_Q, Hc @ layer.W_K, Hc @ layer.W_V
    A = softmax_rows(Q @ K.T / np.sqrt(layer.d))
    out = (A @ V)[inv]
    if return_cache:
        Q, K, V, A = Q[inv], K[inv], V[inv], A[inv][:, inv]
        return out, (H, Q, K, V, A)
    return out


def attention_backward(d_out: np.ndarray, cache, layer: AttentionLayer):
    """Gradients ``(dH, dW_Q, dW_K, dW_V)`` given ``d loss / d output``."""
    H, Q, K, V, A = cache
    scale = 1.0 / np.sqrt(layer.d)
    dV = A.T @ d_out
    dA = d_out @ V.T
    dS = A * (dA - (dA * A).sum(axis=1, keepdims=True))
    dQ = dS @ K * scale
    dK = dS.T @ Q * scale
    dH = dQ @ layer.W_Q.T + dK @ layer.W_K.T + dV @ layer.W_V.T
    return dH, H.T @ dQ, H.T @ dK, H.T @ dV


def attention_stack(H0: np.ndarray, layers: list[AttentionLayer], return_caches: bool = False):
    h, caches = H0, []
    for layer in layers:
        h, c = attention_forward(h, layer, return_cache=True)
        caches.append(c)
    return (h, caches) if return_caches else h


def attention_stack_backward(d_out, caches, layers):
    """Per-layer ``(dW_Q, dW_K, dW_V)`` and the gradient w.r.t. the stack input."""
    grads = [None] * len(layers)
    d = d_out
    for i in reversed(range(len(layers))):
        d, gq, gk, gv = attention_backward(d, caches[i], layers[i])
        grads[i] = (gq, gk, gv)
    return d, grads


def save_layers(layers: list[AttentionLayer], path) -> None:
    data = {"format": "graphlaunder.attention", "version": 1,
            "layers": [{name: {"shape": list(w.shape), "values": w.ravel().tolist()}
                        for name, w in (("W_Q", l.W_Q), ("W_K", l.W_K), ("W_V", l.W_V))} for l in layers]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def load_layers(path) -> list[AttentionLayer]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    mk = lambda m: np.array(m["values"], dtype=np.float64).reshape(m["shape"])
    return [AttentionLayer(mk(l["W_Q"]), mk(l["W_K"]), mk(l["W_V"])) for l in data["layers"]]


class EdgeEncoder:
    """Caches per-bin snapshots of a graph so many target edges can be encoded cheaply."""

    def __init__(self, graph: TransactionGraph, config: DgtConfig, seed: int = 0):
        bins = graph.timestep_bins
        if bins is None:
            bins = sorted(set(graph.timestamp.tolist())) if graph.n_edges else [0]
        if len(bins) < config.tau:
            raise InsufficientHistory(f"graph has {len(bins)} time bins, tau={config.tau} requires more")
        self.graph = graph
        self.config = config
        self.seed = seed
        self.bins = np.asarray(bins, dtype=np.int64)
        self.edge_bin = np.searchsorted(self.bins, graph.timestamp, side="right") - 1
        n = graph.n_nodes
        # most recent bin each node transacted in, looked up per target bin
        order = np.argsort(self.edge_bin, kind="stable")
        self._edges_by_bin = np.split(order, np.searchsorted(self.edge_bin[order], np.arange(1, len(self.bins))))
        self._snap: dict[int, dict[int, list[int]]] = {}
        self._node_bins: list[list[int]] = [[] for _ in range(n)]
        for e in order:
            b = int(self.edge_bin[e])
            for v in (int(graph.src[e]), int(graph.dst[e])):
                nb = self._node_bins[v]
                if not nb or nb[-1] != b:
                    nb.append(b)
        k, tau, d = config.context_k, config.tau, config.d_enc
        self.raw_width = d + (k + 2) + tau
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(0, 1.0 / np.sqrt(self.raw_width), (self.raw_width, d))
        self._base: dict[int, np.ndarray] = {}

    def _snapshot(self, b: int) -> dict[int, list[int]]:
        if b not in self._snap:
            adj: dict[int, list[int]] = {}
            if 0 <= b < len(self._edges_by_bin):
                for e in self._edges_by_bin[b]:
                    s, t = int(self.graph.src[e]), int(self.graph.dst[e])
                    if s != t:
                        adj.setdefault(s, []).append(t)
                        adj.setdefault(t, []).append(s)
            self._snap[b] = {v: sorted(set(nb)) for v, nb in adj.items()}
        return self._snap[b]

    def _base_vec(self, pos: int) -> np.ndarray:
        if pos not in self._base:
            key = self.graph.external_keys[pos]
            self._base[pos] = hash_init_embedding(key, self.seed, self.config.d_enc) / np.sqrt(self.config.d_enc)
        return self._base[pos]

    def _last_active(self, pos: int, b: int) -> int | None:
        nb = self._node_bins[pos]
        i = np.searchsorted(nb, b, side="right") - 1
        return None if i < 0 else nb[i]

    def _context(self, snap, u: int, v: int) -> list[tuple[int, int]]:
        k = self.config.context_k
        if k == 0:
            return []
        dist = {u: 0, v: 0}
        queue = deque([u, v] if u != v else [u])
        found: list[tuple[int, int]] = []
        while queue:
            x = queue.popleft()
            if dist[x] >= k:
                continue
            for y in snap.get(x, ()):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    found.append((dist[y], y))
                    queue.append(y)
        found.sort()
        return [(y, h) for h, y in found[:k]]

    def encode(self, edge_index: int) -> tuple[np.ndarray, list[int | None]]:
        """``(H0, row_positions)``; padding rows have position ``None``."""
        cfg = self.config
        k, tau = cfg.context_k, cfg.tau
        g = self.graph
        u, v = int(g.src[edge_index]), int(g.dst[edge_index])
        b = int(self.edge_bin[edge_index])
        raw = np.zeros((cfg.rows, self.raw_width))
        rows: list[int | None] = []
        r = 0
        for j in range(tau):
            snap = self._snapshot(b - j)
            members = [(u, 0), (v, 0)] + self._context(snap, u, v)
            members += [(None, k + 1)] * (k + 2 - len(members))
            for pos, hop in members:
                raw[r, cfg.d_enc + min(hop, k + 1)] = 1.0
                if pos is not None:
                    raw[r, :cfg.d_enc] = self._base_vec(pos)
                    last = self._last_active(pos, b)
                    ago = tau - 1 if last is None else min(b - last, tau - 1)
                else:
                    ago = j
                raw[r, cfg.d_enc + k + 2 + ago] = 1.0
                rows.append(pos)
                r += 1
        return raw @ self.projection, rows


def build_edge_encoding(graph: TransactionGraph, target_edge: int, config: DgtConfig, seed: int = 0):
    """Encoding matrix and row node ids (``None`` for padding) of one transfer, by edge index."""
    enc = EdgeEncoder(graph, config, seed)
    H0, rows = enc.encode(target_edge)
    return H0, [None if p is None else int(graph.node_ids[p]) for p in rows]


def dgt_embed(graph: TransactionGraph, target_edge: int, config: DgtConfig,
              params: list[AttentionLayer], seed: int = 0) -> np.ndarray:
    """Final attention output ``H^(L)`` for the target transfer's substructure."""
    if len(params) != config.layers:
        raise ValueError(f"config asks for {config.layers} layers, got {len(params)}")
    H0, _ = build_edge_encoding(graph, target_edge, config, seed)
    return attention_stack(H0, params)


def dgt_node_embeddings(graph: TransactionGraph, config: DgtConfig, params: list[AttentionLayer],
                        seed: int = 0, edges_per_node: int = 3):
    """Per-node embeddings: mean of the node's rows of ``Z`` over up to ``edges_per_node`` incident transfers.

    Nodes without transfers use a self-pair substructure so every node gets a vector.
    """
    from .embedding import EmbeddingMatrix

    enc = EdgeEncoder(graph, config, seed)
    n, d = graph.n_nodes, config.d_enc
    acc = np.zeros((n, d))
    cnt = np.zeros(n)
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    for pos in range(n):
        inc = np.concatenate([graph.out_edges(pos), graph.in_edges(pos)])
        if len(inc) > edges_per_node:
            inc = rng.choice(inc, size=edges_per_node, replace=False)
        chosen.update(int(e) for e in inc)
    for e in sorted(chosen):
        H0, rows = enc.encode(e)
        Z = attention_stack(H0, params)
        for r, pos in enumerate(rows):
            if pos is not None:
                acc[pos] += Z[r]
                cnt[pos] += 1
    lonely = np.flatnonzero(cnt == 0)
    for pos in lonely:
        raw = np.zeros((config.rows, enc.raw_width))
        for r in range(config.rows):
            hop = 0 if r % (config.context_k + 2) < 2 else config.context_k + 1
            raw[r, d + hop] = 1.0
            raw[r, d + config.context_k + 2 + config.tau - 1] = 1.0
            if hop == 0:
                raw[r, :d] = enc._base_vec(int(pos))
        Z = attention_stack(raw @ enc.projection, params)
        acc[pos] = Z[[r for r in range(config.rows) if r % (config.context_k + 2) < 2]].mean(axis=0)
        cnt[pos] = 1
    return EmbeddingMatrix(graph.node_ids, acc / cnt[:, None])

"""Second-order biased random walks over the directed transfer multigraph.

From ``(prev, cur)`` the walk moves along an out-edge of ``cur`` to ``x`` with
probability proportional to ``multiplicity(cur, x) * bias`` where bias is
``1/p`` if ``x == prev``, ``1`` if ``x`` and ``prev`` share an edge in either
direction, and ``1/q`` otherwise.  Sampling is exact: an out-edge is proposed
uniformly (which yields the multiplicity weighting) and accepted with
probability ``bias / max_bias``.

Every uniform draw is a function of ``(seed, start node id, walk index, step,
attempt)``, so the corpus is the same for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as crng
from .graph import TransactionGraph


@dataclass
class WalkCorpus:
    walks: list[np.ndarray]
    walk_length: int
    walks_per_node: int
    p: float = 1.0
    q: float = 1.0

    def __len__(self):
        return len(self.walks)

    def token_counts(self) -> dict[int, int]:
        if not self.walks:
            return {}
        ids, counts = np.unique(np.concatenate(self.walks), return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


def _undirected_keys(graph: TransactionGraph) -> np.ndarray:
    n = graph.n_nodes
    lo = np.minimum(graph.src, graph.dst)
    hi = np.maximum(graph.src, graph.dst)
    return np.unique(lo * n + hi)


def _walk_block(graph, starts, walk_idx, p, q, walk_length, seed, adj_keys):
    """Walk positions for start positions ``starts`` (one walk each) -> (len(starts), walk_length) with -1 padding."""
    n = graph.n_nodes
    w = len(starts)
    out = np.full((w, walk_length), -1, dtype=np.int64)
    out[:, 0] = starts
    if walk_length == 1 or w == 0:
        return out
    start_ids = graph.node_ids[starts]
    offs, order, dst = graph.out_offsets, graph.out_order, graph.dst
    deg = offs[1:] - offs[:-1]
    bias_max = max(1.0 / p, 1.0, 1.0 / q)
    active = np.arange(w)
    for step in range(1, walk_length):
        cur = out[active, step - 1]
        live = deg[cur] > 0
        active, cur = active[live], cur[live]
        if len(active) == 0:
            break
        nxt = np.empty(len(active), dtype=np.int64)
        pending = np.arange(len(active))
        attempt = 0
        while len(pending):
            a = active[pending]
            c = cur[pending]
            u = crng.uniform(seed, start_ids[a], walk_idx, step, attempt, 0)
            pick = np.minimum((u * deg[c]).astype(np.int64), deg[c] - 1)
            cand = dst[order[offs[c] + pick]]
            if step == 1:
                accept = np.ones(len(pending), dtype=bool)
            else:
                prev = out[a, step - 2]
                bias = np.full(len(pending), 1.0 / q)
                key = np.minimum(prev, cand) * n + np.maximum(prev, cand)
                hit = np.searchsorted(adj_keys, key)
                hit = np.minimum(hit, len(adj_keys) - 1)
                bias[adj_keys[hit] == key] = 1.0
                bias[cand == prev] = 1.0 / p
                accept = crng.uniform(seed, start_ids[a], walk_idx, step, attempt, 1) * bias_max < bias
            nxt[pending[accept]] = cand[accept]
            pending = pending[~accept]
            attempt += 1
        out[active, step] = nxt
    return out


def biased_walks(
    graph: TransactionGraph,
    p: float = 1.0,
    q: float = 1.0,
    walk_length: int = 80,
    walks_per_node: int = 10,
    seed: int = 0,
    workers: int = 1,
) -> WalkCorpus:
    """``walks_per_node`` walks from every node; walks stop early at sinks.

    Walks are ordered by walk index, then by node position, and hold node ids.
    """
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    if walk_length < 1 or walks_per_node < 0:
        raise ValueError("walk_length must be >= 1 and walks_per_node >= 0")
    if graph.n_nodes == 0:
        raise ValueError("graph has no nodes")
    adj_keys = _undirected_keys(graph)
    if len(adj_keys) == 0:
        adj_keys = np.array([-1], dtype=np.int64)
    positions = np.arange(graph.n_nodes)
    chunks = np.array_split(positions, max(1, workers))

    def run(widx, chunk):
        return _walk_block(graph, chunk, widx, p, q, walk_length, seed, adj_keys)

    walks: list[np.ndarray] = []
    for widx in range(walks_per_node):
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                blocks = list(ex.map(lambda c: run(widx, c), chunks))
        else:
            blocks = [run(widx, positions)]
        block = np.vstack(blocks)
        for row in block:
            walks.append(graph.node_ids[row[row >= 0]])
    return WalkCorpus(walks, walk_length, walks_per_node, p, q)


def window_pairs(corpus: WalkCorpus, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``(center, context)`` id pairs at distance ``1..window`` within each walk, both directions."""
    if not corpus.walks:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    tokens = np.concatenate(corpus.walks)
    walk_of = np.repeat(np.arange(len(corpus.walks)), [len(w) for w in corpus.walks])
    centers, contexts = [], []
    for off in range(1, window + 1):
        same = walk_of[off:] == walk_of[:-off] if off < len(tokens) else np.zeros(0, bool)
        left, right = tokens[:-off][same], tokens[off:][same]
        centers += [left, right]
        contexts += [right, left]
    if not centers:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)

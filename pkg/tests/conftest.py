import numpy as np
import pytest

from graphlaunder.graph import AccountNode, Alert, TransferEdge, build_graph


def rel_err(analytic, numeric) -> float:
    """Max-norm relative error between two gradient arrays."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    return 0.0 if scale == 0 else float(np.abs(a - n).max() / scale)


def central_diff(f, param: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``param`` (perturbed in place)."""
    g = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        old = param[idx]
        param[idx] = old + h
        up = f()
        param[idx] = old - h
        down = f()
        param[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def make_graph(edges, n=None, labels=None, alerts=(), amounts=None, times=None):
    """Small graph from ``(src, dst)`` pairs on node ids ``0..n-1``."""
    n = n if n is not None else (max(max(e) for e in edges) + 1 if edges else 1)
    accs = [AccountNode(i) for i in range(n)]
    txs = [TransferEdge(k, s, d, amounts[k] if amounts else 1.0, times[k] if times else 0)
           for k, (s, d) in enumerate(edges)]
    g = build_graph(accs, txs, [Alert(*a) for a in alerts])
    if labels is not None:
        g = g.replace(labels=np.asarray(labels, dtype=np.int8))
    return g


@pytest.fixture
def tiny_graph():
    # 6 nodes: a triangle, a path hanging off it and one isolated node
    return make_graph([(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)], n=6)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphlaunder.errors import DimensionMismatch, EmptyMask, SingleClassMask
from graphlaunder.gcn import (GcnModel, default_class_weights, gcn_forward, gcn_loss_grad, normalize_adjacency,
                              train_gcn, weighted_ce_loss, write_training_curve)
from graphlaunder.graph import ILLICIT, LICIT, UNKNOWN

from conftest import central_diff, make_graph, rel_err


def _dense_adjacency(edges, n):
    A = np.eye(n)
    for s, d in edges:
        if s != d:
            A[s, d] = A[d, s] = 1.0
    deg = A.sum(axis=1)
    return A / np.sqrt(np.outer(deg, deg))


def test_single_node_adjacency():
    assert normalize_adjacency(make_graph([], n=1)).toarray().tolist() == [[1.0]]


def test_two_nodes_one_edge():
    np.testing.assert_allclose(normalize_adjacency(make_graph([(0, 1)], n=2)).toarray(), np.full((2, 2), 0.5))


def test_five_node_adjacency_matches_dense():
    edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 3), (1, 0), (1, 0)]
    A = normalize_adjacency(make_graph(edges, n=5)).toarray()
    np.testing.assert_allclose(A, _dense_adjacency(edges, 5), rtol=0, atol=1e-12)
    assert A[4, 4] == 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**20))
def test_adjacency_symmetric_nonneg_contractive(n, seed):
    rng = np.random.default_rng(seed)
    g = make_graph([(int(a), int(b)) for a, b in rng.integers(0, n, (2 * n, 2))], n=n)
    A = normalize_adjacency(g).toarray()
    assert np.array_equal(A, A.T) and (A >= 0).all()
    v = rng.normal(size=n)
    for _ in range(200):
        v = A @ v
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v /= nv
    assert np.linalg.norm(A @ v) <= 1 + 1e-9


def _dense_forward(X, A, W1, W2, W_skip=None):
    n = len(X)
    H = np.zeros((n, W1.shape[1]))
    for i in range(n):
        for j in range(n):
            H[i] += A[i, j] * (X[j] @ W1)
    H = np.maximum(H, 0)
    out = np.zeros(n)
    for i in range(n):
        z = sum(A[i, j] * (H[j] @ W2[:, 0]) for j in range(n))
        if W_skip is not None:
            z += X[i] @ W_skip[:, 0]
        out[i] = 1 / (1 + np.exp(-z))
    return out


def test_zero_weights_half():
    g = make_graph([(0, 1), (1, 2)], n=3)
    m = GcnModel(np.zeros((2, 4)), np.zeros((4, 1)))
    np.testing.assert_array_equal(gcn_forward(np.ones((3, 2)), normalize_adjacency(g), m), [0.5] * 3)


def test_identity_adjacency_is_mlp():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3))
    m = GcnModel.init(3, hidden=5, seed=1)
    A = normalize_adjacency(make_graph([], n=4))
    mlp = 1 / (1 + np.exp(-(np.maximum(X @ m.W1, 0) @ m.W2)[:, 0]))
    np.testing.assert_allclose(gcn_forward(X, A, m), mlp, rtol=1e-14)


@pytest.mark.parametrize("skip", [False, True])
def test_forward_matches_dense(skip):
    rng = np.random.default_rng(2)
    edges = [(0, 1), (1, 2), (3, 4), (4, 5), (5, 3), (2, 5)]
    X = rng.normal(size=(6, 3))
    m = GcnModel.init(3, hidden=4, skip=skip, seed=3)
    if skip:
        m.W_skip = rng.normal(size=(3, 1))
    A = normalize_adjacency(make_graph(edges, n=6))
    ref = _dense_forward(X, _dense_adjacency(edges, 6), m.W1, m.W2, m.W_skip)
    np.testing.assert_allclose(gcn_forward(X, A, m), ref, rtol=0, atol=1e-12)


def test_zero_skip_equals_plain():
    rng = np.random.default_rng(4)
    g = make_graph([(0, 1), (1, 2), (2, 3)], n=4)
    X = rng.normal(size=(4, 2))
    plain = GcnModel.init(2, hidden=3, seed=0)
    skip = GcnModel(plain.W1, plain.W2, np.zeros((2, 1)))
    A = normalize_adjacency(g)
    np.testing.assert_array_equal(gcn_forward(X, A, plain), gcn_forward(X, A, skip))


def test_forward_permutation_invariant():
    rng = np.random.default_rng(5)
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)]
    X = rng.normal(size=(4, 2))
    m = GcnModel.init(2, hidden=3, seed=6)
    perm = np.array([2, 0, 3, 1])
    inv = np.argsort(perm)
    p = gcn_forward(X, normalize_adjacency(make_graph(edges, n=4)), m)
    pe = [(int(inv[s]), int(inv[d])) for s, d in edges]
    q = gcn_forward(X[perm], normalize_adjacency(make_graph(pe, n=4)), m)
    np.testing.assert_allclose(q, p[perm], rtol=1e-14)


def test_dimension_mismatch():
    m = GcnModel.init(3, hidden=2)
    with pytest.raises(DimensionMismatch):
        gcn_forward(np.ones((2, 4)), normalize_adjacency(make_graph([(0, 1)], n=2)), m)


def test_loss_examples():
    labels = np.array([LICIT, ILLICIT, ILLICIT])
    mask = np.array([True, True, True])
    assert weighted_ce_loss([0.5, 0.5, 0.5], labels, (1, 1), mask) == pytest.approx(np.log(2))
    assert weighted_ce_loss([1e-12, 1 - 1e-12, 1 - 1e-12], labels, (1, 1), mask) < 1e-11
    one = weighted_ce_loss([0.1], np.array([ILLICIT]), (1, 5), np.array([True]))
    assert one == pytest.approx(5 * -np.log(0.1), rel=1e-14)
    with pytest.raises(EmptyMask):
        weighted_ce_loss([0.5], np.array([LICIT]), (1, 1), np.array([False]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-6, 1 - 1e-6), st.booleans()), min_size=1, max_size=20),
       st.floats(0.1, 10), st.floats(0.1, 10))
def test_loss_nonnegative(rows, w0, w1):
    p = np.array([r[0] for r in rows])
    y = np.array([ILLICIT if r[1] else LICIT for r in rows])
    assert weighted_ce_loss(p, y, (w0, w1), np.ones(len(rows), bool)) >= 0


def test_default_class_weights_capped():
    labels = np.array([LICIT] * 99 + [ILLICIT])
    assert default_class_weights(labels, np.ones(100, bool)) == pytest.approx((100 / 99, 50.0))


def gcn_fd_case(rng, skip=True):
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3)]
    g = make_graph(edges, n=6)
    A = normalize_adjacency(g)
    X = rng.normal(size=(6, 3))
    m = GcnModel.init(3, hidden=4, skip=skip, seed=int(rng.integers(1 << 30)))
    if skip:
        m.W_skip = rng.normal(0, 0.5, (3, 1))
    labels = np.array([LICIT, ILLICIT, LICIT, ILLICIT, LICIT, UNKNOWN])
    mask = np.array([0, 1, 2, 3, 4])
    cw = (1.0, 2.5)
    _, grads = gcn_loss_grad(X, A, m, labels, cw, mask)
    f = lambda: gcn_loss_grad(X, A, m, labels, cw, mask)[0]
    return max(rel_err(grads[k], central_diff(f, w)) for k, w in m.params().items())


@pytest.mark.parametrize("skip", [False, True])
def test_gradient_fd(skip):
    rng = np.random.default_rng(9)
    assert max(gcn_fd_case(rng, skip) for _ in range(5)) < 1e-5


def test_loss_decreases_first_twenty_epochs():
    rng = np.random.default_rng(1)
    g = make_graph([(i, (i + 1) % 12) for i in range(12)], n=12)
    X = rng.normal(size=(12, 4))
    labels = np.where(np.arange(12) < 4, ILLICIT, LICIT)
    m = train_gcn(g, X, labels, np.ones(12, bool), hidden=8, lr=0.05, epochs=20, seed=0)
    h = [l for _, l in m.loss_history]
    assert len(h) == 20 and h[-1] < h[0]


def test_default_hidden_128():
    g = make_graph([(0, 1), (1, 2)], n=3)
    m = train_gcn(g, np.eye(3), np.array([LICIT, ILLICIT, LICIT]), np.ones(3, bool), epochs=1)
    assert m.h == 128


def test_two_cliques_separable():
    edges = [(a, b) for base in (0, 10) for a in range(base, base + 10) for b in range(base, base + 10) if a < b]
    g = make_graph(edges, n=20)
    labels = np.full(20, UNKNOWN)
    labels[0], labels[10] = LICIT, ILLICIT
    # one labelled node per clique; every other node is scored by propagation alone
    X = np.zeros((20, 2))
    X[0, 0] = X[10, 1] = 1.0
    m = train_gcn(g, X, labels, np.array([0, 10]), hidden=8, lr=0.1, epochs=100, seed=0)
    p = gcn_forward(X, normalize_adjacency(g), m)
    assert p[0] < 0.5 < p[10]  # training-mask accuracy 1.0
    assert (p[:10] < 0.5).all() and (p[10:] > 0.5).all()


def test_single_class_mask():
    g = make_graph([(0, 1)], n=2)
    with pytest.raises(SingleClassMask):
        train_gcn(g, np.eye(2), np.array([LICIT, LICIT]), np.ones(2, bool), epochs=1)


def test_batched_training_and_curve(tmp_path):
    rng = np.random.default_rng(2)
    g = make_graph([(i, (i + 3) % 30) for i in range(30)], n=30)
    labels = np.where(np.arange(30) % 5 == 0, ILLICIT, LICIT)
    m = train_gcn(g, rng.normal(size=(30, 3)), labels, np.ones(30, bool), hidden=4, epochs=3, batch_size=8)
    assert len(m.loss_history) == 12
    write_training_curve(tmp_path / "c.csv", m)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "step,loss" and len(lines) == 13
    m.save(tmp_path / "m.json")
    r = GcnModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(r.W1, m.W1)
    assert r.loss_history == m.loss_history

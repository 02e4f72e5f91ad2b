"""Skip-gram with negative sampling over walk corpora, and the attribute-mapped variant.

For a (center, context) pair with negatives ``n_1..n_k`` the minimized loss is::

    -log sigmoid(u_ctx . v_cen) - sum_i log sigmoid(-u_{n_i} . v_cen)

where ``v`` are the input ("in") vectors that become the embeddings and ``u``
the output/context vectors.  In the attribute-mapped variant the center vector
is ``act(x_cen @ W_in)`` computed from node features instead of a lookup row.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingMatrix
from .errors import DimensionMismatch, EmptyCorpus, MissingFeatures
from .optim import Adagrad
from .walks import WalkCorpus, window_pairs


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


class NoiseDistribution:
    """Categorical distribution over vocabulary indices, sampled by inverse CDF."""

    def __init__(self, probabilities):
        p = np.asarray(probabilities, dtype=np.float64)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0) or not np.isfinite(p).all():
            raise ValueError("probabilities must be a non-empty non-negative vector")
        total = p.sum()
        if total <= 0:
            raise ValueError("probabilities must not all be zero")
        self.probabilities = p / total
        self.cdf = np.cumsum(self.probabilities)
        self.cdf[-1] = 1.0

    @classmethod
    def from_counts(cls, counts, power: float = 0.75) -> "NoiseDistribution":
        return cls(np.asarray(counts, dtype=np.float64) ** power)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.searchsorted(self.cdf, rng.random(size), side="right").clip(0, len(self.cdf) - 1)


@dataclass
class SkipgramModel:
    node_ids: np.ndarray
    in_vectors: np.ndarray
    out_vectors: np.ndarray
    window: int = 5
    negatives: int = 5
    noise: NoiseDistribution | None = None
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.in_vectors.shape != self.out_vectors.shape:
            raise ValueError("in_vectors and out_vectors must have the same shape")
        self.index = {int(v): i for i, v in enumerate(np.asarray(self.node_ids).tolist())}

    @property
    def d(self) -> int:
        return self.in_vectors.shape[1]

    def embeddings(self) -> EmbeddingMatrix:
        return EmbeddingMatrix(self.node_ids, self.in_vectors.copy())

    def score(self, center, context) -> float:
        """``sigmoid(u_context . v_center)`` for two node ids."""
        v = self.in_vectors[self.index[int(center)]]
        u = self.out_vectors[self.index[int(context)]]
        return float(sigmoid(u @ v))


def sgns_loss_grad(center, context, negatives, model: SkipgramModel):
    """Loss and exact gradients for one pair; node ids in, gradients keyed by node id.

    Returns ``(loss, {"in": {id: grad}, "out": {id: grad}})``.  Gradients of
    repeated negatives accumulate.
    """
    c = model.index[int(center)]
    o = model.index[int(context)]
    neg = [model.index[int(x)] for x in negatives]
    v = model.in_vectors[c]
    u_pos = model.out_vectors[o]
    s_pos = float(u_pos @ v)
    loss = -float(log_sigmoid(s_pos))
    g_pos = -(1.0 - float(sigmoid(s_pos)))          # d loss / d s_pos
    grad_v = g_pos * u_pos
    grad_out = {int(context): g_pos * v}
    for idx, nid in zip(neg, negatives):
        u = model.out_vectors[idx]
        s = float(u @ v)
        loss -= float(log_sigmoid(-s))
        g = float(sigmoid(s))                       # d loss / d s_neg
        grad_v = grad_v + g * u
        key = int(nid)
        grad_out[key] = grad_out.get(key, 0.0) + g * v
    return loss, {"in": {int(center): grad_v}, "out": grad_out}


def _batch_sgns(V, U, cen, ctx, neg, neg_mask):
    """Vectorized SGNS over a batch: per-pair losses and per-row gradients (dV, dU_ctx, dU_neg)."""
    v = V[cen]                                     # (B, d)
    u_pos = U[ctx]                                 # (B, d)
    u_neg = U[neg]                                 # (B, k, d)
    s_pos = np.einsum("bd,bd->b", u_pos, v)
    s_neg = np.einsum("bkd,bd->bk", u_neg, v)
    loss = -log_sigmoid(s_pos) - (log_sigmoid(-s_neg) * neg_mask).sum(axis=1)
    g_pos = sigmoid(s_pos) - 1.0
    g_neg = sigmoid(s_neg) * neg_mask
    d_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
    d_pos = g_pos[:, None] * v
    d_neg = g_neg[:, :, None] * v[:, None, :]
    return loss, d_v, d_pos, d_neg


def _negatives(rng, noise, ctx, k):
    """Draw k negatives per pair; draws equal to the positive context are masked out."""
    neg = noise.sample(rng, (len(ctx), k))
    return neg, (neg != ctx[:, None]).astype(np.float64)


def train_skipgram(
    corpus: WalkCorpus,
    d: int = 128,
    window: int = 5,
    k: int = 5,
    lr: float = 0.025,
    epochs: int = 1,
    seed: int = 0,
    batch_size: int = 256,
    min_lr_ratio: float = 0.01,
    return_model: bool = False,
):
    """Train SGNS embeddings on windowed walk pairs with mini-batch SGD.

    The learning rate decays linearly from ``lr`` to ``lr * min_lr_ratio`` over
    all pair presentations.  Returns the input vectors as an
    :class:`EmbeddingMatrix` (or the full model when ``return_model``).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    counts = corpus.token_counts()
    if not counts:
        raise EmptyCorpus("corpus contains no tokens")
    node_ids = np.array(sorted(counts), dtype=np.int64)
    rng = np.random.default_rng(seed)
    n = len(node_ids)
    V = (rng.random((n, d)) - 0.5) / d
    U = np.zeros((n, d))
    noise = NoiseDistribution.from_counts([counts[v] for v in node_ids.tolist()])
    model = SkipgramModel(node_ids, V, U, window, k, noise)

    cen_ids, ctx_ids = window_pairs(corpus, window)
    if len(cen_ids) == 0:
        return model if return_model else model.embeddings()
    lut = np.full(int(node_ids.max()) + 1, -1, dtype=np.int64)
    lut[node_ids] = np.arange(n)
    cen_all, ctx_all = lut[cen_ids], lut[ctx_ids]
    total = epochs * len(cen_all)
    seen = 0
    for _ in range(epochs):
        order = rng.permutation(len(cen_all))
        epoch_loss = 0.0
        for b in range(0, len(order), batch_size):
            idx = order[b:b + batch_size]
            cen, ctx = cen_all[idx], ctx_all[idx]
            neg, mask = _negatives(rng, noise, ctx, k)
            rate = lr * (1.0 - (1.0 - min_lr_ratio) * seen / total)
            loss, d_v, d_pos, d_neg = _batch_sgns(V, U, cen, ctx, neg, mask)
            np.add.at(V, cen, -rate * d_v)
            np.add.at(U, ctx, -rate * d_pos)
            np.add.at(U, neg.reshape(-1), -rate * d_neg.reshape(-1, d))
            epoch_loss += float(loss.sum())
            seen += len(idx)
        model.loss_history.append(epoch_loss / len(cen_all))
    return model if return_model else model.embeddings()


# -- attribute-mapped (Attri2Vec-style) embeddings --------------------------------

class Activation(str, enum.Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    RELU = "relu"


def _act(a, activation):
    activation = Activation(activation)
    if activation is Activation.LINEAR:
        return a
    if activation is Activation.SIGMOID:
        return sigmoid(a)
    return np.maximum(a, 0.0)


def _act_grad(a, activation):
    activation = Activation(activation)
    if activation is Activation.LINEAR:
        return np.ones_like(a)
    if activation is Activation.SIGMOID:
        s = sigmoid(a)
        return s * (1.0 - s)
    return (a > 0).astype(np.float64)


def attri_embed_forward(features, W_in, activation="linear") -> np.ndarray:
    """``activation(features @ W_in)`` for one feature vector or a row-stacked matrix."""
    x = np.asarray(features, dtype=np.float64)
    W = np.asarray(W_in, dtype=np.float64)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionMismatch(f"features of length {x.shape[-1]} do not match W_in of shape {W.shape}")
    return _act(x @ W, activation)


@dataclass
class Attri2VecModel:
    W_in: np.ndarray
    context_ids: np.ndarray
    out_vectors: np.ndarray
    activation: Activation = Activation.SIGMOID
    loss_history: list[float] = field(default_factory=list)

    def embed(self, features) -> np.ndarray:
        return attri_embed_forward(features, self.W_in, self.activation)


def attri2vec_loss_grad(x_center, ctx, negatives, W_in, out_vectors, activation="sigmoid"):
    """Pair loss for a feature-mapped center; returns ``(loss, dW_in, dOut)``.

    ``ctx`` and ``negatives`` index rows of ``out_vectors``; ``dOut`` is dense.
    """
    x = np.asarray(x_center, dtype=np.float64)
    a = x @ W_in
    z = _act(a, activation)
    u_pos = out_vectors[ctx]
    s_pos = u_pos @ z
    loss = -float(log_sigmoid(s_pos))
    g_pos = float(sigmoid(s_pos)) - 1.0
    d_z = g_pos * u_pos
    d_out = np.zeros_like(out_vectors)
    d_out[ctx] += g_pos * z
    for j in negatives:
        s = out_vectors[j] @ z
        loss -= float(log_sigmoid(-s))
        g = float(sigmoid(s))
        d_z = d_z + g * out_vectors[j]
        d_out[j] += g * z
    d_a = d_z * _act_grad(a, activation)
    return loss, np.outer(x, d_a), d_out


def train_attri2vec(
    graph,
    pairs: tuple[np.ndarray, np.ndarray],
    d: int = 128,
    k: int = 5,
    lr: float = 0.05,
    epochs: int = 5,
    seed: int = 0,
    activation="sigmoid",
    init: str = "random",
    batch_size: int = 256,
    return_model: bool = False,
):
    """Fit ``W_in`` (and context vectors) so walk co-occurring nodes embed closely.

    Uses ``graph.features``; ``pairs`` holds (target, context) node ids.  Parameters are updated with Adagrad on the mean batch loss.
    ``init="identity"`` starts from ``W_in = I`` (requires ``d`` equal to the
    feature width).  Returns ``(W_in, EmbeddingMatrix)`` unless ``return_model``.
    """
    if graph.features is None:
        raise MissingFeatures(f"node {int(graph.node_ids[0])} has no features" if graph.n_nodes else "no features")
    X = np.asarray(graph.features, dtype=np.float64)
    node_ids = graph.node_ids
    if not np.isfinite(X).all():
        bad = node_ids[~np.isfinite(X).all(axis=1)][0]
        raise MissingFeatures(f"node {bad} has non-finite features")
    n, f = X.shape
    rng = np.random.default_rng(seed)
    if init == "identity":
        if d != f:
            raise DimensionMismatch("identity init needs d equal to the feature width")
        W = np.eye(f)
    else:
        W = rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, d))
    U = np.zeros((n, d))
    params = {"W": W, "U": U}
    opt = Adagrad(params, lr=lr)
    lut = {int(v): i for i, v in enumerate(node_ids.tolist())}
    cen_ids, ctx_ids = pairs
    cen = np.array([lut[int(v)] for v in cen_ids], dtype=np.int64)
    ctx = np.array([lut[int(v)] for v in ctx_ids], dtype=np.int64)
    model = Attri2VecModel(W, node_ids, U, Activation(activation))
    if len(cen):
        counts = np.bincount(ctx, minlength=n).astype(np.float64) + 1e-12
        noise = NoiseDistribution.from_counts(counts)
        for _ in range(epochs):
            order = rng.permutation(len(cen))
            epoch_loss = 0.0
            for b in range(0, len(order), batch_size):
                idx = order[b:b + batch_size]
                c, o = cen[idx], ctx[idx]
                neg, mask = _negatives(rng, noise, o, k)
                B = len(idx)
                A = X[c] @ params["W"]
                Z = _act(A, activation)
                Uv = params["U"]
                u_pos, u_neg = Uv[o], Uv[neg]
                s_pos = np.einsum("bd,bd->b", u_pos, Z)
                s_neg = np.einsum("bkd,bd->bk", u_neg, Z)
                loss = -log_sigmoid(s_pos) - (log_sigmoid(-s_neg) * mask).sum(axis=1)
                g_pos = (sigmoid(s_pos) - 1.0) / B
                g_neg = sigmoid(s_neg) * mask / B
                d_z = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
                d_u = np.zeros_like(Uv)
                np.add.at(d_u, o, g_pos[:, None] * Z)
                np.add.at(d_u, neg.reshape(-1), (g_neg[:, :, None] * Z[:, None, :]).reshape(-1, d))
                d_w = X[c].T @ (d_z * _act_grad(A, activation))
                opt.step({"W": d_w, "U": d_u})
                epoch_loss += float(loss.sum())
            model.loss_history.append(epoch_loss / len(cen))
    model.W_in = params["W"]
    model.out_vectors = params["U"]
    emb = EmbeddingMatrix(node_ids, model.embed(X))
    if return_model:
        return model, emb
    return model.W_in, emb

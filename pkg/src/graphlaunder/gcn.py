"""Two-layer graph convolution with a sigmoid head for end-to-end node classification.

``p = sigmoid(A_hat relu(A_hat X W1) W2 + X W_skip)``, where the skip term is
present only in the skip variant and ``A_hat`` is the symmetrically
normalised, self-looped, undirected adjacency.  Training minimises the
class-weighted cross-entropy over a labelled mask with Adagrad.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyMask, SingleClassMask
from .graph import ILLICIT, LICIT, TransactionGraph
from .optim import Adagrad


def normalize_adjacency(graph_or_edges, n_nodes: int | None = None) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` over the symmetrised 0/1 adjacency (self-loops in the data are ignored)."""
    if isinstance(graph_or_edges, TransactionGraph):
        src, dst, n = graph_or_edges.src, graph_or_edges.dst, graph_or_edges.n_nodes
    else:
        src, dst = (np.asarray(a, dtype=np.int64) for a in graph_or_edges)
        n = n_nodes
    if n is None or n < 1:
        raise ValueError("graph has no nodes")
    keep = src != dst
    a = np.concatenate([src[keep], dst[keep]])
    b = np.concatenate([dst[keep], src[keep]])
    A = sp.csr_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    A.data[:] = 1.0  # duplicates were summed; back to 0/1
    A = A + sp.identity(n, format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    d = sp.diags(1.0 / np.sqrt(deg))
    return (d @ A @ d).tocsr()


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class GcnModel:
    W1: np.ndarray
    W2: np.ndarray
    W_skip: np.ndarray | None = None
    loss_history: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64).reshape(-1, 1)
        if self.W1.shape[1] != self.W2.shape[0]:
            raise DimensionMismatch("W1 columns must equal W2 rows")
        if self.W_skip is not None:
            self.W_skip = np.asarray(self.W_skip, dtype=np.float64).reshape(-1, 1)
            if self.W_skip.shape[0] != self.W1.shape[0]:
                raise DimensionMismatch("W_skip rows must equal the input width")

    @property
    def h(self) -> int:
        return self.W1.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def skip(self) -> bool:
        return self.W_skip is not None

    @classmethod
    def init(cls, in_dim: int, hidden: int = 128, skip: bool = False, seed: int = 0) -> "GcnModel":
        rng = np.random.default_rng(seed)
        g1 = np.sqrt(6.0 / (in_dim + hidden))
        g2 = np.sqrt(6.0 / (hidden + 1))
        return cls(rng.uniform(-g1, g1, (in_dim, hidden)), rng.uniform(-g2, g2, (hidden, 1)),
                   np.zeros((in_dim, 1)) if skip else None)

    def params(self) -> dict:
        p = {"W1": self.W1, "W2": self.W2}
        if self.skip:
            p["W_skip"] = self.W_skip
        return p

    def to_dict(self) -> dict:
        mat = lambda a: {"shape": list(a.shape), "values": [float(v) for v in a.ravel()]}
        return {"format": "graphlaunder.gcn", "version": 1,
                "params": {k: mat(v) for k, v in self.params().items()},
                "loss_history": [[int(s), float(l)] for s, l in self.loss_history]}

    @classmethod
    def from_dict(cls, d: dict) -> "GcnModel":
        if d.get("format") != "graphlaunder.gcn":
            raise ValueError("not a GCN model file")
        un = lambda m: np.array(m["values"], dtype=np.float64).reshape(m["shape"])
        p = d["params"]
        return cls(un(p["W1"]), un(p["W2"]), un(p["W_skip"]) if "W_skip" in p else None,
                   [(int(s), float(l)) for s, l in d.get("loss_history", [])])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GcnModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def gcn_forward(X, A_hat, model: GcnModel, return_cache: bool = False):
    """Per-node probability of the illicit class."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise DimensionMismatch(f"features have shape {X.shape}, model expects width {model.in_dim}")
    if A_hat.shape != (len(X), len(X)):
        raise DimensionMismatch("adjacency size must equal the number of feature rows")
    AX = A_hat @ X
    Z1 = AX @ model.W1
    H = np.maximum(Z1, 0.0)
    AH = A_hat @ H
    logit = (AH @ model.W2)[:, 0]
    if model.skip:
        logit = logit + (X @ model.W_skip)[:, 0]
    p = _sigmoid(logit)
    if return_cache:
        return p, (X, AX, Z1, AH, logit)
    return p


def _mask_positions(mask, n: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype == bool:
        if len(m) != n:
            raise DimensionMismatch("boolean mask length must equal node count")
        return np.flatnonzero(m)
    return m.astype(np.int64).reshape(-1)


def _logit_terms(logit, y):
    # -[y log p + (1-y) log(1-p)] computed from the logit for stability
    return np.logaddexp(0.0, logit) - y * logit


def weighted_ce_loss(probs, labels, class_weights, mask) -> float:
    """Mean over masked nodes of ``-w_y [y log p + (1-y) log(1-p)]``.

    ``class_weights`` is ``(w_licit, w_illicit)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    idx = _mask_positions(mask, len(probs))
    if len(idx) == 0:
        raise EmptyMask("no labelled nodes in the mask")
    y = (labels[idx] == ILLICIT).astype(np.float64)
    p = probs[idx]
    w = np.where(y == 1, class_weights[1], class_weights[0])
    with np.errstate(divide="ignore"):
        terms = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    return float(np.mean(w * terms))


def default_class_weights(labels, mask, cap: float = 50.0) -> tuple[float, float]:
    """Inverse class prevalence within the mask, capped."""
    idx = _mask_positions(mask, len(labels))
    y = np.asarray(labels)[idx]
    out = []
    for c in (LICIT, ILLICIT):
        prev = np.mean(y == c) if len(y) else 0.0
        out.append(float(min(1.0 / prev, cap)) if prev > 0 else cap)
    return out[0], out[1]


def gcn_loss_grad(X, A_hat, model: GcnModel, labels, class_weights, mask):
    """Weighted cross-entropy on the mask and its gradients for every parameter."""
    idx = _mask_positions(mask, len(X))
    if len(idx) == 0:
        raise EmptyMask("no labelled nodes in the mask")
    _, (X, AX, Z1, AH, logit) = gcn_forward(X, A_hat, model, return_cache=True)
    y = (np.asarray(labels)[idx] == ILLICIT).astype(np.float64)
    w = np.where(y == 1, class_weights[1], class_weights[0])
    loss = float(np.mean(w * _logit_terms(logit[idx], y)))
    dlogit = np.zeros(len(X))
    np.add.at(dlogit, idx, w * (_sigmoid(logit[idx]) - y) / len(idx))
    grads = {"W2": AH.T @ dlogit[:, None]}
    if model.skip:
        grads["W_skip"] = X.T @ dlogit[:, None]
    dH = A_hat.T @ (dlogit[:, None] @ model.W2.T)
    dZ1 = dH * (Z1 > 0)
    grads["W1"] = AX.T @ dZ1
    return loss, grads


def train_gcn(graph: TransactionGraph | None, features, labels, mask, model: GcnModel | None = None,
              hidden: int = 128, skip: bool = False, lr: float = 0.01, epochs: int = 200,
              batch_size: int | None = None, class_weights=None, seed: int = 0, A_hat=None) -> GcnModel:
    """Adagrad on the weighted cross-entropy.

    Full-batch by default; with ``batch_size`` each step uses a random subset
    of the mask.  ``loss_history`` collects ``(step, full-mask loss)``: the
    loss the step's gradient was taken at in full-batch mode, the post-step
    loss otherwise.  Unknown labels must not appear in the mask.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if A_hat is None:
        A_hat = normalize_adjacency(graph)
    idx = _mask_positions(mask, len(X))
    if len(idx) == 0:
        raise EmptyMask("no labelled nodes in the mask")
    present = set(np.unique(labels[idx]).tolist())
    if not {LICIT, ILLICIT} <= present:
        raise SingleClassMask("training mask must contain both licit and illicit nodes")
    if present - {LICIT, ILLICIT}:
        raise ValueError("training mask contains nodes without a licit/illicit label")
    cw = default_class_weights(labels, idx) if class_weights is None else tuple(class_weights)
    if model is None:
        model = GcnModel.init(X.shape[1], hidden, skip, seed)
    rng = np.random.default_rng(seed)
    opt = Adagrad(model.params(), lr=lr)
    step = 0
    for _ in range(epochs):
        if batch_size is None or batch_size >= len(idx):
            batches = [idx]
        else:
            perm = rng.permutation(idx)
            batches = [perm[i:i + batch_size] for i in range(0, len(perm), batch_size)]
        for b in batches:
            loss, grads = gcn_loss_grad(X, A_hat, model, labels, cw, b)
            opt.step(grads)
            step += 1
            if len(batches) > 1:
                loss = gcn_loss_grad(X, A_hat, model, labels, cw, idx)[0]
            model.loss_history.append((step, loss))
    return model


def write_training_curve(path, model: GcnModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for s, l in model.loss_history:
            fh.write(f"{s},{l!r}\n")

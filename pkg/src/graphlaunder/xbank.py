"""Cross-bank account similarity from hash-seeded random projections.

Every party derives the same ±1 base vector for an account key from a public
seed, so two banks can embed their own accounts from first neighbours only
and still compare the results.  Each account gets an incoming and an outgoing
embedding (weighted sum of neighbour base vectors, L2-normalised) and two
accounts are compared by the product of the two inner products.
"""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MissingBaseVector
from .graph import WeightedDigraph


class Direction(str, enum.Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"


def hash_init_embedding(external_key: str, public_seed: int, d: int) -> np.ndarray:
    """Rademacher vector from a seed-keyed BLAKE2b stream over ``external_key``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    key = int(public_seed).to_bytes(16, "little", signed=True)
    n_bytes = (d + 7) // 8
    stream = b""
    block = 0
    while len(stream) < n_bytes:
        h = hashlib.blake2b(str(external_key).encode("utf-8"), key=key, digest_size=64,
                            person=block.to_bytes(16, "little"))
        stream += h.digest()
        block += 1
    bits = np.unpackbits(np.frombuffer(stream[:n_bytes], dtype=np.uint8), bitorder="little")[:d]
    return np.where(bits == 1, 1.0, -1.0)


def base_vectors(keys, public_seed: int, d: int) -> dict:
    return {k: hash_init_embedding(k, public_seed, d) for k in keys}


def aggregate_neighbors(subgraph: WeightedDigraph, node, direction, base: dict) -> np.ndarray:
    """Weighted sum of neighbour base vectors in one direction; zero vector if there are none.

    ``base`` maps node id to base vector.
    """
    direction = Direction(direction)
    if direction is Direction.INCOMING:
        sel = subgraph.dst == node
        others, w = subgraph.src[sel], subgraph.weight[sel]
    else:
        sel = subgraph.src == node
        others, w = subgraph.dst[sel], subgraph.weight[sel]
    d = len(next(iter(base.values()))) if base else 0
    out = np.zeros(d)
    for m, wm in zip(others.tolist(), w.tolist()):
        if m not in base:
            raise MissingBaseVector(m)
        out += base[m] * wm
    return out


def normalize_embedding(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    norm = np.linalg.norm(e)
    return e.copy() if norm == 0 else e / norm


@dataclass
class XbankEmbedding:
    node_id: object
    e_in: np.ndarray
    e_out: np.ndarray

    @property
    def d(self) -> int:
        return len(self.e_in)


@dataclass(frozen=True)
class SimilarityScore:
    node_a: object
    node_b: object
    sigma: float


def similarity(a: XbankEmbedding, b: XbankEmbedding) -> SimilarityScore:
    if a.d != b.d or len(a.e_out) != len(b.e_out):
        raise DimensionMismatch(f"embedding dimensions differ: {a.d} vs {b.d}")
    s_in = float(np.dot(a.e_in, b.e_in))
    s_out = float(np.dot(a.e_out, b.e_out))
    return SimilarityScore(a.node_id, b.node_id, s_in * s_out)


def bank_embeddings(subgraph: WeightedDigraph, public_seed: int, d: int = 64, keys=None, nodes=None):
    """In/out embeddings for ``nodes`` (default: every node in the subgraph).

    A requested node absent from the subgraph has no transfers and gets zero vectors.

    ``keys`` maps node id to the public account key used for hashing (default: ``str(node_id)``).
    Vectorised equivalent of calling :func:`aggregate_neighbors` per node and direction.
    """
    ids = subgraph.node_ids
    key_of = (lambda v: keys[v]) if keys is not None else str
    B = np.stack([hash_init_embedding(key_of(v), public_seed, d) for v in ids.tolist()]) if len(ids) else np.zeros((0, d))
    n = len(ids)
    index = {v: i for i, v in enumerate(ids.tolist())}
    s = np.array([index[v] for v in subgraph.src.tolist()], dtype=np.int64)
    t = np.array([index[v] for v in subgraph.dst.tolist()], dtype=np.int64)
    E_in = np.zeros((n, d))
    E_out = np.zeros((n, d))
    if len(s):
        np.add.at(E_in, t, B[s] * subgraph.weight[:, None])
        np.add.at(E_out, s, B[t] * subgraph.weight[:, None])
    if nodes is None:
        return [XbankEmbedding(ids[p].item(), normalize_embedding(E_in[p]), normalize_embedding(E_out[p]))
                for p in range(n)]
    # controlled accounts without any visible transfer get zero embeddings
    zero = np.zeros(d)
    return [XbankEmbedding(v, normalize_embedding(E_in[index[v]]), normalize_embedding(E_out[index[v]]))
            if v in index else XbankEmbedding(v, zero.copy(), zero.copy()) for v in nodes]


def rank_suspect_pairs(bank_a: list[XbankEmbedding], bank_b: list[XbankEmbedding], top_k: int) -> list[SimilarityScore]:
    """All cross pairs by descending sigma, ties by ``(node_a, node_b)``, truncated to ``top_k``."""
    if top_k <= 0 or not bank_a or not bank_b:
        return []
    if bank_a[0].d != bank_b[0].d:
        raise DimensionMismatch("banks use different embedding dimensions")
    Ia = np.stack([e.e_in for e in bank_a]); Oa = np.stack([e.e_out for e in bank_a])
    Ib = np.stack([e.e_in for e in bank_b]); Ob = np.stack([e.e_out for e in bank_b])
    S = (Ia @ Ib.T) * (Oa @ Ob.T)
    ida = [e.node_id for e in bank_a]
    idb = [e.node_id for e in bank_b]
    ra = np.argsort(np.argsort(np.array(ida, dtype=object), kind="stable"), kind="stable")
    rb = np.argsort(np.argsort(np.array(idb, dtype=object), kind="stable"), kind="stable")
    ii, jj = np.meshgrid(np.arange(len(bank_a)), np.arange(len(bank_b)), indexing="ij")
    flat = S.ravel()
    order = np.lexsort((rb[jj.ravel()], ra[ii.ravel()], -flat))[:top_k]
    return [SimilarityScore(ida[ii.flat[o]], idb[jj.flat[o]], float(flat[o])) for o in order]


def write_bank_embeddings(path, embeddings: list[XbankEmbedding]) -> None:
    d = embeddings[0].d if embeddings else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id"] + [f"e_in_{i}" for i in range(d)] + [f"e_out_{i}" for i in range(d)])
        for e in embeddings:
            w.writerow([e.node_id] + [repr(float(x)) for x in e.e_in] + [repr(float(x)) for x in e.e_out])


def write_similarity_report(path, scores: list[SimilarityScore]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_a", "node_b", "sigma"])
        for s in scores:
            w.writerow([s.node_a, s.node_b, repr(s.sigma)])

"""Directed transaction multigraph, holdout splitting, edge aggregation and roles.

Nodes carry caller-supplied integer ids; internally every per-node array is
indexed by *position* (0..n-1) and ``graph.index`` maps ids to positions.  The
multigraph keeps one entry per transfer.  ``aggregate_edges`` collapses it to a
weighted simple digraph when summed volumes are needed.
"""

from __future__ import annotations

import csv
import enum
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DanglingEdge, DuplicateNode, EmptyWindow, UnresolvedAlert


class AccountKind(str, enum.Enum):
    INDIVIDUAL = "individual"
    ORGANIZATION = "organization"
    UNKNOWN = "unknown"


class LabelValue(str, enum.Enum):
    LICIT = "licit"
    ILLICIT = "illicit"
    UNKNOWN = "unknown"


class AlertType(str, enum.Enum):
    FAN_IN = "fan_in"
    FAN_OUT = "fan_out"
    GATHER_SCATTER = "gather_scatter"
    SCATTER_GATHER = "scatter_gather"
    CYCLE = "cycle"
    COLUMN_CHAIN = "column_chain"
    ROW_CHAIN = "row_chain"
    OTHER = "other"


class Role(str, enum.Enum):
    OUTER_SOURCE = "outer_source"
    INNER = "inner"
    OUTER_SINK = "outer_sink"
    UNASSIGNED = "unassigned"


# integer codes used in the label array
LICIT, ILLICIT, UNKNOWN = 0, 1, -1
_LABEL_CODE = {LabelValue.LICIT: LICIT, LabelValue.ILLICIT: ILLICIT, LabelValue.UNKNOWN: UNKNOWN}
_CODE_LABEL = {v: k for k, v in _LABEL_CODE.items()}


@dataclass(frozen=True)
class NodeLabel:
    value: LabelValue = LabelValue.UNKNOWN
    alert_type: AlertType | None = None

    def __post_init__(self):
        object.__setattr__(self, "value", LabelValue(self.value))
        if self.alert_type is not None:
            object.__setattr__(self, "alert_type", AlertType(self.alert_type))
            if self.value is not LabelValue.ILLICIT:
                raise ValueError("alert_type is only allowed on illicit labels")


@dataclass
class AccountNode:
    node_id: int
    external_key: str = ""
    account_kind: AccountKind = AccountKind.UNKNOWN
    created_at: int = 0
    features: np.ndarray | None = None
    label: NodeLabel = field(default_factory=NodeLabel)
    role: Role = Role.UNASSIGNED

    def __post_init__(self):
        self.account_kind = AccountKind(self.account_kind)
        self.role = Role(self.role)
        if not self.external_key:
            self.external_key = str(self.node_id)


@dataclass(frozen=True)
class TransferEdge:
    tx_id: int
    src: int
    dst: int
    amount: float
    timestamp: int = 0
    alert_id: int | None = None

    def __post_init__(self):
        if not self.amount > 0:
            raise ValueError(f"transaction {self.tx_id}: amount must be positive, got {self.amount}")


@dataclass(frozen=True)
class Alert:
    """An alert attached either to an account (``target="node"``) or a transfer (``"tx"``)."""

    target: str
    ref: int
    alert_type: AlertType = AlertType.OTHER

    def __post_init__(self):
        if self.target not in ("node", "tx"):
            raise ValueError(f"alert target must be 'node' or 'tx', got {self.target!r}")
        object.__setattr__(self, "alert_type", AlertType(self.alert_type))


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=offsets[1:])
    return offsets, order


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class TransactionGraph:
    """Immutable directed multigraph of accounts and transfers.

    Edge endpoint arrays ``src``/``dst`` hold node *positions*.  ``out_offsets``
    and ``out_order`` form a CSR index over edges grouped by source position
    (likewise ``in_*`` by destination); each edge appears exactly once in each.
    """

    def __init__(
        self,
        node_ids,
        src,
        dst,
        amount,
        *,
        timestamp=None,
        tx_ids=None,
        alert_ids=None,
        external_keys: Sequence[str] | None = None,
        account_kinds: Sequence[str] | None = None,
        created_at=None,
        labels=None,
        alert_types: Sequence[str | None] | None = None,
        roles: Sequence[str] | None = None,
        features: np.ndarray | None = None,
        timestep_bins: Sequence[int] | None = None,
    ):
        node_ids = np.asarray(node_ids, dtype=np.int64).reshape(-1)
        n = len(node_ids)
        self.index = {int(v): i for i, v in enumerate(node_ids)}
        if len(self.index) != n:
            seen = set()
            for v in node_ids.tolist():
                if v in seen:
                    raise DuplicateNode(v)
                seen.add(v)
        m = len(src)
        self.node_ids = _frozen(node_ids)
        self.src = _frozen(np.asarray(src, dtype=np.int64).reshape(-1))
        self.dst = _frozen(np.asarray(dst, dtype=np.int64).reshape(-1))
        self.amount = _frozen(np.asarray(amount, dtype=np.float64).reshape(-1))
        if m and (self.src.min() < 0 or self.src.max() >= n or self.dst.min() < 0 or self.dst.max() >= n):
            raise ValueError("edge endpoint positions out of range")
        if m and not np.all(self.amount > 0):
            raise ValueError("all transfer amounts must be positive")
        self.timestamp = _frozen(np.zeros(m, np.int64) if timestamp is None else np.asarray(timestamp, np.int64))
        self.tx_ids = _frozen(np.arange(m, dtype=np.int64) if tx_ids is None else np.asarray(tx_ids, np.int64))
        self.alert_ids = _frozen(np.full(m, -1, np.int64) if alert_ids is None else np.asarray(alert_ids, np.int64))
        self.external_keys = list(external_keys) if external_keys is not None else [str(v) for v in node_ids.tolist()]
        self.account_kinds = [AccountKind(k) for k in account_kinds] if account_kinds is not None else [AccountKind.UNKNOWN] * n
        self.created_at = _frozen(np.zeros(n, np.int64) if created_at is None else np.asarray(created_at, np.int64))
        self.labels = _frozen(np.full(n, UNKNOWN, np.int8) if labels is None else np.asarray(labels, np.int8))
        self.alert_types = [None if a is None else AlertType(a) for a in alert_types] if alert_types is not None else [None] * n
        self.roles = [Role(r) for r in roles] if roles is not None else [Role.UNASSIGNED] * n
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != n:
                raise ValueError("features must be an (n_nodes, n_features) matrix")
            features = _frozen(features)
        self.features = features
        self.timestep_bins = tuple(int(b) for b in timestep_bins) if timestep_bins is not None else None
        for name, seq in (("external_keys", self.external_keys), ("account_kinds", self.account_kinds),
                          ("alert_types", self.alert_types), ("roles", self.roles)):
            if len(seq) != n:
                raise ValueError(f"{name} has length {len(seq)}, expected {n}")
        for i, a in enumerate(self.alert_types):
            if a is not None and self.labels[i] != ILLICIT:
                raise ValueError(f"node {node_ids[i]} has an alert type but is not illicit")
        self.out_offsets, self.out_order = (_frozen(a) for a in _csr(self.src, n))
        self.in_offsets, self.in_order = (_frozen(a) for a in _csr(self.dst, n))

    # -- sizes and lookups -------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def n_self_loops(self) -> int:
        return int(np.count_nonzero(self.src == self.dst))

    def __repr__(self):
        return f"TransactionGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"

    def positions(self, node_ids: Iterable[int]) -> np.ndarray:
        return np.array([self.index[int(v)] for v in node_ids], dtype=np.int64)

    def out_edges(self, pos: int) -> np.ndarray:
        return self.out_order[self.out_offsets[pos]:self.out_offsets[pos + 1]]

    def in_edges(self, pos: int) -> np.ndarray:
        return self.in_order[self.in_offsets[pos]:self.in_offsets[pos + 1]]

    def successors(self, pos: int) -> np.ndarray:
        """Destination positions of out-edges, one entry per transfer (multiplicity kept)."""
        return self.dst[self.out_edges(pos)]

    def predecessors(self, pos: int) -> np.ndarray:
        return self.src[self.in_edges(pos)]

    def label(self, node_id: int) -> NodeLabel:
        i = self.index[int(node_id)]
        return NodeLabel(_CODE_LABEL[int(self.labels[i])], self.alert_types[i])

    def node(self, node_id: int) -> AccountNode:
        i = self.index[int(node_id)]
        return AccountNode(
            node_id=int(self.node_ids[i]),
            external_key=self.external_keys[i],
            account_kind=self.account_kinds[i],
            created_at=int(self.created_at[i]),
            features=None if self.features is None else self.features[i],
            label=NodeLabel(_CODE_LABEL[int(self.labels[i])], self.alert_types[i]),
            role=self.roles[i],
        )

    @property
    def nodes(self) -> list[AccountNode]:
        return [self.node(v) for v in self.node_ids.tolist()]

    @property
    def edges(self) -> list[TransferEdge]:
        ids = self.node_ids
        return [
            TransferEdge(int(t), int(ids[s]), int(ids[d]), float(a), int(ts), None if al < 0 else int(al))
            for t, s, d, a, ts, al in zip(self.tx_ids, self.src, self.dst, self.amount, self.timestamp, self.alert_ids)
        ]

    def label_histogram(self) -> dict[str, int]:
        return {lv.value: int(np.count_nonzero(self.labels == code)) for lv, code in _LABEL_CODE.items()}

    @property
    def illicit_prevalence(self) -> float:
        return float(np.count_nonzero(self.labels == ILLICIT)) / max(self.n_nodes, 1)

    def time_range(self) -> tuple[int, int] | None:
        if self.n_edges == 0:
            return None
        return int(self.timestamp.min()), int(self.timestamp.max())

    # -- derivation ---------------------------------------------------------
    def _node_kwargs(self, keep: np.ndarray | None = None) -> dict:
        sel = (lambda seq: [seq[i] for i in keep]) if keep is not None else list
        arr = (lambda a: a[keep]) if keep is not None else (lambda a: a)
        return dict(
            external_keys=sel(self.external_keys),
            account_kinds=sel(self.account_kinds),
            created_at=arr(self.created_at),
            labels=arr(self.labels),
            alert_types=sel(self.alert_types),
            roles=sel(self.roles),
            features=None if self.features is None else arr(self.features),
            timestep_bins=self.timestep_bins,
        )

    def replace(self, **changes) -> "TransactionGraph":
        """Copy of this graph with node attributes (labels, roles, features, ...) replaced."""
        kwargs = self._node_kwargs()
        kwargs.update(changes)
        return TransactionGraph(
            self.node_ids, self.src, self.dst, self.amount,
            timestamp=self.timestamp, tx_ids=self.tx_ids, alert_ids=self.alert_ids, **kwargs,
        )

    def subgraph(self, keep_positions) -> "TransactionGraph":
        """Induced subgraph on the given positions (original node ids retained)."""
        keep = np.unique(np.asarray(keep_positions, dtype=np.int64))
        remap = np.full(self.n_nodes, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        emask = (remap[self.src] >= 0) & (remap[self.dst] >= 0)
        return TransactionGraph(
            self.node_ids[keep], remap[self.src[emask]], remap[self.dst[emask]], self.amount[emask],
            timestamp=self.timestamp[emask], tx_ids=self.tx_ids[emask], alert_ids=self.alert_ids[emask],
            **self._node_kwargs(keep),
        )


def build_graph(
    accounts: Sequence[AccountNode],
    transactions: Sequence[TransferEdge],
    alerts: Sequence[Alert] = (),
    timestep_bins: Sequence[int] | None = None,
) -> TransactionGraph:
    """Assemble a graph and annotate alert members as illicit.

    Node alerts label the account; transaction alerts label both endpoints.
    When several alerts hit one node the first one's type wins.
    """
    index: dict[int, int] = {}
    for i, acc in enumerate(accounts):
        if acc.node_id in index:
            raise DuplicateNode(acc.node_id)
        index[acc.node_id] = i
    n = len(accounts)

    src = np.empty(len(transactions), dtype=np.int64)
    dst = np.empty(len(transactions), dtype=np.int64)
    tx_pos: dict[int, int] = {}
    for j, tx in enumerate(transactions):
        try:
            src[j] = index[tx.src]
        except KeyError:
            raise DanglingEdge(tx.tx_id, tx.src) from None
        try:
            dst[j] = index[tx.dst]
        except KeyError:
            raise DanglingEdge(tx.tx_id, tx.dst) from None
        tx_pos[tx.tx_id] = j

    labels = np.array([_LABEL_CODE[a.label.value] for a in accounts], dtype=np.int8)
    alert_types = [a.label.alert_type for a in accounts]

    def mark(pos: int, kind: AlertType):
        labels[pos] = ILLICIT
        if alert_types[pos] is None:
            alert_types[pos] = kind

    for al in alerts:
        if al.target == "node":
            if al.ref not in index:
                raise UnresolvedAlert(f"alert references unknown account {al.ref}")
            mark(index[al.ref], al.alert_type)
        else:
            if al.ref not in tx_pos:
                raise UnresolvedAlert(f"alert references unknown transaction {al.ref}")
            j = tx_pos[al.ref]
            mark(int(src[j]), al.alert_type)
            mark(int(dst[j]), al.alert_type)

    features = None
    with_feats = [a.features is not None for a in accounts]
    if any(with_feats):
        if not all(with_feats):
            raise ValueError("features must be present on every node or on none")
        features = np.vstack([np.asarray(a.features, dtype=np.float64).reshape(1, -1) for a in accounts])

    return TransactionGraph(
        [a.node_id for a in accounts], src, dst, [t.amount for t in transactions],
        timestamp=[t.timestamp for t in transactions],
        tx_ids=[t.tx_id for t in transactions],
        alert_ids=[-1 if t.alert_id is None else t.alert_id for t in transactions],
        external_keys=[a.external_key for a in accounts],
        account_kinds=[a.account_kind for a in accounts],
        created_at=[a.created_at for a in accounts],
        labels=labels,
        alert_types=alert_types,
        roles=[a.role for a in accounts],
        features=features,
        timestep_bins=timestep_bins,
    )


def _apportion(sizes: Sequence[int], fraction: float, total: int) -> list[int]:
    """Largest-remainder allocation of ``total`` across groups proportional to ``sizes``."""
    exact = [fraction * s for s in sizes]
    counts = [min(int(math.floor(e)), s) for e, s in zip(exact, sizes)]
    rest = total - sum(counts)
    order = sorted(range(len(sizes)), key=lambda g: (-(exact[g] - counts[g]), g))
    for g in order:
        if rest <= 0:
            break
        if counts[g] < sizes[g]:
            counts[g] += 1
            rest -= 1
    return counts


def holdout_split(graph: TransactionGraph, fraction: float, seed: int) -> tuple[TransactionGraph, set[int]]:
    """Remove ``round(fraction * n)`` nodes, stratified by label, with all incident edges."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    n = graph.n_nodes
    total = int(math.floor(fraction * n + 0.5))
    if total == 0:
        return graph, set()
    rng = np.random.default_rng(seed)
    groups = [np.flatnonzero(graph.labels == code) for code in (ILLICIT, LICIT, UNKNOWN)]
    counts = _apportion([len(g) for g in groups], fraction, total)
    held = [rng.permutation(g)[:c] for g, c in zip(groups, counts)]
    held_pos = np.concatenate(held) if held else np.empty(0, np.int64)
    keep = np.setdiff1d(np.arange(n), held_pos)
    return graph.subgraph(keep), {int(v) for v in graph.node_ids[held_pos]}


@dataclass(frozen=True)
class WeightedDigraph:
    """Simple directed graph with one summed weight per ordered node pair.

    ``src``/``dst`` hold node ids, sorted by (src, dst).  Pairs absent here
    have weight zero.
    """

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    node_ids: np.ndarray

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(s), int(d)): float(w) for s, d, w in zip(self.src, self.dst, self.weight)}

    def __len__(self):
        return len(self.src)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())


def aggregate_edges(graph: TransactionGraph, window: tuple[int, int] | None = None) -> WeightedDigraph:
    """Sum transfer amounts per ordered account pair, optionally within ``[start, end]``."""
    mask = np.ones(graph.n_edges, dtype=bool)
    if window is not None:
        start, end = window
        if start > end:
            raise ValueError("window start must not exceed its end")
        mask = (graph.timestamp >= start) & (graph.timestamp <= end)
        if not mask.any():
            warnings.warn(EmptyWindow(f"no transfer falls in window {window}"), stacklevel=2)
    n = graph.n_nodes
    keys = graph.src[mask] * n + graph.dst[mask]
    uniq, inverse = np.unique(keys, return_inverse=True)
    weight = np.bincount(inverse, weights=graph.amount[mask], minlength=len(uniq))
    ids = graph.node_ids
    return WeightedDigraph(ids[uniq // n], ids[uniq % n], weight, ids)


def assign_roles(graph: TransactionGraph, inner: Iterable[int] | None = None) -> TransactionGraph:
    """Partition accounts into outer sources, inner accounts and outer sinks by net flow.

    ``inner`` lists the bank's own accounts; when omitted, nodes already marked
    ``inner`` are used, and if there are none every node is inner.  Net flow is
    taken over the whole graph lifetime.
    """
    n = graph.n_nodes
    if inner is not None:
        is_inner = np.zeros(n, dtype=bool)
        is_inner[graph.positions(inner)] = True
    else:
        is_inner = np.array([r is Role.INNER for r in graph.roles], dtype=bool)
        if not is_inner.any():
            is_inner[:] = True
    into_bank = (~is_inner[graph.src]) & is_inner[graph.dst]
    out_of_bank = is_inner[graph.src] & (~is_inner[graph.dst])
    net = np.bincount(graph.src[into_bank], weights=graph.amount[into_bank], minlength=n)
    net -= np.bincount(graph.dst[out_of_bank], weights=graph.amount[out_of_bank], minlength=n)
    roles = []
    for i in range(n):
        if is_inner[i]:
            roles.append(Role.INNER)
        elif net[i] > 0:
            roles.append(Role.OUTER_SOURCE)
        elif net[i] < 0:
            roles.append(Role.OUTER_SINK)
        else:
            roles.append(Role.UNASSIGNED)
    return graph.replace(roles=roles)


STRUCTURAL_FEATURE_NAMES = (
    "log_in_degree", "log_out_degree", "log_in_amount", "log_out_amount",
    "log_max_in_amount", "log_max_out_amount", "log_in_neighbors", "log_out_neighbors",
    "pass_through", "log_mean_in_amount", "log_mean_out_amount",
    "in_amount", "out_amount", "max_in_amount", "max_out_amount", "mean_in_amount", "mean_out_amount",
)


def structural_features(graph: TransactionGraph) -> np.ndarray:
    """Per-node flow statistics for graphs that ship without node attributes.

    Amount statistics appear on both log and linear scale: the linear copies
    keep large outlying transfers prominent after neighbourhood averaging.
    """
    n = graph.n_nodes
    src, dst, amt = graph.src, graph.dst, graph.amount
    in_deg = np.bincount(dst, minlength=n).astype(float)
    out_deg = np.bincount(src, minlength=n).astype(float)
    in_amt = np.bincount(dst, weights=amt, minlength=n)
    out_amt = np.bincount(src, weights=amt, minlength=n)
    max_in = np.zeros(n)
    max_out = np.zeros(n)
    np.maximum.at(max_in, dst, amt)
    np.maximum.at(max_out, src, amt)
    pairs = np.unique(src * n + dst)
    in_nb = np.bincount(pairs % n, minlength=n).astype(float)
    out_nb = np.bincount(pairs // n, minlength=n).astype(float)
    hi = np.maximum(in_amt, out_amt)
    pass_through = np.divide(np.minimum(in_amt, out_amt), hi, out=np.zeros(n), where=hi > 0)
    mean_in = np.divide(in_amt, in_deg, out=np.zeros(n), where=in_deg > 0)
    mean_out = np.divide(out_amt, out_deg, out=np.zeros(n), where=out_deg > 0)
    cols = [in_deg, out_deg, in_amt, out_amt, max_in, max_out, in_nb, out_nb]
    feats = [np.log1p(c) for c in cols] + [pass_through, np.log1p(mean_in), np.log1p(mean_out)]
    feats += [in_amt, out_amt, max_in, max_out, mean_in, mean_out]
    return np.column_stack(feats)


def node_feature_matrix(graph: TransactionGraph) -> np.ndarray:
    """Attached node features when present, otherwise ``structural_features``."""
    return np.asarray(graph.features) if graph.features is not None else structural_features(graph)


# -- delimited-text export ------------------------------------------------
NODES_FILE, EDGES_FILE, LABELS_FILE = "nodes.csv", "edges.csv", "labels.csv"
NODE_COLUMNS = ["node_id", "external_key", "account_kind", "created_at", "role"]
EDGE_COLUMNS = ["tx_id", "src", "dst", "amount", "timestamp", "alert_id"]
LABEL_COLUMNS = ["node_id", "label", "alert_type"]


def export_graph(graph: TransactionGraph, directory: str | os.PathLike) -> None:
    """Write ``nodes.csv``, ``edges.csv`` and ``labels.csv``.

    Node feature columns, when present, follow the fixed node columns as
    ``f_0 .. f_{k-1}``.  Floats use ``repr`` so a re-read is exact.
    """
    os.makedirs(directory, exist_ok=True)
    ids = graph.node_ids
    nf = 0 if graph.features is None else graph.features.shape[1]
    with open(os.path.join(directory, NODES_FILE), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(NODE_COLUMNS + [f"f_{k}" for k in range(nf)])
        for i in range(graph.n_nodes):
            row = [int(ids[i]), graph.external_keys[i], graph.account_kinds[i].value,
                   int(graph.created_at[i]), graph.roles[i].value]
            if nf:
                row += [repr(float(x)) for x in graph.features[i]]
            w.writerow(row)
    with open(os.path.join(directory, EDGES_FILE), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_COLUMNS)
        for t, s, d, a, ts, al in zip(graph.tx_ids, graph.src, graph.dst, graph.amount,
                                      graph.timestamp, graph.alert_ids):
            w.writerow([int(t), int(ids[s]), int(ids[d]), repr(float(a)), int(ts), "" if al < 0 else int(al)])
    with open(os.path.join(directory, LABELS_FILE), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_COLUMNS)
        for i in range(graph.n_nodes):
            at = graph.alert_types[i]
            w.writerow([int(ids[i]), _CODE_LABEL[int(graph.labels[i])].value, "" if at is None else at.value])


def import_graph(directory: str | os.PathLike) -> TransactionGraph:
    """Inverse of :func:`export_graph`."""
    with open(os.path.join(directory, NODES_FILE), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    fcols = sorted((c for c in (rows[0].keys() if rows else []) if c.startswith("f_")), key=lambda c: int(c[2:]))
    with open(os.path.join(directory, LABELS_FILE), newline="", encoding="utf-8") as fh:
        labels = {int(r["node_id"]): r for r in csv.DictReader(fh)}
    accounts = []
    for r in rows:
        nid = int(r["node_id"])
        lab = labels.get(nid, {"label": "unknown", "alert_type": ""})
        accounts.append(AccountNode(
            node_id=nid,
            external_key=r["external_key"],
            account_kind=r["account_kind"],
            created_at=int(r["created_at"]),
            features=np.array([float(r[c]) for c in fcols]) if fcols else None,
            label=NodeLabel(lab["label"], lab["alert_type"] or None),
            role=r["role"],
        ))
    with open(os.path.join(directory, EDGES_FILE), newline="", encoding="utf-8") as fh:
        edges = [
            TransferEdge(int(r["tx_id"]), int(r["src"]), int(r["dst"]), float(r["amount"]),
                         int(r["timestamp"]), int(r["alert_id"]) if r["alert_id"] else None)
            for r in csv.DictReader(fh)
        ]
    return build_graph(accounts, edges)

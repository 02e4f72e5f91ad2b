"""Deterministic desk-scale transaction graphs with planted laundering topologies."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientNodes
from .graph import ILLICIT, LICIT, AccountKind, AlertType, TransactionGraph


class PatternKind(str, enum.Enum):
    COLUMN_CHAIN = "column_chain"
    ROW_CHAIN = "row_chain"
    GATHER_SCATTER = "gather_scatter"
    SCATTER_GATHER = "scatter_gather"
    CYCLE = "cycle"
    FAN_IN = "fan_in"
    FAN_OUT = "fan_out"


@dataclass(frozen=True)
class PatternSpec:
    kind: PatternKind
    member_count: int
    total_amount: float
    start_time: int
    end_time: int
    commission_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PatternKind(self.kind))
        if self.member_count < 3:
            raise ValueError("member_count must be at least 3")
        if not self.total_amount > 0:
            raise ValueError("total_amount must be positive")
        if not self.start_time < self.end_time:
            raise ValueError("start_time must precede end_time")
        if not 0.0 <= self.commission_rate <= 0.2:
            raise ValueError("commission_rate must lie in [0, 0.2]")


def gen_background(
    n_nodes: int,
    avg_out_degree: float = 4.0,
    amount_mu: float = 5.0,
    amount_sigma: float = 1.0,
    seed: int = 0,
    horizon: int = 365,
    org_fraction: float = 0.1,
) -> TransactionGraph:
    """Licit background: Poisson out-degrees, uniform targets, log-normal amounts.

    Timestamps are integer day indices drawn uniformly from ``[0, horizon)``.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    rng = np.random.default_rng(seed)
    kinds = np.where(rng.random(n_nodes) < org_fraction, AccountKind.ORGANIZATION.value, AccountKind.INDIVIDUAL.value)
    created = rng.integers(-3 * 365, 0, size=n_nodes)
    degree = rng.poisson(avg_out_degree, size=n_nodes) if n_nodes > 1 else np.zeros(1, np.int64)
    src = np.repeat(np.arange(n_nodes), degree)
    # uniform over the other n-1 nodes: draw in [0, n-1) and skip over the source
    dst = rng.integers(0, max(n_nodes - 1, 1), size=len(src))
    dst = dst + (dst >= src)
    amount = np.maximum(np.round(rng.lognormal(amount_mu, amount_sigma, size=len(src)), 2), 0.01)
    stamp = rng.integers(0, horizon, size=len(src))
    order = np.lexsort((src, stamp))
    return TransactionGraph(
        np.arange(n_nodes), src[order], dst[order], amount[order],
        timestamp=stamp[order],
        external_keys=[f"ACC{i:07d}" for i in range(n_nodes)],
        account_kinds=kinds.tolist(),
        created_at=created,
        labels=np.full(n_nodes, LICIT, np.int8),
        timestep_bins=list(range(horizon)),
    )


def _pattern_edges(kind: PatternKind, members: list[int], total: float, c: float, t0: int, t1: int):
    """(src, dst, amount, time) tuples realising one topology over ``members``."""
    m = len(members)

    def at(h, hops):
        return t0 + int(round((t1 - t0) * h / max(hops - 1, 1)))

    if kind in (PatternKind.COLUMN_CHAIN, PatternKind.SCATTER_GATHER):
        sender, receiver, mids = members[0], members[-1], members[1:-1]
        part = total / len(mids)
        return ([(sender, x, part, t0) for x in mids] +
                [(x, receiver, part, t1) for x in mids])
    if kind is PatternKind.GATHER_SCATTER:
        hub, rest = members[0], members[1:]
        n_in = (len(rest) + 1) // 2
        sources, sinks = rest[:n_in], rest[n_in:]
        return ([(x, hub, total / len(sources), t0) for x in sources] +
                [(hub, x, total / len(sinks), t1) for x in sinks])
    if kind is PatternKind.ROW_CHAIN:
        hops = m - 1
        return [(members[h], members[h + 1], total * (1.0 - c) ** h, at(h, hops)) for h in range(hops)]
    if kind is PatternKind.CYCLE:
        return [(members[h], members[(h + 1) % m], total * (1.0 - c) ** h, at(h, m)) for h in range(m)]
    if kind is PatternKind.FAN_IN:
        return [(x, members[0], total / (m - 1), at(i, m - 1)) for i, x in enumerate(members[1:])]
    if kind is PatternKind.FAN_OUT:
        return [(members[0], x, total / (m - 1), at(i, m - 1)) for i, x in enumerate(members[1:])]
    raise ValueError(kind)


def inject_pattern(
    graph: TransactionGraph,
    spec: PatternSpec,
    seed: int,
    alert_id: int | None = None,
    exclude=(),
) -> tuple[TransactionGraph, list[int]]:
    """Plant one laundering topology on randomly chosen non-illicit accounts.

    Returns the new graph and the member node ids in topology order (for
    chains: sender first, receiver last).  Members are relabelled illicit with
    ``alert_type = spec.kind``; the new transfers carry ``alert_id``.
    """
    rng = np.random.default_rng(seed)
    candidates = np.flatnonzero(graph.labels != ILLICIT)
    if exclude:
        candidates = np.setdiff1d(candidates, graph.positions(exclude))
    if len(candidates) < spec.member_count:
        raise InsufficientNodes(f"need {spec.member_count} candidate accounts, graph has {len(candidates)}")
    pos = rng.choice(candidates, size=spec.member_count, replace=False)
    members = [int(v) for v in graph.node_ids[pos]]
    new = _pattern_edges(spec.kind, pos.tolist(), spec.total_amount, spec.commission_rate,
                         spec.start_time, spec.end_time)
    k = len(new)
    first_tx = int(graph.tx_ids.max()) + 1 if graph.n_edges else 0
    labels = graph.labels.copy()
    labels[pos] = ILLICIT
    alert_types = list(graph.alert_types)
    for p in pos:
        alert_types[p] = AlertType(spec.kind.value)
    aid = -1 if alert_id is None else alert_id
    out = TransactionGraph(
        graph.node_ids,
        np.concatenate([graph.src, [e[0] for e in new]]).astype(np.int64),
        np.concatenate([graph.dst, [e[1] for e in new]]).astype(np.int64),
        np.concatenate([graph.amount, [e[2] for e in new]]),
        timestamp=np.concatenate([graph.timestamp, [e[3] for e in new]]).astype(np.int64),
        tx_ids=np.concatenate([graph.tx_ids, np.arange(first_tx, first_tx + k)]),
        alert_ids=np.concatenate([graph.alert_ids, np.full(k, aid)]),
        external_keys=graph.external_keys,
        account_kinds=graph.account_kinds,
        created_at=graph.created_at,
        labels=labels,
        alert_types=alert_types,
        roles=graph.roles,
        features=graph.features,
        timestep_bins=graph.timestep_bins,
    )
    return out, members


DEFAULT_PATTERNS = {
    PatternKind.CYCLE: 2, PatternKind.ROW_CHAIN: 2, PatternKind.COLUMN_CHAIN: 2,
    PatternKind.GATHER_SCATTER: 1, PatternKind.SCATTER_GATHER: 1,
    PatternKind.FAN_IN: 1, PatternKind.FAN_OUT: 1,
}


@dataclass
class SynthConfig:
    n_nodes: int = 2000
    avg_out_degree: float = 4.0
    amount_mu: float = 5.0
    amount_sigma: float = 1.0
    horizon: int = 365
    patterns: dict = field(default_factory=lambda: {k.value: v for k, v in DEFAULT_PATTERNS.items()})
    member_count: int = 5
    min_pattern_amount: float = 3000.0
    max_pattern_amount: float = 30000.0
    max_pattern_span: int = 30
    commission_rate: float = 0.0

    def validate(self):
        for k, v in self.patterns.items():
            PatternKind(k)
            if int(v) < 0:
                raise ValueError(f"pattern count for {k} must be >= 0")
        if self.min_pattern_amount <= 0 or self.max_pattern_amount < self.min_pattern_amount:
            raise ValueError("pattern amount range must be positive and ordered")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")


def gen_dataset(config: SynthConfig, seed: int) -> tuple[TransactionGraph, dict]:
    """Background graph plus the configured planted patterns, on disjoint members.

    Pattern kinds are injected in the fixed order of :class:`PatternKind` so
    the output depends only on ``(config, seed)``.
    """
    config.validate()
    seeds = np.random.SeedSequence(seed).spawn(2)
    graph = gen_background(config.n_nodes, config.avg_out_degree, config.amount_mu, config.amount_sigma,
                           seed=int(seeds[0].generate_state(1)[0]), horizon=config.horizon)
    rng = np.random.default_rng(seeds[1])
    patterns = []
    used: list[int] = []
    alert_id = 0
    for kind in PatternKind:
        for _ in range(int(config.patterns.get(kind.value, 0))):
            span = min(config.max_pattern_span, config.horizon - 1)
            start = int(rng.integers(0, config.horizon - span))
            total = float(np.round(rng.uniform(config.min_pattern_amount, config.max_pattern_amount), 2))
            commission = config.commission_rate if kind in (PatternKind.ROW_CHAIN, PatternKind.CYCLE) else 0.0
            spec = PatternSpec(kind, config.member_count, total, start, start + span, commission)
            graph, members = inject_pattern(graph, spec, int(rng.integers(2**31)), alert_id, exclude=used)
            used.extend(members)
            patterns.append({"alert_id": alert_id, "kind": kind.value, "members": members,
                             "total_amount": total, "start_time": start, "end_time": start + span,
                             "commission_rate": commission})
            alert_id += 1
    n_illicit = int(np.count_nonzero(graph.labels == ILLICIT))
    manifest = {
        "seed": seed,
        "config": asdict(config),
        "nodes": graph.n_nodes,
        "edges": graph.n_edges,
        "label_histogram": graph.label_histogram(),
        "illicit_nodes": n_illicit,
        "prevalence": n_illicit / graph.n_nodes,
        "patterns": patterns,
    }
    return graph, manifest


def manifest_alerts(manifest: dict):
    """``(alert_id, kind, members)`` triples for :func:`graphlaunder.ingest.write_amlsim`."""
    return [(p["alert_id"], p["kind"], p["members"]) for p in manifest["patterns"]]

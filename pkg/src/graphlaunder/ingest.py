"""Parsers for AMLSim-style and Elliptic-style transaction datasets.

AMLSim layout (header row required, comma separated):

* accounts:     ACCOUNT_ID, CUSTOMER_ID, ACCT_TYPE, IS_SAR, CREATED
* transactions: TX_ID, SENDER_ID, RECEIVER_ID, TX_TYPE, AMOUNT, TIMESTAMP, IS_SAR, ALERT_ID
* alerts:       ALERT_ID, ALERT_TYPE, IS_SAR, MEMBER_ACCOUNT_ID

Elliptic layout: ``features`` rows are ``txId, timestep, f_1 .. f_k`` (a header
row is optional there, as in the public download), ``edgelist`` rows are
``txId1, txId2`` and ``classes`` rows are ``txId, class`` with class tokens
``1`` (illicit), ``2`` (licit) or ``unknown``.

Bad rows are skipped and recorded in the :class:`IngestReport`; a file in
which more than 10% of rows are rejected aborts with :class:`MalformedRow`.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FeatureLengthMismatch, MalformedRow, MissingColumn, UnknownClassToken
from .graph import (
    ILLICIT, LICIT, UNKNOWN, AccountKind, AccountNode, Alert, AlertType, LabelValue, NodeLabel,
    TransactionGraph, TransferEdge, build_graph,
)

log = logging.getLogger(__name__)

ACCOUNT_COLUMNS = ["ACCOUNT_ID", "CUSTOMER_ID", "ACCT_TYPE", "IS_SAR", "CREATED"]
TRANSACTION_COLUMNS = ["TX_ID", "SENDER_ID", "RECEIVER_ID", "TX_TYPE", "AMOUNT", "TIMESTAMP", "IS_SAR", "ALERT_ID"]
ALERT_COLUMNS = ["ALERT_ID", "ALERT_TYPE", "IS_SAR", "MEMBER_ACCOUNT_ID"]

EPOCH_THRESHOLD = 10**6
MAX_REJECT_FRACTION = 0.10
ELLIPTIC_LOCAL_FEATURES = 94

_TRUE = {"true", "1", "yes", "t", "y"}
_FALSE = {"false", "0", "no", "f", "n"}
_KINDS = {
    "i": AccountKind.INDIVIDUAL, "individual": AccountKind.INDIVIDUAL, "ind": AccountKind.INDIVIDUAL,
    "o": AccountKind.ORGANIZATION, "organization": AccountKind.ORGANIZATION,
    "organisation": AccountKind.ORGANIZATION, "org": AccountKind.ORGANIZATION,
}


@dataclass
class Rejection:
    file: str
    line: int
    reason: str


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    rows_rejected: int = 0
    rejections: list[Rejection] = field(default_factory=list)
    nodes: int = 0
    edges: int = 0
    self_loops: int = 0
    label_histogram: dict[str, int] = field(default_factory=dict)
    timestep_count: int = 0
    timestamp_unit: str = "step_index"
    n_features: int = 0
    local_features: int = 0
    aggregated_features: int = 0

    def reject(self, path, line, reason):
        self.rejections.append(Rejection(os.path.basename(str(path)), line, reason))
        self.rows_rejected += 1
        log.warning("rejected %s line %d: %s", path, line, reason)

    def to_dict(self) -> dict:
        return asdict(self)


def _open_table(path, required):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        fh.close()
        raise MissingColumn(required[0], path) from None
    for col in required:
        if col not in header:
            fh.close()
            raise MissingColumn(col, path)
    return fh, reader, {c: header.index(c) for c in header}


def _check_reject_rate(path, report: IngestReport, before: int, read: int, first_bad: int | None):
    bad = report.rows_rejected - before
    if read and bad / read > MAX_REJECT_FRACTION:
        raise MalformedRow(first_bad, f"{bad} of {read} rows rejected in {path}")


def _parse_bool(tok: str) -> bool | None:
    t = tok.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    if t == "":
        return None
    raise ValueError(f"not a boolean: {tok!r}")


def _parse_alert_type(tok: str) -> AlertType:
    t = tok.strip().lower().replace("-", "_").replace(" ", "_")
    try:
        return AlertType(t)
    except ValueError:
        return AlertType.OTHER


def _time_unit(values) -> str:
    if len(values) and max(abs(int(v)) for v in values) >= EPOCH_THRESHOLD:
        return "epoch_seconds"
    return "step_index"


def _time_bins(values, unit: str) -> list[int]:
    if not len(values):
        return []
    arr = np.asarray(values, dtype=np.int64)
    if unit == "epoch_seconds":
        arr = (arr // 86400) * 86400
    return sorted(set(arr.tolist()))


def parse_amlsim(accounts_path, transactions_path, alerts_path=None) -> tuple[TransactionGraph, IngestReport]:
    report = IngestReport()

    # accounts
    accounts: list[AccountNode] = []
    seen: set[int] = set()
    fh, reader, col = _open_table(accounts_path, ACCOUNT_COLUMNS)
    before, read, first_bad = report.rows_rejected, 0, None
    with fh:
        for row in reader:
            if not row:
                continue
            read += 1
            line = reader.line_num
            try:
                nid = int(row[col["ACCOUNT_ID"]])
                if nid in seen:
                    raise ValueError(f"duplicate ACCOUNT_ID {nid}")
                sar = _parse_bool(row[col["IS_SAR"]])
                created = row[col["CREATED"]].strip()
                kind = _KINDS.get(row[col["ACCT_TYPE"]].strip().lower(), AccountKind.UNKNOWN)
                key = row[col["CUSTOMER_ID"]].strip() or str(nid)
                label = NodeLabel(LabelValue.UNKNOWN if sar is None else
                                  (LabelValue.ILLICIT if sar else LabelValue.LICIT))
                accounts.append(AccountNode(nid, key, kind, int(created) if created else 0, None, label))
                seen.add(nid)
            except (ValueError, IndexError) as exc:
                first_bad = first_bad or line
                report.reject(accounts_path, line, str(exc))
    report.rows_read += read
    _check_reject_rate(accounts_path, report, before, read, first_bad)

    # alerts are read before transactions so tx alerts can look up their type
    alerts: list[Alert] = []
    alert_kind: dict[int, AlertType] = {}
    if alerts_path is not None:
        fh, reader, col = _open_table(alerts_path, ALERT_COLUMNS)
        before, read, first_bad = report.rows_rejected, 0, None
        with fh:
            for row in reader:
                if not row:
                    continue
                read += 1
                line = reader.line_num
                try:
                    aid = int(row[col["ALERT_ID"]])
                    kind = _parse_alert_type(row[col["ALERT_TYPE"]])
                    sar = _parse_bool(row[col["IS_SAR"]])
                    member = int(row[col["MEMBER_ACCOUNT_ID"]])
                    if member not in seen:
                        raise ValueError(f"unknown member account {member}")
                    alert_kind.setdefault(aid, kind)
                    if sar:
                        alerts.append(Alert("node", member, kind))
                except (ValueError, IndexError) as exc:
                    first_bad = first_bad or line
                    report.reject(alerts_path, line, str(exc))
        report.rows_read += read
        _check_reject_rate(alerts_path, report, before, read, first_bad)

    # transactions
    edges: list[TransferEdge] = []
    tx_seen: set[int] = set()
    fh, reader, col = _open_table(transactions_path, TRANSACTION_COLUMNS)
    before, read, first_bad = report.rows_rejected, 0, None
    with fh:
        for row in reader:
            if not row:
                continue
            read += 1
            line = reader.line_num
            try:
                tid = int(row[col["TX_ID"]])
                if tid in tx_seen:
                    raise ValueError(f"duplicate TX_ID {tid}")
                s, d = int(row[col["SENDER_ID"]]), int(row[col["RECEIVER_ID"]])
                for end in (s, d):
                    if end not in seen:
                        raise ValueError(f"unknown account {end}")
                amount = float(row[col["AMOUNT"]])
                if not amount > 0 or not np.isfinite(amount):
                    raise ValueError(f"non-positive amount {amount}")
                ts = int(row[col["TIMESTAMP"]])
                sar = _parse_bool(row[col["IS_SAR"]])
                aid_tok = row[col["ALERT_ID"]].strip()
                aid = int(aid_tok) if aid_tok else -1
                edges.append(TransferEdge(tid, s, d, amount, ts, aid if aid >= 0 else None))
                tx_seen.add(tid)
                if sar and aid >= 0:
                    alerts.append(Alert("tx", tid, alert_kind.get(aid, AlertType.OTHER)))
            except (ValueError, IndexError) as exc:
                first_bad = first_bad or line
                report.reject(transactions_path, line, str(exc))
    report.rows_read += read
    _check_reject_rate(transactions_path, report, before, read, first_bad)

    stamps = [e.timestamp for e in edges]
    unit = _time_unit(stamps)
    bins = _time_bins(stamps, unit)
    graph = build_graph(accounts, edges, alerts, timestep_bins=bins or None)
    report.rows_accepted = report.rows_read - report.rows_rejected
    report.timestamp_unit = unit
    report.timestep_count = len(bins)
    _fill_counts(report, graph)
    if report.self_loops:
        log.info("%d self-loop transfers present in %s", report.self_loops, transactions_path)
    return graph, report


def _fill_counts(report: IngestReport, graph: TransactionGraph):
    report.nodes = graph.n_nodes
    report.edges = graph.n_edges
    report.self_loops = graph.n_self_loops
    report.label_histogram = graph.label_histogram()


def _looks_numeric(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_elliptic(features_path, edgelist_path, classes_path) -> tuple[TransactionGraph, IngestReport]:
    report = IngestReport()
    for p in (features_path, edgelist_path, classes_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"no such file: {p}")

    ids: list[int] = []
    steps: list[int] = []
    rows: list[list[float]] = []
    width = None
    with open(features_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            if reader.line_num == 1 and not _looks_numeric(row[0]):
                continue
            report.rows_read += 1
            if width is None:
                width = len(row)
                if width < 3:
                    raise FeatureLengthMismatch(f"line {reader.line_num}: need id, timestep and at least one feature")
            elif len(row) != width:
                raise FeatureLengthMismatch(
                    f"line {reader.line_num}: {len(row) - 2} features, expected {width - 2}")
            try:
                ids.append(int(float(row[0])))
                steps.append(int(float(row[1])))
                rows.append([float(x) for x in row[2:]])
            except ValueError as exc:
                report.reject(features_path, reader.line_num, str(exc))
    index = {v: i for i, v in enumerate(ids)}
    if len(index) != len(ids):
        raise MalformedRow(None, "duplicate transaction id in features file")
    n = len(ids)
    feats = np.array(rows, dtype=np.float64).reshape(n, -1)

    labels = np.full(n, UNKNOWN, dtype=np.int8)
    with open(classes_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        read = 0
        for row in reader:
            if not row:
                continue
            if reader.line_num == 1 and not _looks_numeric(row[0]):
                continue
            read += 1
            tok = row[1].strip() if len(row) > 1 else ""
            if tok not in ("1", "2", "unknown"):
                raise UnknownClassToken(reader.line_num, tok)
            try:
                pos = index[int(float(row[0]))]
            except (KeyError, ValueError):
                report.reject(classes_path, reader.line_num, f"unknown transaction {row[0]!r}")
                continue
            labels[pos] = ILLICIT if tok == "1" else LICIT if tok == "2" else UNKNOWN
        report.rows_read += read

    src, dst = [], []
    with open(edgelist_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        before, read, first_bad = report.rows_rejected, 0, None
        for row in reader:
            if not row:
                continue
            if reader.line_num == 1 and not _looks_numeric(row[0]):
                continue
            read += 1
            try:
                a, b = index[int(float(row[0]))], index[int(float(row[1]))]
            except (KeyError, ValueError, IndexError):
                first_bad = first_bad or reader.line_num
                report.reject(edgelist_path, reader.line_num, f"unresolvable edge {row!r}")
                continue
            src.append(a)
            dst.append(b)
        report.rows_read += read
        _check_reject_rate(edgelist_path, report, before, read, first_bad)

    step_arr = np.asarray(steps, dtype=np.int64)
    src_arr = np.asarray(src, dtype=np.int64)
    bins = sorted(set(steps))
    graph = TransactionGraph(
        ids, src_arr, np.asarray(dst, dtype=np.int64), np.ones(len(src_arr)),
        timestamp=step_arr[src_arr] if len(src_arr) else np.empty(0, np.int64),
        created_at=step_arr, labels=labels, features=feats, timestep_bins=bins,
    )
    report.rows_accepted = report.rows_read - report.rows_rejected
    report.timestep_count = len(bins)
    report.timestamp_unit = _time_unit(steps)
    report.n_features = feats.shape[1]
    report.local_features = min(ELLIPTIC_LOCAL_FEATURES, report.n_features)
    report.aggregated_features = report.n_features - report.local_features
    _fill_counts(report, graph)
    return graph, report


def write_amlsim(graph: TransactionGraph, directory, alerts=()) -> dict[str, str]:
    """Write a graph in the AMLSim column layout read by :func:`parse_amlsim`.

    ``alerts`` is an iterable of ``(alert_id, alert_type, member_node_ids)``;
    each member becomes one row of the alerts file.  Transfers carrying an
    alert id are written with ``IS_SAR=true``.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {name: os.path.join(directory, f"{name}.csv") for name in ("accounts", "transactions", "alerts")}
    ids = graph.node_ids
    sar_token = {ILLICIT: "true", LICIT: "false", UNKNOWN: ""}
    with open(paths["accounts"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ACCOUNT_COLUMNS)
        for i in range(graph.n_nodes):
            w.writerow([int(ids[i]), graph.external_keys[i], graph.account_kinds[i].value,
                        sar_token[int(graph.labels[i])], int(graph.created_at[i])])
    with open(paths["transactions"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSACTION_COLUMNS)
        for t, s, d, a, ts, al in zip(graph.tx_ids, graph.src, graph.dst, graph.amount,
                                      graph.timestamp, graph.alert_ids):
            flagged = al >= 0
            w.writerow([int(t), int(ids[s]), int(ids[d]), "TRANSFER", repr(float(a)), int(ts),
                        "true" if flagged else "false", int(al) if flagged else -1])
    with open(paths["alerts"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ALERT_COLUMNS)
        for aid, kind, members in alerts:
            for m in members:
                w.writerow([int(aid), AlertType(kind).value, "true", int(m)])
    return paths

"""``graphlaunder`` command line: synth, ingest, embed, train, evaluate, xbank, rerun.

Every command writes its primary outputs plus ``manifest.json`` into
``--out``.  The manifest records the fully resolved configuration and the
SHA-256 of each output, and ``graphlaunder rerun <manifest>`` replays it.
Errors go to stderr as ``error: <Kind>: <message>`` with exit status 1.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, GraphLaunderError
from .experiments import (Classifier, E2eModel, Embedder, ExperimentConfig, FeatureSource, Standardizer,
                          binary_labels, fit_embedder, kfold_cv, run_e2e_experiment, run_pipeline_experiment)
from .gcn import default_class_weights, gcn_forward, normalize_adjacency, train_gcn, write_training_curve
from .graph import ILLICIT, aggregate_edges, export_graph, import_graph, node_feature_matrix
from .embedding import EmbeddingMatrix
from .ingest import parse_amlsim, parse_elliptic, write_amlsim
from .metrics import compute_metrics, write_curves
from .synth import SynthConfig, gen_dataset, manifest_alerts
from .trees import fit_ensemble, predict_proba
from .xbank import bank_embeddings, rank_suspect_pairs, write_bank_embeddings, write_similarity_report

DATA_ENV = "GRAPHLAUNDER_DATA"


# -- config -------------------------------------------------------------------

def _coerce(text: str, like):
    t = text.strip()
    if t.lower() in ("none", "null", ""):
        return None
    if isinstance(like, bool):
        if t.lower() in ("1", "true", "yes", "on"):
            return True
        if t.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, (tuple, list)):
        return tuple(int(x) for x in t.replace(" ", "").split(",") if x)
    if isinstance(like, int):
        return int(t)
    if isinstance(like, float):
        return float(t)
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def _apply(defaults: dict, items: dict, section: str) -> dict:
    out = dict(defaults)
    for key, val in items.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        try:
            out[key] = _coerce(val, defaults[key]) if isinstance(val, str) else val
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None
    return out


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(str(p))
        cp.read(p, encoding="utf-8")
    return cp


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _resolve_seed(args, cp, section) -> int:
    if args.seed is not None:
        return int(args.seed)
    sec = _section(cp, section)
    if "seed" in sec:
        return int(sec["seed"])
    raise ConfigError(f"missing required field 'seed' (section [{section}] or --seed)")


def _synth_config(cp, overrides) -> tuple[SynthConfig, dict]:
    base = dataclasses.asdict(SynthConfig())
    patterns = dict(base.pop("patterns"))
    items = {k: v for k, v in {**_section(cp, "synth"), **overrides}.items() if k != "seed"}
    if cp.has_section("synth") and "n_nodes" not in _section(cp, "synth") and "n_nodes" not in overrides:
        raise ConfigError("missing required field 'n_nodes' in section [synth]")
    pat_items = {k[len("pattern_"):]: v for k, v in items.items() if k.startswith("pattern_")}
    items = {k: v for k, v in items.items() if not k.startswith("pattern_")}
    for k, v in pat_items.items():
        if k not in patterns:
            raise ConfigError(f"unknown pattern kind {k!r}")
        patterns[k] = int(v)
    resolved = _apply(base, items, "synth")
    cfg = SynthConfig(**resolved, patterns=patterns)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, dataclasses.asdict(cfg)


def _experiment_config(cp, section, overrides, workers) -> ExperimentConfig:
    base = ExperimentConfig().to_dict()
    items = {k: v for k, v in {**_section(cp, "experiment"), **_section(cp, section), **overrides}.items()
             if k not in ("seed",) and k in base}
    unknown = set(overrides) - set(base) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} for {section}")
    resolved = _apply(base, items, section)
    resolved["workers"] = workers
    return ExperimentConfig(**resolved)


# -- io helpers --------------------------------------------------------------

def _data_path(p) -> Path:
    path = Path(p)
    root = os.environ.get(DATA_ENV)
    if not path.is_absolute() and root and not path.exists():
        path = Path(root) / path
    return path


def _require(p) -> Path:
    path = _data_path(p)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return path


def _out_dir(args, command) -> Path:
    if args.out:
        out = Path(args.out)
    elif os.environ.get(DATA_ENV):
        out = Path(os.environ[DATA_ENV]) / command
    else:
        out = Path("out") / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, argv: list[str], seed, workers, config: dict, outputs: list[Path],
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "seed": seed,
        "workers": workers,
        "config": config,
        "versions": {"graphlaunder": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    if extra:
        manifest.update(extra)
    _dump_json(out / "manifest.json", manifest)


def _report_dict(report) -> dict:
    d = report.summary()
    d["undefined"] = report.undefined
    return d


# -- commands -----------------------------------------------------------------

def cmd_synth(args, argv):
    cp = load_config(args.config)
    seed = _resolve_seed(args, cp, "synth")
    cfg, resolved = _synth_config(cp, _overrides(args.set))
    out = _out_dir(args, "synth")
    graph, manifest = gen_dataset(cfg, seed)
    files = write_amlsim(graph, out, manifest_alerts(manifest))
    _dump_json(out / "dataset.json", manifest)
    outputs = [Path(f) for f in files.values()] + [out / "dataset.json"]
    _write_manifest(out, "synth", argv, seed, args.workers, resolved, outputs,
                    {"counts": {"nodes": manifest["nodes"], "edges": manifest["edges"],
                                "label_histogram": manifest["label_histogram"]}})
    print(json.dumps({"nodes": manifest["nodes"], "edges": manifest["edges"],
                      "illicit_nodes": manifest["illicit_nodes"], "out": str(out)}, sort_keys=True))


def cmd_ingest(args, argv):
    cp = load_config(args.config)
    sec = {**_section(cp, "ingest"), **_overrides(args.set)}
    fmt = args.format or sec.get("format", "amlsim")
    out = _out_dir(args, "ingest")
    if fmt == "amlsim":
        base = _data_path(args.input) if args.input else None
        acc = _require(args.accounts or (base / "accounts.csv" if base else sec.get("accounts", "accounts.csv")))
        tx = _require(args.transactions or (base / "transactions.csv" if base else sec.get("transactions", "transactions.csv")))
        al = args.alerts or (base / "alerts.csv" if base else sec.get("alerts"))
        al = _require(al) if al is not None and (args.alerts or not base or (base / "alerts.csv").exists()) else None
        graph, report = parse_amlsim(acc, tx, al)
        inputs = [acc, tx] + ([al] if al else [])
    elif fmt == "elliptic":
        base = _data_path(args.input) if args.input else None
        feats = _require(args.features or base / "elliptic_txs_features.csv")
        edges = _require(args.edgelist or base / "elliptic_txs_edgelist.csv")
        classes = _require(args.classes or base / "elliptic_txs_classes.csv")
        graph, report = parse_elliptic(feats, edges, classes)
        inputs = [feats, edges, classes]
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    export_graph(graph, out)
    rep = report.to_dict()
    _dump_json(out / "report.json", rep)
    outputs = [out / n for n in ("nodes.csv", "edges.csv", "labels.csv", "report.json")]
    _write_manifest(out, "ingest", argv, args.seed, args.workers, {"format": fmt, "inputs": [str(p) for p in inputs]},
                    outputs)
    print(json.dumps(rep, sort_keys=True, default=_json_default))


def _graph_and_features(path):
    graph = import_graph(_require(path))
    X = node_feature_matrix(graph)
    scaler = Standardizer.fit(X)
    return graph, scaler.transform(X), scaler


def cmd_embed(args, argv):
    cp = load_config(args.config)
    seed = _resolve_seed(args, cp, "embed")
    cfg = _experiment_config(cp, "embed", _overrides(args.set), args.workers)
    if args.dim is not None:
        cfg.d = args.dim
    method = Embedder(args.method or _section(cp, "embed").get("method", "sage"))
    graph, X, _ = _graph_and_features(args.graph)
    out = _out_dir(args, "embed")
    fitted = fit_embedder(method, graph, X, cfg, seed)
    emb = fitted.embed(graph, X)
    emb.to_csv(out / "embeddings.csv")
    outputs = [out / "embeddings.csv"]
    if method is Embedder.SAGE and hasattr(fitted, "model"):
        fitted.model.save(out / "sage_model.json")
        outputs.append(out / "sage_model.json")
    resolved = {**cfg.to_dict(), "method": method.value, "graph": str(args.graph)}
    _write_manifest(out, "embed", argv, seed, args.workers, resolved, outputs)
    print(json.dumps({"nodes": len(emb), "dim": emb.dim, "out": str(out)}, sort_keys=True))


def cmd_train(args, argv):
    cp = load_config(args.config)
    seed = _resolve_seed(args, cp, "train")
    cfg = _experiment_config(cp, "train", _overrides(args.set), args.workers)
    model_name = args.model or _section(cp, "train").get("model", "gbt")
    graph, X, scaler = _graph_and_features(args.graph)
    out = _out_dir(args, "train")
    pos, y = binary_labels(graph)
    outputs = []
    if model_name in [m.value for m in Classifier]:
        if not args.embeddings:
            raise ConfigError("missing required field 'embeddings' for tree models")
        emb = EmbeddingMatrix.from_csv(_require(args.embeddings))
        E = emb.lookup(graph.node_ids[pos])
        kw = {"learning_rate": cfg.gbt_learning_rate} if model_name == "gbt" else {}

        def trainer(Xtr, ytr, Xte, fold):
            m = fit_ensemble(model_name, Xtr, ytr, n_trees=cfg.n_trees, max_depth=cfg.max_depth,
                             seed=seed + fold + 1, workers=cfg.workers, **kw)
            return predict_proba(m, Xte)

        cv = kfold_cv(E, y, trainer, k=args.folds, seed=seed, threshold=cfg.threshold)
        model = fit_ensemble(model_name, E, y, n_trees=cfg.n_trees, max_depth=cfg.max_depth, seed=seed,
                             workers=cfg.workers, **kw)
        model.save(out / "model.json")
        report = {"kind": "cross_validation", "folds": [_report_dict(r) for r in cv.folds],
                  "mean": cv.mean, "std": cv.std}
    else:
        e2e = E2eModel(model_name)
        cw = default_class_weights(graph.labels, pos, cfg.class_weight_cap)
        net = train_gcn(graph, X, graph.labels.astype(np.int64), pos, hidden=cfg.hidden,
                        skip=e2e is E2eModel.SKIP_GCN, lr=cfg.gcn_lr, epochs=cfg.gcn_epochs,
                        batch_size=cfg.gcn_batch_size, class_weights=cw, seed=seed)
        d = net.to_dict()
        d["feature_mean"], d["feature_scale"] = scaler.mean.tolist(), scaler.scale.tolist()
        _dump_json(out / "model.json", d)
        write_training_curve(out / "training_curve.csv", net)
        outputs.append(out / "training_curve.csv")
        probs = gcn_forward(X, normalize_adjacency(graph), net)[pos]
        report = {"kind": "training_mask", **_report_dict(compute_metrics(probs, y, cfg.threshold))}
    _dump_json(out / "report.json", report)
    outputs += [out / "model.json", out / "report.json"]
    resolved = {**cfg.to_dict(), "model": model_name, "graph": str(args.graph),
                "embeddings": str(args.embeddings) if args.embeddings else None, "folds": args.folds}
    _write_manifest(out, "train", argv, seed, args.workers, resolved, outputs)
    print(json.dumps({"model": model_name, "out": str(out)}, sort_keys=True))


def cmd_evaluate(args, argv):
    cp = load_config(args.config)
    seed = _resolve_seed(args, cp, "evaluate")
    cfg = _experiment_config(cp, "evaluate", _overrides(args.set), args.workers)
    sec = _section(cp, "evaluate")
    model_name = args.model or sec.get("model", "gbt")
    holdout = args.holdout if args.holdout is not None else float(sec.get("holdout", 0.2))
    graph = import_graph(_require(args.graph))
    out = _out_dir(args, "evaluate")
    if model_name in [m.value for m in E2eModel]:
        features = args.features or sec.get("features", "raw")
        res = run_e2e_experiment(graph, model_name, FeatureSource(features), holdout, cfg, seed, detail=True)
        extra = {"features": features}
    else:
        embedder = args.embedder or sec.get("embedder", "sage")
        res = run_pipeline_experiment(graph, Embedder(embedder), Classifier(model_name), holdout, cfg, seed,
                                      detail=True)
        extra = {"embedder": embedder}
    _dump_json(out / "report.json", _report_dict(res.report))
    curves = [Path(p) for p in write_curves(str(out / "curve"), res.report)]
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,label,score\n")
        for nid, lab, s in zip(res.held_out, res.labels.tolist(), res.scores.tolist()):
            fh.write(f"{nid},{lab},{s!r}\n")
    outputs = [out / "report.json", out / "scores.csv"] + curves
    resolved = {**cfg.to_dict(), "model": model_name, "holdout": holdout, "graph": str(args.graph), **extra}
    _write_manifest(out, "evaluate", argv, seed, args.workers, resolved, outputs)
    print(json.dumps(_report_dict(res.report), sort_keys=True, default=_json_default))


def cmd_xbank(args, argv):
    cp = load_config(args.config)
    sec = {**_section(cp, "xbank"), **_overrides(args.set)}
    seed = args.public_seed if args.public_seed is not None else _resolve_seed(args, cp, "xbank")
    d = args.dim if args.dim is not None else int(sec.get("d", 64))
    top_k = args.top_k if args.top_k is not None else int(sec.get("top_k", 100))
    window = None
    if args.window or sec.get("window"):
        lo, hi = (int(x) for x in (args.window or sec["window"]).split(","))
        window = (lo, hi)
    out = _out_dir(args, "xbank")
    banks = []
    for path in (args.bank_a, args.bank_b):
        g = import_graph(_require(path))
        keys = {int(v): k for v, k in zip(g.node_ids.tolist(), g.external_keys)}
        banks.append(bank_embeddings(aggregate_edges(g, window), seed, d, keys))
    write_bank_embeddings(out / "bank_a_embeddings.csv", banks[0])
    write_bank_embeddings(out / "bank_b_embeddings.csv", banks[1])
    ranked = rank_suspect_pairs(banks[0], banks[1], top_k)
    write_similarity_report(out / "similarity.csv", ranked)
    outputs = [out / n for n in ("bank_a_embeddings.csv", "bank_b_embeddings.csv", "similarity.csv")]
    resolved = {"public_seed": seed, "d": d, "top_k": top_k, "window": list(window) if window else None,
                "bank_a": str(args.bank_a), "bank_b": str(args.bank_b)}
    _write_manifest(out, "xbank", argv, seed, args.workers, resolved, outputs)
    print(json.dumps({"pairs": len(ranked), "out": str(out)}, sort_keys=True))


def cmd_rerun(args, argv):
    with open(_require(args.manifest), encoding="utf-8") as fh:
        manifest = json.load(fh)
    replay = list(manifest["argv"])
    if args.out:
        replay = _replace_out(replay, args.out)
    return main(replay)


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res + ["--out", out]


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; sections per command plus [experiment]")
    common.add_argument("--seed", type=int, help="random seed (overrides the config value)")
    common.add_argument("--workers", type=int, default=1, help="worker threads (1 gives byte-identical reruns)")
    common.add_argument("--out", help=f"output directory (default: ${DATA_ENV}/<command> or ./out/<command>)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key of this command's section (repeatable)")

    p = argparse.ArgumentParser(prog="graphlaunder", description="Transaction-graph laundering detection toolkit.")
    p.add_argument("--version", action="version", version=f"graphlaunder {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset in AMLSim layout")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common], help="parse AMLSim or Elliptic files into a graph export")
    s.add_argument("--format", choices=["amlsim", "elliptic"], help="input layout (default amlsim)")
    s.add_argument("--input", help="directory holding the standard file names")
    s.add_argument("--accounts", help="AMLSim accounts file")
    s.add_argument("--transactions", help="AMLSim transactions file")
    s.add_argument("--alerts", help="AMLSim alerts file")
    s.add_argument("--features", help="Elliptic features file")
    s.add_argument("--edgelist", help="Elliptic edge list file")
    s.add_argument("--classes", help="Elliptic classes file")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("embed", parents=[common], help="train node embeddings on a graph export")
    s.add_argument("--graph", required=True, help="graph export directory (from ingest)")
    s.add_argument("--method", choices=[e.value for e in Embedder], help="embedding method (default sage)")
    s.add_argument("--dim", type=int, help="embedding dimension")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("train", parents=[common], help="fit a classifier and report cross-validated metrics")
    s.add_argument("--graph", required=True, help="graph export directory")
    s.add_argument("--embeddings", help="embeddings CSV (tree models)")
    s.add_argument("--model", choices=[c.value for c in Classifier] + [m.value for m in E2eModel],
                   help="classifier (default gbt)")
    s.add_argument("--folds", type=int, default=5, help="cross-validation folds for tree models")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="run the holdout protocol and write metrics and curves")
    s.add_argument("--graph", required=True, help="graph export directory")
    s.add_argument("--model", choices=[c.value for c in Classifier] + [m.value for m in E2eModel],
                   help="classifier or end-to-end model (default gbt)")
    s.add_argument("--embedder", choices=[e.value for e in Embedder], help="embedder for tree models")
    s.add_argument("--features", choices=[f.value for f in FeatureSource], help="feature source for GCN models")
    s.add_argument("--holdout", type=float, help="fraction of nodes held out (default 0.2)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("xbank", parents=[common], help="cross-bank similarity ranking of two graph exports")
    s.add_argument("--bank-a", required=True, help="first bank's graph export directory")
    s.add_argument("--bank-b", required=True, help="second bank's graph export directory")
    s.add_argument("--public-seed", type=int, help="shared hashing seed (default: --seed)")
    s.add_argument("--dim", type=int, help="embedding dimension (default 64)")
    s.add_argument("--top-k", type=int, help="number of ranked pairs to keep (default 100)")
    s.add_argument("--window", help="inclusive time window start,end for edge weights")
    s.set_defaults(func=cmd_xbank)

    s = sub.add_parser("rerun", help="replay a command from its manifest.json")
    s.add_argument("manifest", help="path to manifest.json")
    s.add_argument("--out", help="write to this directory instead of the recorded one")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args, argv)
        return int(rc or 0)
    except GraphLaunderError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc.filename or exc.args[0]}", file=sys.stderr)
    except (ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

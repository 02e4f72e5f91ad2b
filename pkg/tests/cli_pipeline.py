"""Drive the full command chain through ``graphlaunder.cli.main`` for CLI tests."""

from __future__ import annotations

import json
from pathlib import Path

from graphlaunder.cli import main

SMALL = ["--set", "d=8", "--set", "walk_length=8", "--set", "walks_per_node=2", "--set", "embed_epochs=1",
         "--set", "n_trees=20", "--set", "hidden=16", "--set", "gcn_epochs=30"]


def run(argv: list[str]) -> None:
    rc = main(argv)
    assert rc == 0, f"command failed: {argv}"


def run_chain(root: Path, seed: int = 5, n_nodes: int = 300) -> dict[str, Path]:
    """synth, ingest, embed, train (gbt and gcn), evaluate (gbt and gcn), xbank; returns output dirs."""
    d = {k: root / k for k in ("synth", "synth_b", "ingest", "ingest_b", "embed", "train_gbt", "train_gcn",
                                "eval_gbt", "eval_gcn", "xbank")}
    run(["synth", "--seed", str(seed), "--set", f"n_nodes={n_nodes}", "--out", str(d["synth"])])
    run(["synth", "--seed", str(seed + 1), "--set", f"n_nodes={n_nodes // 2}", "--out", str(d["synth_b"])])
    run(["ingest", "--input", str(d["synth"]), "--out", str(d["ingest"])])
    run(["ingest", "--input", str(d["synth_b"]), "--out", str(d["ingest_b"])])
    run(["embed", "--graph", str(d["ingest"]), "--method", "sage", "--seed", str(seed), "--out", str(d["embed"])]
        + SMALL)
    run(["train", "--graph", str(d["ingest"]), "--embeddings", str(d["embed"] / "embeddings.csv"),
         "--model", "gbt", "--folds", "3", "--seed", str(seed), "--out", str(d["train_gbt"])] + SMALL)
    run(["train", "--graph", str(d["ingest"]), "--model", "gcn", "--seed", str(seed),
         "--out", str(d["train_gcn"])] + SMALL)
    run(["evaluate", "--graph", str(d["ingest"]), "--model", "gbt", "--embedder", "sage", "--seed", str(seed),
         "--out", str(d["eval_gbt"])] + SMALL)
    run(["evaluate", "--graph", str(d["ingest"]), "--model", "gcn", "--features", "raw", "--seed", str(seed),
         "--out", str(d["eval_gcn"])] + SMALL)
    run(["xbank", "--bank-a", str(d["ingest"]), "--bank-b", str(d["ingest_b"]), "--public-seed", "3",
         "--dim", "32", "--top-k", "20", "--out", str(d["xbank"])])
    return d


def output_bytes(out: Path) -> dict[str, bytes]:
    """Contents of every output recorded in a directory's manifest."""
    manifest = json.loads((out / "manifest.json").read_text())
    return {name: (out / name).read_bytes() for name in manifest["outputs"]}

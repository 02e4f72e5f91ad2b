import json

import pytest

from cli_pipeline import output_bytes, run, run_chain
from graphlaunder.cli import main

COMMANDS = ["synth", "ingest", "embed", "train", "evaluate", "xbank", "rerun"]


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    return run_chain(tmp_path_factory.mktemp("chain"))


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "graphlaunder" in capsys.readouterr().out


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert main(["synth", "--set", "n_nodes=50", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")
    assert "seed" in err


def test_synth_section_requires_n_nodes(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[synth]\nseed = 3\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:") and "n_nodes" in err


def test_unknown_key_rejected(tmp_path, capsys):
    assert main(["synth", "--seed", "1", "--set", "bogus=1", "--out", str(tmp_path)]) == 1
    assert "bogus" in capsys.readouterr().err


def test_cli_seed_overrides_config_and_is_recorded(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[synth]\nseed = 3\nn_nodes = 120\npattern_cycle = 2\n")
    run(["synth", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "a")])
    run(["synth", "--config", str(cfg), "--out", str(tmp_path / "b")])
    man_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    man_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man_a["seed"] == 9 and man_b["seed"] == 3
    assert man_a["config"]["n_nodes"] == 120 and man_a["config"]["patterns"]["cycle"] == 2
    assert man_a["outputs"] != man_b["outputs"]


def test_missing_input_echoes_path(tmp_path, capsys):
    bad = tmp_path / "nowhere"
    assert main(["ingest", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: FileNotFound:") and str(bad) in err


def test_missing_graph_for_embed(tmp_path, capsys):
    assert main(["embed", "--graph", str(tmp_path / "g"), "--seed", "1", "--out", str(tmp_path / "o")]) == 1
    assert "FileNotFound" in capsys.readouterr().err


def test_data_env_resolves_relative_input(tmp_path, monkeypatch):
    run(["synth", "--seed", "2", "--set", "n_nodes=80", "--out", str(tmp_path / "raw")])
    monkeypatch.setenv("GRAPHLAUNDER_DATA", str(tmp_path))
    monkeypatch.chdir(tmp_path / "raw")
    run(["ingest", "--input", "raw"])
    assert (tmp_path / "ingest" / "nodes.csv").exists()


def test_ingest_counts_match_synth_manifest(chain):
    synth = json.loads((chain["synth"] / "manifest.json").read_text())
    report = json.loads((chain["ingest"] / "report.json").read_text())
    assert report["nodes"] == synth["counts"]["nodes"]
    assert report["edges"] == synth["counts"]["edges"]
    assert report["label_histogram"] == synth["counts"]["label_histogram"]
    assert report["rows_rejected"] == 0


def test_manifest_hashes_match_files(chain):
    import hashlib
    for out in chain.values():
        man = json.loads((out / "manifest.json").read_text())
        for name, digest in man["outputs"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


@pytest.mark.parametrize("which", ["eval_gbt", "eval_gcn"])
def test_evaluate_beats_prevalence(chain, which):
    rep = json.loads((chain[which] / "report.json").read_text())
    assert rep["aupr"] > rep["prevalence"]
    assert (chain[which] / "curve_pr.csv").exists() and (chain[which] / "curve_roc.csv").exists()


def test_train_reports(chain):
    cv = json.loads((chain["train_gbt"] / "report.json").read_text())
    assert cv["kind"] == "cross_validation" and len(cv["folds"]) == 3
    curve = (chain["train_gcn"] / "training_curve.csv").read_text().splitlines()
    assert len(curve) == 31


def test_xbank_similarity_report(chain):
    lines = (chain["xbank"] / "similarity.csv").read_text().splitlines()
    assert 1 < len(lines) <= 21


@pytest.mark.parametrize("which", ["synth", "ingest", "embed", "train_gbt", "train_gcn", "eval_gbt", "eval_gcn", "xbank"])
def test_rerun_reproduces_outputs(chain, which, tmp_path):
    run(["rerun", str(chain[which] / "manifest.json"), "--out", str(tmp_path / "again")])
    assert output_bytes(tmp_path / "again") == output_bytes(chain[which])

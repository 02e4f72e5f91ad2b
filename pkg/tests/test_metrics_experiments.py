import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphlaunder.errors import EmptyEvaluation, SingleClassLabels, TooFewSamples
from graphlaunder.experiments import (DEFAULT_SPACE, CvResult, ExperimentConfig, kfold_cv, random_search,
                                      run_e2e_experiment, run_pipeline_experiment, sample_config,
                                      stratified_folds)
from graphlaunder.graph import ILLICIT, LICIT
from graphlaunder.metrics import (Confusion, aggregate_reports, aupr_score, auc_score, compute_metrics, mcc_from,
                                  prevalence_threshold, write_curves)
from graphlaunder.synth import SynthConfig, gen_dataset

from conftest import make_graph
from oracles import brute_force_metrics

SMALL = ExperimentConfig(d=8, walk_length=8, walks_per_node=2, embed_epochs=1, n_trees=20, hidden=16,
                         gcn_epochs=30, max_pairs=5000, e2e_d=4)


def test_perfect_separation():
    r = compute_metrics([0.9, 0.8, 0.7, 0.2, 0.1], [1, 1, 1, 0, 0])
    assert r.aupr == r.auc_roc == r.f1_minority == r.mcc == 1.0


def test_four_sample_hand_case():
    r = compute_metrics([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0], 0.5)
    c = r.confusion
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 0, 0, 2) and r.mcc == 1.0
    assert c.total == r.n


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=1, max_size=12),
       st.sampled_from([0.0, 1 / 6, 0.5, 0.75, 1.0]))
def test_metrics_equal_brute_force(rows, thr):
    s = np.array([r[0] / 6 for r in rows])
    y = np.array([r[1] for r in rows])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingleClassLabels)
        r = compute_metrics(s, y, thr)
    o = brute_force_metrics(s, y, thr)
    assert r.aupr == o["aupr"] and r.auc_roc == o["auc"]
    assert r.f1_minority == o["f1"] and r.mcc == o["mcc"]


def test_mcc_constructed():
    assert mcc_from(Confusion(5, 0, 0, 5)) == 1.0
    assert mcc_from(Confusion(0, 5, 5, 0)) == -1.0
    assert mcc_from(Confusion(2, 2, 2, 2)) == 0.0
    assert mcc_from(Confusion(0, 0, 3, 7)) == 0.0


def test_constant_scorer_aupr_is_prevalence():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 0])
    assert aupr_score(np.full(8, 0.3), y) == 0.25
    assert auc_score(np.full(8, 0.3), y) == 0.5


def test_random_scores_auc_half():
    aucs = [auc_score(np.random.default_rng(s).random(10_000), np.random.default_rng(s + 100).random(10_000) < 0.3)
            for s in range(10)]
    assert 0.48 <= np.mean(aucs) <= 0.52


def test_single_class_flags_undefined():
    with pytest.warns(SingleClassLabels):
        r = compute_metrics([0.2, 0.9], [0, 0])
    assert r.aupr is None and r.auc_roc is None and r.undefined == ["aupr", "auc_roc"]
    assert r.mcc == 0.0
    with pytest.raises(EmptyEvaluation):
        compute_metrics([], [])


def test_curves_monotone(tmp_path):
    rng = np.random.default_rng(0)
    r = compute_metrics(rng.random(200), rng.random(200) < 0.2)
    rec = [p[0] for p in r.pr_curve]
    fpr = [p[0] for p in r.roc_curve]
    assert rec == sorted(rec) and fpr == sorted(fpr)
    assert r.roc_curve[0][:2] == (0.0, 0.0) and r.roc_curve[-1][:2] == (1.0, 1.0)
    pr, roc = write_curves(tmp_path / "c", r)
    assert open(pr).readline().strip() == "recall,precision,threshold"


def test_prevalence_threshold_flags_expected_count():
    s = np.array([0.9, 0.8, 0.8, 0.4, 0.3, 0.1])
    y = np.array([1, 0, 1, 0, 0, 0])
    t = prevalence_threshold(s, y)
    assert t == 0.8
    r = compute_metrics(s, y)
    assert r.recall_at_prevalence == 1.0


def test_stratified_folds():
    f = stratified_folds(np.array([0, 0, 1, 1]), 2, seed=0)
    for k in range(2):
        assert sorted(np.array([0, 0, 1, 1])[f == k].tolist()) == [0, 1]
    np.testing.assert_array_equal(f, stratified_folds(np.array([0, 0, 1, 1]), 2, seed=0))
    with pytest.raises(TooFewSamples):
        stratified_folds(np.array([0, 0, 0, 1]), 2, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**16), st.integers(6, 40), st.integers(6, 80))
def test_folds_preserve_prevalence(k, seed, n_pos, n_neg):
    y = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    f = stratified_folds(y, k, seed)
    for j in range(k):
        assert abs(y[f == j].sum() - n_pos / k) <= 1
        assert abs((f == j).sum() - len(y) / k) <= 1


def test_kfold_constant_trainer():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    y = np.r_[np.ones(6, int), np.zeros(14, int)]
    res = kfold_cv(X, y, lambda Xtr, ytr, Xte, f: np.full(len(Xte), 0.5), k=3, seed=1)
    assert all(r.auc_roc == 0.5 for r in res.folds)
    mean, std = aggregate_reports(res.folds)
    assert mean["auc_roc"] == 0.5 and std["auc_roc"] == 0.0


def _dummy_cv(value):
    return CvResult([], {"aupr": value}, {"aupr": 0.0}, np.zeros(0))


def test_random_search_budget_one_and_grid():
    res = random_search({"d": [32, 64, 128, 256, 300]}, 1, "aupr", lambda c, s: _dummy_cv(0.1), seed=3)
    assert res.best_config == res.trials[0][0]
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = sample_config(DEFAULT_SPACE, rng)
        assert c["d"] in (32, 64, 128, 256, 300) and c["layers"] in range(1, 6)


def test_random_search_picks_dominant():
    res = random_search({"good": [False, True]}, 20, "aupr", lambda c, s: _dummy_cv(0.9 if c["good"] else 0.1), seed=0)
    assert res.best_config == {"good": True}
    first = next(i for i, (c, _) in enumerate(res.trials) if c["good"])
    assert res.best is res.trials[first][1]


@pytest.fixture(scope="module")
def small_dataset():
    g, man = gen_dataset(SynthConfig(n_nodes=500), 4)
    return g, man


def test_pipeline_smoke_beats_prevalence(small_dataset):
    g, man = small_dataset
    r = run_pipeline_experiment(g, "sage", "gbt", 0.2, SMALL, seed=0)
    assert np.isfinite(r.aupr) and r.aupr > r.prevalence


def test_pipeline_deterministic(small_dataset):
    g, _ = small_dataset
    a = run_pipeline_experiment(g, "node2vec", "rf", 0.2, SMALL, seed=1).summary()
    b = run_pipeline_experiment(g, "node2vec", "rf", 0.2, SMALL, seed=1).summary()
    assert a == b


@pytest.mark.parametrize("embedder", ["node2vec", "attri2vec", "sage", "dgt"])
def test_every_embedder_runs(small_dataset, embedder):
    g, _ = small_dataset
    r = run_pipeline_experiment(g, embedder, "ert", 0.2, SMALL, seed=2)
    assert 0 <= r.aupr <= 1


def test_holdout_zero_is_empty_evaluation(small_dataset):
    with pytest.raises(EmptyEvaluation):
        run_pipeline_experiment(small_dataset[0], "sage", "gbt", 0.0, SMALL, seed=0)


def test_e2e_two_cliques():
    edges, amounts = [], []
    for base, amt in ((0, 10.0), (15, 5000.0)):
        for a in range(base, base + 15):
            for b in range(base, base + 15):
                if a != b:
                    edges.append((a, b))
                    amounts.append(amt)
    labels = [LICIT] * 15 + [ILLICIT] * 15
    g = make_graph(edges, n=30, labels=labels, amounts=amounts)
    r = run_e2e_experiment(g, "gcn", "raw", 0.2, SMALL, seed=0)
    assert r.f1_micro == 1.0 and r.f1_minority == 1.0
    assert "f1_micro" in r.summary() and "f1_minority" in r.summary()


def test_concat_with_zero_dim_equals_raw(small_dataset):
    g, _ = small_dataset
    cfg = ExperimentConfig(**{**SMALL.to_dict(), "e2e_d": 0})
    raw = run_e2e_experiment(g, "skip_gcn", "raw", 0.2, cfg, seed=3, detail=True)
    cat = run_e2e_experiment(g, "skip_gcn", "concat", 0.2, cfg, seed=3, detail=True)
    np.testing.assert_array_equal(raw.scores, cat.scores)

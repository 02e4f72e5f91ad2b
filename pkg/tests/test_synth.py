import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphlaunder.errors import InsufficientNodes
from graphlaunder.graph import ILLICIT, LICIT, build_graph, AccountNode
from graphlaunder.ingest import write_amlsim
from graphlaunder.synth import PatternKind, PatternSpec, SynthConfig, gen_background, gen_dataset, inject_pattern


def _new_edges(before, after):
    k = before.n_edges
    ids = after.node_ids
    return list(zip(ids[after.src[k:]].tolist(), ids[after.dst[k:]].tolist(), after.amount[k:].tolist()))


def test_single_node_background():
    g = gen_background(1, seed=0)
    assert g.n_nodes == 1 and g.n_edges == 0


def test_background_deterministic(tmp_path):
    a = write_amlsim(gen_background(1000, 4.0, seed=5), tmp_path / "a")
    b = write_amlsim(gen_background(1000, 4.0, seed=5), tmp_path / "b")
    for k in a:
        assert open(a[k], "rb").read() == open(b[k], "rb").read()


def test_background_edge_count_monte_carlo():
    # Poisson(4) out-degree summed over 1000 nodes: mean 4000, sd ~63
    counts = [gen_background(1000, 4.0, seed=s).n_edges for s in range(20)]
    assert all(3600 <= c <= 4400 for c in counts)
    g = gen_background(1000, 4.0, seed=0)
    assert (g.labels == LICIT).all() and g.n_self_loops == 0


def test_cycle_injection():
    g = gen_background(30, seed=1)
    h, members = inject_pattern(g, PatternSpec("cycle", 4, 1000.0, 0, 10), seed=2)
    new = _new_edges(g, h)
    assert len(new) == 4 and all(a == 1000.0 for *_, a in new)
    assert {(s, d) for s, d, _ in new} == {(members[i], members[(i + 1) % 4]) for i in range(4)}
    assert int((h.labels == ILLICIT).sum()) == 4


def test_row_chain_commission():
    g = gen_background(30, seed=1)
    h, members = inject_pattern(g, PatternSpec("row_chain", 3, 1000.0, 0, 10, 0.1), seed=2)
    assert [a for *_, a in _new_edges(g, h)] == pytest.approx([1000.0, 900.0], abs=1e-9)


def test_column_chain_conservation():
    g = gen_background(30, seed=1)
    h, m = inject_pattern(g, PatternSpec("column_chain", 5, 900.0, 0, 10), seed=3)
    new = _new_edges(g, h)
    assert sum(a for s, _, a in new if s == m[0]) == pytest.approx(900.0)
    assert sum(a for _, d, a in new if d == m[-1]) == pytest.approx(900.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(PatternKind)), st.integers(3, 9), st.floats(10.0, 1e5), st.integers(0, 1000))
def test_zero_commission_intermediaries_conserve_flow(kind, m, total, seed):
    g = gen_background(40, seed=seed)
    h, members = inject_pattern(g, PatternSpec(kind, m, total, 0, 20), seed=seed)
    inflow, outflow = {}, {}
    for s, d, a in _new_edges(g, h):
        outflow[s] = outflow.get(s, 0.0) + a
        inflow[d] = inflow.get(d, 0.0) + a
    for v in set(inflow) & set(outflow):
        assert inflow[v] == pytest.approx(outflow[v], rel=1e-9)
    assert set(members) == set(inflow) | set(outflow)


def test_insufficient_nodes():
    with pytest.raises(InsufficientNodes):
        inject_pattern(gen_background(3, seed=0), PatternSpec("cycle", 4, 10.0, 0, 5), seed=0)


def test_pattern_spec_validation():
    with pytest.raises(ValueError):
        PatternSpec("cycle", 2, 10.0, 0, 5)
    with pytest.raises(ValueError):
        PatternSpec("cycle", 3, 10.0, 5, 5)
    with pytest.raises(ValueError):
        PatternSpec("cycle", 3, 10.0, 0, 5, 0.3)


def test_zero_patterns_all_licit():
    g, man = gen_dataset(SynthConfig(n_nodes=200, patterns={}), 0)
    assert (g.labels == LICIT).all() and man["illicit_nodes"] == 0


def test_ten_cycles_fifty_illicit():
    g, man = gen_dataset(SynthConfig(n_nodes=2000, patterns={"cycle": 10}), 3)
    assert man["illicit_nodes"] == 50 == int((g.labels == ILLICIT).sum())
    members = [v for p in man["patterns"] for v in p["members"]]
    assert len(members) == len(set(members)) == 50
    assert man["prevalence"] == pytest.approx(50 / 2000)


def test_dataset_deterministic():
    a = gen_dataset(SynthConfig(n_nodes=500), 9)[1]
    b = gen_dataset(SynthConfig(n_nodes=500), 9)[1]
    assert a == b

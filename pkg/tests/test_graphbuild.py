import math

import numpy as np
import pytest
from conftest import P, seg, site
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import floyd_warshall

from gridmap import graphbuild as gb
from gridmap.evaluate import graph_coverage
from gridmap.model import path_length
from gridmap.preprocess import make_group


def group(gid, x, y, kv=(38.0, 115.0)):
    return make_group([site(gid, gid, x, y, kv=kv)])


def test_circuit_network_examples():
    n = gb.build_circuit_network([seg("L1", "1", 115, (0, 0), (10, 0))])
    assert (len(n.vertices), len(n.edges)) == (2, 1)
    n = gb.build_circuit_network([seg("L1", "1", 115, (0, 0), (10, 0)), seg("L2", "1", 115, (10, 0), (10, 10))])
    assert (len(n.vertices), len(n.edges)) == (3, 2)
    n = gb.build_circuit_network([seg("L1", "1", 115, (0, 0), (10, 0), (20, 5))])
    assert (len(n.vertices), len(n.edges)) == (3, 2)
    assert sum(e[2] for e in n.edges) == pytest.approx(10 + math.hypot(10, 5))


@pytest.mark.parametrize("offset,kv,attached", [(40, (38.0, 115.0), True), (40, (38.0, 38.0), False),
                                                (500, (38.0, 115.0), False), (100, (115.0, 115.0), True)])
def test_attach_examples(offset, kv, attached):
    net = gb.build_circuit_network([seg("L1", "1", 115, (0, 0), (1000, 0))])
    split, att = gb.attach_site_groups(net, [group("G", 400, offset, kv)])
    assert bool(att) == attached
    if attached:
        assert split.vertices[att[0][1]] == P(400, 0)
        assert len(split.edges) == 2
        assert sum(e[2] for e in split.edges) == pytest.approx(1000)


def test_attach_reuses_endpoint():
    net = gb.build_circuit_network([seg("L1", "1", 115, (0, 0), (1000, 0))])
    split, att = gb.attach_site_groups(net, [group("G", -30, 20)])
    assert att == [("G", 0)] and split == net


def build(groups, segments, kv=115.0):
    graphs, report = gb.build_all(groups, segments, gb.BuildConfig(voltage_levels=(kv,)))
    return graphs[kv], report


def test_collinear_groups_give_path_graph():
    g, _ = build([group("A", 0, 0), group("B", 10_000, 0), group("C", 20_000, 0)],
                 [seg("L1", "1", 115, (0, 0), (20_000, 0))])
    assert {(e.u, e.v) for e in g.edges} == {("A", "B"), ("B", "C")}
    assert [e.weight for e in g.edges] == pytest.approx([10_000, 10_000])


def test_two_groups_one_edge():
    g, report = build([group("A", 0, 0), group("B", 3000, 50)], [seg("L1", "1", 115, (0, 0), (3000, 0))])
    assert [(e.u, e.v) for e in g.edges] == [("A", "B")]
    assert report.levels[0].coverage_percent == 100.0


def test_add_back_predicate():
    assert gb.add_back_accepts(12.0, 25.0)
    assert not gb.add_back_accepts(20.0, 20.0)
    assert gb.add_back_accepts(1.0, math.inf)


def test_select_edges_adds_back_shortcut():
    w = {("A", "B"): 8.0, ("B", "D"): 8.0, ("C", "D"): 9.0, ("A", "C"): 12.0, ("A", "D"): 16.0, ("B", "C"): 17.0}
    mst, added = gb.select_edges("ABCD", w)
    assert mst == [("A", "B"), ("B", "D"), ("C", "D")]
    assert added == [("A", "C")]


def test_loop_circuit_adds_back_direct_edge():
    pts = {"A": (0, 0), "B": (0, 8000), "D": (8000, 8000), "C": (12_000, 0)}
    ring = ["A", "B", "D", "C", "A"]
    segs = [seg(f"L{i}", "1", 115, pts[a], pts[b]) for i, (a, b) in enumerate(zip(ring, ring[1:]))]
    g, report = build([group(k, *v) for k, v in pts.items()], segs)
    assert {(e.u, e.v) for e in g.edges} == {("A", "B"), ("B", "D"), ("C", "D"), ("A", "C")}
    [trace] = report.traces
    assert trace.added == (("A", "C"),)


def test_unreachable_circuit_reduces_coverage():
    segs = [seg("L1", "1", 115, (0, 0), (1000, 0)), seg("L2", "1", 115, (5000, 0), (6000, 0))]
    g, report = build([group("A", 0, 0), group("B", 1000, 0), group("C", 6000, 0)], segs)
    [row] = graph_coverage(report)
    assert row.coverage_pct == pytest.approx(50.0, abs=0.1)
    assert report.levels[0].disconnected_pairs == 2
    assert [(e.u, e.v) for e in g.edges] == [("A", "B")]


def test_missing_ids_count_toward_total():
    segs = [seg("L1", "1", 115, (0, 0), (1000, 0)), seg("L2", None, 115, (0, 10), (3000, 10))]
    _, report = build([group("A", 0, 0), group("B", 1000, 0)], segs)
    assert report.levels[0].coverage_percent == pytest.approx(25.0)
    assert report.levels[0].excluded_segments == 1


def test_no_lines_zero_coverage():
    _, report = build([group("A", 0, 0)], [])
    assert report.levels[0].coverage_percent == 0.0


def replay(nodes, weights, mst, added):
    """Independent check: every added edge was strictly shorter than the graph distance at insertion."""
    built = list(mst)
    for e in added:
        d = floyd_warshall(nodes, [(u, v, weights[(u, v)]) for u, v in built])
        assert weights[e] < d[e[0], e[1]]
        built.append(e)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_select_edges_against_oracle(n, seed):
    rng = np.random.default_rng(seed)
    nodes = [f"N{i}" for i in range(n)]
    weights = {(u, v): float(rng.integers(1, 20)) for i, u in enumerate(nodes) for v in nodes[i + 1:]}
    mst, added = gb.select_edges(nodes, weights)
    assert len(mst) == n - 1
    # MST weight matches scipy's
    from scipy.sparse.csgraph import minimum_spanning_tree
    m = np.zeros((n, n))
    for (u, v), w in weights.items():
        m[nodes.index(u), nodes.index(v)] = w
    assert sum(weights[e] for e in mst) == pytest.approx(minimum_spanning_tree(m).sum())
    replay(nodes, weights, mst, added)
    # no rejected edge would have been accepted at the end either
    final = floyd_warshall(nodes, [(u, v, weights[(u, v)]) for u, v in mst + added])
    for e in set(weights) - set(mst) - set(added):
        assert weights[e] >= final[e] - 1e-9


def test_corpus_graph_properties(small_corpus, tmp_path):
    from gridmap.preprocess import group_sites
    groups = group_sites(small_corpus.sites)
    graphs, report = gb.build_all(groups, small_corpus.lines)
    for kv, g in graphs.items():
        n = len(g.nodes)
        assert len(g.edges) <= n * (n - 1) // 2 * 3  # parallel circuits may repeat a pair
        for e in g.edges:
            assert e.weight == pytest.approx(path_length(e.geometry), abs=1e-6)
        gb.write_geo_graph(g, tmp_path / gb.graph_filename(kv))
        assert gb.read_geo_graph(tmp_path / gb.graph_filename(kv)) == g
        assert report.level(kv).coverage_percent == 100.0


def test_build_threads_identical(small_corpus):
    from gridmap.preprocess import group_sites
    groups = group_sites(small_corpus.sites)
    assert gb.build_all(groups, small_corpus.lines, threads=1) == gb.build_all(groups, small_corpus.lines, threads=4)

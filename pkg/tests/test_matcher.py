import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from matchfix import WORLDS, bus, checkin_world, geo, grp, line, model, ponce_world, xfmr
from oracles import indel_similarity

from gridmap import matcher as mt
from gridmap.errors import ConfigError
from gridmap.model import Branch, BranchKind, MappingEntry, Origin, PoolRow


def E(bus_id, gid, score, origin=Origin.NAME_SEED):
    return MappingEntry(bus_id, gid, score, origin)


def test_name_matching_cana_norte():
    nm = mt.name_matching([("G1", "CANA", "NORTE"), ("G2", "PONCE", "SUR")], [(101, "CANA 115", "NORTE")])
    assert nm.assignment == {101: "G1"}
    assert nm.scores[101] == pytest.approx(min(indel_similarity("CANA 115", "CANA"), 1.0))
    assert nm.scores[101] == pytest.approx(2 / 3)


def test_name_matching_costco_by_area():
    nm = mt.name_matching([("G1", "COSTCO", "SUR"), ("G2", "COSTCO", "NORTE")], [(7, "COSTCO", "NORTE")])
    assert nm.assignment == {7: "G2"} and nm.scores[7] == 1.0


def test_name_matching_identical_pair():
    nm = mt.name_matching([("G", "X", "A")], [(1, "X", "A")])
    assert nm.assignment == {1: "G"} and nm.scores[1] == 1.0


def test_zoneless_group_scores_zero():
    nm = mt.name_matching([("G", "CANA", None)], [(1, "CANA", "")])
    assert nm.scores[1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_argmax_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 8, 2)
    a = rng.integers(0, 6, (n, m)) / 5.0
    b = rng.integers(0, 6, (n, m)) / 5.0
    base, _ = mt.assign_from_matrices(a, b)
    for f in (np.sqrt, lambda x: x ** 3, lambda x: np.log1p(x) * 7 + 2):
        got, _ = mt.assign_from_matrices(f(a), f(b))
        assert np.array_equal(base, got)


def test_inherit_2w():
    groups = {"G": grp("G", "A", kv=(38.0, 115.0))}
    m = model([bus(1, "A", 115), bus(2, "A", 38)], [xfmr(1, 2)])
    out = mt.inherit_seeds({1: E(1, "G", 0.9)}, m, groups, 38.0)
    assert out == {2: E(2, "G", 0.9, Origin.INHERITED)}


def test_inherit_blocked_by_range():
    groups = {"G": grp("G", "A", kv=(115.0, 115.0))}
    m = model([bus(1, "A", 115), bus(2, "A", 38)], [xfmr(1, 2)])
    assert mt.inherit_seeds({1: E(1, "G", 0.9)}, m, groups, 38.0) == {}


def test_inherit_through_3w_star():
    groups = {"G": grp("G", "A", kv=(38.0, 230.0))}
    star = bus(10, "A AT1", 230, star=True)
    legs = [Branch(b, 10, BranchKind.TRANSFORMER_3W_LEG, "AT1") for b in (1, 2, 3)]
    m = model([bus(1, "A", 230), bus(2, "A", 115), bus(3, "A", 38), star], legs)
    mapping = {1: E(1, "G", 1.0)}
    assert mt.inherit_seeds(mapping, m, groups, 115.0) == {2: E(2, "G", 1.0, Origin.INHERITED)}
    mapping[2] = E(2, "G", 1.0, Origin.INHERITED)
    assert mt.inherit_seeds(mapping, m, groups, 38.0) == {3: E(3, "G", 1.0, Origin.INHERITED)}


def test_merge_seeds_examples():
    a = {1: E(1, "G", 0.9)}
    assert mt.merge_seeds(a, {2: E(2, "H", 0.5)}) == {1: E(1, "G", 0.9), 2: E(2, "H", 0.5)}
    assert mt.merge_seeds({1: E(1, "H", 0.7, Origin.INHERITED)}, a)[1] == E(1, "G", 0.9)
    tie = mt.merge_seeds({1: E(1, "H", 0.7, Origin.INHERITED)}, {1: E(1, "Z", 0.7)})
    assert tie[1] == E(1, "Z", 0.7)
    tie = mt.merge_seeds({1: E(1, "H", 0.7)}, {1: E(1, "B", 0.7)})
    assert tie[1].site_group_id == "B"


def test_update_duplicates_examples():
    out = mt.update_duplicates({1: ("G", 0.9), 2: ("G", 0.6)},
                               {1: [("G", 0.9)], 2: [("G", 0.6), ("H", 0.5)]})
    assert out == {1: ("G", 0.9), 2: ("H", 0.5)}
    same = {1: ("G", 0.9), 2: ("H", 0.6)}
    assert mt.update_duplicates(same, {}) == same
    out = mt.update_duplicates({1: ("G", 0.5), 2: ("G", 0.9), 3: ("G", 0.7)}, {})
    assert out == {1: (None, 0.0), 2: ("G", 0.9), 3: (None, 0.0)}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_update_duplicates_injective(seed, cap):
    rng = np.random.default_rng(seed)
    groups = [f"G{i}" for i in range(rng.integers(1, 5))]
    rankings, assignment = {}, {}
    for b in range(rng.integers(1, 7)):
        scores = rng.integers(0, 4, len(groups)) / 3
        order = sorted(range(len(groups)), key=lambda j: (-scores[j], j))
        rankings[b] = [(groups[j], float(scores[j])) for j in order]
        assignment[b] = rankings[b][0]
    out = mt.update_duplicates(assignment, rankings, cap)
    held = [g for g, _ in out.values() if g is not None]
    assert len(held) == len(set(held))
    for b, (g, s) in out.items():
        assert g is None or (g, s) in rankings[b]


def row(b, g, s, n):
    return PoolRow(b, g, s, frozenset(range(100, 100 + n)))


def test_candidate_confirm_examples():
    cfg = mt.MatchConfig()
    pool = {(1, "g"): row(1, "g", 0.95, 1)}
    assert mt.candidate_confirm(pool, {}, cfg) == [MappingEntry(1, "g", 0.95, Origin.TOPOLOGY)]
    pool = {(1, "g"): row(1, "g", 0.4, 3), (1, "h"): row(1, "h", 0.4, 1)}
    assert [e.site_group_id for e in mt.candidate_confirm(pool, {}, cfg)] == ["g"]
    pool = {(1, "g"): row(1, "g", 0.95, 1), (1, "h"): row(1, "h", 0.95, 1)}
    assert mt.candidate_confirm(pool, {}, cfg) == []


def test_topo_ponce():
    g, m = ponce_world()
    out = mt.topo_matching(g, m.power_graph(115), {1: E(1, "G", 1.0)})
    assert out[2] == MappingEntry(2, "H", 1.0, Origin.TOPOLOGY)


def test_topo_no_seeds_is_identity():
    g, m = ponce_world()
    assert mt.topo_matching(g, m.power_graph(115), {}) == {}


def test_topo_two_checkins_confirm_low_score():
    g, m = checkin_world()
    out = mt.topo_matching(g, m.power_graph(115), {1: E(1, "G1", 1.0), 2: E(2, "G2", 1.0)})
    assert out[3].site_group_id == "H" and out[3].score == pytest.approx(0.5)


@pytest.mark.parametrize("world", sorted(WORLDS))
def test_topo_seeds_immutable_and_injective(world):
    g, m = WORLDS[world]()
    pg = m.power_graph(115)
    seeds = {1: E(1, g.nodes[0], 0.61)}
    before = dict(seeds)
    out = mt.topo_matching(g, pg, seeds)
    assert seeds == before
    assert all(out[b] == e for b, e in before.items())
    held = [e.site_group_id for e in out.values() if e.mapped]
    assert len(held) == len(set(held))


def legacy_world():
    g = geo(115, [grp("G", "CANA")], [])
    m = model([bus(1, "CANA"), bus(2, "QQQQ")], [line(1, 2)])
    return g, m


def test_arbitrary_fallback_opt_in():
    g, m = legacy_world()
    res = mt.map_graphs({115.0: g}, {115.0: m.power_graph(115)}, mt.MatchConfig(), m)
    assert not res.table.as_dict()[2].mapped
    res = mt.map_graphs({115.0: g}, {115.0: m.power_graph(115)}, mt.MatchConfig(arbitrary_legacy=True), m)
    e = res.table.as_dict()[2]
    assert (e.site_group_id, e.origin) == ("G", Origin.ARBITRARY)


def test_missing_graph_is_config_error():
    g, m = legacy_world()
    with pytest.raises(ConfigError):
        mt.map_graphs({115.0: g}, {115.0: m.power_graph(115), 38.0: m.power_graph(38)}, mt.MatchConfig(), m)


def test_levels_processed_high_to_low():
    g, m = legacy_world()
    g38 = geo(38, [grp("G", "CANA")], [])
    res = mt.map_graphs({38.0: g38, 115.0: g}, {38.0: m.power_graph(38), 115.0: m.power_graph(115)},
                        mt.MatchConfig(), m)
    assert res.diagnostics["levels_order"] == [115.0, 38.0]


def test_mapping_csv_roundtrip(tmp_path):
    g, m = ponce_world()
    res = mt.map_graphs({115.0: g}, {115.0: m.power_graph(115)}, mt.MatchConfig(), m)
    mt.write_mapping_csv(res.table, m.bus_map(), tmp_path / "m.csv")
    table, kvs = mt.read_mapping_csv(tmp_path / "m.csv")
    assert kvs == {1: 115.0, 2: 115.0}
    assert [(e.bus_id, e.site_group_id, e.origin) for e in table.entries] == \
        [(e.bus_id, e.site_group_id, e.origin) for e in res.table.entries]

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from gridmap import ingest, synth
from gridmap.errors import DanglingReference, DuplicateId, InvalidGeometry, ParseError, SelfLoop
from gridmap.model import BranchKind, Bus, CrsKind, GeoPoint, SiteType


def fc(features, crs=None):
    doc = {"type": "FeatureCollection", "features": features}
    if crs:
        doc["crs"] = {"type": "name", "properties": {"name": crs}}
    return doc


def feature(geom_type, coords, **props):
    return {"type": "Feature", "properties": props, "geometry": {"type": geom_type, "coordinates": coords}}


def dump(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


SITE_PROPS = dict(name="CANA", type="Substation", kv_min=38, kv_max=115)


def test_load_point_site(tmp_path):
    p = dump(tmp_path, "s.geojson", fc([feature("Point", [-66.1, 18.4], id="S1", **SITE_PROPS)]))
    [s] = ingest.load_sites(p)
    assert (s.id, s.name, s.site_type, s.kv_min, s.kv_max) == ("S1", "CANA", SiteType.SUBSTATION, 38.0, 115.0)
    assert (s.location.x, s.location.y, s.location.crs_kind) == (-66.1, 18.4, CrsKind.GEOGRAPHIC)


def test_polygon_site_centroid(tmp_path):
    ring = [[0, 0], [2, 0], [2, 2], [0, 2], [0, 0]]
    p = dump(tmp_path, "s.geojson", fc([feature("Polygon", [ring], id="S2", **SITE_PROPS)]))
    [s] = ingest.load_sites(p)
    assert (s.location.x, s.location.y) == (1.0, 1.0)


def test_missing_name_names_feature_and_field(tmp_path):
    props = dict(SITE_PROPS)
    del props["name"]
    p = dump(tmp_path, "s.geojson", fc([feature("Point", [0, 0], id="S7", **props)]))
    with pytest.raises(ParseError) as err:
        ingest.load_sites(p)
    assert str(err.value) == "S7: name"


def test_duplicate_site_id(tmp_path):
    f = feature("Point", [0, 0], id="S1", **SITE_PROPS)
    with pytest.raises(DuplicateId):
        ingest.load_sites(dump(tmp_path, "s.geojson", fc([f, f])))


def test_projected_crs_detected(tmp_path):
    p = dump(tmp_path, "s.geojson", fc([feature("Point", [500000.0, 2000000.0], id="S1", **SITE_PROPS)],
                                       crs="EPSG:32161"))
    [s] = ingest.load_sites(p)
    assert s.location.crs_kind is CrsKind.PROJECTED


@pytest.mark.parametrize("raw,want", [("37100", "37100"), ("NONE", None), ("0", None), ("", None), (None, None),
                                      (37100, "37100"), (37100.0, "37100"), ("none", None)])
def test_circuit_id_normalization(tmp_path, raw, want):
    p = dump(tmp_path, "l.geojson", fc([feature("LineString", [[0, 0], [0, 1]], id="L1", circuit_id=raw, voltage=115)]))
    [seg] = ingest.load_lines(p)
    assert seg.circuit_id == want


def test_short_linestring_rejected(tmp_path):
    p = dump(tmp_path, "l.geojson", fc([feature("LineString", [[0, 0]], id="L1", circuit_id="1", voltage=38)]))
    with pytest.raises(InvalidGeometry):
        ingest.load_lines(p)


def square_zone(name, x0, y0, x1, y1):
    return feature("Polygon", [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]], name=name)


def test_assign_zones_examples(tmp_path):
    zones = ingest.load_zones(dump(tmp_path, "z.geojson", fc([square_zone("A", 0, 0, 2, 2)])))
    sites = [ingest.Site(f"S{i}", "X", SiteType.OTHER, 38, 38, GeoPoint(x, y)) for i, (x, y) in
             enumerate([(1, 1), (5, 5), (2, 1)])]
    out = ingest.assign_zones(sites, zones)
    assert [s.zone for s in out] == ["A", None, "A"]


def test_zone_ring_validation(tmp_path):
    open_ring = feature("Polygon", [[[0, 0], [1, 0], [1, 1], [0, 1]]], name="Z")
    with pytest.raises(InvalidGeometry):
        ingest.load_zones(dump(tmp_path, "z.geojson", fc([open_ring])))
    bowtie = feature("Polygon", [[[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]], name="Z")
    with pytest.raises(InvalidGeometry):
        ingest.load_zones(dump(tmp_path, "z2.geojson", fc([bowtie])))


def test_assign_zones_order_independent_for_disjoint(tmp_path):
    zs = [square_zone("A", 0, 0, 2, 2), square_zone("B", 3, 0, 5, 2)]
    sites = [ingest.Site("S1", "X", SiteType.OTHER, 38, 38, GeoPoint(1, 1)),
             ingest.Site("S2", "X", SiteType.OTHER, 38, 38, GeoPoint(4, 1))]
    a = ingest.assign_zones(sites, ingest.load_zones(dump(tmp_path, "a.geojson", fc(zs))))
    b = ingest.assign_zones(sites, ingest.load_zones(dump(tmp_path, "b.geojson", fc(zs[::-1]))))
    assert a == b and [s.zone for s in a] == ["A", "B"]


def star_polygon(seed, n):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * math.pi, n))
    rad = rng.uniform(0.5, 2.0, n)
    pts = [(float(r * math.cos(a)), float(r * math.sin(a))) for a, r in zip(ang, rad)]
    return pts + [pts[0]]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12), st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_point_in_ring_matches_shapely(seed, n, x, y):
    ring = star_polygon(seed, n)
    poly = Polygon(ring)
    if not poly.is_valid or poly.boundary.distance(Point(x, y)) < 1e-9:
        return  # boundary ties are covered by the explicit examples
    gring = [GeoPoint(px, py) for px, py in ring]
    assert ingest.point_in_ring(x, y, gring) == poly.contains(Point(x, y))
    assert ingest.ring_is_simple(gring)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12))
def test_polygon_centroid_matches_shapely(seed, n):
    ring = star_polygon(seed, n)
    poly = Polygon(ring)
    if poly.area < 1e-6:
        return
    cx, cy = ingest.polygon_centroid(ring)
    assert cx == pytest.approx(poly.centroid.x, abs=1e-9)
    assert cy == pytest.approx(poly.centroid.y, abs=1e-9)


def write_csv(path, text):
    path.write_text(text)
    return path


def test_power_model_rows_and_star(tmp_path):
    b = write_csv(tmp_path / "buses.csv", "id,name,kv,area\n1,A,230,N\n2,A,115,N\n3,A,38,N\n101,CANA 115,115,SANJUAN\n"
                                         "10000,Z,38,N\n")
    br = write_csv(tmp_path / "branches.csv", "from_bus,to_bus,kind,circuit\n2,101,LINE,C1\n")
    x = write_csv(tmp_path / "x.csv", "bus1,bus2,bus3,name\n1,2,3,A AT1\n")
    buses, branches = ingest.load_power_model(b, br, x)
    bm = {bb.id: bb for bb in buses}
    assert bm[101] == Bus(101, "CANA 115", 115.0, "SANJUAN")
    star = bm[10001]  # max id 10000 + ordinal 1
    assert star.is_star and star.kv == 230.0 and star.name == "A AT1"
    legs = [(l.from_bus, l.to_bus) for l in branches if l.kind is BranchKind.TRANSFORMER_3W_LEG]
    assert legs == [(1, 10001), (2, 10001), (3, 10001)]


def test_power_model_errors(tmp_path):
    b = write_csv(tmp_path / "buses.csv", "id,name,kv,area\n5,A,115,N\n6,B,115,N\n")
    with pytest.raises(SelfLoop):
        ingest.load_power_model(b, write_csv(tmp_path / "b1.csv", "from_bus,to_bus,kind,circuit\n5,5,LINE,1\n"))
    with pytest.raises(DanglingReference):
        ingest.load_power_model(b, write_csv(tmp_path / "b2.csv", "from_bus,to_bus,kind,circuit\n5,9,LINE,1\n"))
    with pytest.raises(ParseError):
        ingest.load_power_model(b, write_csv(tmp_path / "b3.csv", "from_bus,to_bus,kind,circuit\n5,6,CABLE,1\n"))
    with pytest.raises(DuplicateId):
        ingest.load_power_model(write_csv(tmp_path / "d.csv", "id,name,kv,area\n5,A,115,N\n5,B,115,N\n"),
                                write_csv(tmp_path / "b4.csv", "from_bus,to_bus,kind,circuit\n"))


def test_csv_quoting(tmp_path):
    b = write_csv(tmp_path / "buses.csv", 'id,name,kv,area\n1,"PALO SECO, UNIT 1",115,"SAN JUAN"\n')
    buses, _ = ingest.load_power_model(b, write_csv(tmp_path / "br.csv", "from_bus,to_bus,kind,circuit\n"))
    assert buses[0].name == "PALO SECO, UNIT 1"


def test_roundtrip_through_emitters(tmp_path, small_corpus):
    c = synth.corrupt(small_corpus, synth.PRESETS["moderate"], 3)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    synth.write_corpus(c, d1, footprint_m=None)

    def load(d):
        sites = ingest.assign_zones(ingest.load_sites(d / "sites.geojson"), ingest.load_zones(d / "zones.geojson"))
        lines = ingest.load_lines(d / "lines.geojson")
        zones = ingest.load_zones(d / "zones.geojson")
        buses, branches = ingest.load_power_model(d / "buses.csv", d / "branches.csv", d / "xfmr3w.csv")
        return sites, lines, zones, buses, branches

    first = load(d1)
    assert first[0] == sorted(c.sites, key=lambda s: s.id)
    assert first[3] == sorted(c.buses, key=lambda b: b.id)
    d2.mkdir()
    synth.write_sites(first[0], d2 / "sites.geojson")
    synth.write_lines(first[1], d2 / "lines.geojson")
    synth.write_zones(first[2], d2 / "zones.geojson")
    synth.write_power_model(first[3], first[4], d2 / "buses.csv", d2 / "branches.csv", d2 / "xfmr3w.csv")
    assert load(d2) == first

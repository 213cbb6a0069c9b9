"""Per-voltage geo-graph construction from cleaned line segments and site groups."""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import (
    EARTH_RADIUS_M,
    METERS_PER_MILE,
    CircuitNetwork,
    CrsKind,
    GeoEdge,
    GeoGraph,
    GeoPoint,
    LineSegment,
    SiteGroup,
    local_xy,
    path_length,
)

# projections closer than this to an existing vertex reuse it instead of splitting
VERTEX_REUSE_M = 1e-2
# relative slack on the strict shorter-path test, absorbs float summation order
ADD_BACK_RTOL = 1e-9


@dataclass(frozen=True)
class BuildConfig:
    attach_threshold: float = 100.0
    voltage_levels: tuple[float, ...] = (230.0, 115.0, 38.0)

    def __post_init__(self):
        if self.attach_threshold <= 0:
            raise ValueError("attach_threshold must be positive")


@dataclass(frozen=True)
class CircuitTrace:
    """Record of one circuit's edge selection, kept for post-hoc replay."""

    circuit_id: str
    voltage: float
    nodes: tuple[str, ...]
    weights: dict  # (u, v) -> along-network distance, u < v
    mst: tuple[tuple[str, str], ...]
    added: tuple[tuple[str, str], ...]
    unreachable: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class VoltageReport:
    voltage: float
    node_count: int
    edge_count: int
    built_length_m: float
    total_length_m: float
    coverage_percent: float
    disconnected_pairs: int = 0
    excluded_segments: int = 0


@dataclass(frozen=True)
class BuildReport:
    levels: tuple[VoltageReport, ...]
    traces: tuple[CircuitTrace, ...] = field(default=(), compare=False, repr=False)

    def level(self, voltage: float) -> VoltageReport:
        for r in self.levels:
            if r.voltage == voltage:
                return r
        raise KeyError(voltage)


# -- circuit networks -----------------------------------------------------------


def build_circuit_network(segments: Sequence[LineSegment]) -> CircuitNetwork:
    """Undirected vertex/edge graph of one circuit; vertices merged on exact equality."""
    segments = sorted(segments, key=lambda s: s.id)
    index: dict[tuple[float, float], int] = {}
    verts: list[GeoPoint] = []
    edges: list[tuple[int, int, float, str]] = []
    for s in segments:
        ids = []
        for v in s.vertices:
            key = (v.x, v.y)
            if key not in index:
                index[key] = len(verts)
                verts.append(v)
            ids.append(index[key])
        for (a, b), (p, q) in zip(zip(ids, ids[1:]), zip(s.vertices, s.vertices[1:])):
            if a != b:
                edges.append((a, b, path_length((p, q)), s.id))
    first = segments[0]
    return CircuitNetwork(first.circuit_id or "", first.voltage, tuple(verts), tuple(edges))


def _near_bbox(network: CircuitNetwork, groups: Sequence[SiteGroup], margin_m: float) -> list[SiteGroup]:
    xs = [v.x for v in network.vertices]
    ys = [v.y for v in network.vertices]
    if network.vertices[0].crs_kind is CrsKind.GEOGRAPHIC:
        dlat = math.degrees(margin_m / EARTH_RADIUS_M)
        lat = max(abs(min(ys)), abs(max(ys))) + dlat
        dlon = dlat / max(1e-6, math.cos(math.radians(min(lat, 89.9))))
    else:
        dlat = dlon = margin_m
    lo_x, hi_x, lo_y, hi_y = min(xs) - dlon, max(xs) + dlon, min(ys) - dlat, max(ys) + dlat
    return [g for g in groups if lo_x <= g.location.x <= hi_x and lo_y <= g.location.y <= hi_y]


def attach_site_groups(
    network: CircuitNetwork, groups: Sequence[SiteGroup], cfg: BuildConfig = BuildConfig()
) -> tuple[CircuitNetwork, list[tuple[str, int]]]:
    """Attach groups lying near the circuit and rated for its voltage.

    Each qualifying group centroid is projected onto its nearest network edge,
    which is split at the projection. Returns the split network and the
    ``(group_id, vertex_index)`` attachments in group-id order.
    """
    verts = list(network.vertices)
    edges = list(network.edges)
    attachments: list[tuple[str, int]] = []
    if not edges:
        return network, attachments
    candidates = [g for g in _near_bbox(network, groups, cfg.attach_threshold * 1.01) if g.covers(network.voltage)]
    for g in sorted(candidates, key=lambda g: g.id):
        ij = np.array([(e[0], e[1]) for e in edges])
        xy = local_xy(verts, g.location)
        a = xy[ij[:, 0]]
        b = xy[ij[:, 1]]
        ab = b - a
        denom = (ab ** 2).sum(axis=1)
        t = np.where(denom > 0, np.clip(-(a * ab).sum(axis=1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0), 0.0)
        proj = a + t[:, None] * ab
        dist = np.hypot(proj[:, 0], proj[:, 1])
        k = int(np.argmin(dist))
        if dist[k] > cfg.attach_threshold:
            continue
        i, j, length, src = edges[k]
        seg_len = math.sqrt(denom[k])
        along = t[k] * seg_len
        if along <= VERTEX_REUSE_M:
            attachments.append((g.id, i))
            continue
        if seg_len - along <= VERTEX_REUSE_M:
            attachments.append((g.id, j))
            continue
        p, q = verts[i], verts[j]
        tk = float(t[k])
        mid = GeoPoint(p.x + tk * (q.x - p.x), p.y + tk * (q.y - p.y), p.crs_kind)
        m = len(verts)
        verts.append(mid)
        edges[k] = (i, m, path_length((p, mid)), src)
        edges.append((m, j, path_length((mid, q)), src))
        attachments.append((g.id, m))
    return CircuitNetwork(network.circuit_id, network.voltage, tuple(verts), tuple(edges)), attachments


def _dijkstra(n: int, adj: list[list[tuple[int, float, int]]], src: int):
    dist = [math.inf] * n
    pred: list[Optional[tuple[int, int]]] = [None] * n
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w, k in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = (u, k)
                heapq.heappush(heap, (nd, v))
    return dist, pred


def _walk(pred, src: int, dst: int) -> tuple[list[int], list[int]]:
    vs, es = [dst], []
    while vs[-1] != src:
        u, k = pred[vs[-1]]
        es.append(k)
        vs.append(u)
    return vs[::-1], es[::-1]


# -- edge selection -------------------------------------------------------------


def _relax_with(dist: np.ndarray, u: int, v: int, w: float) -> None:
    via_uv = dist[:, u][:, None] + w + dist[v, :][None, :]
    via_vu = dist[:, v][:, None] + w + dist[u, :][None, :]
    np.minimum(dist, np.minimum(via_uv, via_vu), out=dist)


def add_back_accepts(weight: float, current: float) -> bool:
    """Strict shorter-path test used when re-inserting pruned edges."""
    if math.isinf(current):
        return True
    return weight < current - ADD_BACK_RTOL * max(1.0, current)


def select_edges(nodes: Sequence[str], weights: dict, return_distances: bool = False):
    """Kruskal MST on the weighted complete graph, then ordered add-back.

    ``weights`` maps ``(u, v)`` with ``u < v`` to a finite weight; absent pairs
    are unreachable. Ties order by ``(weight, u, v)``. A pruned edge returns iff
    it is strictly shorter than the current graph distance between its ends,
    which is kept as an all-pairs matrix updated after each insertion.

    Returns ``(mst, added)``, plus the final distance matrix (rows in sorted
    node order) when ``return_distances`` is set.
    """
    nodes = sorted(nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    order = sorted(weights, key=lambda e: (weights[e], e[0], e[1]))
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    dist = np.full((len(nodes), len(nodes)), np.inf)
    np.fill_diagonal(dist, 0.0)
    mst, pruned = [], []
    for e in order:
        a, b = find(pos[e[0]]), find(pos[e[1]])
        if a == b:
            pruned.append(e)
            continue
        parent[max(a, b)] = min(a, b)
        mst.append(e)
        _relax_with(dist, pos[e[0]], pos[e[1]], weights[e])
    added = []
    for e in pruned:
        u, v = pos[e[0]], pos[e[1]]
        if add_back_accepts(weights[e], dist[u, v]):
            added.append(e)
            _relax_with(dist, u, v, weights[e])
    if return_distances:
        return mst, added, dist
    return mst, added


def circuit_edges(network: CircuitNetwork, attachments: Sequence[tuple[str, int]]):
    """Geo-graph edges contributed by one circuit.

    Returns ``(edges, used_network_edge_indices, trace)``.
    """
    n = len(network.vertices)
    adj: list[list[tuple[int, float, int]]] = [[] for _ in range(n)]
    for k, (i, j, w, _) in enumerate(network.edges):
        adj[i].append((j, w, k))
        adj[j].append((i, w, k))
    at = dict(attachments)
    nodes = sorted(at)
    weights: dict[tuple[str, str], float] = {}
    unreachable = []
    paths = {}
    for a_idx, u in enumerate(nodes):
        dist, pred = _dijkstra(n, adj, at[u])
        for v in nodes[a_idx + 1 :]:
            d = dist[at[v]]
            if math.isinf(d):
                unreachable.append((u, v))
                continue
            weights[(u, v)] = d
            paths[(u, v)] = _walk(pred, at[u], at[v])
    if len(nodes) == 2 and weights:
        mst, added = list(weights), []
    else:
        mst, added = select_edges(nodes, weights)
    edges, used = [], set()
    for e in mst + added:
        vs, es = paths[e]
        used.update(es)
        geom = tuple(network.vertices[i] for i in vs)
        if len(geom) == 1:
            geom = geom * 2
        edges.append(GeoEdge(e[0], e[1], path_length(geom), network.circuit_id, geom))
    trace = CircuitTrace(network.circuit_id, network.voltage, tuple(nodes), weights,
                         tuple(mst), tuple(added), tuple(unreachable))
    return edges, used, trace


def build_geo_graph(circuits, groups: dict, voltage: float):
    """Union the circuits' edges into one geo-graph.

    ``circuits`` is a sequence of ``(network, attachments)`` pairs. Returns
    ``(graph, used_length_m, traces)``.
    """
    nodes: set[str] = set()
    edges: list[GeoEdge] = []
    traces = []
    built = 0.0
    for network, attachments in sorted(circuits, key=lambda c: c[0].circuit_id):
        nodes.update(g for g, _ in attachments)
        e, used, trace = circuit_edges(network, attachments)
        edges.extend(e)
        traces.append(trace)
        built += sum(network.edges[k][2] for k in sorted(used))
    edges.sort(key=lambda e: (e.u, e.v, e.circuit_id))
    graph = GeoGraph(voltage, tuple(sorted(nodes)), tuple(edges), {g: groups[g] for g in sorted(nodes)})
    return graph, built, traces


def build_all(groups: Sequence[SiteGroup], segments: Sequence[LineSegment], cfg: BuildConfig = BuildConfig(),
              threads: int = 1) -> tuple[dict[float, GeoGraph], BuildReport]:
    """Geo-graphs for every configured voltage plus the coverage report.

    Segments with a missing circuit id are excluded from building but their
    length still counts toward the voltage's total.
    """
    by_id = {g.id: g for g in groups}
    graphs: dict[float, GeoGraph] = {}
    levels, traces = [], []
    for kv in cfg.voltage_levels:
        segs = [s for s in segments if s.voltage == kv]
        total = sum(path_length(s.vertices) for s in segs)
        strata: dict[str, list[LineSegment]] = defaultdict(list)
        excluded = 0
        for s in segs:
            if s.circuit_id is None:
                excluded += 1
            else:
                strata[s.circuit_id].append(s)
        level_groups = [g for g in groups if g.covers(kv)]

        def one(cid):
            net = build_circuit_network(strata[cid])
            return attach_site_groups(net, level_groups, cfg)

        keys = sorted(strata)
        if threads > 1 and len(keys) > 1:
            with ThreadPoolExecutor(threads) as pool:
                circuits = list(pool.map(one, keys))
        else:
            circuits = [one(k) for k in keys]
        graph, built, tr = build_geo_graph(circuits, by_id, kv)
        graphs[kv] = graph
        traces.extend(tr)
        if total > 0 and built >= total * (1 - ADD_BACK_RTOL):
            built = total  # summation-order noise, not missing length
        coverage = min(100.0, 100.0 * built / total) if total > 0 else 0.0
        levels.append(VoltageReport(
            voltage=kv,
            node_count=len(graph.nodes),
            edge_count=len(graph.edges),
            built_length_m=min(built, total),
            total_length_m=total,
            coverage_percent=coverage,
            disconnected_pairs=sum(len(t.unreachable) for t in tr),
            excluded_segments=excluded,
        ))
    return graphs, BuildReport(tuple(levels), tuple(traces))


# -- serialization --------------------------------------------------------------

TABLE1_HEADER = ("voltage", "site_groups", "lines", "line_length_mi", "coverage_pct")


def fmt_kv(kv: float) -> str:
    return str(int(kv)) if float(kv).is_integer() else repr(float(kv))


def write_report_csv(report: BuildReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE1_HEADER)
        for r in report.levels:
            w.writerow([fmt_kv(r.voltage), r.node_count, r.edge_count,
                        f"{r.built_length_m / METERS_PER_MILE:.1f}", f"{r.coverage_percent:.1f}"])


def _crs_member(kind: CrsKind):
    if kind is CrsKind.PROJECTED:
        return {"type": "name", "properties": {"name": "projected"}}
    return None


def geo_graph_to_geojson(graph: GeoGraph) -> dict:
    features = []
    kind = CrsKind.GEOGRAPHIC
    for gid in graph.nodes:
        g = graph.groups[gid]
        kind = g.location.crs_kind
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [g.location.x, g.location.y]},
            "properties": {"group_id": g.id, "name": g.name, "zone": g.zone, "kv_min": g.kv_min,
                           "kv_max": g.kv_max, "members": list(g.member_ids)},
        })
    for e in graph.edges:
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[p.x, p.y] for p in e.geometry]},
            "properties": {"from": e.u, "to": e.v, "weight_m": e.weight, "circuit_id": e.circuit_id},
        })
    doc = {"type": "FeatureCollection", "voltage": graph.voltage, "features": features}
    crs = _crs_member(kind)
    if crs:
        doc["crs"] = crs
    return doc


def write_geo_graph(graph: GeoGraph, path) -> None:
    Path(path).write_text(json.dumps(geo_graph_to_geojson(graph), sort_keys=True) + "\n", encoding="utf-8")


def read_geo_graph(path) -> GeoGraph:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    crs = doc.get("crs")
    kind = CrsKind.PROJECTED if crs else CrsKind.GEOGRAPHIC
    groups: dict[str, SiteGroup] = {}
    edges = []
    for f in doc["features"]:
        p = f["properties"]
        c = f["geometry"]["coordinates"]
        if f["geometry"]["type"] == "Point":
            groups[p["group_id"]] = SiteGroup(p["group_id"], tuple(p.get("members") or [p["group_id"]]),
                                              p.get("name", ""), float(p["kv_min"]), float(p["kv_max"]),
                                              GeoPoint(c[0], c[1], kind), p.get("zone"))
        else:
            geom = tuple(GeoPoint(x, y, kind) for x, y in c)
            edges.append(GeoEdge(p["from"], p["to"], float(p["weight_m"]), p["circuit_id"], geom))
    return GeoGraph(float(doc["voltage"]), tuple(sorted(groups)), tuple(edges), groups)


def graph_filename(kv: float) -> str:
    return f"geograph_{fmt_kv(kv)}kv.geojson"

"""Geospatial cleaning: name distance, site grouping, circuit-id repair, snapping."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import cKDTree
from scipy.spatial.distance import squareform

from . import kernels
from .model import CrsKind, GeoPoint, LineSegment, Site, SiteGroup, metric_coords, point_distance, radius_in_metric

_WS = re.compile(r"\s+")
_KDTREE_MIN = 2000


class Linkage(enum.Enum):
    SINGLE = "single"
    COMPLETE = "complete"


@dataclass(frozen=True)
class GroupingConfig:
    name_dist_threshold: float = 0.4
    spatial_threshold: float = 200.0
    linkage: Linkage = Linkage.COMPLETE

    def __post_init__(self):
        if self.name_dist_threshold < 0 or self.spatial_threshold < 0:
            raise ValueError("grouping thresholds must be non-negative")


@dataclass(frozen=True)
class SnapConfig:
    eps: float = 10.0
    min_pts: int = 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("snap eps must be positive")
        if self.min_pts != 1:
            raise ValueError("min_pts is fixed at 1")


def normalize_name(s: str) -> str:
    return _WS.sub(" ", s.strip().upper())


@lru_cache(maxsize=1 << 18)
def _lcs_normalized(a: str, b: str) -> int:
    if not a or not b:
        return 0
    return int(kernels.lcs_length(kernels.encode_one(a), kernels.encode_one(b)))


def lcs_distance(a: str, b: str) -> int:
    """Insert/delete edit distance: |a| + |b| - 2 * LCS(a, b) on normalized names."""
    a, b = normalize_name(a), normalize_name(b)
    return len(a) + len(b) - 2 * _lcs_normalized(a, b)


def lcs_similarity(a: str, b: str) -> float:
    a, b = normalize_name(a), normalize_name(b)
    s = len(a) + len(b)
    if s == 0:
        return 1.0
    d = s - 2 * _lcs_normalized(a, b)
    return 1.0 - d / s


def similarity_matrix(left: Sequence[str], right: Sequence[str], threads: int = 1) -> np.ndarray:
    """All-pairs lcs_similarity between two name lists.

    Work is done once per distinct normalized name and split across threads by
    row blocks; the result does not depend on the thread count.
    """
    ln = [normalize_name(s) for s in left]
    rn = [normalize_name(s) for s in right]
    lu = sorted(set(ln))
    ru = sorted(set(rn))
    out_u = np.empty((len(lu), len(ru)))
    if lu and ru:
        a_codes, a_lens = kernels.encode(lu)
        b_codes, b_lens = kernels.encode(ru)
        threads = max(1, min(int(threads), len(lu)))
        if threads == 1:
            out_u[:] = kernels.similarity_matrix(a_codes, a_lens, b_codes, b_lens)
        else:
            bounds = np.linspace(0, len(lu), threads + 1).astype(int)

            def work(k):
                lo, hi = bounds[k], bounds[k + 1]
                out_u[lo:hi] = kernels.similarity_matrix(a_codes[lo:hi], a_lens[lo:hi], b_codes, b_lens)

            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(work, range(threads)))
    li = {s: i for i, s in enumerate(lu)}
    ri = {s: i for i, s in enumerate(ru)}
    return out_u[np.ix_([li[s] for s in ln], [ri[s] for s in rn])]


# -- site grouping ------------------------------------------------------------


def _cluster_labels(dist: np.ndarray, threshold: float, method: Linkage) -> np.ndarray:
    n = dist.shape[0]
    if n == 1:
        return np.ones(1, dtype=int)
    z = linkage(squareform(dist, checks=False), method=method.value)
    return fcluster(z, t=threshold, criterion="distance")


def cluster_stratum(sites: Sequence[Site], cfg: GroupingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Name and spatial cluster labels for sites sharing one zone."""
    names = [s.name for s in sites]
    name_dist = 1.0 - similarity_matrix(names, names)
    np.fill_diagonal(name_dist, 0.0)
    name_dist = np.maximum(name_dist, 0.0)
    xy = np.array([(s.location.x, s.location.y) for s in sites], dtype=float)
    geo = sites[0].location.crs_kind is CrsKind.GEOGRAPHIC
    space_dist = kernels.pairwise_distance(xy, geo)
    return (_cluster_labels(name_dist, cfg.name_dist_threshold, cfg.linkage),
            _cluster_labels(space_dist, cfg.spatial_threshold, cfg.linkage))


def make_group(members: Sequence[Site]) -> SiteGroup:
    members = sorted(members, key=lambda s: s.id)
    zones = Counter(s.zone for s in members if s.zone is not None)
    zone = min(zones, key=lambda z: (-zones[z], z)) if zones else None
    kind = members[0].location.crs_kind
    loc = GeoPoint(
        float(np.mean([s.location.x for s in members])),
        float(np.mean([s.location.y for s in members])),
        kind,
    )
    return SiteGroup(
        id=members[0].id,
        member_ids=tuple(s.id for s in members),
        name="|".join(s.name for s in members),
        kv_min=min(s.kv_min for s in members),
        kv_max=max(s.kv_max for s in members),
        location=loc,
        zone=zone,
    )


def group_sites(sites: Sequence[Site], cfg: GroupingConfig = GroupingConfig(), threads: int = 1) -> list[SiteGroup]:
    """Partition sites into groups that cluster together by name AND location.

    Clustering runs per zone; a site without a zone is never grouped.
    Group id is the smallest member site id.
    """
    strata: dict[Optional[str], list[Site]] = defaultdict(list)
    singles: list[list[Site]] = []
    for s in sorted(sites, key=lambda s: s.id):
        if s.zone is None:
            singles.append([s])
        else:
            strata[s.zone].append(s)

    def split(members: list[Site]) -> list[list[Site]]:
        if len(members) == 1:
            return [members]
        name_lab, space_lab = cluster_stratum(members, cfg)
        buckets: dict[tuple, list[Site]] = defaultdict(list)
        for s, a, b in zip(members, name_lab, space_lab):
            buckets[(int(a), int(b))].append(s)
        return list(buckets.values())

    keys = sorted(strata)
    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda k: split(strata[k]), keys))
    else:
        parts = [split(strata[k]) for k in keys]
    groups = [make_group(m) for part in parts for m in part] + [make_group(m) for m in singles]
    return sorted(groups, key=lambda g: g.id)


# -- circuit-id repair --------------------------------------------------------


def _endpoint_neighbors(segments: Sequence[LineSegment], eps: float) -> list[set[int]]:
    """For each segment, indices of other segments with an endpoint within eps."""
    n = len(segments)
    out: list[set[int]] = [set() for _ in range(n)]
    if n == 0:
        return out
    pts = []
    owner = []
    for i, s in enumerate(segments):
        pts.extend((s.vertices[0], s.vertices[-1]))
        owner.extend((i, i))
    tree = cKDTree(metric_coords(pts))
    radius = radius_in_metric(pts, eps) * (1 + 1e-9) + 1e-9
    for a, b in tree.query_pairs(radius):
        i, j = owner[a], owner[b]
        if i != j and point_distance(pts[a], pts[b]) <= eps:
            out[i].add(j)
            out[j].add(i)
    return out


def repair_circuit_ids(segments: Sequence[LineSegment], eps: float = 10.0) -> tuple[list[LineSegment], int]:
    """Fill missing circuit ids from endpoint neighbours at the same voltage.

    Passes repeat until nothing changes. Within a pass every missing segment
    reads the ids known at the start of the pass; the majority id among its
    neighbouring segments wins, ties going to the lexicographically smallest.
    """
    ids: list[Optional[str]] = [s.circuit_id for s in segments]
    by_voltage: dict[float, list[int]] = defaultdict(list)
    for i, s in enumerate(segments):
        by_voltage[s.voltage].append(i)
    neighbors: dict[int, list[int]] = {}
    for idx in by_voltage.values():
        local = _endpoint_neighbors([segments[i] for i in idx], eps)
        for k, i in enumerate(idx):
            if ids[i] is None:
                neighbors[i] = sorted(idx[j] for j in local[k])
    order = sorted(neighbors, key=lambda i: segments[i].id)
    while True:
        updates = {}
        for i in order:
            if ids[i] is not None:
                continue
            votes = Counter(ids[j] for j in neighbors[i] if ids[j] is not None)
            if votes:
                updates[i] = min(votes, key=lambda c: (-votes[c], c))
        if not updates:
            break
        for i, cid in updates.items():
            ids[i] = cid
    repaired = [s if s.circuit_id == c else replace(s, circuit_id=c) for s, c in zip(segments, ids)]
    return repaired, sum(1 for c in ids if c is None)


# -- vertex snapping ----------------------------------------------------------


def _eps_labels(points: Sequence[GeoPoint], eps: float) -> np.ndarray:
    n = len(points)
    if n <= _KDTREE_MIN:
        xy = np.array([(p.x, p.y) for p in points], dtype=float)
        dist = kernels.pairwise_distance(xy, points[0].crs_kind is CrsKind.GEOGRAPHIC)
        return kernels.eps_components(dist, eps)
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    tree = cKDTree(metric_coords(points))
    pairs = [(a, b) for a, b in tree.query_pairs(radius_in_metric(points, eps) * (1 + 1e-9) + 1e-9)
             if point_distance(points[a], points[b]) <= eps]
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    graph = coo_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    _, first = np.unique(raw, return_index=True)
    remap = np.empty(len(first), dtype=np.int64)
    remap[np.argsort(first)] = np.arange(len(first))
    return remap[raw]


def _dedupe(vertices: list[GeoPoint]) -> list[GeoPoint]:
    out = [vertices[0]]
    for v in vertices[1:]:
        if (v.x, v.y) != (out[-1].x, out[-1].y):
            out.append(v)
    return out


def snap_vertices(segments: Sequence[LineSegment], cfg: SnapConfig = SnapConfig()) -> list[LineSegment]:
    """Merge near-coincident vertices within each (circuit, voltage) stratum.

    DBSCAN with min_pts=1 reduces to eps-connected components; every component
    collapses onto its centroid. Segments left with zero length are dropped.
    Segments with a missing circuit id are snapped on their own.
    """
    strata: dict[tuple, list[int]] = defaultdict(list)
    for i, s in enumerate(segments):
        key = (s.circuit_id, s.voltage) if s.circuit_id is not None else ("\0missing", s.id)
        strata[key].append(i)
    new_vertices: dict[int, list[GeoPoint]] = {}
    for idx in strata.values():
        pts: list[GeoPoint] = []
        where: list[tuple[int, int]] = []
        for i in idx:
            for k, v in enumerate(segments[i].vertices):
                pts.append(v)
                where.append((i, k))
        labels = _eps_labels(pts, cfg.eps)
        members: dict[int, list[int]] = defaultdict(list)
        for p, lab in enumerate(labels):
            members[int(lab)].append(p)
        snapped = list(pts)
        for group in members.values():
            if len(group) == 1:
                continue
            first = pts[group[0]]
            if all(pts[p].x == first.x and pts[p].y == first.y for p in group):
                continue
            c = GeoPoint(float(np.mean([pts[p].x for p in group])), float(np.mean([pts[p].y for p in group])),
                         first.crs_kind)
            for p in group:
                snapped[p] = c
        for i in idx:
            new_vertices[i] = []
        for p, (i, _) in enumerate(where):
            new_vertices[i].append(snapped[p])
    out = []
    for i, s in enumerate(segments):
        verts = _dedupe(new_vertices[i])
        if len(verts) < 2:
            continue
        out.append(s if tuple(verts) == s.vertices else replace(s, vertices=tuple(verts)))
    return out


# -- group files ------------------------------------------------------------------


def write_groups(groups: Sequence[SiteGroup], path) -> None:
    feats = []
    kind = CrsKind.GEOGRAPHIC
    for g in sorted(groups, key=lambda g: g.id):
        kind = g.location.crs_kind
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [g.location.x, g.location.y]},
            "properties": {"group_id": g.id, "name": g.name, "zone": g.zone, "kv_min": g.kv_min,
                           "kv_max": g.kv_max, "members": list(g.member_ids)},
        })
    doc = {"type": "FeatureCollection", "features": feats}
    if kind is CrsKind.PROJECTED:
        doc["crs"] = {"type": "name", "properties": {"name": "projected"}}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def read_groups(path) -> list[SiteGroup]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = CrsKind.PROJECTED if doc.get("crs") else CrsKind.GEOGRAPHIC
    out = []
    for f in doc["features"]:
        p = f["properties"]
        x, y = f["geometry"]["coordinates"][:2]
        out.append(SiteGroup(p["group_id"], tuple(p["members"]), p["name"], float(p["kv_min"]),
                             float(p["kv_max"]), GeoPoint(float(x), float(y), kind), p.get("zone")))
    return out

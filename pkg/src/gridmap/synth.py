"""Synthetic paired power-model / GIS corpora with exact ground truth.

Stations are scattered over a planar rectangle (meters) and converted to
lon/lat around a fixed origin. Each voltage level gets a spanning tree over
the stations that host it, plus optional mesh edges at the lowest level.
Every bus has exactly one co-located site, so at zero corruption the
pipeline should recover the mapping perfectly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay, QhullError

from .evaluate import GroundTruth, write_truth
from .graphbuild import fmt_kv
from .ingest import ZonePolygon, point_in_ring
from .model import (
    EARTH_RADIUS_M, Branch, BranchKind, Bus, CrsKind, GeoPoint, LineSegment, Site, SiteType,
)

ORIGIN_LON = -67.25
ORIGIN_LAT = 17.95
_COS_REF = math.cos(math.radians(ORIGIN_LAT + 0.27))

ZONE_NAMES = (
    ("AGUADILLA", "ARECIBO", "BAYAMON", "SAN JUAN"),
    ("MAYAGUEZ", "PONCE", "CAGUAS", "HUMACAO"),
)
_SYLLABLES = (
    "MA", "RI", "SA", "BA", "NA", "CA", "LO", "TO", "PE", "GUA", "JU", "DO", "RA", "VE", "LA",
    "MON", "TA", "CO", "LE", "NI", "YA", "QUE", "BO", "CE", "HU", "MI", "GA", "DE", "RO", "TI",
    "YAU", "CU", "FA", "SO", "PIN", "LI", "VA", "NE", "CAR", "MO",
)
_PREFIXES = ("SAN", "SANTA", "PALO", "VILLA", "PUNTA", "LAS", "LOS", "MONTE", "BARRIO", "LOMA")
_BLANKS = ("NONE", "0", "")

MIN_STATION_SEP_M = 1500.0
LINE_CLEARANCE_M = 400.0


@dataclass(frozen=True)
class CorruptionKnobs:
    name_abbrev_rate: float = 0.0
    name_voltage_suffix_rate: float = 0.0
    missing_circuit_rate: float = 0.0
    vertex_jitter_sigma_m: float = 0.0
    site_split_rate: float = 0.0
    tap_rate: float = 0.0
    legacy_bus_rate: float = 0.0
    line_version_drift_rate: float = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if name == "vertex_jitter_sigma_m":
                if v < 0:
                    raise ValueError(f"{name} must be >= 0")
            elif not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")

    def is_zero(self) -> bool:
        return all(getattr(self, n) == 0 for n in self.__dataclass_fields__)


PRESETS = {
    "none": CorruptionKnobs(),
    "moderate": CorruptionKnobs(
        name_abbrev_rate=0.2,
        name_voltage_suffix_rate=0.2,
        missing_circuit_rate=0.1,
        vertex_jitter_sigma_m=5.0,
        site_split_rate=0.1,
        tap_rate=0.05,
        legacy_bus_rate=0.02,
        line_version_drift_rate=0.02,
    ),
}


def _default_buses():
    # 17 + 115 + 1235 = 1367 total; see notes on the sub-38 kV count
    return {230.0: 17, 115.0: 115, 38.0: 1235}


def _default_xfmr2w():
    return {(230.0, 115.0): 24, (115.0, 38.0): 131}


@dataclass(frozen=True)
class SynthConfig:
    rng_seed: int = 42
    n_buses: dict = field(default_factory=_default_buses)
    mesh_fraction_38kv: float = 0.2
    xfmr2w: dict = field(default_factory=_default_xfmr2w)
    xfmr3w: int = 26
    corruption: CorruptionKnobs = CorruptionKnobs()
    width_m: float = 170_000.0
    height_m: float = 60_000.0
    chain_prob: float = 0.3
    max_chain: int = 3

    def __post_init__(self):
        if not self.n_buses:
            raise ValueError("n_buses is empty")
        for kv, n in self.n_buses.items():
            if kv <= 0 or n < 2:
                raise ValueError(f"n_buses[{kv}] must be >= 2")
        if not (0.0 <= self.mesh_fraction_38kv <= 1.0):
            raise ValueError("mesh_fraction_38kv must be in [0, 1]")
        if self.xfmr3w < 0 or any(c < 0 for c in self.xfmr2w.values()):
            raise ValueError("transformer counts must be >= 0")


@dataclass
class Corpus:
    sites: list
    lines: list
    zones: list
    buses: list  # includes star buses
    branches: list  # includes three-winding legs
    truth: GroundTruth
    blank_tokens: dict = field(default_factory=dict)  # segment id -> raw token for a missing circuit id
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def real_buses(self) -> list:
        return [b for b in self.buses if not b.is_star]


# -- coordinates ------------------------------------------------------------


def to_lonlat(x: float, y: float) -> GeoPoint:
    lat = ORIGIN_LAT + math.degrees(y / EARTH_RADIUS_M)
    lon = ORIGIN_LON + math.degrees(x / (EARTH_RADIUS_M * _COS_REF))
    return GeoPoint(lon, lat)


def offset_point(p: GeoPoint, dx: float, dy: float) -> GeoPoint:
    return GeoPoint(
        p.x + math.degrees(dx / (EARTH_RADIUS_M * math.cos(math.radians(p.y)))),
        p.y + math.degrees(dy / EARTH_RADIUS_M),
    )


def _place_stations(n: int, cfg: SynthConfig, rng) -> np.ndarray:
    pts = np.empty((n, 2))
    k = 0
    sep2 = MIN_STATION_SEP_M ** 2
    tries = 0
    while k < n:
        p = rng.uniform((0.0, 0.0), (cfg.width_m, cfg.height_m))
        tries += 1
        if k == 0 or np.min(np.sum((pts[:k] - p) ** 2, axis=1)) >= sep2:
            pts[k] = p
            k += 1
        elif tries > 200 * n:
            raise ValueError("cannot place stations; enlarge the area or lower the counts")
    return pts


def _station_names(n: int, rng) -> list[str]:
    names: list[str] = []
    seen = set()
    while len(names) < n:
        k = int(rng.integers(2, 5))
        word = "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), k))
        if rng.random() < 0.3:
            word = f"{_PREFIXES[int(rng.integers(len(_PREFIXES)))]} {word}"
        if word not in seen:
            seen.add(word)
            names.append(word)
    return names


def _zones(cfg: SynthConfig) -> list[ZonePolygon]:
    pad = 2000.0
    rows, cols = len(ZONE_NAMES), len(ZONE_NAMES[0])
    xs = np.linspace(-pad, cfg.width_m + pad, cols + 1)
    ys = np.linspace(cfg.height_m + pad, -pad, rows + 1)
    corners = {(i, j): to_lonlat(xs[j], ys[i]) for i in range(rows + 1) for j in range(cols + 1)}
    out = []
    for r in range(rows):
        for c in range(cols):
            ring = (corners[r + 1, c], corners[r + 1, c + 1], corners[r, c + 1], corners[r, c], corners[r + 1, c])
            out.append(ZonePolygon(ZONE_NAMES[r][c], ring))
    return sorted(out, key=lambda z: z.zone_name)


def zone_of(p: GeoPoint, zones) -> Optional[str]:
    for z in zones:
        if point_in_ring(p.x, p.y, z.ring):
            return z.zone_name
    return None


# -- topology ---------------------------------------------------------------


def _candidate_edges(pts: np.ndarray) -> list[tuple[int, int]]:
    n = len(pts)
    if n <= 3:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    try:
        tri = Delaunay(pts)
    except QhullError:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = set()
    for s in tri.simplices:
        for a, b in ((s[0], s[1]), (s[1], s[2]), (s[0], s[2])):
            edges.add((int(min(a, b)), int(max(a, b))))
    return sorted(edges)


def _clear(pts: np.ndarray, i: int, j: int) -> bool:
    """True when no other point lies within the clearance of segment i-j."""
    a, b = pts[i], pts[j]
    d = b - a
    t = np.clip(((pts - a) @ d) / (d @ d), 0.0, 1.0)
    dist = np.hypot(*(pts - (a + t[:, None] * d)).T)
    dist[[i, j]] = np.inf
    return bool(dist.min() >= LINE_CLEARANCE_M) if len(pts) > 2 else True


def level_edges(pts: np.ndarray, mesh_fraction: float, rng) -> tuple[list, list]:
    """Spanning-tree edges plus mesh extras over ``pts`` (local indices)."""
    n = len(pts)
    cands = _candidate_edges(pts)
    lengths = np.array([np.hypot(*(pts[j] - pts[i])) for i, j in cands])
    ok = np.array([_clear(pts, i, j) for i, j in cands])
    w = lengths * rng.uniform(1.0, 1.5, len(cands)) * np.where(ok, 1.0, 1e3)
    ii = np.array([c[0] for c in cands])
    jj = np.array([c[1] for c in cands])
    mst = minimum_spanning_tree(coo_matrix((w, (ii, jj)), shape=(n, n)).tocsr()).tocoo()
    tree = sorted((int(min(a, b)), int(max(a, b))) for a, b in zip(mst.row, mst.col))
    mesh = []
    k = int(round(mesh_fraction * (n - 1)))
    if k:
        in_tree = set(tree)
        spare = [idx for idx in np.argsort(lengths, kind="stable") if ok[idx] and cands[idx] not in in_tree]
        pool = spare[: 3 * k]
        if pool:
            pick = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
            mesh = sorted(cands[pool[p]] for p in pick)
    return tree, mesh


def chain_circuits(edges: list, chain_prob: float, max_chain: int, rng) -> list[list[tuple[int, int]]]:
    """Group edges into circuits: mostly single edges, some short paths."""
    circuits: list[list[tuple[int, int]]] = []
    ends: list[list[int]] = []
    nodes: list[set] = []
    for idx in rng.permutation(len(edges)):
        a, b = edges[idx]
        placed = False
        if rng.random() < chain_prob:
            for c in range(len(circuits)):
                if len(circuits[c]) >= max_chain:
                    continue
                for x, y in ((a, b), (b, a)):
                    if x in ends[c] and y not in nodes[c]:
                        if ends[c][0] == x:
                            circuits[c].insert(0, (y, x))
                            ends[c][0] = y
                        else:
                            circuits[c].append((x, y))
                            ends[c][1] = y
                        nodes[c].add(y)
                        placed = True
                        break
                if placed:
                    break
        if not placed:
            circuits.append([(a, b)])
            ends.append([a, b])
            nodes.append({a, b})
    return circuits


def _polyline(pa: np.ndarray, pb: np.ndarray, rng) -> list[np.ndarray]:
    d = pb - pa
    nrm = np.array([-d[1], d[0]]) / np.hypot(*d)
    k = int(rng.integers(0, 4))
    fracs = np.sort(rng.choice((0.2, 0.4, 0.6, 0.8), size=k, replace=False))
    offs = np.clip(rng.normal(0.0, 25.0, k), -60.0, 60.0)
    return [pa] + [pa + f * d + o * nrm for f, o in zip(fracs, offs)] + [pb]


# -- generation -------------------------------------------------------------


def generate_truth(cfg: SynthConfig = SynthConfig()) -> Corpus:
    """Build an uncorrupted corpus; deterministic in ``cfg.rng_seed``."""
    rng = np.random.default_rng(cfg.rng_seed)
    levels = sorted(cfg.n_buses, reverse=True)

    # which levels each station hosts; lower levels co-locate under higher ones first
    hosting: list[list[float]] = []
    prev: list[int] = []
    for kv in levels:
        n = cfg.n_buses[kv]
        shared = prev[:n]
        for s in shared:
            hosting[s].append(kv)
        new = list(range(len(hosting), len(hosting) + n - len(shared)))
        hosting.extend([kv] for _ in new)
        prev = shared + new

    n_st = len(hosting)
    xy = _place_stations(n_st, cfg, rng)
    names = _station_names(n_st, rng)
    zones = _zones(cfg)
    locs = [to_lonlat(*p) for p in xy]
    site_ids = [f"S{s + 1:05d}" for s in range(n_st)]

    sites = []
    for s in range(n_st):
        top = max(hosting[s])
        if top == levels[0]:
            stype = SiteType.TRANSMISSION_CENTER
        elif rng.random() < 0.05:
            stype = SiteType.POWER_PLANT
        else:
            stype = SiteType.SUBSTATION
        sites.append(Site(site_ids[s], names[s], stype, min(hosting[s]), top, locs[s], zone_of(locs[s], zones)))

    bus_of: dict[tuple[int, float], int] = {}
    buses: list[Bus] = []
    for kv in levels:
        for s in range(n_st):
            if kv in hosting[s]:
                bid = len(buses) + 1
                bus_of[s, kv] = bid
                buses.append(Bus(bid, names[s], kv, sites[s].zone or ""))
    truth = {bus_of[k]: site_ids[k[0]] for k in bus_of}
    bus_xy = {bus_of[k]: tuple(xy[k[0]]) for k in bus_of}

    branches: list[Branch] = []
    lines: list[LineSegment] = []
    edge_segments: dict = {}
    branch_truth: dict = {}
    for kv in levels:
        members = [s for s in range(n_st) if kv in hosting[s]]
        pts = xy[members]
        mesh_frac = cfg.mesh_fraction_38kv if kv == levels[-1] else 0.0
        tree, mesh = level_edges(pts, mesh_frac, rng)
        circuits = chain_circuits(tree + mesh, cfg.chain_prob, cfg.max_chain, rng)
        for ci, path in enumerate(circuits, start=1):
            cid = f"C{fmt_kv(kv)}-{ci:04d}"
            for a, b in path:
                sa, sb = members[a], members[b]
                br = Branch(bus_of[sa, kv], bus_of[sb, kv], BranchKind.LINE, cid)
                branches.append(br)
                branch_truth[br.from_bus, br.to_bus, cid] = (site_ids[sa], site_ids[sb])
                poly = _polyline(xy[sa], xy[sb], rng)
                geo = [locs[sa]] + [to_lonlat(*p) for p in poly[1:-1]] + [locs[sb]]
                cuts = [0] + [i for i in range(1, len(geo) - 1) if rng.random() < 0.5] + [len(geo) - 1]
                seg_ids = []
                for c0, c1 in zip(cuts, cuts[1:]):
                    verts = geo[c0:c1 + 1]
                    if rng.random() < 0.5:
                        verts = verts[::-1]
                    sid = f"L{len(lines) + 1:06d}"
                    lines.append(LineSegment(sid, cid, kv, tuple(verts)))
                    seg_ids.append(sid)
                edge_segments[br.from_bus, br.to_bus, cid] = tuple(seg_ids)

    for (hi, lo), count in sorted(cfg.xfmr2w.items(), reverse=True):
        cands = [s for s in range(n_st) if hi in hosting[s] and lo in hosting[s]]
        for k in range(count if cands else 0):
            s = cands[k % len(cands)]
            branches.append(Branch(bus_of[s, hi], bus_of[s, lo], BranchKind.TRANSFORMER_2W, f"T{k // len(cands) + 1}"))

    if len(levels) >= 3 and cfg.xfmr3w:
        top3 = levels[:3]
        cands = [s for s in range(n_st) if all(kv in hosting[s] for kv in top3)]
        base = len(buses)
        for k in range(cfg.xfmr3w if cands else 0):
            s = cands[k % len(cands)]
            name = f"{names[s]} AT{k // len(cands) + 1}"
            star = Bus(base + k + 1, name, top3[0], sites[s].zone or "", is_star=True)
            buses.append(star)
            for kv in top3:
                branches.append(Branch(bus_of[s, kv], star.id, BranchKind.TRANSFORMER_3W_LEG, name))

    meta = {"bus_xy": bus_xy, "edge_segments": edge_segments}
    return Corpus(sites, lines, zones, buses, branches, GroundTruth(truth, branch_truth), {}, meta)


# -- corruption -------------------------------------------------------------


def abbreviate(name: str, how: int) -> str:
    """0: drop vowels after each word's first letter; 1: truncate to ~60%."""
    if how == 0:
        words = [w[:1] + "".join(ch for ch in w[1:] if ch not in "AEIOU") for w in name.split()]
        return " ".join(w for w in words if w)
    keep = max(3, math.ceil(len(name) * 0.6))
    return name[:keep].rstrip()


def add_voltage_suffix(name: str, kv: float) -> str:
    return f"{name} {fmt_kv(kv)}"


def _renumber_stars(buses: list, branches: list) -> tuple[list, list]:
    real = [b for b in buses if not b.is_star]
    stars = [b for b in buses if b.is_star]
    base = max((b.id for b in real), default=0)
    remap = {s.id: base + k for k, s in enumerate(stars, start=1)}
    stars = [replace(s, id=remap[s.id]) for s in stars]
    branches = [replace(br, to_bus=remap.get(br.to_bus, br.to_bus), from_bus=remap.get(br.from_bus, br.from_bus))
                for br in branches]
    return real + stars, branches


def _nearest_same_level(bus: Bus, buses: list, bus_xy: dict, exclude: set, k: int = 5) -> list[int]:
    p = np.array(bus_xy[bus.id])
    same = [b.id for b in buses if b.kv == bus.kv and not b.is_star and b.id in bus_xy and b.id not in exclude]
    same.sort(key=lambda b: (float(np.hypot(*(np.array(bus_xy[b]) - p))), b))
    return same[:k]


def corrupt(corpus: Corpus, knobs: CorruptionKnobs, rng_seed: int = 0) -> Corpus:
    """Apply the corruption knobs; each knob draws from its own RNG stream."""
    if knobs.is_zero():
        return corpus
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(8)]
    r_drift, r_tap, r_legacy, r_split, r_abbrev, r_suffix, r_missing, r_jitter = rngs

    sites = list(corpus.sites)
    lines = list(corpus.lines)
    buses = list(corpus.buses)
    branches = list(corpus.branches)
    truth = dict(corpus.truth.bus_to_group)
    btruth = dict(corpus.truth.branch_to_edge)
    tokens = dict(corpus.blank_tokens)
    bus_xy = dict(corpus.meta.get("bus_xy", {}))
    edge_segments = dict(corpus.meta.get("edge_segments", {}))
    site_by_id = {s.id: s for s in sites}
    busmap = {b.id: b for b in buses}

    # version drift: a line exists in exactly one dataset
    if knobs.line_version_drift_rate:
        out = []
        added = []
        n_new = 0
        for br in branches:
            if br.kind is not BranchKind.LINE or r_drift.random() >= knobs.line_version_drift_rate:
                out.append(br)
                continue
            op = int(r_drift.integers(4))
            key = (br.from_bus, br.to_bus, br.circuit)
            if op == 0:  # GIS lost it
                gone = set(edge_segments.pop(key, ()))
                lines = [s for s in lines if s.id not in gone]
                out.append(br)
            elif op == 1:  # power model lost it
                btruth.pop(key, None)
            else:
                out.append(br)
                src = busmap[br.from_bus]
                if src.id not in bus_xy:
                    continue
                adj = {x.to_bus for x in branches if x.from_bus == src.id} | {
                    x.from_bus for x in branches if x.to_bus == src.id}
                targets = _nearest_same_level(src, buses, bus_xy, adj | {src.id})
                n_new += 1
                cid = f"D{fmt_kv(src.kv)}-{n_new:04d}"
                if op == 2 and targets:  # power model gained a line
                    added.append(Branch(src.id, targets[0], BranchKind.LINE, cid))
                elif op == 3:  # GIS gained a line
                    level = [b for b in buses if b.kv == src.kv and b.id in bus_xy and not b.is_star]
                    pts = np.array([bus_xy[b.id] for b in level])
                    idx = {b.id: i for i, b in enumerate(level)}
                    for t in targets:
                        if _clear(pts, idx[src.id], idx[t]):
                            a_loc = site_by_id[truth[src.id]].location if truth.get(src.id) in site_by_id else None
                            b_loc = site_by_id[truth[t]].location if truth.get(t) in site_by_id else None
                            if a_loc is None or b_loc is None:
                                break
                            sid = f"L{len(corpus.lines) + n_new:06d}X"
                            lines.append(LineSegment(sid, cid, src.kv, (a_loc, b_loc)))
                            break
        branches = out + added

    # line taps: a bus with no site splits a line
    if knobs.tap_rate:
        next_id = max(b.id for b in buses)  # stars are renumbered after the real ids below
        out = []
        for br in branches:
            if br.kind is BranchKind.LINE and r_tap.random() < knobs.tap_rate:
                next_id += 1
                src = busmap[br.from_bus]
                tap = Bus(next_id, f"TAP {next_id}", src.kv, src.area)
                buses.append(tap)
                busmap[tap.id] = tap
                truth[tap.id] = None
                btruth.pop((br.from_bus, br.to_bus, br.circuit), None)
                out.append(Branch(br.from_bus, tap.id, BranchKind.LINE, br.circuit))
                out.append(Branch(tap.id, br.to_bus, BranchKind.LINE, br.circuit))
            else:
                out.append(br)
        branches = out
        buses.sort(key=lambda b: (b.is_star, b.id))
        buses, branches = _renumber_stars(buses, branches)

    # legacy buses: single-bus stations lose their site
    if knobs.legacy_bus_rate:
        per_site: dict[str, list[int]] = {}
        for bid, g in truth.items():
            if g is not None:
                per_site.setdefault(g, []).append(bid)
        dropped = set()
        for s in sorted(site_by_id):
            if len(per_site.get(s, ())) == 1 and r_legacy.random() < knobs.legacy_bus_rate:
                dropped.add(s)
                truth[per_site[s][0]] = None
        sites = [s for s in sites if s.id not in dropped]

    # site split: substation + switch-yard twin sharing a name stem
    if knobs.site_split_rate:
        out = []
        for s in sites:
            if r_split.random() < knobs.site_split_rate:
                dist = r_split.uniform(20.0, 60.0)
                ang = r_split.uniform(0.0, 2 * math.pi)
                loc = offset_point(s.location, dist * math.cos(ang), dist * math.sin(ang))
                out.append(replace(s, site_type=SiteType.SUBSTATION))
                out.append(Site(f"{s.id}B", f"{s.name} SY", SiteType.SWITCH_YARD, s.kv_min, s.kv_max, loc,
                                zone_of(loc, corpus.zones)))
            else:
                out.append(s)
        sites = out

    def rename(rate, rng, fn):
        nonlocal buses
        out = []
        for b in buses:
            if not b.is_star and rng.random() < rate:
                b = replace(b, name=fn(b, rng))
            out.append(b)
        buses = out

    if knobs.name_abbrev_rate:
        rename(knobs.name_abbrev_rate, r_abbrev, lambda b, rng: abbreviate(b.name, int(rng.integers(2))))
    if knobs.name_voltage_suffix_rate:
        rename(knobs.name_voltage_suffix_rate, r_suffix, lambda b, rng: add_voltage_suffix(b.name, b.kv))

    if knobs.missing_circuit_rate:
        out = []
        for seg in lines:
            if r_missing.random() < knobs.missing_circuit_rate:
                tokens[seg.id] = _BLANKS[int(r_missing.integers(len(_BLANKS)))]
                seg = replace(seg, circuit_id=None)
            out.append(seg)
        lines = out

    if knobs.vertex_jitter_sigma_m:
        sigma = knobs.vertex_jitter_sigma_m
        out = []
        for seg in lines:
            d = r_jitter.normal(0.0, sigma, (len(seg.vertices), 2))
            out.append(replace(seg, vertices=tuple(offset_point(p, dx, dy) for p, (dx, dy) in zip(seg.vertices, d))))
        lines = out

    meta = dict(corpus.meta, bus_xy=bus_xy, edge_segments=edge_segments)
    return Corpus(sites, lines, corpus.zones, buses, branches, GroundTruth(truth, btruth), tokens, meta)


# -- emitters ---------------------------------------------------------------


def _dump(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def _collection(features, kind: CrsKind) -> dict:
    doc = {"type": "FeatureCollection", "features": features}
    if kind is CrsKind.PROJECTED:
        doc["crs"] = {"type": "name", "properties": {"name": "LOCAL:PROJECTED"}}
    return doc


def _square(p: GeoPoint, half_m: float) -> list:
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1), (-1, -1)]
    if p.crs_kind is CrsKind.PROJECTED:
        return [[p.x + sx * half_m, p.y + sy * half_m] for sx, sy in corners]
    out = []
    for sx, sy in corners:
        q = offset_point(p, sx * half_m, sy * half_m)
        out.append([q.x, q.y])
    return out


def write_sites(sites, path, footprint_m: Optional[float] = None) -> None:
    feats = []
    kind = sites[0].location.crs_kind if sites else CrsKind.GEOGRAPHIC
    for s in sorted(sites, key=lambda s: s.id):
        props = {"id": s.id, "name": s.name, "type": s.site_type.value, "kv_min": s.kv_min, "kv_max": s.kv_max}
        if s.zone is not None:
            props["zone"] = s.zone
        if footprint_m:
            geom = {"type": "Polygon", "coordinates": [_square(s.location, footprint_m / 2)]}
        else:
            geom = {"type": "Point", "coordinates": [s.location.x, s.location.y]}
        feats.append({"type": "Feature", "properties": props, "geometry": geom})
    _dump(_collection(feats, kind), path)


def write_lines(lines, path, blank_tokens: Optional[dict] = None) -> None:
    blank_tokens = blank_tokens or {}
    kind = lines[0].vertices[0].crs_kind if lines else CrsKind.GEOGRAPHIC
    feats = []
    for seg in sorted(lines, key=lambda s: s.id):
        cid = seg.circuit_id
        if cid is None:
            tok = blank_tokens.get(seg.id, "NONE")
            cid = tok if tok else None
        feats.append({
            "type": "Feature",
            "properties": {"id": seg.id, "circuit_id": cid, "voltage": seg.voltage},
            "geometry": {"type": "LineString", "coordinates": [[p.x, p.y] for p in seg.vertices]},
        })
    _dump(_collection(feats, kind), path)


def write_zones(zones, path) -> None:
    kind = zones[0].ring[0].crs_kind if zones else CrsKind.GEOGRAPHIC
    feats = [
        {"type": "Feature", "properties": {"name": z.zone_name},
         "geometry": {"type": "Polygon", "coordinates": [[[p.x, p.y] for p in z.ring]]}}
        for z in zones
    ]
    _dump(_collection(feats, kind), path)


def write_power_model(buses, branches, bus_path, branch_path, xfmr_path) -> None:
    """buses.csv, branches.csv and xfmr3w.csv; star buses fold back into 3W rows."""
    busmap = {b.id: b for b in buses}
    with Path(bus_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "kv", "area"])
        for b in sorted(buses, key=lambda b: b.id):
            if not b.is_star:
                w.writerow([b.id, b.name, fmt_kv(b.kv), b.area])
    legs: dict[int, list[int]] = {}
    with Path(branch_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from_bus", "to_bus", "kind", "circuit"])
        for br in branches:
            if br.kind is BranchKind.TRANSFORMER_3W_LEG:
                legs.setdefault(br.to_bus, []).append(br.from_bus)
            else:
                w.writerow([br.from_bus, br.to_bus, br.kind.value, br.circuit])
    with Path(xfmr_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus1", "bus2", "bus3", "name"])
        for star in sorted(legs):
            w.writerow([*legs[star], busmap[star].name])


CORPUS_FILES = ("sites.geojson", "lines.geojson", "zones.geojson", "buses.csv", "branches.csv", "xfmr3w.csv",
                "truth.csv")


def write_corpus(corpus: Corpus, out_dir=None, footprint_m: Optional[float] = 20.0,
                 paths: Optional[dict] = None) -> list[Path]:
    """Emit every corpus file; ``paths`` maps file name to target path if given."""
    if paths is None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {f: out_dir / f for f in CORPUS_FILES}
    write_sites(corpus.sites, paths["sites.geojson"], footprint_m)
    write_lines(corpus.lines, paths["lines.geojson"], corpus.blank_tokens)
    write_zones(corpus.zones, paths["zones.geojson"])
    write_power_model(corpus.buses, corpus.branches, paths["buses.csv"], paths["branches.csv"], paths["xfmr3w.csv"])
    write_truth(corpus.truth, paths["truth.csv"])
    return [Path(paths[f]) for f in CORPUS_FILES]

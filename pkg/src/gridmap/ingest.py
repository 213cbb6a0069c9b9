"""Readers for the GeoJSON asset files and the CSV power-model tables."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .errors import DanglingReference, DuplicateId, InvalidGeometry, ParseError, SelfLoop
from .model import Branch, BranchKind, Bus, CrsKind, GeoPoint, LineSegment, Site, SiteType

MISSING_CIRCUIT_TOKENS = {"", "NONE", "0", "NULL", "NAN"}
GEOGRAPHIC_CRS_NAMES = {"EPSG:4326", "OGC:CRS84", "URN:OGC:DEF:CRS:OGC:1.3:CRS84", "URN:OGC:DEF:CRS:EPSG::4326"}


@dataclass(frozen=True)
class ZonePolygon:
    zone_name: str
    ring: tuple[GeoPoint, ...]


def _read_collection(path) -> tuple[list, CrsKind]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: invalid JSON ({exc})") from exc
    if doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path.name}: not a FeatureCollection")
    return doc.get("features", []), _crs_kind(doc)


def _crs_kind(doc) -> CrsKind:
    crs = doc.get("crs")
    if not crs:
        return CrsKind.GEOGRAPHIC
    name = str(crs.get("properties", {}).get("name", "")).upper()
    return CrsKind.GEOGRAPHIC if name in GEOGRAPHIC_CRS_NAMES else CrsKind.PROJECTED


def _require(props, key, label):
    value = props.get(key)
    if value is None or (isinstance(value, str) and not value.strip()):
        raise ParseError(f"{label}: {key}")
    return value


def _number(props, key, label) -> float:
    try:
        return float(_require(props, key, label))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{label}: {key}") from exc


def polygon_centroid(ring: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Area centroid of a closed ring (shoelace); vertex mean if degenerate."""
    pts = list(ring)
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    x0, y0 = pts[0]
    a = cx = cy = 0.0
    n = len(pts)
    for i in range(n):
        xi, yi = pts[i][0] - x0, pts[i][1] - y0
        xj, yj = pts[(i + 1) % n][0] - x0, pts[(i + 1) % n][1] - y0
        cross = xi * yj - xj * yi
        a += cross
        cx += (xi + xj) * cross
        cy += (yi + yj) * cross
    if abs(a) < 1e-18:
        return (sum(p[0] for p in pts) / n, sum(p[1] for p in pts) / n)
    return (x0 + cx / (3 * a), y0 + cy / (3 * a))


def load_sites(path) -> list[Site]:
    features, kind = _read_collection(path)
    sites: list[Site] = []
    seen: set[str] = set()
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        label = str(props.get("id") or f"feature[{k}]")
        site_id = str(_require(props, "id", label))
        name = str(_require(props, "name", label))
        stype = str(_require(props, "type", label))
        kv_min = _number(props, "kv_min", label)
        kv_max = _number(props, "kv_max", label)
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Point":
            x, y = coords[0], coords[1]
        elif gtype == "Polygon":
            x, y = polygon_centroid([tuple(c[:2]) for c in coords[0]])
        elif gtype == "MultiPolygon":
            # largest member by vertex count; footprints are almost always single
            x, y = polygon_centroid([tuple(c[:2]) for c in max(coords, key=lambda p: len(p[0]))[0]])
        else:
            raise ParseError(f"{label}: geometry")
        if site_id in seen:
            raise DuplicateId(site_id)
        seen.add(site_id)
        try:
            site_type = SiteType(stype)
        except ValueError:
            site_type = SiteType.OTHER
        zone = props.get("zone")
        sites.append(
            Site(site_id, name, site_type, kv_min, kv_max, GeoPoint(float(x), float(y), kind),
                 str(zone) if zone else None)
        )
    return sites


def normalize_circuit_id(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    text = str(value).strip()
    return None if text.upper() in MISSING_CIRCUIT_TOKENS else text


def load_lines(path) -> list[LineSegment]:
    features, kind = _read_collection(path)
    segments: list[LineSegment] = []
    seen: set[str] = set()
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        label = str(props.get("id") or f"feature[{k}]")
        seg_id = str(_require(props, "id", label))
        voltage = _number(props, "voltage", label)
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise ParseError(f"{label}: geometry")
        coords = geom.get("coordinates") or []
        if len(coords) < 2:
            raise InvalidGeometry(f"{label}: LineString with fewer than 2 points")
        if seg_id in seen:
            raise DuplicateId(seg_id)
        seen.add(seg_id)
        verts = tuple(GeoPoint(float(c[0]), float(c[1]), kind) for c in coords)
        segments.append(LineSegment(seg_id, normalize_circuit_id(props.get("circuit_id")), voltage, verts))
    return segments


def ring_is_simple(ring: Sequence[GeoPoint]) -> bool:
    """True when no two non-adjacent ring edges touch or cross."""
    pts = [(p.x, p.y) for p in ring]
    edges = list(zip(pts, pts[1:]))
    n = len(edges)

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    def intersects(p1, p2, q1, q2):
        o1, o2, o3, o4 = orient(p1, p2, q1), orient(p1, p2, q2), orient(q1, q2, p1), orient(q1, q2, p2)
        if o1 != o2 and o3 != o4:
            return True
        return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
                or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))

    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if intersects(*edges[i], *edges[j]):
                return False
    return True


def load_zones(path) -> list[ZonePolygon]:
    features, kind = _read_collection(path)
    zones: list[ZonePolygon] = []
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        label = f"feature[{k}]"
        name = str(_require(props, "name", label))
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ParseError(f"{name}: geometry")
        ring = tuple(GeoPoint(float(c[0]), float(c[1]), kind) for c in geom["coordinates"][0])
        if len(ring) < 4 or (ring[0].x, ring[0].y) != (ring[-1].x, ring[-1].y):
            raise InvalidGeometry(f"{name}: ring must be closed with at least 4 points")
        if not ring_is_simple(ring):
            raise InvalidGeometry(f"{name}: ring self-intersects")
        zones.append(ZonePolygon(name, ring))
    return zones


def point_in_ring(x: float, y: float, ring: Sequence[GeoPoint]) -> bool:
    """Even-odd ray cast; points on the boundary count as inside."""
    inside = False
    n = len(ring)
    for i in range(n - 1):
        ax, ay = ring[i].x, ring[i].y
        bx, by = ring[i + 1].x, ring[i + 1].y
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        if cross == 0 and min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by):
            return True
        if (ay > y) != (by > y):
            xi = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < xi:
                inside = not inside
    return inside


def assign_zones(sites: Sequence[Site], zones: Sequence[ZonePolygon]) -> list[Site]:
    ordered = sorted(zones, key=lambda z: z.zone_name)
    out = []
    for s in sites:
        zone = None
        for z in ordered:
            if point_in_ring(s.location.x, s.location.y, z.ring):
                zone = z.zone_name
                break
        out.append(replace(s, zone=zone))
    return out


def _read_csv(path, required: Sequence[str]) -> list[dict]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"{path.name}: missing column {missing[0]}")
        return list(reader)


_KIND_CODES = {"LINE": BranchKind.LINE, "XFMR2W": BranchKind.TRANSFORMER_2W}


def load_power_model(bus_path, branch_path, xfmr_path=None) -> tuple[list[Bus], list[Branch]]:
    """Read buses, branches and three-winding transformers.

    Each three-winding transformer becomes a star bus (id = max bus id +
    1-based row ordinal) joined to its three windings by leg branches.
    """
    buses: dict[int, Bus] = {}
    for k, row in enumerate(_read_csv(bus_path, ("id", "name", "kv", "area"))):
        label = f"bus row {k + 1}"
        try:
            bid = int(row["id"])
            kv = float(row["kv"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{label}: id/kv") from exc
        if bid in buses:
            raise DuplicateId(str(bid))
        buses[bid] = Bus(bid, row["name"], kv, row["area"])

    def check(a: int, b: int, label: str):
        for x in (a, b):
            if x not in buses:
                raise DanglingReference(f"{label}: unknown bus {x}")
        if a == b:
            raise SelfLoop(f"{label}: from_bus == to_bus ({a})")

    branches: list[Branch] = []
    for k, row in enumerate(_read_csv(branch_path, ("from_bus", "to_bus", "kind", "circuit"))):
        label = f"branch row {k + 1}"
        try:
            a, b = int(row["from_bus"]), int(row["to_bus"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{label}: from_bus/to_bus") from exc
        kind = _KIND_CODES.get(row["kind"].strip().upper())
        if kind is None:
            raise ParseError(f"{label}: kind")
        check(a, b, label)
        if kind is BranchKind.LINE and buses[a].kv != buses[b].kv:
            raise ParseError(f"{label}: line joins {buses[a].kv} kV and {buses[b].kv} kV")
        branches.append(Branch(a, b, kind, row["circuit"]))

    if xfmr_path is not None and Path(xfmr_path).exists():
        rows = _read_csv(xfmr_path, ("bus1", "bus2", "bus3", "name"))
        base = max(buses) if buses else 0
        for k, row in enumerate(rows, start=1):
            label = f"xfmr3w row {k}"
            try:
                ends = [int(row["bus1"]), int(row["bus2"]), int(row["bus3"])]
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{label}: bus1/bus2/bus3") from exc
            for e in ends:
                if e not in buses:
                    raise DanglingReference(f"{label}: unknown bus {e}")
            if len(set(ends)) < 3:
                raise SelfLoop(f"{label}: repeated winding bus")
            primary = max(ends, key=lambda e: (buses[e].kv, -e))
            star = Bus(base + k, row["name"], buses[primary].kv, buses[primary].area, is_star=True)
            buses[star.id] = star
            for e in ends:
                branches.append(Branch(e, star.id, BranchKind.TRANSFORMER_3W_LEG, row["name"]))
    return [buses[k] for k in sorted(buses)], branches

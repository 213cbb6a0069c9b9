"""Core domain types and geometry primitives.

All types are frozen dataclasses. Sequences are stored as tuples so objects
can be shared freely between threads. Canonical iteration order is
lexicographic for string ids and numeric for bus ids.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidGeometry

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_MILE = 1609.344


class CrsKind(enum.Enum):
    GEOGRAPHIC = "geographic"
    PROJECTED = "projected"


class SiteType(enum.Enum):
    POWER_PLANT = "PowerPlant"
    TRANSMISSION_CENTER = "TransmissionCenter"
    SWITCH_YARD = "SwitchYard"
    SUBSTATION = "Substation"
    OTHER = "Other"


class BranchKind(enum.Enum):
    LINE = "LINE"
    TRANSFORMER_2W = "XFMR2W"
    TRANSFORMER_3W_LEG = "XFMR3W_LEG"


class Origin(enum.Enum):
    NAME_SEED = "NameSeed"
    INHERITED = "Inherited"
    TOPOLOGY = "Topology"
    ARBITRARY = "Arbitrary"
    UNMAPPED = "Unmapped"


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float
    crs_kind: CrsKind = CrsKind.GEOGRAPHIC

    def __post_init__(self):
        if self.crs_kind is CrsKind.GEOGRAPHIC:
            if not (-180.0 <= self.x <= 180.0 and -90.0 <= self.y <= 90.0):
                raise InvalidGeometry(f"coordinate out of range: ({self.x}, {self.y})")


@dataclass(frozen=True)
class Site:
    id: str
    name: str
    site_type: SiteType
    kv_min: float
    kv_max: float
    location: GeoPoint
    zone: Optional[str] = None

    def __post_init__(self):
        if not (0 < self.kv_min <= self.kv_max):
            raise ValueError(f"site {self.id}: bad voltage range {self.kv_min}-{self.kv_max}")


@dataclass(frozen=True)
class SiteGroup:
    id: str
    member_ids: tuple[str, ...]
    name: str
    kv_min: float
    kv_max: float
    location: GeoPoint
    zone: Optional[str] = None

    def covers(self, kv: float) -> bool:
        return self.kv_min <= kv <= self.kv_max


@dataclass(frozen=True)
class LineSegment:
    id: str
    circuit_id: Optional[str]  # None = missing
    voltage: float
    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise InvalidGeometry(f"segment {self.id}: fewer than 2 vertices")


@dataclass(frozen=True)
class CircuitNetwork:
    """Endpoint-connectivity graph of one circuit at one voltage.

    ``edges`` rows are ``(i, j, length_m, source_segment_id)``.
    """

    circuit_id: str
    voltage: float
    vertices: tuple[GeoPoint, ...]
    edges: tuple[tuple[int, int, float, str], ...]


@dataclass(frozen=True)
class GeoEdge:
    u: str
    v: str
    weight: float
    circuit_id: str
    geometry: tuple[GeoPoint, ...]


@dataclass(frozen=True)
class GeoGraph:
    voltage: float
    nodes: tuple[str, ...]
    edges: tuple[GeoEdge, ...]
    groups: dict = field(default_factory=dict, compare=False, hash=False)

    def neighbors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
        return adj


@dataclass(frozen=True)
class Bus:
    id: int
    name: str
    kv: float
    area: str
    is_star: bool = False

    def __post_init__(self):
        if self.kv <= 0:
            raise ValueError(f"bus {self.id}: kv must be positive")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    kind: BranchKind
    circuit: str


@dataclass(frozen=True)
class PowerGraph:
    voltage: float
    nodes: tuple[int, ...]
    edges: tuple[Branch, ...]
    buses: dict = field(default_factory=dict, compare=False, hash=False)

    def neighbors(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {n: set() for n in self.nodes}
        for b in self.edges:
            adj[b.from_bus].add(b.to_bus)
            adj[b.to_bus].add(b.from_bus)
        return adj


@dataclass(frozen=True)
class MappingEntry:
    bus_id: int
    site_group_id: Optional[str]  # None = unmapped
    score: float
    origin: Origin

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score out of range: {self.score}")

    @property
    def mapped(self) -> bool:
        return self.site_group_id is not None


def unmapped(bus_id: int) -> MappingEntry:
    return MappingEntry(bus_id, None, 0.0, Origin.UNMAPPED)


@dataclass(frozen=True)
class MappingTable:
    entries: tuple[MappingEntry, ...]

    def __post_init__(self):
        ids = [e.bus_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("mapping table has duplicate bus entries")

    @classmethod
    def from_entries(cls, entries) -> "MappingTable":
        return cls(tuple(sorted(entries, key=lambda e: e.bus_id)))

    def as_dict(self) -> dict[int, MappingEntry]:
        return {e.bus_id: e for e in self.entries}


@dataclass(frozen=True)
class SimilarityMatrix:
    rows: tuple  # bus ids
    cols: tuple  # group ids
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise ValueError("similarity matrix shape mismatch")


@dataclass(frozen=True)
class PoolRow:
    bus_id: int
    site_group_id: str
    score: float
    seed_origins: frozenset

    @property
    def checkin_count(self) -> int:
        return len(self.seed_origins)


# -- geometry ---------------------------------------------------------------


def haversine_m(x1: float, y1: float, x2: float, y2: float) -> float:
    """Great-circle distance in meters between two lon/lat points (degrees)."""
    p1 = math.radians(y1)
    p2 = math.radians(y2)
    dp = p2 - p1
    dl = math.radians(x2 - x1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def point_distance(p: GeoPoint, q: GeoPoint) -> float:
    if p.crs_kind is CrsKind.GEOGRAPHIC:
        return haversine_m(p.x, p.y, q.x, q.y)
    return math.hypot(q.x - p.x, q.y - p.y)


def path_length(geometry: Sequence[GeoPoint], crs_kind: Optional[CrsKind] = None) -> float:
    """Length in meters of a polyline, summed vertex to vertex in order."""
    if len(geometry) < 2:
        raise InvalidGeometry("path_length needs at least 2 points")
    kind = crs_kind or geometry[0].crs_kind
    total = 0.0
    if kind is CrsKind.GEOGRAPHIC:
        for a, b in zip(geometry, geometry[1:]):
            total += haversine_m(a.x, a.y, b.x, b.y)
    else:
        for a, b in zip(geometry, geometry[1:]):
            total += math.hypot(b.x - a.x, b.y - a.y)
    return total


def local_xy(points: Sequence[GeoPoint], origin: GeoPoint) -> np.ndarray:
    """Planar meter coordinates of ``points`` relative to ``origin``.

    Geographic points use an equirectangular projection centred on the origin,
    adequate for the sub-kilometre neighbourhoods it is used on.
    """
    arr = np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)
    arr = arr - (origin.x, origin.y)
    if origin.crs_kind is CrsKind.GEOGRAPHIC:
        k = math.pi / 180.0 * EARTH_RADIUS_M
        arr[:, 0] *= k * math.cos(math.radians(origin.y))
        arr[:, 1] *= k
    return arr


def unit_sphere_xyz(points: Sequence[GeoPoint]) -> np.ndarray:
    """Cartesian coordinates on a sphere of radius EARTH_RADIUS_M.

    Chord distances between these rows are monotone in great-circle distance,
    which lets KD-trees answer haversine radius queries.
    """
    lon = np.radians([p.x for p in points])
    lat = np.radians([p.y for p in points])
    c = np.cos(lat)
    return EARTH_RADIUS_M * np.column_stack([c * np.cos(lon), c * np.sin(lon), np.sin(lat)])


def chord_for_arc(meters: float) -> float:
    return 2 * EARTH_RADIUS_M * math.sin(min(math.pi / 2, meters / (2 * EARTH_RADIUS_M)))


def metric_coords(points: Sequence[GeoPoint]) -> np.ndarray:
    """Coordinates whose Euclidean distance orders pairs like the dataset metric."""
    if not points:
        return np.zeros((0, 3))
    if points[0].crs_kind is CrsKind.GEOGRAPHIC:
        return unit_sphere_xyz(points)
    return np.array([(p.x, p.y, 0.0) for p in points], dtype=float)


def radius_in_metric(points: Sequence[GeoPoint], meters: float) -> float:
    if points and points[0].crs_kind is CrsKind.GEOGRAPHIC:
        return chord_for_arc(meters)
    return meters


@dataclass(frozen=True)
class PowerModel:
    """Buses and branches of the full power-system model (star buses included)."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]

    def bus_map(self) -> dict[int, Bus]:
        return {b.id: b for b in self.buses}

    def transformer_pairs(self) -> list[tuple[int, int]]:
        """Real-bus pairs joined by a transformer, 3W legs paired through their star."""
        pairs = set()
        star_legs: dict[int, list[int]] = {}
        for br in self.branches:
            if br.kind is BranchKind.TRANSFORMER_2W:
                pairs.add((min(br.from_bus, br.to_bus), max(br.from_bus, br.to_bus)))
            elif br.kind is BranchKind.TRANSFORMER_3W_LEG:
                star_legs.setdefault(br.to_bus, []).append(br.from_bus)
        for legs in star_legs.values():
            for i, a in enumerate(legs):
                for b in legs[i + 1:]:
                    if a != b:
                        pairs.add((min(a, b), max(a, b)))
        return sorted(pairs)

    def power_graph(self, kv: float) -> PowerGraph:
        buses = {b.id: b for b in self.buses if b.kv == kv and not b.is_star}
        edges = tuple(
            br for br in self.branches
            if br.from_bus in buses and br.to_bus in buses and br.kind is not BranchKind.TRANSFORMER_3W_LEG
        )
        return PowerGraph(kv, tuple(sorted(buses)), edges, buses)

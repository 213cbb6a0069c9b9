"""Bus to site-group mapping: name seeds, transformer inheritance, topology growth."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .model import (
    GeoGraph,
    MappingEntry,
    MappingTable,
    Origin,
    PoolRow,
    PowerGraph,
    PowerModel,
    SimilarityMatrix,
    unmapped,
)
from .preprocess import similarity_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchConfig:
    seed_threshold: float = 0.6
    max_outer_iters: int = 2000
    max_dup_iters: int = 10
    confirm_min_checkins: int = 2
    confirm_score: float = 0.8
    arbitrary_legacy: bool = False

    def __post_init__(self):
        for name in ("seed_threshold", "confirm_score"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("max_outer_iters", "max_dup_iters", "confirm_min_checkins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


# -- name matching --------------------------------------------------------------


def assign_from_matrices(name_sim: np.ndarray, area_sim: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-merge the two score matrices and pick each row's best column.

    Columns are expected in ascending group-id order so argmax's first-hit
    rule breaks ties toward the smaller id.
    """
    merged = np.minimum(name_sim, area_sim)
    return np.argmax(merged, axis=1), merged


@dataclass(frozen=True)
class NameMatch:
    name_sim: SimilarityMatrix
    area_sim: SimilarityMatrix
    merged: SimilarityMatrix
    assignment: dict  # bus -> group
    scores: dict  # bus -> merged score of the assignment

    def ranking(self, bus_id) -> list[tuple[str, float]]:
        """All groups for a bus, best first; ties to the smaller group id."""
        i = self.merged.rows.index(bus_id)
        row = self.merged.values[i]
        order = np.argsort(-row, kind="stable")
        return [(self.merged.cols[j], float(row[j])) for j in order]


def name_matching(geo_nodes: Sequence[tuple], ps_nodes: Sequence[tuple], threads: int = 1) -> NameMatch:
    """Match buses ``(id, name, area)`` to groups ``(id, name, zone)`` by name.

    A group without a zone scores 0 on the area criterion.
    """
    geo = sorted(geo_nodes, key=lambda g: g[0])
    ps = sorted(ps_nodes, key=lambda b: b[0])
    rows = tuple(b[0] for b in ps)
    cols = tuple(g[0] for g in geo)
    name_sim = similarity_matrix([b[1] for b in ps], [g[1] for g in geo], threads)
    area_sim = similarity_matrix([b[2] or "" for b in ps], [g[2] or "" for g in geo], threads)
    no_zone = np.array([g[2] is None for g in geo], dtype=bool)
    if no_zone.any():
        area_sim[:, no_zone] = 0.0
    best, merged = assign_from_matrices(name_sim, area_sim)
    assignment = {b: cols[j] for b, j in zip(rows, best)}
    scores = {b: float(merged[i, j]) for i, (b, j) in enumerate(zip(rows, best))}
    return NameMatch(
        SimilarityMatrix(rows, cols, name_sim),
        SimilarityMatrix(rows, cols, area_sim),
        SimilarityMatrix(rows, cols, merged),
        assignment,
        scores,
    )


# -- seeds ----------------------------------------------------------------------


def inherit_seeds(mapping: dict, model: PowerModel, groups: dict, target_kv: float) -> dict[int, MappingEntry]:
    """Pass higher-voltage mappings down through transformers to ``target_kv`` buses."""
    buses = model.bus_map()
    proposals: dict[int, MappingEntry] = {}
    for a, b in model.transformer_pairs():
        for hi, lo in ((a, b), (b, a)):
            src = mapping.get(hi)
            if src is None or not src.mapped or src.origin is Origin.ARBITRARY:
                continue
            if not (buses[hi].kv > target_kv and buses[lo].kv == target_kv) or buses[lo].is_star:
                continue
            if lo in mapping and mapping[lo].mapped:
                continue
            g = groups.get(src.site_group_id)
            if g is None or g.kv_min > target_kv:
                continue
            cand = MappingEntry(lo, src.site_group_id, src.score, Origin.INHERITED)
            cur = proposals.get(lo)
            if cur is None or cand.score > cur.score or (
                cand.score == cur.score and cand.site_group_id < cur.site_group_id
            ):
                proposals[lo] = cand
    return proposals


def _seed_key(e: MappingEntry):
    return (-e.score, 0 if e.origin is Origin.NAME_SEED else 1, e.site_group_id)


def merge_seeds(current: dict, incoming: dict) -> dict[int, MappingEntry]:
    """Union by bus; conflicts keep the higher score, then NameSeed, then smaller group."""
    out = dict(current)
    for bus, e in incoming.items():
        if bus not in out or _seed_key(e) < _seed_key(out[bus]):
            out[bus] = e
    return out


# -- topology growth -------------------------------------------------------------


def update_duplicates(assignment: dict, rankings: dict, max_iters: int = 10) -> dict:
    """Resolve buses sharing a group inside one neighbourhood.

    ``assignment`` maps bus -> (group, score); ``rankings`` maps bus -> full
    best-first list of (group, score). The highest-scoring holder of a shared
    group keeps it (ties to the smaller bus id); the others step down their
    rankings to a group no stronger bus holds, or become unmapped. Anything
    still shared when the iteration cap is hit is unmapped.
    """
    current = {b: (g, s) for b, (g, s) in assignment.items()}
    ptr = {}
    for b, (g, _) in current.items():
        ptr[b] = next((k for k, (rg, _) in enumerate(rankings.get(b, [])) if rg == g), 0)

    def holders_of():
        h = defaultdict(list)
        for b, (g, _) in current.items():
            if g is not None:
                h[g].append(b)
        return h

    def stronger(bus_a, score_a, bus_b, score_b):
        return score_a > score_b or (score_a == score_b and bus_a < bus_b)

    for _ in range(max_iters):
        holders = holders_of()
        dups = sorted(g for g, bs in holders.items() if len(bs) > 1)
        if not dups:
            break
        for g in dups:
            bs = sorted(holders[g], key=lambda b: (-current[b][1], b))
            for b in bs[1:]:
                if current[b][0] != g:
                    continue
                holders[g].remove(b)
                rank = rankings.get(b, [])
                k = ptr[b] + 1
                while k < len(rank):
                    g2, s2 = rank[k]
                    if not any(stronger(h, current[h][1], b, s2) for h in holders.get(g2, [])):
                        break
                    k += 1
                ptr[b] = k
                if k < len(rank):
                    current[b] = rank[k]
                    holders[rank[k][0]].append(b)
                else:
                    current[b] = (None, 0.0)
    for g, bs in holders_of().items():
        if len(bs) > 1:
            keep = min(bs, key=lambda b: (-current[b][1], b))
            for b in bs:
                if b != keep:
                    current[b] = (None, 0.0)
    return current


def candidate_confirm(pool: dict, confirmed: dict, cfg: MatchConfig = MatchConfig()) -> list[MappingEntry]:
    """Promote pool rows with a strict best score or a strict check-in majority."""
    by_bus: dict[int, list[PoolRow]] = defaultdict(list)
    for row in pool.values():
        by_bus[row.bus_id].append(row)
    out = []
    for bus in sorted(by_bus):
        if bus in confirmed and confirmed[bus].mapped:
            continue
        rows = by_bus[bus]
        best = max(r.score for r in rows)
        top = [r for r in rows if r.score == best]
        pick = None
        if len(top) == 1 and best >= cfg.confirm_score:
            pick = top[0]
        else:
            most = max(r.checkin_count for r in rows)
            top = [r for r in rows if r.checkin_count == most]
            if len(top) == 1 and most >= cfg.confirm_min_checkins:
                pick = top[0]
        if pick is not None:
            out.append(MappingEntry(bus, pick.site_group_id, pick.score, Origin.TOPOLOGY))
    return out


def _node_tuples(geo: GeoGraph, ids) -> list[tuple]:
    return [(g, geo.groups[g].name, geo.groups[g].zone) for g in ids]


def _bus_tuples(pg: PowerGraph, ids) -> list[tuple]:
    return [(b, pg.buses[b].name, pg.buses[b].area) for b in ids]


def neighborhood_proposals(bus: int, group: str, geo: GeoGraph, pg: PowerGraph, gadj, padj,
                           cfg: MatchConfig) -> list[tuple[int, str, float]]:
    """Candidate (bus, group, score) rows grown from one confirmed seed."""
    if group not in gadj or bus not in padj:
        return []
    if not gadj[group] or not padj[bus]:
        return []
    geo_ids = sorted(gadj[group] | {group})
    ps_ids = sorted(padj[bus] | {bus})
    nm = name_matching(_node_tuples(geo, geo_ids), _bus_tuples(pg, ps_ids))
    assignment = {b: (nm.assignment[b], nm.scores[b]) for b in ps_ids}
    rankings = {b: nm.ranking(b) for b in ps_ids}
    resolved = update_duplicates(assignment, rankings, cfg.max_dup_iters)
    return [(b, g, s) for b, (g, s) in sorted(resolved.items()) if g is not None]


@dataclass
class TopoStats:
    sweeps: int = 0
    confirmed: int = 0
    pool_size: int = 0


def topo_matching(geo: GeoGraph, pg: PowerGraph, seeded: dict, cfg: MatchConfig = MatchConfig(),
                  stats: Optional[TopoStats] = None) -> dict[int, MappingEntry]:
    """Grow confirmed mappings outward from seeds through graph neighbourhoods.

    ``seeded`` maps bus -> MappingEntry; entries already present are never
    changed. Sweeps repeat while the candidate pool or the confirmed set keeps
    changing, up to ``cfg.max_outer_iters``.
    """
    confirmed = {b: e for b, e in seeded.items() if e.mapped}
    if not confirmed:
        return dict(seeded)
    gadj = geo.neighbors()
    padj = pg.neighbors()
    pool: dict[tuple[int, str], PoolRow] = {}
    cache: dict[int, list] = {}
    stats = stats if stats is not None else TopoStats()
    prev = None
    count = 0
    grew = True
    while count < cfg.max_outer_iters and (pool != prev or grew):
        prev = dict(pool)
        count += 1
        for b in sorted(confirmed):
            if b not in cache:
                cache[b] = neighborhood_proposals(b, confirmed[b].site_group_id, geo, pg, gadj, padj, cfg)
            for x, g, s in cache[b]:
                if x in confirmed:
                    continue
                row = pool.get((x, g))
                if row is None:
                    pool[(x, g)] = PoolRow(x, g, s, frozenset((b,)))
                elif b not in row.seed_origins:
                    pool[(x, g)] = PoolRow(x, g, max(row.score, s), row.seed_origins | {b})
        new = candidate_confirm(pool, confirmed, cfg)
        for e in new:
            confirmed[e.bus_id] = e
            del pool[(e.bus_id, e.site_group_id)]
        grew = bool(new)
        stats.confirmed += len(new)
    stats.sweeps = count
    stats.pool_size = len(pool)
    out = dict(seeded)
    out.update(confirmed)
    return out


# -- level orchestration ---------------------------------------------------------


@dataclass
class MatchResult:
    table: MappingTable
    diagnostics: dict
    branch_rows: list = field(default_factory=list)


def map_graphs(geo_graphs: dict, power_graphs: dict, cfg: MatchConfig, model: PowerModel,
               levels: Optional[Sequence[float]] = None, threads: int = 1) -> MatchResult:
    """Map every level from the highest voltage down.

    Each level: name seeds above ``cfg.seed_threshold``; below the top level
    these merge with seeds inherited through transformers; topology growth
    fills the rest; branches are then matched through the bus mappings.
    """
    levels = sorted(levels if levels is not None else power_graphs, reverse=True)
    for kv in levels:
        if kv not in geo_graphs:
            raise ConfigError(f"no geo-graph for level {kv}", key="build.voltage_levels")
        if kv not in power_graphs:
            raise ConfigError(f"no power graph for level {kv}", key="build.voltage_levels")
    groups = {}
    for g in geo_graphs.values():
        groups.update(g.groups)
    mapping: dict[int, MappingEntry] = {}
    diag = {"levels_order": [], "levels": {}}
    branch_rows = []
    for idx, kv in enumerate(levels):
        geo, pg = geo_graphs[kv], power_graphs[kv]
        seeds: dict[int, MappingEntry] = {}
        if geo.nodes and pg.nodes:
            nm = name_matching(_node_tuples(geo, geo.nodes), _bus_tuples(pg, pg.nodes), threads)
            seeds = {b: MappingEntry(b, nm.assignment[b], nm.scores[b], Origin.NAME_SEED)
                     for b in pg.nodes if nm.scores[b] >= cfg.seed_threshold}
        n_name = len(seeds)
        inherited = {}
        conflicts = []
        if idx > 0:
            inherited = inherit_seeds(mapping, model, groups, kv)
            for b in sorted(set(inherited) & set(seeds)):
                if inherited[b].site_group_id != seeds[b].site_group_id:
                    conflicts.append({"bus": b, "name_seed": seeds[b].site_group_id,
                                      "inherited": inherited[b].site_group_id})
            seeds = merge_seeds(inherited, seeds)
        stats = TopoStats()
        level_map = topo_matching(geo, pg, seeds, cfg, stats)
        if cfg.arbitrary_legacy:
            padj = pg.neighbors()
            for b in pg.nodes:
                if b in level_map and level_map[b].mapped:
                    continue
                nbrs = sorted(n for n in padj[b] if n in level_map and level_map[n].mapped)
                if nbrs:
                    level_map[b] = MappingEntry(b, level_map[nbrs[0]].site_group_id, 0.0, Origin.ARBITRARY)
        for b in pg.nodes:
            mapping[b] = level_map.get(b) or unmapped(b)
        edge_set = {(e.u, e.v) for e in geo.edges}
        for br in sorted(pg.edges, key=lambda br: (br.from_bus, br.to_bus, br.circuit)):
            gi, gj = mapping[br.from_bus].site_group_id, mapping[br.to_bus].site_group_id
            matched = gi is not None and gj is not None and ((gi, gj) in edge_set or (gj, gi) in edge_set)
            branch_rows.append((br.from_bus, br.to_bus, gi or "", gj or "", matched))
        level_entries = [mapping[b] for b in pg.nodes]
        held = defaultdict(list)
        for b, e in seeds.items():
            held[e.site_group_id].append(b)
        diag["levels_order"].append(kv)
        diag["levels"][_kv_key(kv)] = {
            "buses": len(pg.nodes),
            "geo_nodes": len(geo.nodes),
            "name_seeds": n_name,
            "inherited_seeds": len(inherited),
            "seed_conflicts": conflicts,
            "shared_seed_groups": {g: sorted(bs) for g, bs in sorted(held.items()) if len(bs) > 1},
            "low_confidence_seeds": sorted(b for b, e in seeds.items() if e.score < cfg.confirm_score),
            "topology_confirmed": sum(1 for e in level_entries if e.origin is Origin.TOPOLOGY),
            "arbitrary": sum(1 for e in level_entries if e.origin is Origin.ARBITRARY),
            "unmapped": [e.bus_id for e in level_entries if not e.mapped],
            "sweeps": stats.sweeps,
        }
        log.info("level %s kV: %d buses, %d seeds, %d unmapped", _kv_key(kv), len(pg.nodes), len(seeds),
                 len(diag["levels"][_kv_key(kv)]["unmapped"]))
    return MatchResult(MappingTable.from_entries(mapping.values()), diag, branch_rows)


def _kv_key(kv: float) -> str:
    return str(int(kv)) if float(kv).is_integer() else repr(float(kv))


# -- serialization ---------------------------------------------------------------

MAPPING_HEADER = ("bus_id", "bus_name", "kv", "site_group_id", "score", "origin")
BRANCH_HEADER = ("from_bus", "to_bus", "geo_edge_from_group", "geo_edge_to_group", "matched")


def write_mapping_csv(table: MappingTable, buses: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MAPPING_HEADER)
        for e in table.entries:
            bus = buses[e.bus_id]
            w.writerow([e.bus_id, bus.name, _kv_key(bus.kv), e.site_group_id or "", f"{e.score:.6f}",
                        e.origin.value])


def read_mapping_csv(path) -> tuple[MappingTable, dict[int, float]]:
    """Mapping entries plus each bus's kV."""
    entries, kvs = [], {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MAPPING_HEADER:
            raise ParseError(f"{Path(path).name}: expected header {','.join(MAPPING_HEADER)}")
        for k, row in enumerate(reader, start=1):
            try:
                bus = int(row["bus_id"])
                kvs[bus] = float(row["kv"])
                entries.append(MappingEntry(bus, row["site_group_id"] or None, float(row["score"]),
                                            Origin(row["origin"])))
            except (ValueError, KeyError) as exc:
                raise ParseError(f"{Path(path).name} row {k}: {exc}") from exc
    return MappingTable.from_entries(entries), kvs


def write_branch_csv(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BRANCH_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], r[2], r[3], "1" if r[4] else "0"])

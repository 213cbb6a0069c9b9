"""Graph-building coverage and mapping-quality metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import ParseError
from .graphbuild import BuildReport, fmt_kv
from .model import METERS_PER_MILE, GeoGraph, MappingTable, Origin

TABLE2_HEADER = ("voltage", "pct_buses", "pct_groups", "accuracy")
TRUTH_HEADER = ("bus_id", "group_id", "mappable")


@dataclass(frozen=True)
class GroundTruth:
    """Expected group per bus; ``None`` marks a bus with no physical site."""

    bus_to_group: dict
    branch_to_edge: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CoverageRow:
    voltage: float
    site_groups: int
    lines: int
    length_mi: float
    coverage_pct: float


@dataclass(frozen=True)
class MetricRow:
    voltage: float
    buses: int
    mapped: int
    buses_mapped_pct: float
    groups_mapped_pct: float
    accuracy: Optional[float]  # None when nothing is mapped or no truth given
    correct: int = 0
    arbitrary: int = 0


def graph_coverage(report: BuildReport) -> list[CoverageRow]:
    return [
        CoverageRow(r.voltage, r.node_count, r.edge_count, r.built_length_m / METERS_PER_MILE, r.coverage_percent)
        for r in report.levels
    ]


def mapping_metrics(mapping: MappingTable, bus_kv: dict, geo_graphs: dict,
                    truth: Optional[GroundTruth] = None) -> list[MetricRow]:
    """Per-voltage completeness and accuracy.

    ``bus_kv`` gives each in-scope bus's level. Accuracy counts mapped buses
    whose group equals the truth group; an unmappable bus that was mapped
    counts as wrong. Arbitrary-origin entries count as mapped and are tallied.
    """
    rows = []
    entries = mapping.as_dict()
    for kv in sorted(geo_graphs, reverse=True):
        graph: GeoGraph = geo_graphs[kv]
        buses = sorted(b for b, k in bus_kv.items() if k == kv)
        level = [entries[b] for b in buses if b in entries]
        mapped = [e for e in level if e.mapped]
        nodes = set(graph.nodes)
        referenced = {e.site_group_id for e in mapped} & nodes
        correct = 0
        accuracy = None
        if truth is not None and mapped:
            correct = sum(1 for e in mapped if truth.bus_to_group.get(e.bus_id) == e.site_group_id)
            accuracy = 100.0 * correct / len(mapped)
        rows.append(MetricRow(
            voltage=kv,
            buses=len(buses),
            mapped=len(mapped),
            buses_mapped_pct=100.0 * len(mapped) / len(buses) if buses else 0.0,
            groups_mapped_pct=100.0 * len(referenced) / len(nodes) if nodes else 0.0,
            accuracy=accuracy,
            correct=correct,
            arbitrary=sum(1 for e in mapped if e.origin is Origin.ARBITRARY),
        ))
    return rows


def write_table1(rows: Sequence[CoverageRow], path) -> None:
    from .graphbuild import TABLE1_HEADER

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE1_HEADER)
        for r in rows:
            w.writerow([fmt_kv(r.voltage), r.site_groups, r.lines, f"{r.length_mi:.1f}", f"{r.coverage_pct:.1f}"])


def format_table2(rows: Sequence[MetricRow]) -> list[list[str]]:
    out = [list(TABLE2_HEADER)]
    for r in rows:
        acc = "" if r.accuracy is None else f"{r.accuracy:.1f}"
        out.append([fmt_kv(r.voltage), f"{r.buses_mapped_pct:.1f}", f"{r.groups_mapped_pct:.1f}", acc])
    return out


def write_table2(rows: Sequence[MetricRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(format_table2(rows))


def write_truth(truth: GroundTruth, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for bus in sorted(truth.bus_to_group):
            g = truth.bus_to_group[bus]
            w.writerow([bus, g or "", 0 if g is None else 1])


def read_truth(path) -> GroundTruth:
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRUTH_HEADER:
            raise ParseError(f"{Path(path).name}: expected header {','.join(TRUTH_HEADER)}")
        for k, row in enumerate(reader, start=1):
            try:
                bus = int(row["bus_id"])
                mappable = int(row["mappable"])
            except ValueError as exc:
                raise ParseError(f"{Path(path).name} row {k}: {exc}") from exc
            out[bus] = row["group_id"] if mappable and row["group_id"] else None
    return GroundTruth(out)


@dataclass(frozen=True)
class Thresholds:
    min_accuracy: Optional[float] = None
    min_buses_mapped: Optional[float] = None
    min_groups_mapped: Optional[float] = None
    min_coverage: Optional[float] = None


def violations(metric_rows: Sequence[MetricRow], thresholds: Thresholds,
               coverage_rows: Sequence[CoverageRow] = ()) -> list[str]:
    """Human-readable list of threshold breaches; empty when all pass."""
    out = []
    t = thresholds
    for r in metric_rows:
        kv = fmt_kv(r.voltage)
        if t.min_accuracy is not None and r.accuracy is not None and r.accuracy < t.min_accuracy:
            out.append(f"{kv} kV accuracy {r.accuracy:.1f} < {t.min_accuracy}")
        if t.min_buses_mapped is not None and r.buses_mapped_pct < t.min_buses_mapped:
            out.append(f"{kv} kV buses mapped {r.buses_mapped_pct:.1f} < {t.min_buses_mapped}")
        if t.min_groups_mapped is not None and r.groups_mapped_pct < t.min_groups_mapped:
            out.append(f"{kv} kV groups mapped {r.groups_mapped_pct:.1f} < {t.min_groups_mapped}")
    for c in coverage_rows:
        if t.min_coverage is not None and c.coverage_pct < t.min_coverage:
            out.append(f"{fmt_kv(c.voltage)} kV coverage {c.coverage_pct:.1f} < {t.min_coverage}")
    return out

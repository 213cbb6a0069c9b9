"""Command-line entry point: synth, preprocess, build, map, eval, pipeline.

Exit codes: 0 success, 2 bad config / input / schema, 3 a configured
evaluation threshold was not met, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__, evaluate, graphbuild, ingest, matcher, preprocess, synth
from .config import Config, load_config
from .errors import ConfigError, GridmapError, ParseError
from .model import PowerModel

log = logging.getLogger("gridmap")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_THRESHOLD = 3


class InputMissing(GridmapError):
    pass


class Outputs:
    """Stages every output as ``<name>.partial``; ``commit`` renames them into place.

    If a run fails the ``.partial`` files are left behind for inspection.
    """

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.pending: list[tuple[Path, Path]] = []

    def path(self, name: str) -> Path:
        final = self.dir / name
        tmp = final.with_name(final.name + ".partial")
        self.pending.append((tmp, final))
        return tmp

    def commit(self) -> dict[str, str]:
        digests = {}
        for tmp, final in self.pending:
            os.replace(tmp, final)
            digests[final.name] = sha256(final)
        self.pending = []
        return digests


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(out_dir, command: str, cfg: Config, inputs: dict, outputs: dict, timings: dict,
                   error: Optional[str] = None) -> None:
    manifest = {
        "tool": "gridmap",
        "version": __version__,
        "command": command,
        "config": cfg.snapshot(),
        "inputs": dict(sorted(inputs.items())),
        "outputs": dict(sorted(outputs.items())),
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if error:
        manifest["error"] = error
    final = Path(out_dir) / "manifest.json"
    tmp = final.with_name(final.name + ".tmp")
    write_json(manifest, tmp)
    os.replace(tmp, final if error is None else final.with_name("manifest.json.partial"))


def require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputMissing(f"missing input file: {p}")
    return p


class Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def __call__(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()
                log.info("stage %s", name)

            def __exit__(self, *exc):
                timer.timings[name] = time.perf_counter() - self.t0

        return _Stage()


# -- stages -------------------------------------------------------------------


def stage_preprocess(cfg: Config, data_dir: Path, out: Outputs, inputs: dict):
    site_path = require(data_dir / "sites.geojson")
    line_path = require(data_dir / "lines.geojson")
    zone_path = data_dir / "zones.geojson"
    sites = ingest.load_sites(site_path)
    inputs[site_path.name] = sha256(site_path)
    if zone_path.is_file():
        sites = ingest.assign_zones(sites, ingest.load_zones(zone_path))
        inputs[zone_path.name] = sha256(zone_path)
    lines = ingest.load_lines(line_path)
    inputs[line_path.name] = sha256(line_path)
    missing = sum(1 for s in lines if s.circuit_id is None)
    groups = preprocess.group_sites(sites, cfg.grouping, cfg.threads)
    lines, unrepaired = preprocess.repair_circuit_ids(lines, cfg.repair_eps)
    lines = preprocess.snap_vertices(lines, cfg.snap)
    preprocess.write_groups(groups, out.path("groups.geojson"))
    synth.write_lines(lines, out.path("lines_clean.geojson"))
    write_json({"sites": len(sites), "groups": len(groups), "segments": len(lines),
                "missing_circuit_ids": missing, "repaired": missing - unrepaired, "unrepaired": unrepaired},
               out.path("preprocess_report.json"))
    return groups, lines


def stage_build(cfg: Config, groups, lines, out: Outputs):
    graphs, report = graphbuild.build_all(groups, lines, cfg.build, cfg.threads)
    for kv, g in graphs.items():
        graphbuild.write_geo_graph(g, out.path(graphbuild.graph_filename(kv)))
    coverage = evaluate.graph_coverage(report)
    evaluate.write_table1(coverage, out.path("table1.csv"))
    write_json({
        "levels": [
            {"voltage": r.voltage, "nodes": r.node_count, "edges": r.edge_count,
             "built_length_m": round(r.built_length_m, 3), "total_length_m": round(r.total_length_m, 3),
             "coverage_percent": round(r.coverage_percent, 6), "disconnected_pairs": r.disconnected_pairs,
             "excluded_segments": r.excluded_segments}
            for r in report.levels
        ],
        "circuits": [
            {"circuit_id": t.circuit_id, "voltage": t.voltage, "nodes": list(t.nodes),
             "mst": [list(e) for e in t.mst], "added": [list(e) for e in t.added],
             "unreachable": [list(e) for e in t.unreachable]}
            for t in report.traces
        ],
    }, out.path("build_report.json"))
    return graphs, coverage


def load_model(data_dir: Path, inputs: dict) -> PowerModel:
    bus_path = require(data_dir / "buses.csv")
    branch_path = require(data_dir / "branches.csv")
    xfmr_path = data_dir / "xfmr3w.csv"
    buses, branches = ingest.load_power_model(bus_path, branch_path, xfmr_path if xfmr_path.is_file() else None)
    for p in (bus_path, branch_path, xfmr_path):
        if p.is_file():
            inputs[p.name] = sha256(p)
    return PowerModel(tuple(buses), tuple(branches))


def stage_map(cfg: Config, graphs: dict, model: PowerModel, out: Outputs):
    levels = list(cfg.build.voltage_levels)
    pgs = {kv: model.power_graph(kv) for kv in levels}
    result = matcher.map_graphs(graphs, pgs, cfg.match, model, levels, cfg.threads)
    busmap = model.bus_map()
    matcher.write_mapping_csv(result.table, busmap, out.path("mapping.csv"))
    matcher.write_branch_csv(result.branch_rows, out.path("branch_mapping.csv"))
    write_json(result.diagnostics, out.path("diagnostics.json"))
    bus_kv = {b: busmap[b].kv for b in (e.bus_id for e in result.table.entries)}
    return result, bus_kv


def stage_eval(cfg: Config, table, bus_kv: dict, graphs: dict, truth, coverage, out: Outputs) -> list[str]:
    rows = evaluate.mapping_metrics(table, bus_kv, graphs, truth)
    evaluate.write_table2(rows, out.path("table2.csv"))
    for line in evaluate.format_table2(rows):
        print(",".join(line))
    return evaluate.violations(rows, cfg.thresholds, coverage)


def load_graphs(cfg: Config, graph_dir: Path, inputs: dict) -> dict:
    graphs = {}
    for kv in cfg.build.voltage_levels:
        p = require(graph_dir / graphbuild.graph_filename(kv))
        graphs[kv] = graphbuild.read_geo_graph(p)
        inputs[p.name] = sha256(p)
    return graphs


def read_table1(path: Path) -> list:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != graphbuild.TABLE1_HEADER:
            raise ParseError(f"{path.name}: unexpected header")
        for r in reader:
            rows.append(evaluate.CoverageRow(float(r["voltage"]), int(r["site_groups"]), int(r["lines"]),
                                             float(r["line_length_mi"]), float(r["coverage_pct"])))
    return rows


# -- commands -------------------------------------------------------------------


def cmd_synth(cfg: Config, out: Outputs, timer: Timer, inputs: dict) -> int:
    with timer("synth"):
        corpus = synth.generate_truth(cfg.synth)
        corpus = synth.corrupt(corpus, cfg.synth.corruption, cfg.synth.rng_seed)
        synth.write_corpus(corpus, footprint_m=cfg.footprint_m or None,
                           paths={f: out.path(f) for f in synth.CORPUS_FILES})
    n_real = len(corpus.real_buses())
    log.info("synthesized %d buses (%d star), %d sites, %d segments", n_real, len(corpus.buses) - n_real,
             len(corpus.sites), len(corpus.lines))
    return EXIT_OK


def cmd_preprocess(cfg, out, timer, inputs, data_dir) -> int:
    with timer("preprocess"):
        stage_preprocess(cfg, Path(data_dir), out, inputs)
    return EXIT_OK


def cmd_build(cfg, out, timer, inputs, work_dir) -> int:
    work_dir = Path(work_dir)
    gp = require(work_dir / "groups.geojson")
    lp = require(work_dir / "lines_clean.geojson")
    with timer("build"):
        groups = preprocess.read_groups(gp)
        lines = ingest.load_lines(lp)
        inputs[gp.name], inputs[lp.name] = sha256(gp), sha256(lp)
        _, coverage = stage_build(cfg, groups, lines, out)
    bad = evaluate.violations([], cfg.thresholds, coverage)
    return report_violations(bad)


def cmd_map(cfg, out, timer, inputs, data_dir, graph_dir) -> int:
    with timer("map"):
        graphs = load_graphs(cfg, Path(graph_dir), inputs)
        model = load_model(Path(data_dir), inputs)
        stage_map(cfg, graphs, model, out)
    return EXIT_OK


def cmd_eval(cfg, out, timer, inputs, mapping_path, truth_path, graph_dir) -> int:
    with timer("eval"):
        mp = require(mapping_path)
        table, bus_kv = matcher.read_mapping_csv(mp)
        inputs[mp.name] = sha256(mp)
        truth = None
        if truth_path and truth_path != "-":
            tp = require(truth_path)
            truth = evaluate.read_truth(tp)
            inputs[tp.name] = sha256(tp)
        graphs = load_graphs(cfg, Path(graph_dir), inputs)
        t1 = Path(graph_dir) / "table1.csv"
        coverage = read_table1(t1) if t1.is_file() else []
        bad = stage_eval(cfg, table, bus_kv, graphs, truth, coverage, out)
    return report_violations(bad)


def cmd_pipeline(cfg, out, timer, inputs, data_dir) -> int:
    data_dir = Path(data_dir)
    require(data_dir / "lines.geojson")
    require(data_dir / "buses.csv")
    with timer("preprocess"):
        groups, lines = stage_preprocess(cfg, data_dir, out, inputs)
    with timer("build"):
        graphs, coverage = stage_build(cfg, groups, lines, out)
    with timer("map"):
        model = load_model(data_dir, inputs)
        result, bus_kv = stage_map(cfg, graphs, model, out)
    with timer("eval"):
        truth = None
        tp = data_dir / "truth.csv"
        if tp.is_file():
            truth = evaluate.read_truth(tp)
            inputs[tp.name] = sha256(tp)
        bad = stage_eval(cfg, result.table, bus_kv, graphs, truth, coverage, out)
    return report_violations(bad)


def report_violations(bad: list[str]) -> int:
    for msg in bad:
        print(f"threshold not met: {msg}", file=sys.stderr)
    return EXIT_THRESHOLD if bad else EXIT_OK


# -- argument parsing -------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="keyed config file (key = value)")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else ".", help="output directory")
    p.add_argument("--threads", type=int, default=d, help="worker threads (overrides runtime.threads)")
    p.add_argument("--arbitrary-legacy", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="map leftover buses to a mapped neighbour's group (origin Arbitrary)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridmap", description="Map power-model buses onto geospatial site groups.")
    parser.add_argument("--version", action="version", version=f"gridmap {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _global_flags(p, suppress=True)

    p = sub.add_parser("preprocess", help="group sites, repair circuit ids, snap vertices")
    _global_flags(p, suppress=True)
    p.add_argument("data_dir")

    p = sub.add_parser("build", help="build per-voltage geo-graphs from preprocess output")
    _global_flags(p, suppress=True)
    p.add_argument("work_dir")

    p = sub.add_parser("map", help="map buses onto geo-graph nodes")
    _global_flags(p, suppress=True)
    p.add_argument("data_dir", help="directory with buses.csv, branches.csv, xfmr3w.csv")
    p.add_argument("graph_dir", help="directory with geograph_<kv>kv.geojson files")

    p = sub.add_parser("eval", help="score a mapping against ground truth")
    _global_flags(p, suppress=True)
    p.add_argument("mapping")
    p.add_argument("truth", help="truth.csv, or - for none")
    p.add_argument("graph_dir")

    p = sub.add_parser("pipeline", help="preprocess, build, map and eval in one run")
    _global_flags(p, suppress=True)
    p.add_argument("data_dir")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("GRIDMAP_LOG", "warn").strip().lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.threads is not None:
        if args.threads < 1:
            print("config error [runtime.threads]: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        cfg = replace(cfg, threads=args.threads)
    if args.arbitrary_legacy:
        cfg = replace(cfg, match=replace(cfg.match, arbitrary_legacy=True))

    out = Outputs(args.out)
    timer = Timer()
    inputs: dict[str, str] = {}
    if args.config:
        inputs[Path(args.config).name] = sha256(args.config)
    handlers = {
        "synth": lambda: cmd_synth(cfg, out, timer, inputs),
        "preprocess": lambda: cmd_preprocess(cfg, out, timer, inputs, args.data_dir),
        "build": lambda: cmd_build(cfg, out, timer, inputs, args.work_dir),
        "map": lambda: cmd_map(cfg, out, timer, inputs, args.data_dir, args.graph_dir),
        "eval": lambda: cmd_eval(cfg, out, timer, inputs, args.mapping, args.truth, args.graph_dir),
        "pipeline": lambda: cmd_pipeline(cfg, out, timer, inputs, args.data_dir),
    }
    try:
        code = handlers[args.command]()
    except ConfigError as exc:
        return _fail(out, args.command, cfg, inputs, timer, f"config error [{exc.key}]: {exc}", EXIT_INPUT)
    except (GridmapError, OSError) as exc:
        return _fail(out, args.command, cfg, inputs, timer, f"input error: {exc}", EXIT_INPUT)
    except Exception as exc:  # noqa: BLE001 - report and keep partial outputs
        log.exception("unexpected failure")
        return _fail(out, args.command, cfg, inputs, timer, f"error: {exc!r}", 1)
    outputs = out.commit()
    write_manifest(out.dir, args.command, cfg, inputs, outputs, timer.timings)
    return code


def _fail(out: Outputs, command, cfg, inputs, timer, message: str, code: int) -> int:
    print(message, file=sys.stderr)
    try:
        write_manifest(out.dir, command, cfg, inputs, {}, timer.timings, error=message)
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Keys are dotted
(``grouping.spatial_threshold``); unknown keys and unparsable values raise
ConfigError carrying the offending key. Map-valued synth settings use one key
per entry, e.g. ``synth.n_buses.115 = 40``; giving any entry of such a map
replaces the default map entirely.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .evaluate import Thresholds
from .graphbuild import BuildConfig
from .matcher import MatchConfig
from .preprocess import GroupingConfig, Linkage, SnapConfig
from .synth import PRESETS, CorruptionKnobs, SynthConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _levels(text: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _preset(text: str) -> str:
    if text not in PRESETS:
        raise ValueError(f"unknown preset {text!r}")
    return text


# key -> (section, field, parser)
_KEYS = {
    "grouping.name_dist_threshold": ("grouping", "name_dist_threshold", float),
    "grouping.spatial_threshold": ("grouping", "spatial_threshold", float),
    "grouping.linkage": ("grouping", "linkage", lambda t: Linkage(t.strip().lower())),
    "snap.eps": ("snap", "eps", float),
    "repair.eps": ("repair", "eps", float),
    "build.attach_threshold": ("build", "attach_threshold", float),
    "build.voltage_levels": ("build", "voltage_levels", _levels),
    "match.seed_threshold": ("match", "seed_threshold", float),
    "match.max_outer_iters": ("match", "max_outer_iters", int),
    "match.max_dup_iters": ("match", "max_dup_iters", int),
    "match.confirm_min_checkins": ("match", "confirm_min_checkins", int),
    "match.confirm_score": ("match", "confirm_score", float),
    "match.arbitrary_legacy": ("match", "arbitrary_legacy", _bool),
    "eval.min_accuracy": ("eval", "min_accuracy", float),
    "eval.min_buses_mapped": ("eval", "min_buses_mapped", float),
    "eval.min_groups_mapped": ("eval", "min_groups_mapped", float),
    "eval.min_coverage": ("eval", "min_coverage", float),
    "runtime.threads": ("runtime", "threads", int),
    "synth.rng_seed": ("synth", "rng_seed", int),
    "synth.mesh_fraction_38kv": ("synth", "mesh_fraction_38kv", float),
    "synth.xfmr3w": ("synth", "xfmr3w", int),
    "synth.preset": ("synth", "preset", _preset),
    "synth.footprint_m": ("synth", "footprint_m", float),
}
_KNOBS = {f.name for f in fields(CorruptionKnobs)}


@dataclass(frozen=True)
class Config:
    grouping: GroupingConfig = GroupingConfig()
    snap: SnapConfig = SnapConfig()
    repair_eps: float = 10.0
    build: BuildConfig = BuildConfig()
    match: MatchConfig = MatchConfig()
    thresholds: Thresholds = Thresholds()
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    synth: SynthConfig = SynthConfig()
    footprint_m: float = 20.0

    def snapshot(self) -> dict:
        """JSON-ready view of every effective setting."""
        syn = self.synth
        return {
            "grouping": {"name_dist_threshold": self.grouping.name_dist_threshold,
                         "spatial_threshold": self.grouping.spatial_threshold,
                         "linkage": self.grouping.linkage.value},
            "snap": {"eps": self.snap.eps},
            "repair": {"eps": self.repair_eps},
            "build": {"attach_threshold": self.build.attach_threshold,
                      "voltage_levels": list(self.build.voltage_levels)},
            "match": asdict(self.match),
            "eval": asdict(self.thresholds),
            "runtime": {"threads": self.threads},
            "synth": {
                "rng_seed": syn.rng_seed,
                "n_buses": {_num(k): v for k, v in sorted(syn.n_buses.items(), reverse=True)},
                "mesh_fraction_38kv": syn.mesh_fraction_38kv,
                "xfmr2w": {f"{_num(h)}_{_num(l)}": v for (h, l), v in sorted(syn.xfmr2w.items(), reverse=True)},
                "xfmr3w": syn.xfmr3w,
                "corruption": asdict(syn.corruption),
                "footprint_m": self.footprint_m,
            },
        }


def _num(kv: float) -> str:
    return str(int(kv)) if float(kv).is_integer() else repr(float(kv))


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings, last assignment wins."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", key=line)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key", key="")
        out[key] = value
    return out


def _checked(cls, base, values: dict, keys: dict):
    """Build ``cls`` from ``base`` + values, attributing a failure to one key."""
    try:
        return replace(base, **values)
    except (ValueError, TypeError):
        for f, key in keys.items():
            try:
                replace(base, **{f: values[f]})
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: {exc}", key=key) from exc
        raise ConfigError(f"invalid {cls.__name__}", key=next(iter(keys.values()), None))


def build_config(raw: dict[str, str], base: Optional[Config] = None) -> Config:
    base = base or Config()
    sections: dict[str, dict] = {}
    origin: dict[str, dict] = {}
    n_buses: dict[float, int] = {}
    xfmr2w: dict[tuple[float, float], int] = {}
    knobs: dict[str, float] = {}

    for key, text in raw.items():
        try:
            if key in _KEYS:
                sec, name, parse = _KEYS[key]
                sections.setdefault(sec, {})[name] = parse(text)
                origin.setdefault(sec, {})[name] = key
            elif key.startswith("synth.n_buses."):
                n_buses[float(key[len("synth.n_buses."):])] = int(text)
            elif key.startswith("synth.xfmr2w."):
                hi, lo = key[len("synth.xfmr2w."):].split("_")
                xfmr2w[float(hi), float(lo)] = int(text)
            elif key.startswith("synth.corruption.") and key[len("synth.corruption."):] in _KNOBS:
                knobs[key[len("synth.corruption."):]] = float(text)
            else:
                raise ConfigError(f"unknown config key: {key}", key=key)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: bad value {text!r} ({exc})", key=key) from exc

    def sec(name):
        return sections.get(name, {}), origin.get(name, {})

    g, go = sec("grouping")
    grouping = _checked(GroupingConfig, base.grouping, g, go)
    s, so = sec("snap")
    snap = _checked(SnapConfig, base.snap, s, so)
    b, bo = sec("build")
    build = _checked(BuildConfig, base.build, b, bo)
    m, mo = sec("match")
    match = _checked(MatchConfig, base.match, m, mo)
    e, eo = sec("eval")
    thresholds = _checked(Thresholds, base.thresholds, e, eo)

    repair_eps = sections.get("repair", {}).get("eps", base.repair_eps)
    if repair_eps <= 0:
        raise ConfigError("repair.eps must be positive", key="repair.eps")
    threads = sections.get("runtime", {}).get("threads", base.threads)
    if threads < 1:
        raise ConfigError("runtime.threads must be >= 1", key="runtime.threads")

    y, yo = sec("synth")
    preset = y.pop("preset", None)
    footprint = y.pop("footprint_m", base.footprint_m)
    if footprint < 0:
        raise ConfigError("synth.footprint_m must be >= 0", key="synth.footprint_m")
    yo.pop("preset", None)
    yo.pop("footprint_m", None)
    corruption = PRESETS[preset] if preset else base.synth.corruption
    if knobs:
        corruption = _checked(CorruptionKnobs, corruption, knobs, {k: f"synth.corruption.{k}" for k in knobs})
    if n_buses:
        y["n_buses"] = n_buses
        yo["n_buses"] = "synth.n_buses"
    if xfmr2w:
        y["xfmr2w"] = xfmr2w
        yo["xfmr2w"] = "synth.xfmr2w"
    y["corruption"] = corruption
    synth = _checked(SynthConfig, base.synth, y, yo)

    return Config(grouping, snap, repair_eps, build, match, thresholds, threads, synth, footprint)


def load_config(path=None, overrides: Optional[dict[str, str]] = None) -> Config:
    raw: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}", key=str(p)) from exc
        raw.update(parse_text(text, p.name))
    raw.update(overrides or {})
    return build_config(raw)

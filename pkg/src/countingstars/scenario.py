"""Scenario configuration: YAML loading, validation with line references, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .topology import IRIDIUM, STARLINK_SHELL1, STARLINK_SMALL, ConstellationSpec, IslPolicy
from .traffic import DEFAULT_PROFILE, TrafficParams

SCHEMES = ("cs", "cm", "es", "flowlidar")
PREDICTIONS = ("traffic", "demand", "all_pairs")
RE_AGGREGATES = ("cardinality", "volume")
PRESETS = {"iridium": IRIDIUM, "starlink": STARLINK_SHELL1, "starlink-small": STARLINK_SMALL}

TOP_KEYS = {
    "name", "constellation", "isl_policy", "traffic", "epoch_s", "horizon_s", "t0_s",
    "seed_period_s", "memory_bytes", "schemes", "rng_seed", "prediction", "re_aggregate",
    "parser_lanes", "baselines", "min_elevation_deg", "max_hops_per_epoch",
    "seed_search_factor", "stations", "control_loss_rate",
}
CONSTELLATION_KEYS = {
    "preset", "planes", "sats_per_plane", "altitude_km", "inclination_deg",
    "phasing_offset", "name", "raan_spread_deg", "tle_file",
}
POLICY_KEYS = {
    "max_terminals", "seam_enabled", "high_latitude_cutoff_deg", "latitude_rule_enabled",
    "seam_plane_pairs",
}
TRAFFIC_KEYS = {"offerload", "isl_bandwidth", "n_ter", "diurnal_profile"}
BASELINE_KEYS = {
    "cm_depth", "es_heavy_fraction", "es_ways", "es_lam", "es_light_depth",
    "fl_depth", "fl_fp_rate",
}


@dataclass(frozen=True)
class Scenario:
    name: str
    constellation: ConstellationSpec
    isl_policy: IslPolicy
    traffic: TrafficParams
    epoch_s: float = 1.0
    horizon_s: float = 100.0
    t0_s: float = 0.0
    seed_period_s: float | None = None
    memory_bytes: dict = field(default_factory=dict)
    schemes: tuple[str, ...] = SCHEMES
    rng_seed: int = 0
    prediction: str = "traffic"
    re_aggregate: str = "cardinality"
    parser_lanes: int = 1
    baselines: dict = field(default_factory=dict)
    min_elevation_deg: float = 0.0
    max_hops_per_epoch: int | None = None
    seed_search_factor: int | None = 16
    control_loss_rate: float = 0.0
    tle_file: str | None = None
    stations: tuple | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def period_s(self) -> float:
        return self.seed_period_s or self.epoch_s

    @property
    def slices_per_period(self) -> int:
        return int(round(self.period_s / self.epoch_s))

    @property
    def n_periods(self) -> int:
        return int(round(self.horizon_s / self.period_s))

    @property
    def load(self) -> float:
        return self.traffic.offerload

    def memory_for(self, scheme: str) -> int:
        return int(self.memory_bytes[scheme])

    def with_overrides(self, **changes) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if key == "memory_bytes" and isinstance(value, int):
                value = {s: value for s in raw.get("schemes", SCHEMES)}
            if key == "offerload":
                raw.setdefault("traffic", {})["offerload"] = value
                continue
            raw[key] = value
        return from_dict(raw)

    def digest(self) -> str:
        return scenario_hash(self.raw)


def scenario_hash(raw: dict) -> str:
    """Stable under key reordering."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# YAML with line numbers


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = v.start_mark.line + 1
            _line_map(v, path + (i,), out)
    return out


def load_yaml(path) -> tuple[dict, dict]:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data, _line_map(node)


class _Diag:
    def __init__(self, lines: dict):
        self.lines = lines
        self.items: list[str] = []

    def add(self, path: tuple, msg: str) -> None:
        line = None
        for cut in range(len(path), 0, -1):
            line = self.lines.get(path[:cut])
            if line:
                break
        where = ".".join(str(p) for p in path) or "<root>"
        prefix = f"line {line}: " if line else ""
        self.items.append(f"{prefix}{where}: {msg}")


def _num(d, diag, path, key, default=None, kind=float, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            diag.add(path + (key,), "required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        diag.add(path + (key,), f"expected a number, got {v!r}")
        return default
    if kind is int and not float(v).is_integer():
        diag.add(path + (key,), f"expected an integer, got {v!r}")
        return default
    if positive and not v > 0:
        diag.add(path + (key,), f"must be > 0, got {v!r}")
        return default
    if nonneg and v < 0:
        diag.add(path + (key,), f"must be >= 0, got {v!r}")
        return default
    return kind(v)


def _unknown(d, allowed, diag, path):
    for key in d:
        if key not in allowed:
            diag.add(path + (key,), f"unknown key; allowed: {', '.join(sorted(allowed))}")


def from_dict(raw: dict, lines: dict | None = None, base_dir: Path | None = None) -> Scenario:
    """Validate a raw config mapping; raises ConfigError listing every problem."""
    diag = _Diag(lines or {})
    raw = copy.deepcopy(raw)
    _unknown(raw, TOP_KEYS, diag, ())

    c = raw.get("constellation") or {}
    if not isinstance(c, dict):
        diag.add(("constellation",), "must be a mapping")
        c = {}
    _unknown(c, CONSTELLATION_KEYS, diag, ("constellation",))
    spec = None
    preset = c.get("preset")
    if preset is not None and preset not in PRESETS:
        diag.add(("constellation", "preset"), f"unknown preset {preset!r}; allowed: {', '.join(PRESETS)}")
    else:
        base = PRESETS.get(preset)
        fields = {}
        for key, kind in (("planes", int), ("sats_per_plane", int), ("phasing_offset", int)):
            default = getattr(base, key) if base else (0 if key == "phasing_offset" else None)
            fields[key] = _num(c, diag, ("constellation",), key, default, kind)
        for key in ("altitude_km", "inclination_deg", "raan_spread_deg"):
            default = getattr(base, key) if base else (360.0 if key == "raan_spread_deg" else None)
            fields[key] = _num(c, diag, ("constellation",), key, default)
        fields["name"] = str(c.get("name", base.name if base else "walker"))
        if None not in fields.values():
            try:
                spec = ConstellationSpec(**fields)
            except ValueError as exc:
                diag.add(("constellation",), str(exc))
    tle_file = c.get("tle_file")
    if tle_file is not None:
        p = Path(tle_file)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.exists():
            diag.add(("constellation", "tle_file"), f"file not found: {p}")
        tle_file = str(p)

    pol = raw.get("isl_policy") or {}
    _unknown(pol, POLICY_KEYS, diag, ("isl_policy",))
    policy = None
    try:
        pairs = pol.get("seam_plane_pairs")
        policy = IslPolicy(
            max_terminals=_num(pol, diag, ("isl_policy",), "max_terminals", 4, int),
            seam_enabled=bool(pol.get("seam_enabled", True)),
            high_latitude_cutoff_deg=_num(pol, diag, ("isl_policy",), "high_latitude_cutoff_deg", 70.0),
            latitude_rule_enabled=bool(pol.get("latitude_rule_enabled", True)),
            seam_plane_pairs=None if pairs is None else tuple(tuple(p) for p in pairs),
        )
    except (ValueError, TypeError) as exc:
        diag.add(("isl_policy",), str(exc))

    rng_seed = _num(raw, diag, (), "rng_seed", 0, int, nonneg=True)
    t = raw.get("traffic") or {}
    _unknown(t, TRAFFIC_KEYS, diag, ("traffic",))
    traffic = None
    offer = _num(t, diag, ("traffic",), "offerload", None)
    bw = _num(t, diag, ("traffic",), "isl_bandwidth", None, nonneg=True)
    nter = _num(t, diag, ("traffic",), "n_ter", None, int, nonneg=True)
    profile = t.get("diurnal_profile", list(DEFAULT_PROFILE))
    if offer is not None and not 0 <= offer <= 1:
        diag.add(("traffic", "offerload"), f"must be in [0, 1], got {offer}")
        offer = None
    if None not in (offer, bw, nter):
        try:
            traffic = TrafficParams(offer, bw, nter, tuple(profile), rng_seed or 0)
        except (ValueError, TypeError) as exc:
            diag.add(("traffic", "diurnal_profile"), str(exc))

    epoch_s = _num(raw, diag, (), "epoch_s", 1.0, positive=True)
    horizon_s = _num(raw, diag, (), "horizon_s", None, positive=True)
    seed_period = raw.get("seed_period_s")
    if seed_period is not None:
        seed_period = _num(raw, diag, (), "seed_period_s", None, positive=True)
    period = seed_period or epoch_s
    if epoch_s and horizon_s:
        ratio = horizon_s / epoch_s
        if not math.isclose(ratio, round(ratio)) or ratio < 1:
            diag.add(("horizon_s",), f"horizon {horizon_s} is not a whole number of epochs ({epoch_s} s)")
        if seed_period and epoch_s:
            r2 = period / epoch_s
            if not math.isclose(r2, round(r2)) or r2 < 1:
                diag.add(("seed_period_s",), f"seed period {period} is not a whole number of epochs")
            elif not math.isclose(horizon_s / period, round(horizon_s / period)):
                diag.add(("seed_period_s",), f"horizon {horizon_s} is not a whole number of seed periods")

    schemes = raw.get("schemes", list(SCHEMES))
    if isinstance(schemes, str):
        schemes = [schemes]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        diag.add(("schemes",), f"unknown scheme(s) {bad}; allowed: {', '.join(SCHEMES)}")
    if not schemes:
        diag.add(("schemes",), "at least one scheme is required")

    mem = raw.get("memory_bytes", 4096)
    memory = {}
    if isinstance(mem, dict):
        for s in schemes:
            if s not in mem:
                diag.add(("memory_bytes",), f"no budget for scheme {s!r}")
        for s, v in mem.items():
            if s not in SCHEMES:
                diag.add(("memory_bytes", s), f"unknown scheme; allowed: {', '.join(SCHEMES)}")
            elif isinstance(v, bool) or not isinstance(v, int) or v < 8:
                diag.add(("memory_bytes", s), f"budget must be an integer >= 8 bytes, got {v!r}")
            else:
                memory[s] = v
    elif isinstance(mem, int) and not isinstance(mem, bool) and mem >= 8:
        memory = {s: mem for s in schemes}
    else:
        diag.add(("memory_bytes",), f"budget must be an integer >= 8 bytes or a per-scheme map, got {mem!r}")

    prediction = raw.get("prediction", "traffic")
    if prediction not in PREDICTIONS:
        diag.add(("prediction",), f"unknown prediction {prediction!r}; allowed: {', '.join(PREDICTIONS)}")
    re_agg = raw.get("re_aggregate", "cardinality")
    if re_agg not in RE_AGGREGATES:
        diag.add(("re_aggregate",), f"unknown aggregate {re_agg!r}; allowed: {', '.join(RE_AGGREGATES)}")
    baselines = raw.get("baselines") or {}
    _unknown(baselines, BASELINE_KEYS, diag, ("baselines",))

    lanes = _num(raw, diag, (), "parser_lanes", 1, int, positive=True)
    t0 = _num(raw, diag, (), "t0_s", 0.0, nonneg=True)
    min_el = _num(raw, diag, (), "min_elevation_deg", 0.0)
    loss = _num(raw, diag, (), "control_loss_rate", 0.0, nonneg=True)
    if loss is not None and loss >= 1:
        diag.add(("control_loss_rate",), f"must be < 1, got {loss}")
    max_hops = raw.get("max_hops_per_epoch")
    if max_hops is not None:
        max_hops = _num(raw, diag, (), "max_hops_per_epoch", None, int, positive=True)
    factor = raw.get("seed_search_factor", 16)
    if factor is not None:
        factor = _num(raw, diag, (), "seed_search_factor", 16, int, positive=True)
    stations = raw.get("stations")
    if stations is not None:
        try:
            stations = tuple((float(s["longitude_deg"]), float(s.get("latitude_deg", 0.0))) for s in stations)
        except (TypeError, KeyError, ValueError):
            diag.add(("stations",), "each station needs longitude_deg (and optional latitude_deg)")
            stations = None

    if diag.items:
        raise ConfigError(diag.items)
    return Scenario(
        name=str(raw.get("name", "scenario")),
        constellation=spec,
        isl_policy=policy,
        traffic=traffic,
        epoch_s=epoch_s,
        horizon_s=horizon_s,
        t0_s=t0,
        seed_period_s=seed_period,
        memory_bytes=memory,
        schemes=tuple(schemes),
        rng_seed=rng_seed,
        prediction=prediction,
        re_aggregate=re_agg,
        parser_lanes=lanes,
        baselines=dict(baselines),
        min_elevation_deg=min_el,
        control_loss_rate=loss,
        max_hops_per_epoch=max_hops,
        seed_search_factor=factor,
        tle_file=tle_file,
        stations=stations,
        raw=raw,
    )


def load_scenario(path) -> Scenario:
    data, lines = load_yaml(path)
    return from_dict(data, lines, Path(path).resolve().parent)


def reference_config(name: str) -> Path:
    """Path of a shipped reference config, e.g. ``iridium-0.1``."""
    path = resources.files("countingstars") / "configs" / f"{name}.yaml"
    if not path.is_file():
        raise FileNotFoundError(f"no reference config named {name!r}")
    return Path(str(path))


def reference_configs() -> list[str]:
    root = resources.files("countingstars") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))

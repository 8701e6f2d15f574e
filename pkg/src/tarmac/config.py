"""Run configuration: flat ``key = value`` files with CLI overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass, fields

from tarmac.engine import US_PER_S

PROTOCOLS = ("tarmac", "tarmac_adaptive", "tarmac_multipath", "sp", "intrusion1", "intrusion2")
PATTERNS = ("all_nodes", "one_third", "corner_quarter", "all_to_sink", "single_flow", "none")


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit status 1."""


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "tarmac"
    rows: int = 10
    cols: int = 10
    spacing_m: float = 20.0
    slots: int = 4
    period_us: int = 1 * US_PER_S
    buffer_slots: int = 32
    pattern: str = "all_nodes"
    rate_pps: float = 2.0
    traffic_start_us: int = 0
    traffic_duration_us: int = 100 * US_PER_S
    sink: int = 0
    source: int = -1
    range_m: float = 40.0
    bitrate_bps: int = 2_000_000
    csma_defer: bool = True
    max_jitter_us: int = 1000
    seed: int = 1
    sim_end_us: int = 400 * US_PER_S
    slot_bytes: int = 64
    payload_bytes: int = 32
    routing_period_us: int = 5 * US_PER_S
    period_min_us: int = 125_000
    period_max_us: int = 2 * US_PER_S
    multipath_fanout: int = 1
    fake_path_prob: float = 0.0
    drain_us: int = 100_000
    output_dir: str = "out"

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def validate(self) -> RunConfig:
        err = []
        if self.protocol not in PROTOCOLS:
            err.append(f"protocol must be one of {', '.join(PROTOCOLS)}")
        if self.pattern not in PATTERNS:
            err.append(f"pattern must be one of {', '.join(PATTERNS)}")
        if self.rows < 1 or self.cols < 1:
            err.append("rows and cols must be >= 1")
        if self.spacing_m <= 0:
            err.append("spacing_m must be > 0")
        if self.range_m <= 0:
            err.append("range_m must be > 0")
        if self.slots < 1:
            err.append("slots must be >= 1")
        if self.period_us <= 0:
            err.append("period_us must be > 0")
        if self.buffer_slots < 1:
            err.append("buffer_slots must be >= 1")
        if self.rate_pps < 0:
            err.append("rate_pps must be >= 0")
        if not 0 <= self.sink < self.rows * self.cols:
            err.append("sink must be a node id")
        if self.pattern == "single_flow" and not 0 <= self.source < self.rows * self.cols:
            err.append("single_flow needs source set to a node id")
        if self.bitrate_bps <= 0:
            err.append("bitrate_bps must be > 0")
        if self.max_jitter_us < 0:
            err.append("max_jitter_us must be >= 0")
        if self.sim_end_us <= 0:
            err.append("sim_end_us must be > 0")
        if self.traffic_start_us < 0 or self.traffic_duration_us < 0:
            err.append("traffic times must be >= 0")
        if self.payload_bytes <= 0 or self.payload_bytes + 8 > self.slot_bytes:
            err.append("payload_bytes + 8 byte slot header must fit in slot_bytes")
        if self.routing_period_us < 0:
            err.append("routing_period_us must be >= 0 (0 disables beacons)")
        if not 0 < self.period_min_us <= self.period_max_us:
            err.append("need 0 < period_min_us <= period_max_us")
        if self.multipath_fanout not in (1, 2):
            err.append("multipath_fanout must be 1 or 2")
        if not 0.0 <= self.fake_path_prob <= 1.0:
            err.append("fake_path_prob must be in [0, 1]")
        if self.drain_us < 0:
            err.append("drain_us must be >= 0")
        if err:
            raise ConfigError("; ".join(err))
        return self

    def canonical(self) -> str:
        return "\n".join(
            f"{f.name}={getattr(self, f.name)}" for f in fields(self) if f.name != "output_dir"
        )

    def digest(self) -> str:
        return hashlib.sha1(self.canonical().encode()).hexdigest()[:12]


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_DURATION = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(us|ms|s)\s*$")
_UNITS = {"us": 1, "ms": 1000, "s": US_PER_S}


def parse_value(key: str, text: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _TYPES[key]
    text = text.strip()
    try:
        if typ == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ == "int":
            m = _DURATION.match(text)
            if m and key.endswith("_us"):
                return int(round(float(m.group(1)) * _UNITS[m.group(2)]))
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def parse_assignments(lines, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    changes = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        changes[key] = parse_value(key, value)
    return (base or RunConfig()).replace(**changes)


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            cfg = parse_assignments(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_assignments(overrides, cfg)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))

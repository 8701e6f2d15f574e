"""Named sweeps over RunConfig fields."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, fields

from tarmac.config import ConfigError, RunConfig

S = 1_000_000


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    base: dict
    axes: tuple[tuple[str, tuple], ...]

    def configs(self, seeds=(1,), base: RunConfig | None = None) -> list[RunConfig]:
        cfg0 = (base or RunConfig()).replace(**self.base)
        keys = [k for k, _ in self.axes]
        out = []
        for combo in itertools.product(*(v for _, v in self.axes)):
            for seed in seeds:
                cfg = cfg0.replace(**dict(zip(keys, combo)), seed=seed)
                out.append(cfg.validate())
        return out

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "summary": self.summary,
            "base": dict(self.base),
            "axes": {k: list(v) for k, v in self.axes},
            "runs_per_seed": len(list(itertools.product(*(v for _, v in self.axes)))),
        }


PRESETS = {
    p.name: p
    for p in (
        Preset(
            "fig-busslots",
            "delivery and occupancy versus frame size and period",
            {"protocol": "tarmac", "pattern": "all_nodes", "rate_pps": 2.0},
            (("slots", (1, 2, 4, 8)), ("period_us", (S // 4, S // 2, S, 2 * S))),
        ),
        Preset(
            "fig-busptn",
            "basic TARMAC under three source patterns and two rates",
            {"protocol": "tarmac"},
            (("pattern", ("all_nodes", "one_third", "corner_quarter")), ("rate_pps", (1.0, 2.0))),
        ),
        Preset(
            "fig-intrusion1",
            "buffer size sweep against fixed-interval dummy traffic and shortest path",
            {"pattern": "all_to_sink", "rate_pps": 2.0},
            (("protocol", ("tarmac", "intrusion1", "sp")), ("buffer_slots", (8, 16, 32, 64))),
        ),
        Preset(
            "fig-intrusion2",
            "resend period and buffer sweep against single-held-packet forwarding",
            {"pattern": "all_to_sink", "rate_pps": 2.0},
            (
                ("protocol", ("tarmac", "intrusion2")),
                ("period_us", (S // 2, S, 2 * S)),
                ("buffer_slots", (16, 32)),
            ),
        ),
        Preset(
            "fig-mp-adapt",
            "multipath and adaptive rate on or off versus source density",
            {"rate_pps": 2.0},
            (
                ("protocol", ("tarmac", "tarmac_multipath", "tarmac_adaptive")),
                ("pattern", ("one_third", "corner_quarter", "all_nodes")),
            ),
        ),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def defaults() -> dict:
    cfg = RunConfig()
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def manifest_json() -> str:
    doc = {"defaults": defaults(), "presets": [p.manifest() for p in PRESETS.values()]}
    return json.dumps(doc, indent=2, sort_keys=True)


def help_text() -> str:
    lines = ["defaults:"]
    lines += [f"  {k} = {v}" for k, v in defaults().items()]
    lines.append("presets:")
    for p in PRESETS.values():
        lines.append(f"  {p.name}: {p.summary}")
        for k, v in p.base.items():
            lines.append(f"      {k} = {v}")
        for k, vals in p.axes:
            lines.append(f"      {k} in {{{', '.join(str(x) for x in vals)}}}")
    return "\n".join(lines)

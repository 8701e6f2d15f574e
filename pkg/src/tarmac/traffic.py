"""CBR source patterns."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from tarmac.engine import US_PER_S, RngStream, stream_id


class PatternKind(enum.Enum):
    ALL_NODES = "all_nodes"
    ONE_THIRD = "one_third"
    CORNER_QUARTER = "corner_quarter"
    ALL_TO_SINK = "all_to_sink"
    SINGLE_FLOW = "single_flow"
    NONE = "none"


@dataclass(frozen=True)
class TrafficPattern:
    kind: PatternKind = PatternKind.ALL_NODES
    rate_pps: float = 2.0
    start: int = 0
    duration: int = 100 * US_PER_S
    sink: int = 0
    # only for SINGLE_FLOW
    source: int | None = None

    def __post_init__(self):
        if self.rate_pps < 0:
            raise ValueError("rate_pps must be non-negative")
        if self.start < 0 or self.duration < 0:
            raise ValueError("start and duration must be non-negative")
        if self.kind is PatternKind.SINGLE_FLOW and self.source is None:
            raise ValueError("single_flow needs a source")

    @property
    def interval_us(self) -> int | None:
        if self.rate_pps == 0:
            return None
        return int(round(US_PER_S / self.rate_pps))


def select_sources(pattern: TrafficPattern, rows: int, cols: int, rng: random.Random) -> list[int]:
    n = rows * cols
    sink = pattern.sink
    kind = pattern.kind
    if kind is PatternKind.NONE or pattern.rate_pps == 0:
        return []
    if kind is PatternKind.ALL_NODES:
        return list(range(n))
    others = [i for i in range(n) if i != sink]
    if kind is PatternKind.ALL_TO_SINK:
        return others
    if kind is PatternKind.SINGLE_FLOW:
        return [pattern.source]
    if kind is PatternKind.ONE_THIRD:
        return sorted(rng.sample(others, n // 3))
    if kind is PatternKind.CORNER_QUARTER:
        # the quarter in the corner diagonally opposite the sink
        sr, sc = divmod(sink, cols)
        qr, qc = max(1, rows // 2), max(1, cols // 2)
        r0 = rows - qr if sr < rows / 2 else 0
        c0 = cols - qc if sc < cols / 2 else 0
        return [r * cols + c for r in range(r0, r0 + qr) for c in range(c0, c0 + qc) if r * cols + c != sink]
    raise ValueError(f"unknown pattern {kind}")


def cbr_times(pattern: TrafficPattern, phase_us: int) -> range:
    """Emission instants of one source: start + phase + k/rate within [start, start + duration)."""
    interval = pattern.interval_us
    if interval is None:
        return range(0)
    first = pattern.start + phase_us
    return range(first, pattern.start + pattern.duration, interval)


def source_phase(pattern: TrafficPattern, seed: int, source: int) -> int:
    interval = pattern.interval_us
    if interval is None:
        return 0
    return RngStream(seed, stream_id("traffic-phase", source)).randrange(interval)


def generate_cbr(pattern: TrafficPattern, rows: int, cols: int, seed: int) -> list[tuple[int, int]]:
    """All ``(time_us, source)`` arrivals of the pattern, in time order."""
    sources = select_sources(pattern, rows, cols, RngStream(seed, stream_id("source-select")))
    arrivals = [
        (t, src)
        for src in sources
        for t in cbr_times(pattern, source_phase(pattern, seed, src))
    ]
    arrivals.sort()
    return arrivals

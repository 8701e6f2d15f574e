"""Deterministic discrete-event engine.

Time is an integer count of microseconds since the start of the run. Events
are ordered by ``(fire_at, seq)`` where ``seq`` is a global issuance counter,
so two events scheduled for the same instant always fire in the order they
were scheduled.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, TextIO

US_PER_S = 1_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer microseconds (exact for µs-resolution input)."""
    return int(round(value * US_PER_S))


class EventKind(enum.Enum):
    SCHEDULED_SEND = "scheduled-send"
    TX_END = "tx-end"
    TIMER = "timer"
    TRAFFIC_ARRIVAL = "traffic-arrival"
    RATE_SWITCH = "rate-switch"


@dataclass(slots=True)
class Event:
    fire_at: int
    kind: EventKind
    action: Callable[..., Any] = field(repr=False)
    args: tuple = ()
    tag: Any = None
    seq: int = -1


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


# One integer per purpose; stream ids combine it with the node id.
STREAM_PURPOSES = {
    "phase": 1,
    "jitter": 2,
    "traffic-phase": 3,
    "source-select": 4,
    "backoff": 5,
    "next-hop": 6,
    "routing-phase": 7,
    "shuffle": 8,
}


class RngStream(random.Random):
    """A ``random.Random`` whose state is a pure function of ``(seed, stream_id)``."""

    def __new__(cls, seed: int, stream_id: int):
        return super().__new__(cls)

    def __init__(self, seed: int, stream_id: int):
        self.root_seed = seed
        self.stream_id = stream_id
        digest = hashlib.blake2b(
            f"{seed & 0xFFFFFFFFFFFFFFFF}/{stream_id}".encode(), digest_size=16
        ).digest()
        super().__init__(int.from_bytes(digest, "big"))


def stream_id(purpose: str, node: int = -1) -> int:
    return (STREAM_PURPOSES[purpose] << 32) | (node + 1)


class Simulator:
    """Single-threaded event loop with a virtual microsecond clock."""

    def __init__(self, seed: int = 0, trace: TextIO | None = None):
        self.seed = seed
        self.now = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._streams: dict[int, RngStream] = {}
        self.trace = trace
        self.scheduled = 0
        self.dispatched = 0

    @property
    def pending(self) -> int:
        return len(self._queue)

    def stream(self, purpose: str, node: int = -1) -> RngStream:
        sid = stream_id(purpose, node)
        rng = self._streams.get(sid)
        if rng is None:
            rng = self._streams[sid] = RngStream(self.seed, sid)
        return rng

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.kind.value} at {event.fire_at} is before clock {self.now}"
            )
        event.seq = self._seq
        self._seq += 1
        self.scheduled += 1
        heapq.heappush(self._queue, (event.fire_at, event.seq, event))
        return event

    def call_at(self, fire_at: int, kind: EventKind, action, *args, tag=None) -> Event:
        return self.schedule(Event(fire_at, kind, action, args, tag))

    def run_until(self, end: int) -> None:
        queue = self._queue
        trace = self.trace
        while queue and queue[0][0] <= end:
            fire_at, seq, event = heapq.heappop(queue)
            self.now = fire_at
            self.dispatched += 1
            if trace is not None:
                trace.write(f"{fire_at} {seq} {event.kind.value} {event.tag}\n")
            event.action(*event.args)
        if end > self.now:
            self.now = end

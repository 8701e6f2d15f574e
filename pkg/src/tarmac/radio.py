"""Unit-disk broadcast channel with collision detection and airtime accounting."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from tarmac.engine import EventKind, Simulator


class Outcome(enum.Enum):
    RECEIVED = "received"
    COLLIDED = "collided"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True, slots=True)
class NodeSite:
    id: int
    x_dm: int
    y_dm: int


@dataclass(frozen=True)
class ChannelConfig:
    range_dm: int = 400
    bitrate_bps: int = 2_000_000
    csma_defer: bool = True
    max_jitter_us: int = 1000

    def __post_init__(self):
        if self.range_dm < 0:
            raise ValueError("range_dm must be non-negative")
        if self.bitrate_bps <= 0:
            raise ValueError("bitrate_bps must be positive")
        if self.max_jitter_us < 0:
            raise ValueError("max_jitter_us must be non-negative")


def airtime_us(nbytes: int, bitrate_bps: int) -> int:
    """ceil(bytes * 8 * 1e6 / bitrate) in integer arithmetic."""
    return -(-nbytes * 8 * 1_000_000 // bitrate_bps)


class Topology:
    """Static node placement and the unit-disk neighbor relation."""

    def __init__(self, sites: Iterable[NodeSite], range_dm: int):
        self.sites = list(sites)
        ids = [s.id for s in self.sites]
        if ids != list(range(len(ids))):
            raise ValueError("node ids must be 0..N-1 in order")
        self.range_dm = range_dm
        r2 = range_dm * range_dm
        nbrs: list[frozenset[int]] = []
        for a in self.sites:
            nbrs.append(frozenset(
                b.id for b in self.sites
                if b.id != a.id and (a.x_dm - b.x_dm) ** 2 + (a.y_dm - b.y_dm) ** 2 <= r2
                and range_dm > 0
            ))
        self._neighbors = nbrs
        # sorted tuples for deterministic iteration in hot loops
        self.neighbor_lists = [tuple(sorted(n)) for n in nbrs]

    def __len__(self) -> int:
        return len(self.sites)

    def neighbors(self, node: int) -> frozenset[int]:
        if not 0 <= node < len(self.sites):
            raise KeyError(f"unknown node id {node}")
        return self._neighbors[node]

    def in_range(self, a: int, b: int) -> bool:
        return b in self._neighbors[a]


@dataclass(slots=True, eq=False)
class TransmissionRecord:
    sender: int
    start: int
    duration: int
    bytes: int
    kind: str
    outcomes: dict[int, Outcome] = field(default_factory=dict)
    # Simulator-internal contents; never written to the transmission log.
    payload: Any = field(default=None, repr=False)
    # Bookkeeping for carrier-sense and NAV; not part of the observable record.
    done: bool = False

    @property
    def end(self) -> int:
        return self.start + self.duration

    def outcome(self, receiver: int) -> Outcome:
        return self.outcomes.get(receiver, Outcome.OUT_OF_RANGE)


class ProtocolError(RuntimeError):
    """A MAC tried something the radio forbids, like overlapping its own sends."""


class Channel:
    """Shared medium. Interference range equals transmission range; no capture."""

    def __init__(
        self,
        sim: Simulator,
        topology: Topology,
        config: ChannelConfig,
        on_end: Callable[[TransmissionRecord], None] | None = None,
    ):
        self.sim = sim
        self.topology = topology
        self.config = config
        self.on_end = on_end
        n = len(topology)
        self._heard: list[list[TransmissionRecord]] = [[] for _ in range(n)]
        self._own: list[TransmissionRecord | None] = [None] * n
        self.log: list[TransmissionRecord] = []

    def airtime(self, nbytes: int) -> int:
        return airtime_us(nbytes, self.config.bitrate_bps)

    def neighbors(self, node: int) -> frozenset[int]:
        return self.topology.neighbors(node)

    def _audible(self, node: int, at: int) -> list[TransmissionRecord]:
        heard = self._heard[node]
        if heard and any(r.start + r.duration <= at for r in heard):
            heard[:] = [r for r in heard if r.start + r.duration > at]
        return heard

    def transmitting(self, node: int, at: int | None = None) -> bool:
        at = self.sim.now if at is None else at
        own = self._own[node]
        return own is not None and own.start <= at < own.start + own.duration

    def carrier_busy(self, node: int, at: int | None = None) -> bool:
        at = self.sim.now if at is None else at
        return any(r.start <= at for r in self._audible(node, at))

    def idle_at(self, node: int) -> int:
        """Earliest time at which every transmission currently audible at ``node``
        (and its own, if any) will have ended."""
        now = self.sim.now
        t = now
        for r in self._audible(node, now):
            t = max(t, r.start + r.duration)
        own = self._own[node]
        if own is not None:
            t = max(t, own.start + own.duration)
        return t

    def broadcast(
        self, sender: int, nbytes: int, kind: str, payload: Any = None, at: int | None = None
    ) -> TransmissionRecord:
        now = self.sim.now
        if at is not None and at != now:
            raise ProtocolError("broadcast must start at the current clock")
        if self.transmitting(sender, now):
            raise ProtocolError(f"node {sender} is already transmitting")
        rec = TransmissionRecord(sender, now, self.airtime(nbytes), nbytes, kind, payload=payload)
        outcomes = rec.outcomes
        # half duplex: the sender loses whatever it was receiving
        for other in self._audible(sender, now):
            other.outcomes[sender] = Outcome.COLLIDED
        for r in self.topology.neighbor_lists[sender]:
            heard = self._audible(r, now)
            if heard or self.transmitting(r, now):
                outcomes[r] = Outcome.COLLIDED
                for other in heard:
                    other.outcomes[r] = Outcome.COLLIDED
            else:
                outcomes[r] = Outcome.RECEIVED
            heard.append(rec)
        self._own[sender] = rec
        self.log.append(rec)
        self.sim.call_at(rec.start + rec.duration, EventKind.TX_END, self._finish, rec, tag=sender)
        return rec

    def _finish(self, rec: TransmissionRecord) -> None:
        rec.done = True
        if self._own[rec.sender] is rec:
            self._own[rec.sender] = None
        for r in self.topology.neighbor_lists[rec.sender]:
            heard = self._heard[r]
            try:
                heard.remove(rec)
            except ValueError:
                pass
        if self.on_end is not None:
            self.on_end(rec)


TX_LOG_COLUMNS = ("sender", "start_us", "duration_us", "bytes", "protocol_kind")


def write_tx_log(path, records: Iterable[TransmissionRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TX_LOG_COLUMNS)
        for r in records:
            w.writerow((r.sender, r.start, r.duration, r.bytes, r.kind))

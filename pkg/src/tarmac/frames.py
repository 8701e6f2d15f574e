"""Data packets, slot entries, fixed-size TARMAC frames and their schedules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

BROADCAST = -1

DEFAULT_PAYLOAD_BYTES = 32
DEFAULT_SLOT_BYTES = 64
# pkt_id 4 + dst 2 + next-hop designation 2
DEFAULT_SLOT_HEADER_BYTES = 8
# sender 2 + seq 4 + MAC framing 12
DEFAULT_FRAME_HEADER_BYTES = 18

# Packet kinds. Only DATA counts towards delivery metrics.
DATA = "data"
ROUTING = "routing"
RATE_REQUEST = "rate_request"
RATE_SWITCH = "rate_switch"


@dataclass(slots=True, eq=False)
class DataPacket:
    pkt_id: int
    src: int
    dst: int
    created_at: int
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES
    delivered_at: int | None = None
    hop_trail: list[int] = field(default_factory=list)
    kind: str = DATA
    # control content (rate requests / switches); opaque to the radio
    body: object = None

    def __post_init__(self):
        if self.payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")
        if not self.hop_trail:
            self.hop_trail = [self.src]

    def mark_delivered(self, at: int, trail: Sequence[int]) -> None:
        if at < self.created_at:
            raise ValueError("delivery before creation")
        self.delivered_at = at
        self.hop_trail = list(trail)


@dataclass(slots=True, eq=False)
class SlotEntry:
    """One packet riding in one slot, with the hops responsible for it next."""

    packet: DataPacket
    designated_next_hops: frozenset[int]
    trail: tuple[int, ...] = ()
    slot_header_bytes: int = DEFAULT_SLOT_HEADER_BYTES
    # highest frame occupancy seen by this entry on its way so far
    max_occupancy: float = 0.0

    def __post_init__(self):
        if not self.designated_next_hops:
            raise ValueError("a slot entry needs at least one designated next hop")
        if not self.trail:
            self.trail = (self.packet.src,)

    @property
    def wire_bytes(self) -> int:
        return self.packet.payload_bytes + self.slot_header_bytes

    def designated_for(self, node: int) -> bool:
        hops = self.designated_next_hops
        return node in hops or BROADCAST in hops


@dataclass(frozen=True, slots=True)
class Schedule:
    period_us: int
    phase_us: int
    slot_count: int
    slot_bytes: int = DEFAULT_SLOT_BYTES

    def __post_init__(self):
        if self.period_us <= 0:
            raise ValueError("period_us must be positive")
        if self.slot_count < 1:
            raise ValueError("slot_count must be at least 1")
        if not 0 <= self.phase_us < self.period_us:
            raise ValueError("phase_us must lie in [0, period_us)")
        if self.slot_bytes <= 0:
            raise ValueError("slot_bytes must be positive")

    @property
    def capacity(self) -> float:
        """Slots per node per second."""
        return self.slot_count * 1_000_000 / self.period_us

    def frame_bytes(self, header_bytes: int = DEFAULT_FRAME_HEADER_BYTES) -> int:
        return header_bytes + self.slot_count * self.slot_bytes

    def fits(self, entry: SlotEntry) -> bool:
        return entry.wire_bytes <= self.slot_bytes

    def first_at_or_after(self, t: int) -> int:
        """Smallest lattice point phase + k*period that is >= t."""
        if t <= self.phase_us:
            return self.phase_us
        k = -(-(t - self.phase_us) // self.period_us)
        return self.phase_us + k * self.period_us

    def rescaled(self, new_period_us: int) -> Schedule:
        """Same relative phase under a new period."""
        phase = self.phase_us * new_period_us // self.period_us
        return Schedule(new_period_us, phase, self.slot_count, self.slot_bytes)


def next_send_times(schedule: Schedule, horizon: int) -> list[int]:
    """All scheduled send instants phase + k*period that are <= horizon."""
    if horizon < 0:
        return []
    return list(range(schedule.phase_us, horizon + 1, schedule.period_us))


def capacity(slot_count: int, period_us: int) -> float:
    return slot_count * 1_000_000 / period_us


@dataclass(slots=True, eq=False)
class TarmacFrame:
    sender: int
    frame_seq: int
    slots: list[SlotEntry | None]
    slot_bytes: int = DEFAULT_SLOT_BYTES
    frame_header_bytes: int = DEFAULT_FRAME_HEADER_BYTES

    @property
    def wire_bytes(self) -> int:
        # independent of occupancy: empty slots are padded out and encrypted
        return self.frame_header_bytes + len(self.slots) * self.slot_bytes

    @property
    def filled(self) -> int:
        return sum(1 for e in self.slots if e is not None)

    @property
    def occupancy(self) -> float:
        return self.filled / len(self.slots)

    def entries(self) -> list[SlotEntry]:
        return [e for e in self.slots if e is not None]


def pack_frame(
    queue: Sequence[SlotEntry],
    schedule: Schedule,
    seq: int,
    sender: int = 0,
    frame_header_bytes: int = DEFAULT_FRAME_HEADER_BYTES,
) -> tuple[TarmacFrame, list[SlotEntry]]:
    """Move up to ``slot_count`` entries, FIFO, from ``queue`` into a new frame."""
    s = schedule.slot_count
    taken = list(queue[:s])
    slots: list[SlotEntry | None] = taken + [None] * (s - len(taken))
    frame = TarmacFrame(sender, seq, slots, schedule.slot_bytes, frame_header_bytes)
    return frame, list(queue[s:])


def unpack_frame(frame: TarmacFrame, receiver: int) -> tuple[list[SlotEntry], list[SlotEntry]]:
    """Split the entries this receiver is responsible for.

    Returns ``(delivered, to_forward)``: entries addressed to ``receiver`` and
    entries it is a designated next hop for. Everything else is ignored.
    """
    delivered: list[SlotEntry] = []
    forward: list[SlotEntry] = []
    for e in frame.slots:
        if e is None:
            continue
        if e.packet.dst == receiver:
            delivered.append(e)
        elif receiver in e.designated_next_hops or BROADCAST in e.designated_next_hops:
            forward.append(e)
    return delivered, forward

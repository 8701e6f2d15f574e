"""Per-packet accounting and run summaries."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from tarmac.frames import DataPacket
from tarmac.radio import Outcome, TransmissionRecord

E_TX_UJ_PER_BYTE = 0.6
E_RX_UJ_PER_BYTE = 0.3

OVERFLOW = "overflow"
AIR_LOSS = "air_loss"
RETRY_LIMIT = "retry_limit"
NO_ROUTE = "no_route"
HELD_BUSY = "held_busy"
DROP_CAUSES = (OVERFLOW, AIR_LOSS, RETRY_LIMIT, NO_ROUTE, HELD_BUSY)


class PacketBook:
    """Tracks where live copies of every data packet are.

    A packet is lost when its last copy disappears before delivery; the drop
    is attributed to the given cause, or to the most recent refusal reason
    recorded for it.
    """

    def __init__(self):
        self.packets: dict[int, DataPacket] = {}
        self.copies: Counter[int] = Counter()
        self.delivered: dict[int, DataPacket] = {}
        self.dropped: dict[int, str] = {}
        self._last_reject: dict[int, str] = {}
        self.duplicate_deliveries = 0

    @property
    def generated(self) -> int:
        return len(self.packets)

    def created(self, pkt: DataPacket) -> None:
        self.packets[pkt.pkt_id] = pkt

    def add_copy(self, pkt: DataPacket) -> None:
        self.copies[pkt.pkt_id] += 1

    def reject(self, pkt: DataPacket, cause: str) -> None:
        self._last_reject[pkt.pkt_id] = cause
        if self.copies[pkt.pkt_id] <= 0:
            self._settle(pkt.pkt_id, cause)

    def remove_copy(self, pkt: DataPacket, cause: str | None = None) -> None:
        pid = pkt.pkt_id
        left = self.copies[pid] - 1
        if left < 0:
            raise RuntimeError(f"packet {pid} copy count went negative")
        self.copies[pid] = left
        if left == 0:
            self._settle(pid, cause or self._last_reject.get(pid, AIR_LOSS))

    def _settle(self, pid: int, cause: str) -> None:
        if pid in self.delivered or pid in self.dropped:
            return
        self.dropped[pid] = cause

    def deliver(self, pkt: DataPacket, at: int, trail) -> bool:
        """Record arrival at the destination; False for a repeat arrival."""
        if pkt.pkt_id in self.delivered:
            self.duplicate_deliveries += 1
            return False
        pkt.mark_delivered(at, trail)
        self.delivered[pkt.pkt_id] = pkt
        self.dropped.pop(pkt.pkt_id, None)
        return True

    def in_flight_ids(self) -> set[int]:
        return {
            pid for pid, c in self.copies.items()
            if c > 0 and pid not in self.delivered and pid not in self.dropped
        }

    def drop_counts(self) -> dict[str, int]:
        c = Counter(self.dropped.values())
        return {cause: c.get(cause, 0) for cause in DROP_CAUSES}


@dataclass
class MetricsSummary:
    generated: int = 0
    m: int = 0
    in_flight: int = 0
    drops: dict[str, int] = field(default_factory=lambda: dict.fromkeys(DROP_CAUSES, 0))
    M: int = 0
    S: int = 0
    receptions: int = 0
    collisions: int = 0
    sum_delay_us: int = 0
    censored_delay_us: int = 0
    filled_slots: int = 0
    total_slots: int = 0
    energy_uJ: float = 0.0
    payload_bytes: int = 32

    @property
    def delivery_ratio(self) -> float | None:
        return self.m / self.generated if self.generated else None

    @property
    def mean_delay_us(self) -> float | None:
        return self.sum_delay_us / self.m if self.m else None

    @property
    def censored_mean_delay_us(self) -> float | None:
        return self.censored_delay_us / self.generated if self.generated else None

    @property
    def occupancy(self) -> float | None:
        return self.filled_slots / self.total_slots if self.total_slots else None

    @property
    def collision_ratio(self) -> float | None:
        return self.collisions / self.receptions if self.receptions else None

    @property
    def M_per_m(self) -> float | None:
        return self.M / self.m if self.m else None

    @property
    def S_per_m(self) -> float | None:
        return self.S / (self.m * self.payload_bytes) if self.m else None

    @property
    def energy_per_packet_uJ(self) -> float | None:
        return self.energy_uJ / self.m if self.m else None

    def conserved(self) -> bool:
        return self.generated == self.m + sum(self.drops.values()) + self.in_flight


def finalize_metrics(
    book: PacketBook,
    records: Iterable[TransmissionRecord],
    end: int,
    filled_slots: int = 0,
    total_slots: int = 0,
    payload_bytes: int = 32,
) -> MetricsSummary:
    s = MetricsSummary(payload_bytes=payload_bytes)
    s.generated = book.generated
    s.m = len(book.delivered)
    s.drops = book.drop_counts()
    s.in_flight = len(book.in_flight_ids())
    tx_bytes = rx_bytes = 0
    for r in records:
        s.M += 1
        tx_bytes += r.bytes
        n = len(r.outcomes)
        s.receptions += n
        rx_bytes += r.bytes * n
        for o in r.outcomes.values():
            if o is Outcome.COLLIDED:
                s.collisions += 1
    s.S = tx_bytes
    s.energy_uJ = E_TX_UJ_PER_BYTE * tx_bytes + E_RX_UJ_PER_BYTE * rx_bytes
    censored = 0
    for pid, pkt in book.packets.items():
        if pkt.delivered_at is not None:
            d = pkt.delivered_at - pkt.created_at
            s.sum_delay_us += d
            censored += d
        else:
            censored += max(0, end - pkt.created_at)
    s.censored_delay_us = censored
    s.filled_slots = filled_slots
    s.total_slots = total_slots
    return s


METRIC_COLUMNS = (
    "generated", "delivered", "delivery_ratio", "in_flight",
    *(f"drop_{c}" for c in DROP_CAUSES),
    "transmissions", "bytes", "M_per_m", "S_per_m",
    "receptions", "collisions", "collision_ratio",
    "mean_delay_s", "censored_delay_s",
    "filled_slots", "total_slots", "occupancy",
    "energy_uJ", "energy_per_packet_uJ",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def metric_row(s: MetricsSummary) -> dict[str, str]:
    delay = s.mean_delay_us
    cens = s.censored_mean_delay_us
    values = {
        "generated": s.generated,
        "delivered": s.m,
        "delivery_ratio": s.delivery_ratio,
        "in_flight": s.in_flight,
        **{f"drop_{c}": s.drops.get(c, 0) for c in DROP_CAUSES},
        "transmissions": s.M,
        "bytes": s.S,
        "M_per_m": s.M_per_m,
        "S_per_m": s.S_per_m,
        "receptions": s.receptions,
        "collisions": s.collisions,
        "collision_ratio": s.collision_ratio,
        "mean_delay_s": None if delay is None else delay / 1e6,
        "censored_delay_s": None if cens is None else cens / 1e6,
        "filled_slots": s.filled_slots,
        "total_slots": s.total_slots,
        "occupancy": s.occupancy,
        "energy_uJ": s.energy_uJ,
        "energy_per_packet_uJ": s.energy_per_packet_uJ,
    }
    return {k: _fmt(values[k]) for k in METRIC_COLUMNS}


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)

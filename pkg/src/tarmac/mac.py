"""TARMAC: schedule-driven fixed-size broadcast frames, plus adaptive rate control.

A node transmits exactly one frame per period at phase + k*period, whatever its
queue holds. Frames carry up to ``slot_count`` slot entries; receivers keep the
entries they are designated for and re-enqueue them for their own next frame.
"""

from __future__ import annotations

from dataclasses import dataclass

from tarmac.engine import US_PER_S, EventKind
from tarmac.frames import (
    BROADCAST,
    DATA,
    DEFAULT_FRAME_HEADER_BYTES,
    RATE_REQUEST,
    RATE_SWITCH,
    ROUTING,
    DataPacket,
    Schedule,
    SlotEntry,
    TarmacFrame,
    pack_frame,
    unpack_frame,
)
from tarmac.metrics import NO_ROUTE, OVERFLOW
from tarmac.network import BaseNode, Network
from tarmac.radio import TransmissionRecord
from tarmac.routing import RouteMode

FRAME_KIND = "tarmac"

BACKLOG_FACTOR = 2
BACKLOG_PERIODS = 3
REQUEST_REARM_US = 10 * US_PER_S
INCREASE_WINDOW_US = 10 * US_PER_S
DECREASE_WINDOW_US = 30 * US_PER_S
LOW_OCCUPANCY = 0.25

_BROADCAST_HOPS = frozenset((BROADCAST,))


@dataclass(frozen=True)
class RateRequest:
    origin: int
    observed_backlog: int
    requested_period_us: int

    def __post_init__(self):
        if self.requested_period_us <= 0:
            raise ValueError("requested_period_us must be positive")


@dataclass(frozen=True)
class RateSwitch:
    flood_id: int
    new_period_us: int
    switch_at: int


class TarmacNode(BaseNode):
    def __init__(
        self,
        net: Network,
        node_id: int,
        schedule: Schedule,
        buffer_slots: int,
        *,
        adaptive: bool = False,
        route_mode: RouteMode = RouteMode.SINGLE_PATH,
        fanout: int = 1,
        routing_period_us: int = 5 * US_PER_S,
        frame_header_bytes: int = DEFAULT_FRAME_HEADER_BYTES,
    ):
        super().__init__(net, node_id)
        if buffer_slots < 1:
            raise ValueError("buffer_slots must be at least 1")
        self.schedule = schedule
        self.buffer_slots = buffer_slots
        self.adaptive = adaptive
        self.route_mode = route_mode
        self.fanout = fanout
        self.routing_period_us = routing_period_us
        self.frame_header_bytes = frame_header_bytes
        self.out_queue: list[SlotEntry] = []
        self.frame_seq = 0
        self.seen: set[int] = set()
        self.pending_rate_switch: tuple[Schedule, int] | None = None
        self.on_air: list[SlotEntry] = []
        self.rr_state: dict = {}
        self.control_drops = 0
        # copies discarded because this node already handled the packet
        self.duplicates = 0
        self.filled_slots = 0
        self.total_slots = 0
        self._gen = 0
        self._next_attempt = schedule.phase_us
        self._over = 0
        self._request_ok_at = 0
        self.controller: RateController | None = None

    # -- schedule ------------------------------------------------------------

    def start(self) -> None:
        self._arm(self.schedule.phase_us)
        if self.routing_period_us > 0:
            rng = self.net.sim.stream("routing-phase", self.id)
            self.net.sim.call_at(
                rng.randrange(self.routing_period_us), EventKind.TIMER, self._routing_beacon, tag=self.id
            )

    def _arm(self, t: int) -> None:
        self._next_attempt = t
        if self.net.accepting(t):
            self.net.sim.call_at(t, EventKind.SCHEDULED_SEND, self.on_scheduled_send, self._gen, tag=self.id)

    def on_scheduled_send(self, gen: int) -> None:
        if gen != self._gen:
            return
        now = self.net.sim.now
        self.net.attempts[self.id].append(now)
        if self.adaptive:
            self._watch_backlog(now)
        self.csma_send(self._transmit)
        nxt = now + self.schedule.period_us
        pend = self.pending_rate_switch
        if pend is not None and nxt >= pend[1]:
            self._apply_switch(pend[0], max(pend[1], now + 1))
            return
        self._arm(nxt)

    def _apply_switch(self, sched: Schedule, not_before: int) -> None:
        self.pending_rate_switch = None
        self.schedule = sched
        self._gen += 1
        self._over = 0
        self._request_ok_at = 0
        t = sched.first_at_or_after(not_before)
        self.net.switch_log.append((self.id, t, sched.period_us))
        self._arm(t)

    def install_rate_switch(self, new_period_us: int, switch_at: int) -> None:
        if new_period_us == self.schedule.period_us:
            return
        sched = self.schedule.rescaled(new_period_us)
        now = self.net.sim.now
        if switch_at <= now:
            # late joiner: switch right away, never re-using an instant already sent
            last = self.net.attempts[self.id][-1] if self.net.attempts[self.id] else -1
            self._apply_switch(sched, max(now, last + 1))
        elif self._next_attempt >= switch_at:
            self._apply_switch(sched, switch_at)
        else:
            self.pending_rate_switch = (sched, switch_at)

    # -- sending -------------------------------------------------------------

    def _transmit(self) -> None:
        frame, self.out_queue = pack_frame(
            self.out_queue, self.schedule, self.frame_seq, self.id, self.frame_header_bytes
        )
        self.frame_seq += 1
        entries = frame.entries()
        occ = len(entries) / len(frame.slots)
        net = self.net
        for e in entries:
            if occ > e.max_occupancy:
                e.max_occupancy = occ
            if e.packet.kind == DATA:
                net.carried[(e.packet.pkt_id, self.id)] += 1
        self.filled_slots += len(entries)
        self.total_slots += len(frame.slots)
        net.filled_slots += len(entries)
        net.total_slots += len(frame.slots)
        self.on_air = entries
        net.channel.broadcast(self.id, frame.wire_bytes, FRAME_KIND, frame)

    def on_tx_end(self, rec: TransmissionRecord) -> None:
        book = self.net.book
        for e in rec.payload.slots:
            if e is not None and e.packet.kind == DATA:
                book.remove_copy(e.packet)
        self.on_air = []

    def _enqueue(self, entry: SlotEntry, priority: bool = False) -> bool:
        q = self.out_queue
        if not self.schedule.fits(entry):
            raise ValueError("slot entry larger than a slot")
        if len(q) >= self.buffer_slots:
            if not priority:
                return False
            # control traffic evicts the newest queued entry
            victim = q.pop()
            if victim.packet.kind == DATA:
                self.net.book.reject(victim.packet, OVERFLOW)
                self.net.book.remove_copy(victim.packet, OVERFLOW)
            else:
                self.control_drops += 1
        if priority:
            q.insert(0, entry)
        else:
            q.append(entry)
        return True

    def _routed_entry(self, pkt: DataPacket, trail: tuple[int, ...], max_occ: float = 0.0) -> SlotEntry | None:
        hops = self.net.routes.next_hops(
            self.id, pkt.dst, self.route_mode, self.rr_state, self.fanout
        )
        if not hops:
            return None
        return SlotEntry(pkt, hops, trail, max_occupancy=max_occ)

    def originate(self, pkt: DataPacket) -> None:
        book = self.net.book
        self.seen.add(pkt.pkt_id)
        entry = self._routed_entry(pkt, (self.id,))
        if entry is None:
            book.reject(pkt, NO_ROUTE)
            return
        if self._enqueue(entry):
            book.add_copy(pkt)
        else:
            book.reject(pkt, OVERFLOW)

    def _routing_beacon(self) -> None:
        net = self.net
        if not net.accepting():
            return
        pkt = net.new_packet(self.id, BROADCAST, 32, kind=ROUTING)
        if not self._enqueue(SlotEntry(pkt, _BROADCAST_HOPS, (self.id,))):
            self.control_drops += 1
        net.sim.call_at(net.sim.now + self.routing_period_us, EventKind.TIMER, self._routing_beacon, tag=self.id)

    # -- receiving -----------------------------------------------------------

    def on_receive(self, rec: TransmissionRecord) -> None:
        frame: TarmacFrame = rec.payload
        if rec.kind != FRAME_KIND:
            return
        delivered, forward = unpack_frame(frame, self.id)
        if delivered:
            for e in delivered:
                self._deliver_here(e, rec.sender)
        for e in forward:
            kind = e.packet.kind
            if kind == ROUTING:
                continue
            if kind == RATE_SWITCH:
                self._on_flood(e)
            else:
                self._forward(e, rec.sender)

    def _deliver_here(self, e: SlotEntry, sender: int) -> None:
        pkt = e.packet
        net = self.net
        if pkt.pkt_id in self.seen:
            self.duplicates += 1
            return
        self.seen.add(pkt.pkt_id)
        if pkt.kind == DATA:
            net.true_edges.add((sender, self.id))
            net.book.deliver(pkt, net.sim.now, e.trail + (self.id,))
            if self.controller is not None:
                self.controller.observe_occupancy(e.max_occupancy)
        elif pkt.kind == RATE_REQUEST and self.controller is not None:
            self.controller.on_request(pkt.body)

    def _forward(self, e: SlotEntry, sender: int) -> None:
        pkt = e.packet
        if pkt.pkt_id in self.seen:
            self.duplicates += 1
            return
        self.seen.add(pkt.pkt_id)
        book = self.net.book
        is_data = pkt.kind == DATA
        if is_data:
            self.net.true_edges.add((sender, self.id))
        entry = self._routed_entry(pkt, e.trail + (self.id,), e.max_occupancy)
        if entry is None:
            if is_data:
                book.reject(pkt, NO_ROUTE)
            return
        if self._enqueue(entry, priority=not is_data):
            if is_data:
                book.add_copy(pkt)
        elif is_data:
            book.reject(pkt, OVERFLOW)
        else:
            self.control_drops += 1

    def _on_flood(self, e: SlotEntry) -> None:
        pkt = e.packet
        if pkt.pkt_id in self.seen:
            return
        self.seen.add(pkt.pkt_id)
        sw: RateSwitch = pkt.body
        self.net.flood_forwards[sw.flood_id] = self.net.flood_forwards.get(sw.flood_id, 0) + 1
        self.install_rate_switch(sw.new_period_us, sw.switch_at)
        self._enqueue(SlotEntry(pkt, _BROADCAST_HOPS, e.trail + (self.id,)), priority=True)

    # -- adaptive ------------------------------------------------------------

    def _watch_backlog(self, now: int) -> None:
        if self.id == self.net.sink:
            return
        backlog = len(self.out_queue)
        if backlog > BACKLOG_FACTOR * self.schedule.slot_count:
            self._over += 1
        else:
            self._over = 0
        if self._over >= BACKLOG_PERIODS and now >= self._request_ok_at:
            self.request_rate_increase(backlog)

    def request_rate_increase(self, backlog: int) -> RateRequest:
        req = RateRequest(self.id, backlog, max(1, self.schedule.period_us // 2))
        net = self.net
        pkt = net.new_packet(self.id, net.sink, 32, kind=RATE_REQUEST, body=req)
        self.seen.add(pkt.pkt_id)
        entry = self._routed_entry(pkt, (self.id,))
        if entry is not None:
            self._enqueue(entry, priority=True)
        self._over = 0
        self._request_ok_at = net.sim.now + REQUEST_REARM_US
        net.rate_requests.append((net.sim.now, req))
        return req

    def flood_rate_switch(self, new_period_us: int, switch_at: int) -> RateSwitch | None:
        """Originate a network-wide rate switch (base station only)."""
        net = self.net
        if new_period_us == self.schedule.period_us:
            return None
        pkt = net.new_packet(self.id, BROADCAST, 32, kind=RATE_SWITCH)
        sw = RateSwitch(pkt.pkt_id, new_period_us, switch_at)
        pkt.body = sw
        net.rate_switches.append((net.sim.now, sw))
        self._on_flood(SlotEntry(pkt, _BROADCAST_HOPS, (self.id,)))
        return sw

    def held_ids(self) -> set[int]:
        return {
            e.packet.pkt_id for e in (*self.out_queue, *self.on_air) if e.packet.kind == DATA
        }


class RateController:
    """Base-station policy for adaptive TARMAC.

    Serves at most one rate-increase request per 10 s window by halving the
    period (floored at ``period_min_us``); every 30 s, if the highest frame
    occupancy seen by any delivered packet stayed under 25 %, doubles the period
    (capped at ``period_max_us``). One switch is in progress at a time.
    """

    def __init__(self, node: TarmacNode, period_min_us: int, period_max_us: int, diameter: int):
        self.node = node
        self.period_min_us = period_min_us
        self.period_max_us = period_max_us
        self.diameter = max(1, diameter)
        self._busy_until = 0
        self._served_window = -1
        self._window_max = 0.0
        node.controller = self

    def start(self) -> None:
        sim = self.node.net.sim
        sim.call_at(DECREASE_WINDOW_US, EventKind.TIMER, self._review, tag="bs")

    def _propose(self, new_period: int) -> None:
        node = self.node
        now = node.net.sim.now
        old = node.schedule.period_us
        switch_at = now + self.diameter * old
        node.flood_rate_switch(new_period, switch_at)
        self._busy_until = switch_at + self.diameter * max(old, new_period)

    def on_request(self, req: RateRequest) -> None:
        now = self.node.net.sim.now
        window = now // INCREASE_WINDOW_US
        if window == self._served_window or now < self._busy_until:
            return
        cur = self.node.schedule.period_us
        new = max(self.period_min_us, min(req.requested_period_us, cur // 2))
        if new >= cur:
            return
        self._served_window = window
        self._propose(new)

    def observe_occupancy(self, occ: float) -> None:
        if occ > self._window_max:
            self._window_max = occ

    def _review(self) -> None:
        net = self.node.net
        now = net.sim.now
        # a window with no deliveries counts as idle (max occupancy 0)
        if self._window_max < LOW_OCCUPANCY and now >= self._busy_until and net.accepting():
            cur = self.node.schedule.period_us
            new = min(self.period_max_us, cur * 2)
            if new > cur:
                self._propose(new)
        self._window_max = 0.0
        if net.accepting(now + DECREASE_WINDOW_US):
            net.sim.call_at(now + DECREASE_WINDOW_US, EventKind.TIMER, self._review, tag="bs")

"""Comparison protocols: shortest path over unicast CSMA, Intrusion 1 and Intrusion 2."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

from tarmac.engine import EventKind
from tarmac.frames import DataPacket, Schedule
from tarmac.metrics import HELD_BUSY, NO_ROUTE, OVERFLOW, RETRY_LIMIT
from tarmac.network import BaseNode, Network
from tarmac.radio import TransmissionRecord

SIFS_US = 10
DIFS_US = 50
SLOT_US = 20
CW_MIN = 31
CW_MAX = 1023


@dataclass(frozen=True)
class UnicastExchange:
    rts_bytes: int = 20
    cts_bytes: int = 14
    ack_bytes: int = 14
    data_header_bytes: int = 24
    retry_limit: int = 7


class _State(enum.Enum):
    IDLE = 0
    CONTEND = 1
    WAIT_CTS = 2
    SEND_DATA = 3
    WAIT_ACK = 4


class SpNode(BaseNode):
    """Shortest-path forwarding over an RTS/CTS/DATA/ACK exchange with binary
    exponential backoff and virtual carrier sense (NAV)."""

    def __init__(self, net: Network, node_id: int, buffer_slots: int, exchange: UnicastExchange | None = None):
        super().__init__(net, node_id)
        self.buffer_slots = buffer_slots
        self.x = exchange or UnicastExchange()
        self.backoff = net.sim.stream("backoff", node_id)
        self.queue: deque[tuple[DataPacket, tuple[int, ...]]] = deque()
        self.seen: set[int] = set()
        self.state = _State.IDLE
        self.retries = 0
        self.cw = CW_MIN
        self.nav_until = 0
        self._tok = 0
        self._peer = -1
        ch = net.channel
        self._cts_air = ch.airtime(self.x.cts_bytes)
        self._ack_air = ch.airtime(self.x.ack_bytes)

    def _data_bytes(self, pkt: DataPacket) -> int:
        return self.x.data_header_bytes + pkt.payload_bytes

    # -- queue ---------------------------------------------------------------

    def originate(self, pkt: DataPacket) -> None:
        self.seen.add(pkt.pkt_id)
        self._accept(pkt, (self.id,))

    def _accept(self, pkt: DataPacket, trail: tuple[int, ...]) -> None:
        book = self.net.book
        if not self.net.routes.has_route(self.id, pkt.dst):
            book.reject(pkt, NO_ROUTE)
            return
        if len(self.queue) >= self.buffer_slots:
            book.reject(pkt, OVERFLOW)
            return
        book.add_copy(pkt)
        self.queue.append((pkt, trail))
        self._kick()

    def _kick(self) -> None:
        if self.state is _State.IDLE and self.queue:
            self.state = _State.CONTEND
            self._contend()

    def _contend(self) -> None:
        self._tok += 1
        t = self.net.sim.now + DIFS_US + self.backoff.randint(0, self.cw) * SLOT_US
        self.net.sim.call_at(t, EventKind.TIMER, self._attempt, self._tok, tag=self.id)

    def _medium_busy(self) -> bool:
        ch = self.net.channel
        return ch.transmitting(self.id) or ch.carrier_busy(self.id) or self.net.sim.now < self.nav_until

    def _attempt(self, tok: int) -> None:
        if tok != self._tok or self.state is not _State.CONTEND:
            return
        net = self.net
        if not net.accepting():
            self.state = _State.IDLE
            return
        if self._medium_busy():
            ch = net.channel
            t = max(ch.idle_at(self.id), self.nav_until) + DIFS_US + self.backoff.randint(0, self.cw) * SLOT_US
            net.sim.call_at(t, EventKind.TIMER, self._attempt, tok, tag=self.id)
            return
        pkt, _ = self.queue[0]
        nh = net.routes.next_hop(self.id, pkt.dst)
        self._peer = nh
        ch = net.channel
        nav = 3 * SIFS_US + self._cts_air + ch.airtime(self._data_bytes(pkt)) + self._ack_air
        rec = ch.broadcast(self.id, self.x.rts_bytes, "sp_rts", ("rts", self.id, nh, pkt.pkt_id, nav))
        self.state = _State.WAIT_CTS
        self._tok += 1
        deadline = rec.end + SIFS_US + self._cts_air + 2 * SLOT_US
        net.sim.call_at(deadline, EventKind.TIMER, self._timeout, self._tok, tag=self.id)

    def _timeout(self, tok: int) -> None:
        if tok != self._tok or self.state not in (_State.WAIT_CTS, _State.WAIT_ACK):
            return
        self.retries += 1
        if self.retries > self.x.retry_limit:
            pkt, _ = self.queue.popleft()
            self.net.book.remove_copy(pkt, RETRY_LIMIT)
            self._reset()
            return
        self.cw = min(2 * self.cw + 1, CW_MAX)
        self.state = _State.CONTEND
        self._contend()

    def _reset(self) -> None:
        self.retries = 0
        self.cw = CW_MIN
        self.state = _State.IDLE
        self._tok += 1
        self._kick()

    # -- frames --------------------------------------------------------------

    def _respond(self, kind: str, nbytes: int, payload) -> None:
        ch = self.net.channel
        if ch.transmitting(self.id):
            return
        ch.broadcast(self.id, nbytes, kind, payload)

    def _later(self, fn, *args) -> None:
        sim = self.net.sim
        sim.call_at(sim.now + SIFS_US, EventKind.TIMER, fn, *args, tag=self.id)

    def on_receive(self, rec: TransmissionRecord) -> None:
        p = rec.payload
        if not isinstance(p, tuple) or not rec.kind.startswith("sp_"):
            return
        typ, src, dst = p[0], p[1], p[2]
        now = self.net.sim.now
        if dst != self.id:
            if typ == "rts" or typ == "cts":
                self.nav_until = max(self.nav_until, now + p[4])
            return
        if typ == "rts":
            if self.state in (_State.WAIT_CTS, _State.WAIT_ACK, _State.SEND_DATA) or now < self.nav_until:
                return
            nav = p[4] - SIFS_US - self._cts_air
            self._later(self._respond, "sp_cts", self.x.cts_bytes, ("cts", self.id, src, p[3], nav))
        elif typ == "cts":
            if self.state is not _State.WAIT_CTS or src != self._peer or not self.queue:
                return
            pkt, trail = self.queue[0]
            if pkt.pkt_id != p[3]:
                return
            self._tok += 1
            self.state = _State.SEND_DATA
            self._later(self._send_data, self._tok)
        elif typ == "data":
            pkt, trail = p[3], p[4]
            self._later(self._respond, "sp_ack", self.x.ack_bytes, ("ack", self.id, src, pkt.pkt_id))
            self._on_data(pkt, trail, src)
        elif typ == "ack":
            if self.state is not _State.WAIT_ACK or src != self._peer or not self.queue:
                return
            pkt, _ = self.queue[0]
            if pkt.pkt_id != p[3]:
                return
            self.queue.popleft()
            self.net.book.remove_copy(pkt)
            self._reset()

    def _send_data(self, tok: int) -> None:
        if tok != self._tok or self.state is not _State.SEND_DATA:
            return
        ch = self.net.channel
        if ch.transmitting(self.id):
            self._timeout(tok)
            return
        pkt, trail = self.queue[0]
        ch.broadcast(self.id, self._data_bytes(pkt), "sp_data", ("data", self.id, self._peer, pkt, trail))

    def on_tx_end(self, rec: TransmissionRecord) -> None:
        if rec.kind == "sp_data" and self.state is _State.SEND_DATA:
            self.state = _State.WAIT_ACK
            self._tok += 1
            deadline = rec.end + SIFS_US + self._ack_air + 2 * SLOT_US
            self.net.sim.call_at(deadline, EventKind.TIMER, self._timeout, self._tok, tag=self.id)

    def _on_data(self, pkt: DataPacket, trail: tuple[int, ...], sender: int) -> None:
        net = self.net
        if pkt.pkt_id in self.seen:
            if pkt.dst == self.id:
                net.book.deliver(pkt, net.sim.now, trail + (self.id,))
            return
        self.seen.add(pkt.pkt_id)
        net.true_edges.add((sender, self.id))
        if pkt.dst == self.id:
            net.book.deliver(pkt, net.sim.now, trail + (self.id,))
        else:
            self._accept(pkt, trail + (self.id,))

    def held_ids(self) -> set[int]:
        return {p.pkt_id for p, _ in self.queue}


class _ScheduledSender(BaseNode):
    """Shared machinery for nodes that transmit on a fixed per-node lattice."""

    wire_bytes = 56

    def __init__(self, net: Network, node_id: int, schedule: Schedule):
        super().__init__(net, node_id)
        self.schedule = schedule

    def start(self) -> None:
        self._arm(self.schedule.phase_us)

    def _arm(self, t: int) -> None:
        if self.net.accepting(t):
            self.net.sim.call_at(t, EventKind.SCHEDULED_SEND, self._tick, tag=self.id)

    def _tick(self) -> None:
        now = self.net.sim.now
        self.net.attempts[self.id].append(now)
        self.csma_send(self._emit)
        self._arm(now + self.schedule.period_us)

    def _emit(self) -> None:
        raise NotImplementedError


class Intrusion1Node(_ScheduledSender):
    """Fixed-interval sending towards the tree parent, dummies when idle.

    The head packet is resent every interval until the node overhears its
    parent forwarding it. The sink forwards nothing, so it broadcasts a beacon
    every interval listing the packet ids it received since its last beacon.
    """

    KIND = "intrusion1"

    def __init__(self, net: Network, node_id: int, schedule: Schedule, buffer_slots: int, data_header_bytes: int = 24, payload_bytes: int = 32):
        super().__init__(net, node_id, schedule)
        self.buffer_slots = buffer_slots
        self.wire_bytes = data_header_bytes + payload_bytes
        self.parent = net.routes.next_hop(node_id, net.sink)
        self.buffer: deque[tuple[DataPacket, tuple[int, ...]]] = deque()
        self.acks: list[int] = []
        self.awaiting_overhear: int | None = None
        self.dummies = 0

    def _emit(self) -> None:
        ch = self.net.channel
        if self.id == self.net.sink:
            payload = ("beacon", frozenset(self.acks))
            self.acks = []
        elif self.buffer:
            pkt, trail = self.buffer[0]
            self.awaiting_overhear = pkt.pkt_id
            payload = ("data", pkt, self.parent, trail)
        else:
            self.dummies += 1
            payload = ("dummy",)
        ch.broadcast(self.id, self.wire_bytes, self.KIND, payload)

    def originate(self, pkt: DataPacket) -> None:
        self._accept(pkt, (self.id,), None)

    def _accept(self, pkt: DataPacket, trail: tuple[int, ...], sender: int | None) -> None:
        net = self.net
        if self.id == net.sink:
            if sender is not None:
                self.acks.append(pkt.pkt_id)
                if pkt.pkt_id not in net.book.delivered:
                    net.true_edges.add((sender, self.id))
            net.book.deliver(pkt, net.sim.now, trail + (self.id,))
            return
        if any(p.pkt_id == pkt.pkt_id for p, _ in self.buffer):
            return
        if self.parent is None:
            net.book.reject(pkt, NO_ROUTE)
            return
        if len(self.buffer) >= self.buffer_slots:
            net.book.reject(pkt, OVERFLOW)
            return
        if sender is not None:
            net.true_edges.add((sender, self.id))
            trail = trail + (self.id,)
        net.book.add_copy(pkt)
        self.buffer.append((pkt, trail))

    def _release(self) -> None:
        pkt, _ = self.buffer.popleft()
        self.awaiting_overhear = None
        self.net.book.remove_copy(pkt)

    def on_receive(self, rec: TransmissionRecord) -> None:
        if rec.kind != self.KIND:
            return
        p = rec.payload
        head = self.buffer[0][0].pkt_id if self.buffer else None
        if p[0] == "data":
            pkt, to, trail = p[1], p[2], p[3]
            if to == self.id:
                self._accept(pkt, trail, rec.sender)
            if rec.sender == self.parent and head is not None and pkt.pkt_id == head and self.awaiting_overhear == head:
                self._release()
        elif p[0] == "beacon" and rec.sender == self.parent and head is not None:
            if head in p[1] and self.awaiting_overhear == head:
                self._release()

    def held_ids(self) -> set[int]:
        return {p.pkt_id for p, _ in self.buffer}


class Intrusion2Node(BaseNode):
    """Holds at most one packet and resends it every ``resend_period_us`` to a
    random next hop closer to the sink until it overhears that hop forwarding
    it (or, for the sink, acknowledging it)."""

    KIND = "intrusion2"

    def __init__(self, net: Network, node_id: int, resend_period_us: int, fake_path_prob: float = 0.0, data_header_bytes: int = 24, payload_bytes: int = 32):
        super().__init__(net, node_id)
        if resend_period_us <= 0:
            raise ValueError("resend_period_us must be positive")
        self.resend_period_us = resend_period_us
        self.fake_path_prob = fake_path_prob
        self.wire_bytes = data_header_bytes + payload_bytes
        self.rng = net.sim.stream("next-hop", node_id)
        self.held: tuple[DataPacket, int, tuple[int, ...]] | None = None
        self.rejected = 0
        self._gen = 0

    def originate(self, pkt: DataPacket) -> None:
        self.intrusion2_receive(pkt, (self.id,), None)

    def intrusion2_receive(self, pkt: DataPacket, trail: tuple[int, ...], sender: int | None) -> None:
        net = self.net
        if self.id == net.sink:
            if pkt.pkt_id not in net.book.delivered and sender is not None:
                net.true_edges.add((sender, self.id))
            net.book.deliver(pkt, net.sim.now, trail + (self.id,))
            self.csma_send(lambda pid=pkt.pkt_id: net.channel.broadcast(self.id, self.wire_bytes, self.KIND, ("ack", pid)))
            return
        if self.held is not None:
            if self.held[0].pkt_id != pkt.pkt_id:
                self.rejected += 1
                net.book.reject(pkt, HELD_BUSY)
            return
        routes = net.routes
        cand = routes.progress_neighbors(self.id, net.sink)
        if not cand:
            net.book.reject(pkt, NO_ROUTE)
            return
        if self.fake_path_prob > 0 and self.rng.random() < self.fake_path_prob:
            nh = self.rng.choice(net.topology.neighbor_lists[self.id])
        else:
            nh = self.rng.choice(cand)
        if sender is not None:
            net.true_edges.add((sender, self.id))
            trail = trail + (self.id,)
        net.book.add_copy(pkt)
        self.held = (pkt, nh, trail)
        self._gen += 1
        t = net.sim.now + self.jitter.randint(0, net.channel_config.max_jitter_us)
        net.sim.call_at(t, EventKind.TIMER, self._send, self._gen, tag=self.id)

    def _send(self, gen: int) -> None:
        net = self.net
        if gen != self._gen or self.held is None or not net.accepting():
            return
        pkt, nh, trail = self.held
        self.csma_send(lambda: self._emit(gen))
        net.sim.call_at(net.sim.now + self.resend_period_us, EventKind.TIMER, self._send, gen, tag=self.id)

    def _emit(self, gen: int) -> None:
        if gen != self._gen or self.held is None:
            return
        pkt, nh, trail = self.held
        self.net.channel.broadcast(self.id, self.wire_bytes, self.KIND, ("data", pkt, nh, trail))

    def on_receive(self, rec: TransmissionRecord) -> None:
        if rec.kind != self.KIND:
            return
        p = rec.payload
        held = self.held
        if p[0] == "data":
            pkt, to, trail = p[1], p[2], p[3]
            if held is not None and rec.sender == held[1] and pkt.pkt_id == held[0].pkt_id:
                self._release()
            elif to == self.id:
                self.intrusion2_receive(pkt, trail, rec.sender)
        elif p[0] == "ack" and held is not None and rec.sender == held[1] and p[1] == held[0].pkt_id:
            self._release()

    def _release(self) -> None:
        pkt = self.held[0]
        self.held = None
        self._gen += 1
        self.net.book.remove_copy(pkt)

    def held_ids(self) -> set[int]:
        return {self.held[0].pkt_id} if self.held is not None else set()

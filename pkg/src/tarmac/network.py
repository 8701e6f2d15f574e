"""Run-wide context shared by every protocol node."""

from __future__ import annotations

from collections import Counter

from tarmac.engine import EventKind, Simulator
from tarmac.frames import DataPacket
from tarmac.metrics import PacketBook
from tarmac.radio import Channel, ChannelConfig, Outcome, Topology, TransmissionRecord
from tarmac.routing import RoutingTable


class Network:
    def __init__(
        self,
        sim: Simulator,
        topology: Topology,
        channel_config: ChannelConfig,
        routes: RoutingTable,
        sink: int,
        sim_end: int,
    ):
        self.sim = sim
        self.topology = topology
        self.channel = Channel(sim, topology, channel_config, on_end=self._tx_end)
        self.channel_config = channel_config
        self.routes = routes
        self.sink = sink
        self.sim_end = sim_end
        self.book = PacketBook()
        self.nodes: list[BaseNode] = []
        self._next_pkt = 0
        # ground truth, never shown to the adversary
        self.attempts: list[list[int]] = [[] for _ in range(len(topology))]
        self.carried: Counter[tuple[int, int]] = Counter()
        self.true_edges: set[tuple[int, int]] = set()
        self.switch_log: list[tuple[int, int, int]] = []
        self.flood_forwards: dict[int, int] = {}
        self.rate_requests: list = []
        self.rate_switches: list = []
        self.sources: list[int] = []
        self.controller = None
        self.filled_slots = 0
        self.total_slots = 0

    def accepting(self, t: int | None = None) -> bool:
        """New transmissions may only be initiated before sim_end."""
        return (self.sim.now if t is None else t) < self.sim_end

    def new_packet(self, src: int, dst: int, payload_bytes: int, kind: str = "data", body=None) -> DataPacket:
        pid = self._next_pkt
        self._next_pkt += 1
        return DataPacket(pid, src, dst, self.sim.now, payload_bytes, kind=kind, body=body)

    def originate(self, src: int, dst: int, payload_bytes: int) -> DataPacket:
        pkt = self.new_packet(src, dst, payload_bytes)
        self.book.created(pkt)
        if src == dst:
            self.book.deliver(pkt, self.sim.now, (src,))
        else:
            self.nodes[src].originate(pkt)
        return pkt

    def _tx_end(self, rec: TransmissionRecord) -> None:
        nodes = self.nodes
        for r, o in rec.outcomes.items():
            if o is Outcome.RECEIVED:
                nodes[r].on_receive(rec)
        nodes[rec.sender].on_tx_end(rec)

    def held_ids(self) -> set[int]:
        """Undelivered data packet ids currently held by some node (independent
        of the packet book; used to check conservation)."""
        out: set[int] = set()
        for n in self.nodes:
            out |= n.held_ids()
        delivered = self.book.delivered
        return {pid for pid in out if pid not in delivered}


class BaseNode:
    def __init__(self, net: Network, node_id: int):
        self.net = net
        self.id = node_id
        self.jitter = net.sim.stream("jitter", node_id)

    def start(self) -> None:
        pass

    def originate(self, pkt: DataPacket) -> None:
        raise NotImplementedError

    def on_receive(self, rec: TransmissionRecord) -> None:
        pass

    def on_tx_end(self, rec: TransmissionRecord) -> None:
        pass

    def held_ids(self) -> set[int]:
        return set()

    def csma_send(self, emit) -> None:
        """Call ``emit`` now if the medium is idle here, otherwise once it is
        idle plus a uniform backoff in [0, max_jitter_us]. The backoff is drawn
        from the node's jitter stream, which nothing traffic-dependent touches."""
        ch = self.net.channel
        cfg = self.net.channel_config
        if ch.transmitting(self.id) or (cfg.csma_defer and ch.carrier_busy(self.id)):
            t = ch.idle_at(self.id) + self.jitter.randint(0, cfg.max_jitter_us)
            self.net.sim.call_at(t, EventKind.TIMER, self.csma_send, emit, tag=self.id)
        else:
            emit()

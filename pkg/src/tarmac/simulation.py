"""Assemble a network for a RunConfig and run it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

from tarmac.baselines import Intrusion1Node, Intrusion2Node, SpNode
from tarmac.config import RunConfig
from tarmac.engine import EventKind, Simulator
from tarmac.frames import Schedule
from tarmac.mac import RateController, TarmacNode
from tarmac.metrics import MetricsSummary, finalize_metrics
from tarmac.network import Network
from tarmac.radio import ChannelConfig, TransmissionRecord
from tarmac.routing import RouteMode, RoutingTable, diameter, grid_topology
from tarmac.traffic import PatternKind, TrafficPattern, cbr_times, select_sources, source_phase


@dataclass
class RunResult:
    config: RunConfig
    summary: MetricsSummary
    network: Network

    @property
    def records(self) -> list[TransmissionRecord]:
        return self.network.channel.log

    @property
    def attempts(self) -> list[list[int]]:
        return self.network.attempts


def traffic_pattern(cfg: RunConfig) -> TrafficPattern:
    return TrafficPattern(
        kind=PatternKind(cfg.pattern),
        rate_pps=cfg.rate_pps,
        start=cfg.traffic_start_us,
        duration=cfg.traffic_duration_us,
        sink=cfg.sink,
        source=cfg.source if cfg.pattern == "single_flow" else None,
    )


def build_network(cfg: RunConfig, trace: TextIO | None = None) -> Network:
    cfg.validate()
    sim = Simulator(cfg.seed, trace)
    topo = grid_topology(cfg.rows, cfg.cols, cfg.spacing_m, cfg.range_m)
    mode = RouteMode.MULTIPATH if cfg.protocol == "tarmac_multipath" else RouteMode.SINGLE_PATH
    routes = RoutingTable(topo, [cfg.sink], mode)
    chan = ChannelConfig(
        range_dm=int(round(cfg.range_m * 10)),
        bitrate_bps=cfg.bitrate_bps,
        csma_defer=cfg.csma_defer,
        max_jitter_us=cfg.max_jitter_us,
    )
    net = Network(sim, topo, chan, routes, cfg.sink, cfg.sim_end_us)
    proto = cfg.protocol
    for n in range(len(topo)):
        if proto.startswith("tarmac") or proto == "intrusion1":
            phase = sim.stream("phase", n).randrange(cfg.period_us)
        if proto.startswith("tarmac"):
            sched = Schedule(cfg.period_us, phase, cfg.slots, cfg.slot_bytes)
            node = TarmacNode(
                net, n, sched, cfg.buffer_slots,
                adaptive=proto == "tarmac_adaptive",
                route_mode=mode,
                fanout=cfg.multipath_fanout,
                routing_period_us=cfg.routing_period_us,
            )
        elif proto == "sp":
            node = SpNode(net, n, cfg.buffer_slots)
        elif proto == "intrusion1":
            node = Intrusion1Node(net, n, Schedule(cfg.period_us, phase, 1), cfg.buffer_slots, payload_bytes=cfg.payload_bytes)
        else:
            node = Intrusion2Node(net, n, cfg.period_us, cfg.fake_path_prob, payload_bytes=cfg.payload_bytes)
        net.nodes.append(node)
    if proto == "tarmac_adaptive":
        net.controller = RateController(net.nodes[cfg.sink], cfg.period_min_us, cfg.period_max_us, diameter(topo))
    else:
        net.controller = None
    _install_traffic(net, cfg)
    return net


def _install_traffic(net: Network, cfg: RunConfig) -> None:
    pattern = traffic_pattern(cfg)
    sim = net.sim
    sources = select_sources(pattern, cfg.rows, cfg.cols, sim.stream("source-select"))
    net.sources = sources
    end = min(pattern.start + pattern.duration, cfg.sim_end_us)
    for src in sources:
        times = cbr_times(pattern, source_phase(pattern, cfg.seed, src))
        it = iter(t for t in times if t < end)
        first = next(it, None)
        if first is not None:
            sim.call_at(first, EventKind.TRAFFIC_ARRIVAL, _arrival, net, src, it, cfg, tag=src)


def _arrival(net: Network, src: int, it, cfg: RunConfig) -> None:
    net.originate(src, cfg.sink, cfg.payload_bytes)
    nxt = next(it, None)
    if nxt is not None:
        net.sim.call_at(nxt, EventKind.TRAFFIC_ARRIVAL, _arrival, net, src, it, cfg, tag=src)


def run_simulation(cfg: RunConfig, trace: TextIO | None = None) -> RunResult:
    net = build_network(cfg, trace)
    for node in net.nodes:
        node.start()
    if net.controller is not None:
        net.controller.start()
    end = cfg.sim_end_us
    net.sim.run_until(end + cfg.drain_us)
    summary = finalize_metrics(
        net.book, net.channel.log, end, net.filled_slots, net.total_slots, cfg.payload_bytes
    )
    return RunResult(cfg, summary, net)

"""Grid deployment, hop-count shortest paths and next-hop designation."""

from __future__ import annotations

import enum
from collections import deque
from typing import MutableMapping

from tarmac.radio import NodeSite, Topology


class RouteMode(enum.Enum):
    SINGLE_PATH = "single_path"
    MULTIPATH = "multipath"


MAX_FANOUT = 2


def grid_topology(rows: int, cols: int, spacing_m: float = 20.0, range_m: float = 40.0) -> Topology:
    """Nodes at the centres of a rows x cols grid of square cells.

    Node ``r * cols + c`` sits at ``((c + 0.5) * spacing, (r + 0.5) * spacing)``.
    Positions are integer decimeters so range comparisons are exact.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    step = int(round(spacing_m * 10))
    sites = [
        NodeSite(r * cols + c, c * step + step // 2, r * step + step // 2)
        for r in range(rows)
        for c in range(cols)
    ]
    return Topology(sites, int(round(range_m * 10)))


def node_id(row: int, col: int, cols: int) -> int:
    return row * cols + col


def bfs_hops(topology: Topology, dst: int) -> list[int | None]:
    hops: list[int | None] = [None] * len(topology)
    hops[dst] = 0
    frontier = deque([dst])
    while frontier:
        u = frontier.popleft()
        for v in topology.neighbor_lists[u]:
            if hops[v] is None:
                hops[v] = hops[u] + 1
                frontier.append(v)
    return hops


def diameter(topology: Topology) -> int:
    """Largest finite hop distance between any two nodes."""
    best = 0
    for n in range(len(topology)):
        best = max(best, max(h for h in bfs_hops(topology, n) if h is not None))
    return best


class RoutingTable:
    """Static routes towards a set of destinations.

    For every (node, dst) the candidates are the neighbors exactly one hop
    closer to dst, sorted by node id. Single-path mode always picks the
    lowest id; multipath round-robins over the first ``MAX_FANOUT``.
    """

    def __init__(self, topology: Topology, dsts, mode: RouteMode = RouteMode.SINGLE_PATH):
        self.topology = topology
        self.mode = mode
        self._hops: dict[int, list[int | None]] = {}
        self._progress: dict[int, list[tuple[int, ...]]] = {}
        for d in dsts:
            self._add(d)

    def _add(self, dst: int) -> None:
        hops = bfs_hops(self.topology, dst)
        prog: list[tuple[int, ...]] = []
        for n in range(len(self.topology)):
            h = hops[n]
            if h is None or h == 0:
                prog.append(())
                continue
            prog.append(tuple(
                v for v in self.topology.neighbor_lists[n] if hops[v] == h - 1
            ))
        self._hops[dst] = hops
        self._progress[dst] = prog

    def destinations(self):
        return self._hops.keys()

    def hop_count(self, node: int, dst: int) -> int | None:
        if dst not in self._hops:
            self._add(dst)
        return self._hops[dst][node]

    def has_route(self, node: int, dst: int) -> bool:
        return self.hop_count(node, dst) is not None

    def progress_neighbors(self, node: int, dst: int) -> tuple[int, ...]:
        if dst not in self._progress:
            self._add(dst)
        return self._progress[dst][node]

    def next_hop(self, node: int, dst: int) -> int | None:
        """The single-path next hop (lowest id among progress neighbors)."""
        cand = self.progress_neighbors(node, dst)
        return cand[0] if cand else None

    def next_hops(
        self,
        node: int,
        dst: int,
        mode: RouteMode | None = None,
        fill_state: MutableMapping | None = None,
        fanout: int = 1,
    ) -> frozenset[int]:
        """Next hops to designate for one packet.

        ``fill_state`` carries the round-robin counters for multipath mode; pass
        the same mapping for every call made by one node. With ``fanout=2`` in
        multipath mode both equal-progress hops are designated at once.
        """
        mode = mode or self.mode
        cand = self.progress_neighbors(node, dst)
        if not cand:
            return frozenset()
        if mode is RouteMode.SINGLE_PATH or len(cand) == 1:
            return frozenset((cand[0],))
        cand = cand[:MAX_FANOUT]
        if fanout >= 2:
            return frozenset(cand)
        if fill_state is None:
            return frozenset((cand[0],))
        key = (node, dst)
        i = fill_state.get(key, 0)
        fill_state[key] = i + 1
        return frozenset((cand[i % len(cand)],))


def build_routes(topology: Topology, dsts, mode: RouteMode = RouteMode.SINGLE_PATH) -> RoutingTable:
    return RoutingTable(topology, dsts, mode)

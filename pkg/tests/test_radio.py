import csv
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tarmac.engine import Simulator
from tarmac.radio import (
    TX_LOG_COLUMNS,
    Channel,
    ChannelConfig,
    NodeSite,
    Outcome,
    ProtocolError,
    Topology,
    airtime_us,
    write_tx_log,
)
from tarmac.routing import grid_topology, node_id


def brute_neighbors(rows, cols, spacing_m, range_m, r, c):
    out = set()
    for rr in range(rows):
        for cc in range(cols):
            if (rr, cc) != (r, c) and math.hypot((rr - r) * spacing_m, (cc - c) * spacing_m) <= range_m + 1e-9:
                out.add(node_id(rr, cc, cols))
    return out


@pytest.fixture(scope="module")
def grid():
    return grid_topology(10, 10, 20, 40)


def test_corner_has_five_neighbors(grid):
    expect = {node_id(0, 1, 10), node_id(1, 0, 10), node_id(1, 1, 10), node_id(0, 2, 10), node_id(2, 0, 10)}
    assert grid.neighbors(0) == expect
    assert expect == brute_neighbors(10, 10, 20, 40, 0, 0)


def test_interior_has_twelve_neighbors(grid):
    got = grid.neighbors(node_id(4, 4, 10))
    assert len(got) == 12
    assert got == brute_neighbors(10, 10, 20, 40, 4, 4)


def test_every_neighbor_set_matches_brute_force(grid):
    for r in range(10):
        for c in range(10):
            assert grid.neighbors(node_id(r, c, 10)) == brute_neighbors(10, 10, 20, 40, r, c)


def test_neighbor_symmetry(grid):
    for a in range(len(grid)):
        for b in grid.neighbors(a):
            assert a in grid.neighbors(b)


def test_zero_range_has_no_neighbors():
    assert grid_topology(3, 3, 20, 0).neighbors(4) == frozenset()


def test_unknown_node():
    with pytest.raises(KeyError):
        grid_topology(2, 2).neighbors(4)


def test_airtime_formula():
    assert airtime_us(290, 2_000_000) == 1160
    assert airtime_us(274, 2_000_000) == 1096
    assert airtime_us(1, 3_000_000) == 3  # ceil(8/3)


@given(st.integers(1, 5000), st.integers(1, 10_000_000))
def test_airtime_is_ceiling(nbytes, rate):
    t = airtime_us(nbytes, rate)
    assert t * rate >= nbytes * 8_000_000 > (t - 1) * rate


def _channel(topo):
    sim = Simulator()
    ended = []
    ch = Channel(sim, topo, ChannelConfig(), on_end=ended.append)
    return sim, ch, ended


def test_single_frame_received_by_all_corner_neighbors(grid):
    sim, ch, ended = _channel(grid)
    rec = ch.broadcast(0, 290, "test")
    assert rec.duration == 1160
    sim.run_until(2000)
    assert ended == [rec]
    assert set(rec.outcomes) == grid.neighbors(0)
    assert all(o is Outcome.RECEIVED for o in rec.outcomes.values())
    assert rec.outcome(0) is Outcome.OUT_OF_RANGE


def test_shared_neighbor_collides_only_where_both_heard():
    # 0 --- 1 --- 2 on a line: 0 and 2 are hidden from each other, 1 hears both
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 300, 0), NodeSite(2, 600, 0), NodeSite(3, 900, 0)], 400)
    sim, ch, _ = _channel(topo)
    a = ch.broadcast(0, 100, "t")
    sim.run_until(100)
    b = ch.broadcast(2, 100, "t")
    sim.run_until(10_000)
    assert a.outcome(1) is Outcome.COLLIDED
    assert b.outcome(1) is Outcome.COLLIDED
    assert b.outcome(3) is Outcome.RECEIVED


def test_out_of_range_receiver():
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 410, 0), NodeSite(2, 400, 0)], 400)
    sim, ch, _ = _channel(topo)
    rec = ch.broadcast(0, 10, "t")
    assert rec.outcome(1) is Outcome.OUT_OF_RANGE
    assert rec.outcome(2) is Outcome.RECEIVED  # exactly on the boundary


def test_half_duplex_receiver_loses_frame():
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 300, 0)], 400)
    sim, ch, _ = _channel(topo)
    a = ch.broadcast(0, 100, "t")
    b = ch.broadcast(1, 100, "t")
    sim.run_until(10_000)
    assert a.outcome(1) is Outcome.COLLIDED
    assert b.outcome(0) is Outcome.COLLIDED


def test_back_to_back_frames_do_not_collide():
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 300, 0), NodeSite(2, 600, 0)], 400)
    sim, ch, _ = _channel(topo)
    a = ch.broadcast(0, 100, "t")
    sim.run_until(a.end)
    b = ch.broadcast(2, 100, "t")
    sim.run_until(10_000)
    assert a.outcome(1) is Outcome.RECEIVED and b.outcome(1) is Outcome.RECEIVED


def test_overlapping_own_send_fails_fast():
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 300, 0)], 400)
    sim, ch, _ = _channel(topo)
    ch.broadcast(0, 100, "t")
    with pytest.raises(ProtocolError):
        ch.broadcast(0, 100, "t")


def test_carrier_sense():
    topo = Topology([NodeSite(0, 0, 0), NodeSite(1, 300, 0), NodeSite(2, 2000, 0)], 400)
    sim, ch, _ = _channel(topo)
    assert not ch.carrier_busy(1)
    rec = ch.broadcast(0, 100, "t")
    assert ch.carrier_busy(1, rec.start + 1)
    assert not ch.carrier_busy(2, rec.start + 1)
    assert ch.idle_at(1) == rec.end
    sim.run_until(rec.end)
    assert not ch.carrier_busy(1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3000)), min_size=1, max_size=25))
def test_collided_implies_two_overlapping_audible(sends):
    topo = grid_topology(2, 3, 20, 40)
    sim, ch, _ = _channel(topo)
    for node, t in sorted(sends, key=lambda x: x[1]):
        sim.run_until(t)
        if not ch.transmitting(node):
            ch.broadcast(node, 50, "t")
    sim.run_until(10_000)
    log = ch.log
    for rec in log:
        for r, o in rec.outcomes.items():
            others = [
                x for x in log
                if x is not rec and (x.sender == r or x.sender in topo.neighbors(r))
                and x.start < rec.end and rec.start < x.end
            ]
            assert (o is Outcome.COLLIDED) == bool(others)


def test_tx_log_schema(tmp_path, grid):
    sim, ch, _ = _channel(grid)
    ch.broadcast(3, 274, "tarmac", payload="secret")
    path = tmp_path / "tx_log.csv"
    write_tx_log(path, ch.log)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == TX_LOG_COLUMNS == ("sender", "start_us", "duration_us", "bytes", "protocol_kind")
    assert rows[1] == ["3", "0", "1096", "274", "tarmac"]
    assert "secret" not in path.read_text()


def test_channel_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(bitrate_bps=0)
    with pytest.raises(ValueError):
        ChannelConfig(range_dm=-1)

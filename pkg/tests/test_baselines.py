from collections import Counter

from tarmac.config import RunConfig
from tarmac.engine import EventKind
from tarmac.simulation import build_network, run_simulation

S = 1_000_000


def chain(protocol, cols, **kw):
    base = dict(protocol=protocol, rows=1, cols=cols, spacing_m=30, pattern="single_flow",
                source=cols - 1, rate_pps=1, sim_end_us=12 * S, traffic_duration_us=10 * S)
    base.update(kw)
    return RunConfig(**base)


def started(cfg):
    net = build_network(cfg)
    for n in net.nodes:
        n.start()
    return net


# -- shortest path -------------------------------------------------------------

def test_sp_one_hop_costs_four_transmissions():
    res = run_simulation(chain("sp", 2))
    s = res.summary
    assert s.m == s.generated == 10
    assert s.M == 40 and s.M_per_m == 4.0
    assert [r.kind for r in res.records[:4]] == ["sp_rts", "sp_cts", "sp_data", "sp_ack"]
    # bytes per hop: RTS 20 + CTS 14 + DATA 24+32 + ACK 14
    assert s.S_per_m == 104 / 32


def test_sp_multi_hop_closed_form():
    res = run_simulation(chain("sp", 6))
    s = res.summary
    assert s.collisions == 0 and s.delivery_ratio == 1.0
    assert s.M_per_m == 4 * 5
    assert s.S_per_m == 104 * 5 / 32


def test_sp_self_delivery():
    res = run_simulation(chain("sp", 2, source=0))
    assert res.summary.m == 10 and res.summary.M == 0


def test_sp_gives_up_after_retry_limit():
    net = started(chain("sp", 2, sim_end_us=5 * S, traffic_duration_us=S // 2))
    net.nodes[0].on_receive = lambda rec: None   # the next hop is deaf
    net.sim.run_until(6 * S)
    kinds = Counter(r.kind for r in net.channel.log)
    assert kinds == Counter({"sp_rts": 8})       # first try + 7 retries
    assert net.book.drop_counts()["retry_limit"] == 1


def test_sp_retries_after_lost_rts():
    net = started(chain("sp", 2, sim_end_us=5 * S, traffic_duration_us=S // 2))
    sink = net.nodes[0]
    real = sink.on_receive
    state = {"ignored": 0}

    def flaky(rec):
        if rec.kind == "sp_rts" and state["ignored"] < 2:
            state["ignored"] += 1
            return
        real(rec)

    sink.on_receive = flaky
    net.sim.run_until(6 * S)
    kinds = Counter(r.kind for r in net.channel.log)
    assert kinds["sp_rts"] == 3 and kinds["sp_ack"] == 1
    assert len(net.book.delivered) == 1


def test_sp_load_dependent_cost(run):
    light = run(RunConfig(protocol="sp", pattern="single_flow", source=99, rate_pps=1, sim_end_us=30 * S, traffic_duration_us=20 * S))
    heavy = run(RunConfig(protocol="sp", pattern="single_flow", source=99, rate_pps=4, sim_end_us=30 * S, traffic_duration_us=20 * S))
    assert heavy.summary.M > 3 * light.summary.M


# -- intrusion 1 -----------------------------------------------------------------

def test_intrusion1_dummies_match_data_size():
    res = run_simulation(chain("intrusion1", 3, rate_pps=0.5))
    by_kind = {r.payload[0] for r in res.records}
    assert by_kind == {"data", "dummy", "beacon"}
    assert {r.bytes for r in res.records} == {56}
    assert {r.kind for r in res.records} == {"intrusion1"}


def test_intrusion1_lattice_ignores_traffic():
    a = run_simulation(RunConfig(protocol="intrusion1", pattern="none", sim_end_us=30 * S))
    b = run_simulation(RunConfig(protocol="intrusion1", pattern="all_to_sink", sim_end_us=30 * S))
    assert a.attempts == b.attempts
    for n in range(100):
        att = a.attempts[n]
        assert {y - x for x, y in zip(att, att[1:])} == {S}


def test_intrusion1_delivers_and_releases():
    res = run_simulation(chain("intrusion1", 4, rate_pps=0.25, sim_end_us=30 * S, traffic_duration_us=10 * S))
    s = res.summary
    assert s.m == s.generated
    assert res.network.held_ids() == set()


def test_intrusion1_resends_until_overheard():
    net = started(chain("intrusion1", 3, sim_end_us=10 * S, traffic_duration_us=S // 2))
    net.nodes[1].on_receive = lambda rec: None   # parent never takes the packet
    net.sim.run_until(10 * S)
    sent = [r for r in net.channel.log if r.sender == 2 and r.payload[0] == "data"]
    assert len(sent) >= 9
    assert len({r.payload[1].pkt_id for r in sent}) == 1
    assert net.held_ids() == {sent[0].payload[1].pkt_id}


# -- intrusion 2 -----------------------------------------------------------------

def test_intrusion2_holds_one_and_rejects_the_rest():
    net = started(chain("intrusion2", 3, pattern="none"))
    node = net.nodes[2]
    a = net.new_packet(2, 0, 32)
    b = net.new_packet(2, 0, 32)
    for p in (a, b):
        net.book.created(p)
        node.originate(p)
    assert node.held_ids() == {a.pkt_id}
    assert net.book.drop_counts()["held_busy"] == 1


def test_intrusion2_release_on_overhear():
    res = run_simulation(chain("intrusion2", 4, rate_pps=0.2, sim_end_us=30 * S, traffic_duration_us=10 * S))
    assert res.summary.m == res.summary.generated == 2
    assert res.network.held_ids() == set()


def test_intrusion2_inventory_never_exceeds_one():
    net = started(RunConfig(protocol="intrusion2", pattern="all_to_sink", sim_end_us=20 * S, traffic_duration_us=15 * S))
    worst = [0]

    def probe():
        worst[0] = max(worst[0], max(len(n.held_ids()) for n in net.nodes))
        if net.sim.now + 100_000 <= 20 * S:
            net.sim.call_at(net.sim.now + 100_000, EventKind.TIMER, probe)

    net.sim.call_at(0, EventKind.TIMER, probe)
    net.sim.run_until(21 * S)
    assert worst[0] == 1


def test_intrusion2_buffer_size_is_irrelevant():
    base = RunConfig(protocol="intrusion2", pattern="all_to_sink", sim_end_us=20 * S, traffic_duration_us=10 * S)
    a = run_simulation(base.replace(buffer_slots=8))
    b = run_simulation(base.replace(buffer_slots=64))
    assert [(r.sender, r.start) for r in a.records] == [(r.sender, r.start) for r in b.records]

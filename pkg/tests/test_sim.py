import math

import numpy as np
import pytest

from qosroute.kpaths import all_pairs_candidates
from qosroute.netmodel import CostCoefficients, Graph, Link
from qosroute.policies import KOQRA, KSPQR, SOMR, SPF, POLICY_KINDS, PolicyParams, PolicyState
from qosroute.sim import (
    ACK, DATA, TX_DONE, EventQueue, LinkQueue, MetricsSeries, Packet, Simulation, TrafficSource,
    analytic_delay, conservation_check, delivery_delays, enqueue, poisson_interarrival, run,
)

from oracles import diamond, graph_from_edges

UNIT = CostCoefficients((1.0,))


def line_graph(n=3, cap=1e6, prop=0.001, q=50):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], cap=cap, prop=prop, q=q)


def sim_for(g, kind=SPF, traffic=None, duration=10.0, seed=1, K=3, **kw):
    cands = all_pairs_candidates(g, K, UNIT)
    traffic = traffic or TrafficSource.constant(0.0)
    return Simulation(g, PolicyState(kind, cands, PolicyParams()), traffic, duration, seed, **kw)


# ---------------------------------------------------------------- primitives

def test_event_queue_orders_by_time_then_sequence():
    q = EventQueue()
    q.push(2.0, 0, "c")
    q.push(1.0, 0, "a")
    q.push(1.0, 0, "b")
    assert [q.pop()[3] for _ in range(3)] == ["a", "b", "c"]


def test_poisson_mean():
    rng = np.random.default_rng(5)
    gaps = [poisson_interarrival(100.0, rng) for _ in range(100_000)]
    # sd of the sample mean is 1/sqrt(n) relative, 0.3%; 2% is a wide band
    assert np.mean(gaps) == pytest.approx(0.01, rel=0.02)
    rng = np.random.default_rng(6)
    gaps2 = [poisson_interarrival(200.0, rng) for _ in range(100_000)]
    assert np.mean(gaps2) == pytest.approx(np.mean(gaps) / 2, rel=0.02)
    assert min(gaps) > 0 and min(gaps2) > 0


class _EdgeRng:
    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_poisson_never_zero():
    # u = 0 is redrawn; u just below 1 still gives a positive gap
    assert poisson_interarrival(10.0, _EdgeRng([0.0, 0.5])) == pytest.approx(math.log(2) / 10)
    assert poisson_interarrival(10.0, _EdgeRng([np.nextafter(1.0, 0.0)])) > 0
    with pytest.raises(ValueError):
        poisson_interarrival(0.0, _EdgeRng([0.5]))


def _pkt(i, size=1000):
    return Packet(i, DATA, 0, 1, (0, 1), 0.0, size)


def test_enqueue_empty_starts_transmission():
    q = LinkQueue(1e6, 0.0, 3)
    ev = EventQueue()
    assert enqueue(q, _pkt(0), 0.5, ev, 7)
    assert ev.pop() == (0.5 + 0.001, 0, TX_DONE, 7)
    assert q.backlog_bits == 1000


def test_enqueue_full_drops():
    q = LinkQueue(1e6, 0.0, 2)
    ev = EventQueue()
    assert enqueue(q, _pkt(0), 0.0, ev, 0) and enqueue(q, _pkt(1), 0.0, ev, 0)
    assert not enqueue(q, _pkt(2), 0.0, ev, 0)
    assert q.drops == 1 and len(q) == 2 and q.backlog_bits == 2000
    assert len(ev) == 1  # second packet waits for the first


def test_back_to_back_serialization():
    g = graph_from_edges(2, [(0, 1)], cap=1e6, prop=0.0)
    sim = sim_for(g, duration=1.0, record=True)
    for i in range(2):
        sim.metrics.generated += 1
        sim._forward(Packet(i, DATA, 0, 1, (0, 1), 0.0, 1000))
    sim.run()
    done = [d for _, _, d, _, _ in sim.deliveries]
    assert done == [pytest.approx(0.001), pytest.approx(0.002)]


# ---------------------------------------------------------------- runs

def test_zero_rate_gives_all_zero_metrics():
    m = sim_for(line_graph(), duration=20.0).run()
    assert m.generated == m.total_delivered == m.total_dropped == 0
    assert m.delivered == [0] * 4 and m.dropped == [0] * 4 and m.control_bits == [0] * 4
    assert m.mean_delay == [None] * 4


def test_two_hop_delivery_is_analytic():
    g = line_graph(3, cap=1e6, prop=0.001)
    traffic = TrafficSource.constant(2.0, pairs=[(0, 2)])
    sim = sim_for(g, traffic=traffic, duration=200.0, seed=3, record=True, data_size=1000)
    sim.run()
    expected = 2 * (1000 / 1e6 + 0.001)
    assert expected == analytic_delay(g, (0, 1, 2), 1000) == pytest.approx(0.004)
    rows = sorted((c, d - c) for _, c, d, _, _ in sim.deliveries)
    assert len(rows) > 300
    prev = -1.0
    for created, delay in rows:
        if created - prev >= 1000 / 1e6:
            assert abs(delay - expected) < 1e-12
        else:
            # arrived while the previous packet was still being sent
            assert delay > expected
        prev = created


def test_same_seed_same_everything():
    g = diamond()
    traffic = TrafficSource([(0, 300.0), (5, 900.0)])
    runs = []
    for _ in range(2):
        sim = sim_for(g, KOQRA, traffic, duration=10.0, seed=11, record=True, window=1.0)
        runs.append((sim.run().key(), sim.trace))
    assert runs[0] == runs[1]
    other = sim_for(g, KOQRA, traffic, duration=10.0, seed=12, window=1.0).run()
    assert other.key() != runs[0][0]


@pytest.mark.parametrize("kind", POLICY_KINDS)
def test_event_order_bounds_and_conservation(kind):
    g = graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)], cap=2e5, q=10)
    checks = []

    def on_window(sim, in_flight):
        checks.append(conservation_check(sim.metrics, in_flight))

    sim = sim_for(g, kind, TrafficSource.constant(150.0), duration=20.0, seed=2,
                  window=1.0, record=True, on_window=on_window)
    m = sim.run()
    assert m.total_dropped > 0  # queues overflow at this load
    assert checks and all(checks)
    times = [t for t, _, _ in sim.trace]
    assert all(a <= b for a, b in zip(times, times[1:]))
    assert sim.event_times_monotone
    for _, created, done, path, _ in sim.deliveries:
        prop = sum(g.link(u, v).propagation_delay for u, v in zip(path, path[1:]))
        assert done >= created + prop
    assert conservation_check(m, m.in_flight)
    assert sum(m.delivered) == m.total_delivered


def test_drained_run_empties_the_network():
    g = diamond()
    sim = sim_for(g, KSPQR, TrafficSource.constant(400.0), duration=5.0, seed=4, drain=True)
    m = sim.run()
    assert m.in_flight == (0, 0)
    assert m.generated == m.total_delivered + m.total_dropped
    assert m.acks_generated == m.acks_delivered + m.acks_dropped
    assert conservation_check(m, 0)


def test_conservation_check_detects_mismatch():
    m = MetricsSeries(1.0, generated=10, total_delivered=6, total_dropped=1)
    assert conservation_check(m, (3, 0))
    assert not conservation_check(m, (2, 0))
    m.acks_generated = 4
    assert not conservation_check(m, (3, 0))
    assert conservation_check(m, (3, 4))


@pytest.mark.parametrize("kind, acks", [(SPF, False), (SOMR, False), (KSPQR, True), (KOQRA, True)])
def test_acks_only_for_adaptive_policies(kind, acks):
    m = sim_for(diamond(), kind, TrafficSource.constant(50.0), duration=10.0, seed=1).run()
    assert m.total_delivered > 0
    if acks:
        assert m.acks_generated == m.total_delivered
        assert m.total_control_bits == 64 * m.acks_generated > 0
    else:
        assert m.acks_generated == 0 and m.total_control_bits == 0 and sum(m.control_bits) == 0


def test_single_delivery_produces_one_ack_with_its_delay():
    g = line_graph(3)
    sim = sim_for(g, KSPQR, duration=1.0, record=True)
    seen = []
    original = sim.policy.on_ack
    sim.policy.on_ack = lambda s, t, i, d: (seen.append((s, t, i, d)), original(s, t, i, d))
    sim.metrics.generated += 1
    sim._forward(Packet(0, DATA, 0, 2, (0, 1, 2), 0.0, 8192))
    m = sim.run()
    delay = delivery_delays(sim)[0]
    assert delay == pytest.approx(2 * (8192 / 1e6 + 0.001))
    assert m.acks_generated == m.acks_delivered == 1
    assert seen == [(0, 2, 0, delay)]
    assert sim.policy.path_stats(0, 2)[0].delay_estimate == delay


def test_acks_travel_the_reversed_path():
    g = line_graph(3)
    sim = sim_for(g, KSPQR, duration=1.0)
    sim.metrics.generated += 1
    sim._forward(Packet(0, DATA, 0, 2, (0, 1, 2), 0.0, 8192))
    acks = []
    original = sim._forward

    def spy(pkt):
        if pkt.kind == ACK and pkt.hop_index == 0:
            acks.append(pkt)
        original(pkt)

    sim._forward = spy
    sim.run()
    assert [a.path for a in acks] == [(2, 1, 0)]
    assert acks[0].size == 64 and acks[0].carried_delay > 0


def test_phase_schedule_changes_rate():
    g = diamond()
    traffic = TrafficSource([(0.0, 100.0), (10.0, 1000.0), (20.0, 100.0)])
    m = sim_for(g, SPF, traffic, duration=30.0, seed=9, window=10.0).run()
    gen = [d + x for d, x in zip(m.delivered, m.dropped)]
    assert gen[1] > 5 * gen[0] and gen[1] > 5 * gen[2]


def test_koqra_waiting_proxy_sees_local_and_neighbour_queues():
    g = diamond()
    sim = sim_for(g, KOQRA, duration=1.0)
    cs = sim.policy.candidates[(0, 3)]
    assert sim._waiting(cs) == [0.0, 0.0, 0.0]
    # load the first hop of path 0 with two packets
    for i in range(2):
        sim._forward(Packet(i, DATA, 0, 1, (0, 1), 0.0, 8192))
    w = sim._waiting(cs)
    assert w[0] == pytest.approx(2 * 8192 / 1e6) and w[1] == 0.0
    assert w[2] == pytest.approx(2 * 8192 / 1e6)  # (0, 1, 2, 3) shares the first hop
    # a piggybacked advert from node 2 reporting a backlog toward 3
    li = g.link_index(2, 3)
    pos = list(g.out_links(2)).index(li)
    advert = [0.0] * len(g.out_links(2))
    advert[pos] = 0.5
    sim._adverts[(0, 2)] = tuple(advert)
    assert sim._waiting(cs)[1] == pytest.approx(0.5)


def test_run_rejects_invalid_graph():
    bad = Graph(3, (Link(0, 1, 1.0, 0.0, 1, (1.0,)), Link(1, 0, 1.0, 0.0, 1, (1.0,))))
    with pytest.raises(ValueError, match="strongly connected"):
        run(bad, lambda g: PolicyState(SPF, {}), TrafficSource.constant(1.0), 1.0, 0)


def test_run_helper_builds_fresh_policy():
    g = diamond()
    cands = all_pairs_candidates(g, 2, UNIT)
    m = run(g, lambda g: PolicyState(KSPQR, cands), TrafficSource.constant(20.0), 5.0, 1)
    assert m.generated > 0


def test_bad_simulation_settings():
    g = diamond()
    with pytest.raises(ValueError):
        sim_for(g, duration=0.0)
    with pytest.raises(ValueError):
        sim_for(g, data_size=10, ack_size=64)
    with pytest.raises(ValueError):
        TrafficSource([(0.0, -1.0)])

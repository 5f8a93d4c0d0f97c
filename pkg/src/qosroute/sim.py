"""Deterministic discrete-event packet simulator.

Packets are source-routed over a candidate path chosen by the policy at
the sender. Links are FIFO drop-tail queues; ACKs carry the measured
end-to-end delay back along the reversed path and share link capacity
with data.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .netmodel import Graph
from .policies import KOQRA, PolicyState

DATA = 0
ACK = 1

# event kinds
ARRIVAL = 0
TX_DONE = 1
FIRE = 2
WINDOW = 3
PHASE = 4

EVENT_NAMES = {
    ARRIVAL: "arrival-at-node",
    TX_DONE: "transmission-complete",
    FIRE: "traffic-source-fire",
    WINDOW: "metrics-window-close",
    PHASE: "scenario-phase-change",
}


class Packet:
    __slots__ = (
        "id", "kind", "source", "destination", "path", "created_at",
        "size", "carried_delay", "hop_index", "path_index", "flow",
    )

    def __init__(self, id, kind, source, destination, path, created_at, size,
                 carried_delay=0.0, path_index=0, flow=None):
        self.id = id
        self.kind = kind
        self.source = source
        self.destination = destination
        self.path = path  # node tuple
        self.created_at = created_at
        self.size = size
        self.carried_delay = carried_delay
        self.hop_index = 0
        self.path_index = path_index
        self.flow = flow  # (s, t) of the data packet an ACK answers

    def __repr__(self):
        kind = "data" if self.kind == DATA else "ack"
        return f"Packet({self.id}, {kind}, {self.path}, hop={self.hop_index})"


class LinkQueue:
    """FIFO drop-tail queue in front of one directed link.

    The head packet is the one being transmitted; ``backlog_bits`` counts
    it until its transmission completes.
    """

    __slots__ = ("capacity", "prop", "limit", "packets", "backlog_bits", "busy_until", "drops")

    def __init__(self, capacity: float, prop: float, limit: int):
        self.capacity = capacity
        self.prop = prop
        self.limit = limit
        self.packets = deque()
        self.backlog_bits = 0
        self.busy_until = 0.0
        self.drops = 0

    def __len__(self):
        return len(self.packets)

    def waiting_time(self) -> float:
        return self.backlog_bits / self.capacity


class EventQueue:
    """Heap of ``(time, sequence, kind, payload)``; pops in (time, sequence) order."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def push(self, time: float, kind: int, payload=None) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf


def poisson_interarrival(lam: float, rng) -> float:
    """Exponential gap with mean ``1/lam`` from ``-ln(u)/lam``, u in (0, 1)."""
    if not lam > 0:
        raise ValueError("rate must be > 0")
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return -math.log(u) / lam


def enqueue(q: LinkQueue, pkt: Packet, now: float, events: EventQueue | None = None, link_id=None) -> bool:
    """Admit ``pkt`` to ``q``; returns False (and counts a drop) when full.

    If the link was idle, its transmission-complete event is scheduled.
    """
    if len(q.packets) >= q.limit:
        q.drops += 1
        return False
    q.packets.append(pkt)
    q.backlog_bits += pkt.size
    if len(q.packets) == 1:
        q.busy_until = now + pkt.size / q.capacity
        if events is not None:
            events.push(q.busy_until, TX_DONE, link_id)
    return True


@dataclass
class TrafficSource:
    """Network-wide Poisson source with a piecewise-constant rate.

    ``phases`` is a list of ``(start_time, rate)``; each firing picks an
    ordered pair uniformly from ``pairs`` (all ordered pairs by default).
    """

    phases: list = field(default_factory=lambda: [(0.0, 0.0)])
    pairs: list | None = None

    def __post_init__(self):
        self.phases = sorted((float(t), float(r)) for t, r in self.phases)
        if not self.phases or self.phases[0][0] != 0.0:
            self.phases.insert(0, (0.0, 0.0))
        for t, r in self.phases:
            if t < 0 or r < 0 or not math.isfinite(r):
                raise ValueError(f"bad traffic phase ({t}, {r})")

    @classmethod
    def constant(cls, rate: float, pairs=None) -> "TrafficSource":
        return cls([(0.0, rate)], pairs)

    def rate_at(self, t: float) -> float:
        rate = 0.0
        for start, r in self.phases:
            if start <= t:
                rate = r
        return rate

    @property
    def change_times(self) -> list[float]:
        return [t for t, _ in self.phases if t > 0]


@dataclass
class MetricsSeries:
    window: float
    window_start: list = field(default_factory=list)
    mean_delay: list = field(default_factory=list)  # None when nothing delivered
    delivered: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    control_bits: list = field(default_factory=list)
    # generated/delivered/dropped/in-flight per window close, data and ack
    snapshots: list = field(default_factory=list)
    generated: int = 0
    total_delivered: int = 0
    total_dropped: int = 0
    acks_generated: int = 0
    acks_delivered: int = 0
    acks_dropped: int = 0
    control_packets: int = 0
    total_control_bits: int = 0
    in_flight: tuple = (0, 0)
    delay_sum: float = 0.0

    @property
    def mean_delay_overall(self) -> float | None:
        if self.total_delivered == 0:
            return None
        return self.delay_sum / self.total_delivered

    def key(self) -> tuple:
        """Everything observable, for bit-exact comparisons."""
        return (
            self.window, tuple(self.window_start), tuple(self.mean_delay), tuple(self.delivered),
            tuple(self.dropped), tuple(self.control_bits), tuple(self.snapshots),
            self.generated, self.total_delivered, self.total_dropped, self.acks_generated,
            self.acks_delivered, self.acks_dropped, self.total_control_bits,
            self.in_flight, self.delay_sum,
        )


def conservation_check(m: MetricsSeries, in_flight) -> bool:
    """``generated == delivered + dropped + in_flight`` for data and for ACKs.

    ``in_flight`` is a ``(data, ack)`` pair or a single int meaning data only
    with no ACKs in flight.
    """
    if isinstance(in_flight, int):
        in_flight = (in_flight, 0)
    data_fl, ack_fl = in_flight
    return (
        m.generated == m.total_delivered + m.total_dropped + data_fl
        and m.acks_generated == m.acks_delivered + m.acks_dropped + ack_fl
    )


class Simulation:
    """One single-threaded simulation run.

    Two independent random streams are derived from ``seed``: one drives the
    traffic process, the other path selection, so all policies see the same
    offered traffic for a given seed.
    """

    def __init__(
        self,
        graph: Graph,
        policy: PolicyState,
        traffic: TrafficSource,
        duration: float,
        seed: int,
        window: float = 5.0,
        data_size: int = 8192,
        ack_size: int = 64,
        drain: bool = False,
        record: bool = False,
        on_window: Callable | None = None,
    ):
        if not duration > 0:
            raise ValueError("duration must be > 0")
        if not window > 0:
            raise ValueError("window must be > 0")
        if not data_size >= ack_size > 0:
            raise ValueError("need data_size >= ack_size > 0")
        self.graph = graph
        self.policy = policy
        self.traffic = traffic
        self.duration = float(duration)
        self.window = float(window)
        self.data_size = data_size
        self.ack_size = ack_size
        self.drain = drain
        self.record = record
        self.on_window = on_window
        traffic_seed, route_seed = np.random.SeedSequence(seed).spawn(2)
        self.traffic_rng = np.random.default_rng(traffic_seed)
        self.route_rng = np.random.default_rng(route_seed)

        self.queues = [LinkQueue(l.capacity, l.propagation_delay, l.queue_capacity) for l in graph.links]
        self.link_index = {(l.src, l.dst): i for i, l in enumerate(graph.links)}
        self.events = EventQueue()
        self.now = 0.0
        self.metrics = MetricsSeries(self.window)
        self._ids = itertools.count()
        self._propagating = [0, 0]
        self._epoch = 0
        self._rate = 0.0
        self._pairs = traffic.pairs or [
            (s, t) for s in range(graph.node_count) for t in range(graph.node_count) if s != t
        ]
        # KOQRA: last queue state piggybacked by each neighbour, keyed (receiver, sender)
        self._koqra = policy.kind == KOQRA
        self._adverts: dict = {}
        self._out_pos = {}
        for v in range(graph.node_count):
            for pos, li in enumerate(graph.out_links(v)):
                self._out_pos[li] = pos
        self.event_times_monotone = True
        self.events_processed = 0
        self.trace: list = []
        self.deliveries: list = []
        self._win = [0, 0.0, 0, 0]  # delivered, delay sum, dropped, control bits

    # ---------------------------------------------------------------- traffic
    def _schedule_fire(self):
        if self._rate > 0:
            gap = poisson_interarrival(self._rate, self.traffic_rng)
            self.events.push(self.now + gap, FIRE, self._epoch)

    def _fire(self):
        rng = self.traffic_rng
        s, t = self._pairs[int(rng.random() * len(self._pairs))]
        self._schedule_fire()
        policy = self.policy
        cs = policy.candidates[(s, t)]
        if not len(cs):
            return
        idx = policy.choose(s, t, self.route_rng, self._waiting if self._koqra else None)
        m = self.metrics
        m.generated += 1
        pkt = Packet(next(self._ids), DATA, s, t, cs.paths[idx].nodes, self.now, self.data_size,
                     path_index=idx)
        self._forward(pkt)

    def _waiting(self, cs) -> list[float]:
        """Waiting-time proxy per candidate path, as seen by its source."""
        out = []
        queues = self.queues
        for p in cs.paths:
            nodes = p.nodes
            li = self.link_index[(nodes[0], nodes[1])]
            w = queues[li].backlog_bits / queues[li].capacity
            if len(nodes) > 2:
                advert = self._adverts.get((nodes[0], nodes[1]))
                if advert is not None:
                    w += advert[self._out_pos[self.link_index[(nodes[1], nodes[2])]]]
            out.append(w)
        return out

    # ---------------------------------------------------------------- packets
    def _forward(self, pkt: Packet):
        path = pkt.path
        h = pkt.hop_index
        li = self.link_index[(path[h], path[h + 1])]
        if not enqueue(self.queues[li], pkt, self.now, self.events, li):
            m = self.metrics
            if pkt.kind == DATA:
                m.total_dropped += 1
                self._win[2] += 1
            else:
                m.acks_dropped += 1

    def _tx_done(self, li: int):
        q = self.queues[li]
        pkt = q.packets.popleft()
        q.backlog_bits -= pkt.size
        pkt.hop_index += 1
        if self._koqra:
            # snapshot of the sender's queues travels with the packet
            sender = pkt.path[pkt.hop_index - 1]
            qs = self.queues
            advert = tuple(qs[j].backlog_bits / qs[j].capacity for j in self.graph.out_links(sender))
            self.events.push(self.now + q.prop, ARRIVAL, (pkt, advert))
        else:
            self.events.push(self.now + q.prop, ARRIVAL, (pkt, None))
        self._propagating[pkt.kind] += 1
        if q.packets:
            q.busy_until = self.now + q.packets[0].size / q.capacity
            self.events.push(q.busy_until, TX_DONE, li)

    def _arrive(self, pkt: Packet, advert):
        self._propagating[pkt.kind] -= 1
        node = pkt.path[pkt.hop_index]
        if advert is not None:
            self._adverts[(node, pkt.path[pkt.hop_index - 1])] = advert
        if pkt.hop_index < len(pkt.path) - 1:
            self._forward(pkt)
            return
        m = self.metrics
        if pkt.kind == ACK:
            m.acks_delivered += 1
            s, t = pkt.flow
            self.policy.on_ack(s, t, pkt.path_index, pkt.carried_delay)
            return
        delay = self.now - pkt.created_at
        m.total_delivered += 1
        m.delay_sum += delay
        w = self._win
        w[0] += 1
        w[1] += delay
        if self.record:
            self.deliveries.append((pkt.id, pkt.created_at, self.now, pkt.path, pkt.path_index))
        if self.policy.adaptive:
            ack = Packet(next(self._ids), ACK, pkt.destination, pkt.source, pkt.path[::-1],
                         self.now, self.ack_size, carried_delay=delay,
                         path_index=pkt.path_index, flow=(pkt.source, pkt.destination))
            m.acks_generated += 1
            m.control_packets += 1
            m.total_control_bits += self.ack_size
            w[3] += self.ack_size
            self._forward(ack)

    # ---------------------------------------------------------------- metrics
    def in_flight(self) -> tuple[int, int]:
        """Packets queued or propagating, counted from the link state."""
        data = ack = 0
        for q in self.queues:
            for p in q.packets:
                if p.kind == DATA:
                    data += 1
                else:
                    ack += 1
        return data + self._propagating[DATA], ack + self._propagating[ACK]

    def _close_window(self, start: float):
        m = self.metrics
        delivered, dsum, dropped, cbits = self._win
        m.window_start.append(start)
        m.mean_delay.append(dsum / delivered if delivered else None)
        m.delivered.append(delivered)
        m.dropped.append(dropped)
        m.control_bits.append(cbits)
        fl = self.in_flight()
        m.snapshots.append((m.generated, m.total_delivered, m.total_dropped, fl[0],
                            m.acks_generated, m.acks_delivered, m.acks_dropped, fl[1]))
        self._win = [0, 0.0, 0, 0]
        if self.on_window is not None:
            self.on_window(self, fl)

    # ---------------------------------------------------------------- loop
    def run(self) -> MetricsSeries:
        ev = self.events
        for t in self.traffic.change_times:
            if t < self.duration:
                ev.push(t, PHASE, None)
        n_windows = int(math.ceil(self.duration / self.window - 1e-12))
        for k in range(1, n_windows + 1):
            ev.push(min(k * self.window, self.duration), WINDOW, (k - 1) * self.window)
        self._rate = self.traffic.rate_at(0.0)
        self._schedule_fire()

        heap = ev._heap
        pop = heapq.heappop
        last = 0.0
        record = self.record
        trace = self.trace
        end = self.duration
        while heap:
            t, seq, kind, payload = heap[0]
            if t > end:
                if not self.drain:
                    break
            pop(heap)
            if t < last:
                self.event_times_monotone = False
            last = t
            self.now = t
            self.events_processed += 1
            if record:
                trace.append((t, seq, kind))
            if kind == ARRIVAL:
                self._arrive(*payload)
            elif kind == TX_DONE:
                self._tx_done(payload)
            elif kind == FIRE:
                if payload == self._epoch and t <= end:
                    self._fire()
            elif kind == WINDOW:
                self._close_window(payload)
            elif kind == PHASE:
                self._epoch += 1
                self._rate = self.traffic.rate_at(t)
                self._schedule_fire()
        if self.drain and self._win != [0, 0.0, 0, 0]:
            # deliveries after the horizon go into one trailing window
            self._close_window(end)
        self.metrics.in_flight = self.in_flight()
        return self.metrics


def run(
    g: Graph,
    policy_factory: Callable[[Graph], PolicyState],
    traffic: TrafficSource,
    duration: float,
    seed: int,
    **kwargs,
) -> MetricsSeries:
    """Build a fresh policy with ``policy_factory(g)`` and simulate for ``duration`` seconds."""
    from .netmodel import validate_graph

    problems = validate_graph(g)
    if problems:
        raise ValueError("invalid graph: " + "; ".join(problems))
    return Simulation(g, policy_factory(g), traffic, duration, seed, **kwargs).run()


def delivery_delays(sim: Simulation) -> list[float]:
    """Per-packet delays from a run made with ``record=True``."""
    return [done - created for _, created, done, _, _ in sim.deliveries]


def analytic_delay(g: Graph, nodes: Sequence[int], size: int) -> float:
    """Transmission plus propagation along an empty path."""
    total = 0.0
    for u, v in zip(nodes, nodes[1:]):
        link = g.link(u, v)
        total += size / link.capacity + link.propagation_delay
    return total

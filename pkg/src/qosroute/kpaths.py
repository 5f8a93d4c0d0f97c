"""K best loopless paths per source/destination pair."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

from .netmodel import CostCoefficients, Graph, edge_cost, is_additive, static_cost


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    static_cost: float

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    def edges(self):
        return zip(self.nodes, self.nodes[1:])


@dataclass(frozen=True)
class CandidateSet:
    source: int
    destination: int
    paths: tuple[Path, ...]

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i) -> Path:
        return self.paths[i]

    @property
    def costs(self) -> list[float]:
        return [p.static_cost for p in self.paths]

    def format(self) -> str:
        lines = [f"{self.source} -> {self.destination}: {len(self.paths)} path(s)"]
        for i, p in enumerate(self.paths):
            lines.append(f"  [{i}] cost={p.static_cost:g} " + " ".join(map(str, p.nodes)))
        return "\n".join(lines)


def _edge_costs(g: Graph, c: CostCoefficients) -> list[float]:
    return [edge_cost(g, link, c) for link in g.links]


def dijkstra(
    g: Graph,
    s: int,
    t: int,
    costs: Sequence[float] | None = None,
    banned_nodes=frozenset(),
    banned_edges=frozenset(),
    to_target: Sequence[float] | None = None,
) -> tuple[float, tuple[int, ...]] | None:
    """Cheapest s->t path, ties broken by lexicographic node sequence.

    ``costs`` holds one additive cost per entry of ``g.links`` (defaults to
    hop count). ``to_target`` optionally gives each node's unrestricted
    distance to t; it is used as an A* bound, which stays exact when
    nodes or edges are banned. Returns ``(cost, nodes)`` or None when t is
    unreachable.
    """
    if costs is None:
        costs = [1.0] * len(g.links)
    links = g.links
    h = to_target
    heap = [(h[s] if h else 0.0, (s,), 0.0)]
    done = set()
    while heap:
        _, path, d = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == t:
            return d, path
        for i in g.out_links(u):
            v = links[i].dst
            if v in done or v in banned_nodes or (u, v) in banned_edges:
                continue
            nd = d + costs[i]
            if h is None:
                heapq.heappush(heap, (nd, path + (v,), nd))
            elif h[v] != math.inf:
                heapq.heappush(heap, (nd + h[v], path + (v,), nd))
    return None


def distances_to(g: Graph, t: int, costs: Sequence[float]) -> list[float]:
    """Distance from every node to ``t`` (reverse Dijkstra)."""
    into = [[] for _ in range(g.node_count)]
    for i, link in enumerate(g.links):
        into[link.dst].append((link.src, costs[i]))
    dist = [math.inf] * g.node_count
    dist[t] = 0.0
    heap = [(0.0, t)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for u, c in into[v]:
            if d + c < dist[u]:
                dist[u] = d + c
                heapq.heappush(heap, (d + c, u))
    return dist


def _yen(g, s, t, K, costs, to_target=None):
    """Yen's deviation search; returns up to K (cost, nodes) in (cost, lex) order."""
    first = dijkstra(g, s, t, costs)
    if first is None:
        return []
    if K > 1 and to_target is None:
        to_target = distances_to(g, t, costs)
    found = [first]
    found_set = {first[1]}
    candidates = []
    queued = set()
    while len(found) < K:
        _, last = found[-1]
        root_cost = 0.0
        for i in range(len(last) - 1):
            spur = last[i]
            root = last[: i + 1]
            banned_edges = {
                (p[i], p[i + 1]) for _, p in found if len(p) > i + 1 and p[: i + 1] == root
            }
            spur_res = dijkstra(g, spur, t, costs, frozenset(root[:-1]), banned_edges, to_target)
            if spur_res is not None:
                total = root[:-1] + spur_res[1]
                if total not in found_set and total not in queued:
                    queued.add(total)
                    heapq.heappush(candidates, (root_cost + spur_res[0], total))
            root_cost += costs[g.link_index(last[i], last[i + 1])]
        if not candidates:
            break
        cost, nodes = heapq.heappop(candidates)
        queued.discard(nodes)
        found.append((cost, nodes))
        found_set.add(nodes)
    return found


def k_shortest_paths(
    g: Graph, s: int, t: int, K: int, c: CostCoefficients | None = None, *, _cache=None
) -> CandidateSet:
    """The K cheapest loopless s->t paths, sorted by (static cost, node sequence).

    Exact when every metric with a non-zero coefficient is additive.
    Otherwise a pool of 4K paths is drawn under an additive surrogate
    cost and re-ranked by the true static cost, which is a heuristic.
    An unreachable destination gives an empty set.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if s == t:
        raise ValueError("source and destination must differ")
    if c is None:
        c = CostCoefficients.unit(g.m)
    if _cache is None:
        costs, to_target = _edge_costs(g, c), None
    else:
        costs, to_target = _cache
    if is_additive(g, c):
        raw = _yen(g, s, t, K, costs, to_target)
        paths = [Path(nodes, static_cost(g, nodes, c)) for _, nodes in raw]
    else:
        raw = _yen(g, s, t, 4 * K, costs, to_target)
        paths = [Path(nodes, static_cost(g, nodes, c)) for _, nodes in raw]
        paths.sort(key=lambda p: (p.static_cost, p.nodes))
        paths = paths[:K]
    return CandidateSet(s, t, tuple(paths))


def all_pairs_candidates(g: Graph, K: int, c: CostCoefficients | None = None) -> dict:
    """Candidate sets for every ordered pair ``(s, t)`` with s != t."""
    if c is None:
        c = CostCoefficients.unit(g.m)
    costs = _edge_costs(g, c)
    table = {}
    for t in range(g.node_count):
        cache = (costs, distances_to(g, t, costs) if K > 1 else None)
        for s in range(g.node_count):
            if s != t:
                table[(s, t)] = k_shortest_paths(g, s, t, K, c, _cache=cache)
    return dict(sorted(table.items()))

"""Network graph, topology files and the static path cost."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"
MINMAX = "min-max"
METRIC_KINDS = (ADDITIVE, MULTIPLICATIVE, MINMAX)


class TopologyError(ValueError):
    """Raised when a topology file cannot be turned into a graph."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    capacity: float  # bits/s
    propagation_delay: float  # s
    queue_capacity: int  # packets
    weights: tuple[float, ...]


@dataclass(frozen=True)
class CostCoefficients:
    """Per-metric coefficients of the linear static cost."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("at least one coefficient is required")
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError(f"coefficients must be finite and >= 0: {vals}")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one coefficient must be > 0")

    @classmethod
    def unit(cls, m: int = 1) -> "CostCoefficients":
        return cls((1.0,) + (0.0,) * (m - 1))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph with per-link QoS weight vectors.

    Built once and never mutated, so one instance can be shared by any
    number of simulations.
    """

    node_count: int
    links: tuple[Link, ...]
    metric_kinds: tuple[str, ...] = (ADDITIVE,)
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        adj = [[] for _ in range(self.node_count)]
        index = {}
        for i, link in enumerate(self.links):
            if 0 <= link.src < self.node_count:
                adj[link.src].append(i)
            index.setdefault((link.src, link.dst), i)
        object.__setattr__(self, "_adj", tuple(tuple(a) for a in adj))
        object.__setattr__(self, "_index", index)

    @property
    def m(self) -> int:
        return len(self.metric_kinds)

    def out_links(self, node: int) -> tuple[int, ...]:
        """Indices into ``links`` of the links leaving ``node``."""
        return self._adj[node]

    def neighbors(self, node: int) -> list[int]:
        return [self.links[i].dst for i in self._adj[node]]

    def link_index(self, u: int, v: int) -> int:
        try:
            return self._index[(u, v)]
        except KeyError:
            raise KeyError(f"no link {u}->{v}") from None

    def link(self, u: int, v: int) -> Link:
        return self.links[self.link_index(u, v)]

    def has_link(self, u: int, v: int) -> bool:
        return (u, v) in self._index

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.node_count, self.links, self.metric_kinds) == (
            other.node_count,
            other.links,
            other.metric_kinds,
        )

    def __hash__(self):
        return hash((self.node_count, self.links, self.metric_kinds))


def _parse_number(text: str, lineno: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise TopologyError(f"bad {what} value {text!r}", lineno) from None
    if not math.isfinite(value):
        raise TopologyError(f"{what} must be finite", lineno)
    return value


def load_topology(text: str) -> Graph:
    """Parse topology text into a graph with every link expanded both ways.

    Format::

        nodes <N>
        [metrics <kind>,<kind>,...]
        <u> <v> cap=<bits/s> prop=<seconds> q=<packets> w=<c1,...,cm>

    ``#`` starts a comment.  Metric kinds default to all additive.
    """
    node_count = None
    kinds = None
    physical = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "nodes":
            if node_count is not None:
                raise TopologyError("duplicate 'nodes' header", lineno)
            if len(tokens) != 2:
                raise TopologyError("expected 'nodes <N>'", lineno)
            try:
                node_count = int(tokens[1])
            except ValueError:
                raise TopologyError(f"bad node count {tokens[1]!r}", lineno) from None
            if node_count <= 0:
                raise TopologyError("node count must be positive", lineno)
            continue
        if node_count is None:
            raise TopologyError("'nodes <N>' header must come first", lineno)
        if tokens[0] == "metrics":
            if kinds is not None or physical:
                raise TopologyError("'metrics' must follow the header once", lineno)
            if len(tokens) != 2:
                raise TopologyError("expected 'metrics <kind>,...'", lineno)
            kinds = tuple(tokens[1].split(","))
            bad = [k for k in kinds if k not in METRIC_KINDS]
            if bad:
                raise TopologyError(f"unknown metric kind(s) {bad}", lineno)
            continue

        if len(tokens) != 6:
            raise TopologyError("expected '<u> <v> cap= prop= q= w='", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise TopologyError("node ids must be integers", lineno) from None
        for node in (u, v):
            if not 0 <= node < node_count:
                raise TopologyError(
                    f"dangling node reference {node} (graph has {node_count} nodes)",
                    lineno,
                )
        if u == v:
            raise TopologyError(f"self-loop on node {u}", lineno)
        attrs = {}
        for tok in tokens[2:]:
            key, sep, value = tok.partition("=")
            if not sep or key not in ("cap", "prop", "q", "w") or key in attrs:
                raise TopologyError(f"bad attribute {tok!r}", lineno)
            attrs[key] = value
        if len(attrs) != 4:
            raise TopologyError("missing link attribute", lineno)
        cap = _parse_number(attrs["cap"], lineno, "cap")
        if cap <= 0:
            raise TopologyError("capacity must be positive", lineno)
        prop = _parse_number(attrs["prop"], lineno, "prop")
        if prop < 0:
            raise TopologyError("propagation delay must be >= 0", lineno)
        try:
            q = int(attrs["q"])
        except ValueError:
            raise TopologyError(f"bad queue capacity {attrs['q']!r}", lineno) from None
        if q <= 0:
            raise TopologyError("queue capacity must be positive", lineno)
        weights = tuple(_parse_number(w, lineno, "weight") for w in attrs["w"].split(","))
        if any(w < 0 for w in weights):
            raise TopologyError("weights must be >= 0", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise TopologyError(f"duplicate link {u}-{v}", lineno)
        seen.add(key)
        physical.append((lineno, u, v, cap, prop, q, weights))

    if node_count is None:
        raise TopologyError("missing 'nodes <N>' header")
    if kinds is None:
        m = len(physical[0][6]) if physical else 1
        kinds = (ADDITIVE,) * m
    links = []
    for lineno, u, v, cap, prop, q, weights in physical:
        if len(weights) != len(kinds):
            raise TopologyError(
                f"expected {len(kinds)} weight components, got {len(weights)}", lineno
            )
        links.append(Link(u, v, cap, prop, q, weights))
        links.append(Link(v, u, cap, prop, q, weights))
    return Graph(node_count, tuple(links), kinds)


def dump_topology(g: Graph) -> str:
    """Serialize a graph built by :func:`load_topology` back to text.

    Floats are written with ``repr`` so a load/dump cycle is lossless.
    """
    lines = [f"nodes {g.node_count}"]
    if any(k != ADDITIVE for k in g.metric_kinds):
        lines.append("metrics " + ",".join(g.metric_kinds))
    done = set()
    for link in g.links:
        key = (min(link.src, link.dst), max(link.src, link.dst))
        if key in done:
            continue
        done.add(key)
        w = ",".join(repr(x) for x in link.weights)
        lines.append(
            f"{link.src} {link.dst} cap={link.capacity!r} prop={link.propagation_delay!r} "
            f"q={link.queue_capacity} w={w}"
        )
    return "\n".join(lines) + "\n"


def path_metrics(g: Graph, nodes: Sequence[int]) -> list[float]:
    """Aggregate each metric along a node sequence (sum / product / min)."""
    agg = []
    for kind in g.metric_kinds:
        agg.append({ADDITIVE: 0.0, MULTIPLICATIVE: 1.0, MINMAX: math.inf}[kind])
    for u, v in zip(nodes, nodes[1:]):
        w = g.link(u, v).weights
        for i, kind in enumerate(g.metric_kinds):
            if kind == ADDITIVE:
                agg[i] += w[i]
            elif kind == MULTIPLICATIVE:
                agg[i] *= w[i]
            else:
                agg[i] = min(agg[i], w[i])
    return agg


def static_cost(g: Graph, path, c: CostCoefficients) -> float:
    """Static cost of a path: per-kind aggregation, then a linear combination.

    Min-max metrics (bandwidth-like) contribute through the reciprocal of
    the bottleneck value, so a wider bottleneck gives a lower cost. An empty
    path has a zero min-max contribution.

    ``path`` may be a :class:`~qosroute.kpaths.Path` or a node sequence.
    """
    nodes = getattr(path, "nodes", path)
    if len(c) != g.m:
        raise ValueError(f"{len(c)} coefficients for {g.m} metrics")
    for u, v in zip(nodes, nodes[1:]):
        if not g.has_link(u, v):
            raise KeyError(f"path edge {u}->{v} is not in the graph")
    total = 0.0
    for coef, kind, value in zip(c.values, g.metric_kinds, path_metrics(g, nodes)):
        if coef == 0.0:
            continue
        if kind == MINMAX:
            value = 0.0 if value == math.inf else (math.inf if value == 0 else 1.0 / value)
        total += coef * value
    return total


def edge_cost(g: Graph, link: Link, c: CostCoefficients) -> float:
    """Per-edge additive cost used by shortest-path searches.

    Exact for additive metrics; multiplicative and min-max metrics are
    replaced by an additive surrogate (``w`` and ``1/w`` respectively).
    """
    total = 0.0
    for coef, kind, w in zip(c.values, g.metric_kinds, link.weights):
        if coef == 0.0:
            continue
        if kind == MINMAX:
            w = math.inf if w == 0 else 1.0 / w
        total += coef * w
    return total


def is_additive(g: Graph, c: CostCoefficients) -> bool:
    return all(k == ADDITIVE or coef == 0 for k, coef in zip(g.metric_kinds, c.values))


def _reachable(g: Graph, start: int, reverse: bool = False) -> set[int]:
    succ = [[] for _ in range(g.node_count)]
    for link in g.links:
        if 0 <= link.src < g.node_count and 0 <= link.dst < g.node_count:
            if reverse:
                succ[link.dst].append(link.src)
            else:
                succ[link.src].append(link.dst)
    seen = {start}
    todo = deque([start])
    while todo:
        n = todo.popleft()
        for nxt in succ[n]:
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def validate_graph(g: Graph) -> list[str]:
    """Return every invariant violation found; an empty list means valid."""
    problems = []
    if g.node_count <= 0:
        return ["graph has no nodes"]
    if not g.metric_kinds:
        problems.append("no metrics declared")
    for k in g.metric_kinds:
        if k not in METRIC_KINDS:
            problems.append(f"unknown metric kind {k!r}")
    pairs = set()
    for i, link in enumerate(g.links):
        where = f"link #{i} ({link.src}->{link.dst})"
        if not (0 <= link.src < g.node_count and 0 <= link.dst < g.node_count):
            problems.append(f"{where}: endpoint out of range")
        if link.src == link.dst:
            problems.append(f"{where}: self-loop")
        if (link.src, link.dst) in pairs:
            problems.append(f"{where}: duplicate link")
        pairs.add((link.src, link.dst))
        if not link.capacity > 0:
            problems.append(f"{where}: capacity must be > 0")
        if not link.propagation_delay >= 0:
            problems.append(f"{where}: negative propagation delay")
        if link.queue_capacity <= 0:
            problems.append(f"{where}: queue capacity must be > 0")
        if len(link.weights) != len(g.metric_kinds):
            problems.append(f"{where}: expected {len(g.metric_kinds)} weights")
        if any(not (w >= 0 and math.isfinite(w)) for w in link.weights):
            problems.append(f"{where}: weights must be finite and >= 0")
    fwd = _reachable(g, 0)
    back = _reachable(g, 0, reverse=True)
    missing = sorted(set(range(g.node_count)) - (fwd & back))
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        problems.append(f"graph is not strongly connected (unreached nodes: {shown})")
    return problems

"""Regenerate src/qosroute/data/nttnet.topo.

57 nodes laid out along an elongated arc, joined by a Euclidean minimum
spanning tree plus the shortest remaining node pairs until 162 links
exist. Propagation delays scale with distance into [1 ms, 5 ms].

    python tools/make_nttnet.py > src/qosroute/data/nttnet.topo
"""

import sys

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform

N_NODES = 57
N_LINKS = 162
MAX_DEGREE = 9
CAPACITY = 1.0e6
QUEUE = 100
SEED = 57


def layout(rng):
    t = np.sort(rng.uniform(0.0, 1.0, N_NODES))
    angle = 0.9 * np.pi * t
    radius = 10.0 + rng.normal(0.0, 0.9, N_NODES)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def build(rng):
    pos = layout(rng)
    dist = squareform(pdist(pos))
    mst = minimum_spanning_tree(dist).tocoo()
    edges = {tuple(sorted((int(u), int(v)))) for u, v in zip(mst.row, mst.col)}
    deg = np.zeros(N_NODES, dtype=int)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    iu, ju = np.triu_indices(N_NODES, k=1)
    for k in np.argsort(dist[iu, ju], kind="stable"):
        if len(edges) == N_LINKS:
            break
        u, v = int(iu[k]), int(ju[k])
        if (u, v) in edges or deg[u] >= MAX_DEGREE or deg[v] >= MAX_DEGREE:
            continue
        edges.add((u, v))
        deg[u] += 1
        deg[v] += 1
    lengths = np.array([dist[u, v] for u, v in sorted(edges)])
    lo, hi = lengths.min(), lengths.max()
    props = {e: round(0.001 + 0.004 * (dist[e] - lo) / (hi - lo), 4) for e in sorted(edges)}
    return sorted(edges), props


def main(out=sys.stdout):
    edges, props = build(np.random.default_rng(SEED))
    assert len(edges) == N_LINKS
    out.write(
        "# 57-node / 162-link backbone sized like NTTnet (synthetic layout, see README)\n"
        f"# generated by tools/make_nttnet.py (seed {SEED})\n"
        f"nodes {N_NODES}\n"
    )
    for u, v in edges:
        out.write(f"{u} {v} cap={CAPACITY:g} prop={props[(u, v)]:g} q={QUEUE} w=1\n")


if __name__ == "__main__":
    main()

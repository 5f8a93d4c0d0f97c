"""Two-stage adaptive QoS routing: K best static paths, then learned traffic splitting."""

from .kpaths import CandidateSet, Path, all_pairs_candidates, k_shortest_paths
from .netmodel import (
    CostCoefficients, Graph, Link, TopologyError, dump_topology, load_topology,
    static_cost, validate_graph,
)
from .policies import (
    KOQRA, KSPQR, SOMR, SPF, PathStats, PolicyParams, PolicyState, koqra_distribution,
    kspqr_distribution, q_update, select_path, somr_select, spf_select,
)
from .sim import MetricsSeries, Simulation, TrafficSource, conservation_check, run

__version__ = "0.1.0"


def bundled_topology() -> Graph:
    """The 57-node, 162-link backbone shipped with the package."""
    from .scenario import DATA_DIR

    return load_topology((DATA_DIR / "nttnet.topo").read_text())

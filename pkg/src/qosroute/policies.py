"""Path-selection policies: SPF, SOMR, KSPQR and KOQRA.

All four share one interface (:class:`PolicyState`). The adaptive pair
(KSPQR, KOQRA) learn one end-to-end delay estimate per candidate path from
ACKs; the baselines ignore ACKs entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .kpaths import CandidateSet

SPF = "SPF"
SOMR = "SOMR"
KSPQR = "KSPQR"
KOQRA = "KOQRA"
POLICY_KINDS = (SPF, SOMR, KSPQR, KOQRA)
ADAPTIVE_KINDS = (KSPQR, KOQRA)

STATIC_SEEDED = "static-cost-seeded"
OPTIMISTIC = "optimistic-zero-replaced"

DIST_TOL = 1e-9


@dataclass(frozen=True)
class PathStats:
    delay_estimate: float = 0.0
    sample_count: int = 0


@dataclass(frozen=True)
class PolicyParams:
    p_max: float = 0.9
    eta: float = 0.3
    alpha: float = 2.0
    beta: float = 1.0
    initial_estimate_mode: str = STATIC_SEEDED
    nominal_hop_delay: float = 0.02

    def __post_init__(self):
        if not 0 < self.p_max <= 1:
            raise ValueError(f"p_max must be in (0, 1], got {self.p_max}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.initial_estimate_mode not in (STATIC_SEEDED, OPTIMISTIC):
            raise ValueError(f"unknown initial_estimate_mode {self.initial_estimate_mode!r}")
        if not (self.nominal_hop_delay > 0 and math.isfinite(self.nominal_hop_delay)):
            raise ValueError("nominal_hop_delay must be > 0")


def q_update(stats: PathStats, measured_delay: float, eta: float) -> PathStats:
    """Move a path's delay estimate toward one measured end-to-end delay.

    The first sample replaces the initial estimate; later samples are
    blended in as an exponential moving average with rate ``eta``.
    """
    if not (measured_delay > 0 and math.isfinite(measured_delay)):
        raise ValueError(f"measured delay must be finite and > 0, got {measured_delay}")
    if stats.sample_count == 0:
        est = measured_delay
    else:
        est = (1.0 - eta) * stats.delay_estimate + eta * measured_delay
    return PathStats(est, stats.sample_count + 1)


def _argmin(values: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best]:
            best = i
    return best


def kspqr_distribution(stats: Sequence[PathStats], p_max: float) -> list[float]:
    """``p_max`` on the lowest-estimate path, the rest shared evenly.

    Each of the other K-1 paths gets ``(1 - p_max) / (K - 1)`` so the
    result is a proper distribution.
    """
    K = len(stats)
    if K == 0:
        raise ValueError("empty candidate list")
    if K == 1:
        return [1.0]
    best = _argmin([s.delay_estimate for s in stats])
    rest = (1.0 - p_max) / (K - 1)
    probs = [rest] * K
    probs[best] = p_max
    return probs


def koqra_distribution(
    stats: Sequence[PathStats],
    waiting: Sequence[float],
    alpha: float,
    beta: float,
) -> list[float]:
    """Ant-colony style split over paths.

    Desirability is ``1 / (delay_estimate + beta * waiting)``, raised to
    ``alpha`` and normalised. Paths whose denominator is zero (only possible
    with unsampled optimistic estimates) share all the mass uniformly.
    """
    K = len(stats)
    if K == 0:
        raise ValueError("empty candidate list")
    if len(waiting) != K:
        raise ValueError("one waiting-time proxy per path is required")
    denoms = [s.delay_estimate + beta * w for s, w in zip(stats, waiting)]
    if any(not math.isfinite(d) or d < 0 for d in denoms):
        raise ValueError(f"delay estimates and waiting proxies must be finite and >= 0: {denoms}")
    zeros = [i for i, d in enumerate(denoms) if d == 0.0]
    if zeros:
        probs = [0.0] * K
        for i in zeros:
            probs[i] = 1.0 / len(zeros)
        return probs
    # scale by the smallest denominator first so tau**alpha cannot overflow
    dmin = min(denoms)
    weights = [(dmin / d) ** alpha for d in denoms]
    total = math.fsum(weights)
    return [w / total for w in weights]


def select_path(distribution: Sequence[float], rng) -> int:
    """Inverse-CDF draw over ``distribution``; consumes one ``rng.random()``."""
    if not distribution:
        raise ValueError("empty distribution")
    if any(p < 0 or not math.isfinite(p) for p in distribution):
        raise ValueError(f"negative or non-finite probability in {distribution}")
    if abs(math.fsum(distribution) - 1.0) > DIST_TOL:
        raise ValueError(f"distribution sums to {math.fsum(distribution)!r}, not 1")
    u = rng.random()
    acc = 0.0
    last = 0
    for i, p in enumerate(distribution):
        if p > 0:
            last = i
        acc += p
        if u < acc:
            return i
    return last


def spf_select(candidates: CandidateSet) -> int:
    if not len(candidates):
        raise ValueError("no candidate paths")
    return 0


_wrr_cache: dict = {}


def somr_schedule(costs: Sequence[float]) -> tuple[int, ...]:
    """One period of a smooth weighted round-robin with weights ∝ 1/cost.

    Weights are made integral through exact fractions (denominators capped
    at 1000), so the period is finite.
    """
    key = tuple(costs)
    sched = _wrr_cache.get(key)
    if sched is not None:
        return sched
    if any(c <= 0 for c in costs):
        # zero-cost candidates take the whole split between them
        fr = [Fraction(1 if c <= 0 else 0) for c in costs]
    else:
        fr = [1 / Fraction(c).limit_denominator(1000) for c in costs]
    lcm = math.lcm(*(f.denominator for f in fr))
    weights = [int(f * lcm) for f in fr]
    g = math.gcd(*weights)
    weights = [w // g for w in weights]
    total = sum(weights)
    current = [0] * len(weights)
    sched = []
    for _ in range(total):
        for i, w in enumerate(weights):
            current[i] += w
        best = max(range(len(current)), key=lambda i: (current[i], -i))
        current[best] -= total
        sched.append(best)
    sched = tuple(sched)
    _wrr_cache[key] = sched
    return sched


def somr_select(candidates: CandidateSet, counter: int) -> int:
    """Index for the ``counter``-th packet of a pair under static weighted round-robin."""
    if not len(candidates):
        raise ValueError("no candidate paths")
    sched = somr_schedule(candidates.costs)
    return sched[counter % len(sched)]


class PolicyState:
    """Per-simulation routing state for one policy kind.

    ``candidates`` maps ``(s, t)`` to a :class:`CandidateSet`. Learned
    statistics are created lazily per pair.
    """

    def __init__(self, kind: str, candidates: dict, params: PolicyParams | None = None):
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        self.kind = kind
        self.params = params or PolicyParams()
        self.candidates = candidates
        self.stats: dict = {}
        self.counters: dict = {}

    @property
    def adaptive(self) -> bool:
        return self.kind in ADAPTIVE_KINDS

    def _initial(self, cs: CandidateSet) -> list[PathStats]:
        if self.params.initial_estimate_mode == OPTIMISTIC:
            return [PathStats(0.0, 0) for _ in cs.paths]
        hop = self.params.nominal_hop_delay
        return [PathStats(p.static_cost * hop, 0) for p in cs.paths]

    def path_stats(self, s: int, t: int) -> list[PathStats]:
        st = self.stats.get((s, t))
        if st is None:
            st = self._initial(self.candidates[(s, t)])
            self.stats[(s, t)] = st
        return st

    def distribution(self, s: int, t: int, waiting: Sequence[float] | None = None) -> list[float]:
        """Selection probabilities the policy currently induces for ``(s, t)``."""
        cs = self.candidates[(s, t)]
        K = len(cs)
        if self.kind == SPF:
            return [1.0] + [0.0] * (K - 1)
        if self.kind == SOMR:
            sched = somr_schedule(cs.costs)
            return [sched.count(i) / len(sched) for i in range(K)]
        stats = self.path_stats(s, t)
        if self.kind == KSPQR:
            return kspqr_distribution(stats, self.params.p_max)
        if waiting is None:
            waiting = [0.0] * K
        return koqra_distribution(stats, waiting, self.params.alpha, self.params.beta)

    def choose(self, s: int, t: int, rng, waiting_fn: Callable | None = None) -> int:
        """Pick a candidate index for one packet from s to t.

        ``waiting_fn(candidate_set)`` supplies KOQRA's per-path waiting-time
        proxies; it is not called for other kinds.
        """
        cs = self.candidates[(s, t)]
        if self.kind == SPF:
            return spf_select(cs)
        if self.kind == SOMR:
            n = self.counters.get((s, t), 0)
            self.counters[(s, t)] = n + 1
            return somr_select(cs, n)
        if len(cs) == 1:
            # still consume one draw so the stream does not depend on K
            rng.random()
            return 0
        waiting = waiting_fn(cs) if (self.kind == KOQRA and waiting_fn) else None
        return select_path(self.distribution(s, t, waiting), rng)

    def on_ack(self, s: int, t: int, index: int, measured_delay: float) -> None:
        if not self.adaptive:
            return
        stats = self.path_stats(s, t)
        stats[index] = q_update(stats[index], measured_delay, self.params.eta)

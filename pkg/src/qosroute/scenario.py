"""Scenario files, batch runs, CSV output and plot-script generation."""

from __future__ import annotations

import configparser
import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path as FsPath

from .kpaths import all_pairs_candidates
from .netmodel import CostCoefficients, load_topology, validate_graph
from .policies import POLICY_KINDS, STATIC_SEEDED, PolicyParams, PolicyState
from .sim import MetricsSeries, Simulation, TrafficSource

DATA_DIR = FsPath(__file__).parent / "data"
SCENARIO_DIR = DATA_DIR / "scenarios"

CSV_COLUMNS = (
    "scenario", "policy", "seed", "window_start_s", "window_mean_delay_s",
    "delivered", "dropped", "control_bits",
)

PANELS = {
    "low": "low traffic",
    "heavy": "heavy traffic",
    "peak": "traffic peak",
}

# section -> key -> default (None means required or optional-without-default)
SCHEMA = {
    "scenario": {
        "name": None,
        "topology": None,
        "duration": 300.0,
        "window": 5.0,
        "seeds": (1,),
        "constraints": None,
    },
    "routing": {
        "policy": None,
        "k": 3,
        "cost": None,
        "p_max": 0.9,
        "eta": 0.3,
        "alpha": 2.0,
        "beta": 1.0,
        "initial_estimate": STATIC_SEEDED,
        "nominal_hop_delay": 0.02,
    },
    "traffic": {
        "lambda": None,
        "phases": None,
        "data_size": 8192,
        "ack_size": 64,
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: str
    policy: str
    params: PolicyParams = field(default_factory=PolicyParams)
    k: int = 3
    cost: tuple[float, ...] | None = None
    phases: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    duration: float = 300.0
    window: float = 5.0
    seeds: tuple[int, ...] = (1,)
    data_size: int = 8192
    ack_size: int = 64
    constraints: tuple[float, ...] | None = None  # carried along, never enforced
    base_dir: str = "."

    @property
    def topology_path(self) -> FsPath:
        return resolve_topology(self.topology, self.base_dir)

    @property
    def phase_change_times(self) -> list[float]:
        return [t for t, _ in self.phases if t > 0]

    def traffic(self) -> TrafficSource:
        return TrafficSource(list(self.phases))

    def coefficients(self, m: int) -> CostCoefficients:
        if self.cost is None:
            return CostCoefficients.unit(m)
        return CostCoefficients(self.cost)


def resolve_topology(name: str, base_dir: str = ".") -> FsPath:
    p = FsPath(name)
    if not p.is_absolute():
        p = FsPath(base_dir) / p
    if p.exists():
        return p
    bundled = DATA_DIR / name
    if bundled.exists():
        return bundled
    return p


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None
    if not vals or any(not math.isfinite(v) for v in vals):
        raise ConfigError(f"{key}: expected finite numbers, got {text!r}")
    return vals


def _number(text: str, key: str, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"{key}: bad value {text!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    return value


def parse_config(text: str, base_dir: str | FsPath = ".", name: str | None = None) -> ScenarioConfig:
    """Parse and validate scenario text; defaults fill every omitted key.

    Relative topology paths resolve against ``base_dir`` first, then the
    bundled data directory.
    """
    cp = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None, default_section="__none__"
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    raw = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            raw[key] = value.strip()

    for required in ("topology", "policy"):
        if required not in raw:
            raise ConfigError(f"missing required key {required!r}")
    if ("lambda" in raw) == ("phases" in raw):
        raise ConfigError("exactly one of 'lambda' or 'phases' is required")

    policy = raw["policy"].upper()
    if policy not in POLICY_KINDS:
        raise ConfigError(f"policy: expected one of {', '.join(POLICY_KINDS)}, got {raw['policy']!r}")

    def get(key, kind=float):
        for section in SCHEMA.values():
            if key in section:
                default = section[key]
        return _number(raw[key], key, kind) if key in raw else default

    try:
        params = PolicyParams(
            p_max=get("p_max"),
            eta=get("eta"),
            alpha=get("alpha"),
            beta=get("beta"),
            initial_estimate_mode=raw.get("initial_estimate", STATIC_SEEDED),
            nominal_hop_delay=get("nominal_hop_delay"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if "phases" in raw:
        phases = []
        for chunk in raw["phases"].split(","):
            start, sep, rate = chunk.partition(":")
            if not sep:
                raise ConfigError(f"phases: expected 'start:rate' items, got {chunk.strip()!r}")
            phases.append((_number(start, "phases"), _number(rate, "phases")))
        phases.sort()
        if phases[0][0] != 0.0:
            raise ConfigError("phases: the first phase must start at 0")
    else:
        phases = [(0.0, get("lambda"))]
    if any(r < 0 or t < 0 for t, r in phases):
        raise ConfigError("phases: times and rates must be >= 0")

    k = get("k", int)
    duration = get("duration")
    window = get("window")
    data_size = get("data_size", int)
    ack_size = get("ack_size", int)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if duration <= 0:
        raise ConfigError("duration must be > 0")
    if window <= 0:
        raise ConfigError("window must be > 0")
    if not data_size >= ack_size > 0:
        raise ConfigError("need data_size >= ack_size > 0")
    if "seeds" in raw:
        try:
            seeds = tuple(int(s) for s in raw["seeds"].replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"seeds: expected integers, got {raw['seeds']!r}") from None
        if not seeds:
            raise ConfigError("seeds: at least one seed is required")
    else:
        seeds = (1,)
    cost = _floats(raw["cost"], "cost") if "cost" in raw else None
    if cost is not None:
        try:
            CostCoefficients(cost)
        except ValueError as exc:
            raise ConfigError(f"cost: {exc}") from None
    constraints = _floats(raw["constraints"], "constraints") if "constraints" in raw else None

    cfg = ScenarioConfig(
        name=raw.get("name", name or "scenario"),
        topology=raw["topology"],
        policy=policy,
        params=params,
        k=k,
        cost=cost,
        phases=tuple(phases),
        duration=duration,
        window=window,
        seeds=seeds,
        data_size=data_size,
        ack_size=ack_size,
        constraints=constraints,
        base_dir=str(base_dir),
    )
    if not cfg.topology_path.is_file():
        raise ConfigError(f"topology file not found: {cfg.topology}")
    return cfg


def load_config(path: str | FsPath) -> ScenarioConfig:
    path = FsPath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent, name=path.stem)


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_config(cfg: ScenarioConfig) -> str:
    """Write every key explicitly; ``parse_config`` of the result is ``cfg``."""
    p = cfg.params
    lines = [
        "[scenario]",
        f"name = {cfg.name}",
        f"topology = {cfg.topology}",
        f"duration = {_fmt(cfg.duration)}",
        f"window = {_fmt(cfg.window)}",
        "seeds = " + ", ".join(str(s) for s in cfg.seeds),
    ]
    if cfg.constraints is not None:
        lines.append("constraints = " + ", ".join(_fmt(x) for x in cfg.constraints))
    lines += [
        "",
        "[routing]",
        f"policy = {cfg.policy}",
        f"k = {cfg.k}",
    ]
    if cfg.cost is not None:
        lines.append("cost = " + ", ".join(_fmt(x) for x in cfg.cost))
    lines += [
        f"p_max = {_fmt(p.p_max)}",
        f"eta = {_fmt(p.eta)}",
        f"alpha = {_fmt(p.alpha)}",
        f"beta = {_fmt(p.beta)}",
        f"initial_estimate = {p.initial_estimate_mode}",
        f"nominal_hop_delay = {_fmt(p.nominal_hop_delay)}",
        "",
        "[traffic]",
        "phases = " + ", ".join(f"{_fmt(t)}:{_fmt(r)}" for t, r in cfg.phases),
        f"data_size = {cfg.data_size}",
        f"ack_size = {cfg.ack_size}",
    ]
    return "\n".join(lines) + "\n"


def bundled_scenarios() -> list[ScenarioConfig]:
    return [load_config(p) for p in sorted(SCENARIO_DIR.glob("*.cfg"))]


# ---------------------------------------------------------------- batch runs


@dataclass
class RunRecord:
    scenario: str
    policy: str
    seed: int
    metrics: MetricsSeries | None
    runtime: float = 0.0
    phase_times: tuple[float, ...] = ()
    error: str | None = None
    conservation_ok: bool = True

    @property
    def key(self):
        return (self.scenario, self.policy, self.seed)


@lru_cache(maxsize=8)
def _graph(path: str):
    g = load_topology(FsPath(path).read_text())
    problems = validate_graph(g)
    if problems:
        raise ValueError(f"{path}: " + "; ".join(problems))
    return g


@lru_cache(maxsize=8)
def _candidates(path: str, k: int, cost):
    g = _graph(path)
    c = CostCoefficients(cost) if cost is not None else CostCoefficients.unit(g.m)
    return all_pairs_candidates(g, k, c)


def run_one(cfg: ScenarioConfig, policy: str | None = None, seed: int | None = None) -> RunRecord:
    """Simulate one (scenario, policy, seed); failures come back inside the record."""
    policy = (policy or cfg.policy).upper()
    seed = cfg.seeds[0] if seed is None else seed
    start = time.perf_counter()
    ok = [True]

    def check(sim, in_flight):
        m = sim.metrics
        if not (
            m.generated == m.total_delivered + m.total_dropped + in_flight[0]
            and m.acks_generated == m.acks_delivered + m.acks_dropped + in_flight[1]
        ):
            ok[0] = False

    try:
        path = str(cfg.topology_path)
        g = _graph(path)
        cands = _candidates(path, cfg.k, cfg.cost)
        state = PolicyState(policy, cands, cfg.params)
        sim = Simulation(
            g, state, cfg.traffic(), cfg.duration, seed,
            window=cfg.window, data_size=cfg.data_size, ack_size=cfg.ack_size, on_window=check,
        )
        metrics = sim.run()
        error = None
    except Exception as exc:  # reported per run, the batch keeps going
        metrics, error = None, f"{type(exc).__name__}: {exc}"
    return RunRecord(
        cfg.name, policy, seed, metrics, time.perf_counter() - start,
        tuple(cfg.phase_change_times), error, ok[0],
    )


def _run_job(job):
    cfg, policy, seed = job
    return run_one(cfg, policy, seed)


def run_matrix(configs, policies=None, seeds=None, workers: int = 1) -> list[RunRecord]:
    """One record per (config, policy, seed), returned in sorted order.

    ``policies``/``seeds`` default to each config's own policy and seed
    list. Runs are independent, so execution order does not matter.
    """
    jobs = []
    for cfg in configs:
        for policy in policies or [cfg.policy]:
            for seed in seeds if seeds is not None else cfg.seeds:
                jobs.append((cfg, policy.upper(), int(seed)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(job) for job in jobs]
    return sorted(records, key=_record_order)


def _policy_rank(policy: str) -> int:
    return POLICY_KINDS.index(policy) if policy in POLICY_KINDS else len(POLICY_KINDS)


def _record_order(r: RunRecord):
    return (r.scenario, _policy_rank(r.policy), r.policy, r.seed)


# ---------------------------------------------------------------- output


def emit_csv(records) -> str:
    """Per-window rows for every successful record, in (scenario, policy, seed, window) order."""
    records = [r for r in records if r.metrics is not None]
    if not records:
        raise ValueError("no successful records to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=_record_order):
        m = r.metrics
        for i, start in enumerate(m.window_start):
            delay = m.mean_delay[i]
            w.writerow([
                r.scenario, r.policy, r.seed, f"{start:.6f}",
                "" if delay is None else f"{delay:.9f}",
                m.delivered[i], m.dropped[i], m.control_bits[i],
            ])
    return buf.getvalue()


def read_csv(text: str) -> list[RunRecord]:
    """Rebuild per-window records from :func:`emit_csv` output (totals are not restored)."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    records: dict = {}
    for row in reader:
        key = (row["scenario"], row["policy"], int(row["seed"]))
        rec = records.get(key)
        if rec is None:
            rec = records[key] = RunRecord(*key, MetricsSeries(window=0.0))
        m = rec.metrics
        m.window_start.append(float(row["window_start_s"]))
        m.mean_delay.append(float(row["window_mean_delay_s"]) if row["window_mean_delay_s"] else None)
        m.delivered.append(int(row["delivered"]))
        m.dropped.append(int(row["dropped"]))
        m.control_bits.append(int(row["control_bits"]))
    for rec in records.values():
        ws = rec.metrics.window_start
        rec.metrics.window = ws[1] - ws[0] if len(ws) > 1 else 0.0
    return sorted(records.values(), key=_record_order)


def seed_averaged(records, policy: str) -> tuple[list[float], list[float | None]]:
    """Window starts and the mean over seeds of each window's delay."""
    series: dict = {}
    for r in records:
        if r.policy != policy or r.metrics is None:
            continue
        for start, d in zip(r.metrics.window_start, r.metrics.mean_delay):
            if d is not None:
                series.setdefault(start, []).append(d)
    starts = sorted(series)
    return starts, [sum(series[s]) / len(series[s]) for s in starts]


_PLOT_TEMPLATE = '''"""Mean end-to-end delay over simulation time ({title}).

Generated by qosroute; reads {csv_name!r} and averages seeds per window.
"""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
SCENARIO = {scenario!r}
POLICIES = {policies!r}
PHASE_CHANGES = {phases!r}

sums = defaultdict(lambda: defaultdict(list))
with open(CSV_PATH, newline="") as fh:
    for row in csv.DictReader(fh):
        if row["scenario"] != SCENARIO or not row["window_mean_delay_s"]:
            continue
        t = float(row["window_start_s"])
        sums[row["policy"]][t].append(float(row["window_mean_delay_s"]))

fig, ax = plt.subplots(figsize=(6, 4))
for policy in POLICIES:
    ts = sorted(sums[policy])
    ax.plot(ts, [sum(sums[policy][t]) / len(sums[policy][t]) for t in ts], label=policy)
for t in PHASE_CHANGES:
    ax.axvline(t, color="grey", linestyle="--", linewidth=0.8)
ax.set_xlabel("simulation time (s)")
ax.set_ylabel("mean end-to-end delay (s)")
ax.set_title({title!r})
ax.legend()
fig.tight_layout()
fig.savefig({png!r}, dpi=150)
'''


def emit_plot_script(records, panel: str, csv_path: str = "results.csv", scenario: str | None = None) -> str:
    """Matplotlib script drawing one delay-vs-time curve per policy.

    ``scenario`` selects which scenario's rows to plot (default: the only
    scenario in ``records``, or the one named like the panel). Phase-change
    markers are drawn for the peak panel.
    """
    if panel not in PANELS:
        raise ValueError(f"panel must be one of {sorted(PANELS)}")
    names = sorted({r.scenario for r in records})
    if scenario is None:
        if len(names) == 1:
            scenario = names[0]
        elif panel in names:
            scenario = panel
        else:
            raise ValueError(f"several scenarios present ({', '.join(names)}); pick one")
    chosen = [r for r in records if r.scenario == scenario]
    policies = sorted({r.policy for r in chosen}, key=lambda p: (_policy_rank(p), p))
    if len(policies) < 2:
        raise ValueError(f"panel needs at least 2 policies, got {policies}")
    phases = []
    if panel == "peak":
        phases = sorted({t for r in chosen for t in r.phase_times})
    stem = FsPath(csv_path).stem
    return _PLOT_TEMPLATE.format(
        title=f"{PANELS[panel]} ({scenario})",
        csv_name=FsPath(csv_path).name,
        csv_path=str(csv_path),
        scenario=scenario,
        policies=policies,
        phases=phases,
        png=f"{stem}_{panel}.png",
    )


def with_policy(cfg: ScenarioConfig, policy: str) -> ScenarioConfig:
    return replace(cfg, policy=policy.upper())

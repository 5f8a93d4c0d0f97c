"""Command-line front end: ``python -m qosroute <command>``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .kpaths import k_shortest_paths
from .netmodel import CostCoefficients, TopologyError, load_topology, validate_graph
from .policies import POLICY_KINDS
from .scenario import (
    PANELS, ConfigError, emit_csv, emit_plot_script, load_config, read_csv, resolve_topology,
    run_matrix,
)


def _load_graph(path):
    # bare names fall back to the topologies shipped with the package
    return load_topology(resolve_topology(path).read_text())


def cmd_validate(args):
    g = _load_graph(args.topology)
    problems = validate_graph(g)
    for p in problems:
        print(p)
    if problems:
        raise SystemExit(f"error: {len(problems)} violation(s) in {args.topology}")
    print(f"ok: {g.node_count} nodes, {len(g.links)} directed links")


def cmd_paths(args):
    g = _load_graph(args.topology)
    for node in (args.s, args.t):
        if not 0 <= node < g.node_count:
            raise SystemExit(f"error: node {node} out of range 0..{g.node_count - 1}")
    cs = k_shortest_paths(g, args.s, args.t, args.k, CostCoefficients.unit(g.m))
    print(cs.format())


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _check(records):
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"run failed: {r.scenario}/{r.policy}/seed {r.seed}: {r.error}", file=sys.stderr)
    if len(failed) == len(records):
        raise SystemExit("error: every run failed")
    return failed


def cmd_run(args):
    cfg = load_config(args.scenario)
    if args.policy:
        cfg = replace(cfg, policy=args.policy.upper())
    seeds = [args.seed] if args.seed is not None else None
    records = run_matrix([cfg], seeds=seeds)
    failed = _check(records)
    _write(emit_csv(records), args.out)
    if failed:
        raise SystemExit(f"error: {len(failed)} run(s) failed")


def cmd_matrix(args):
    paths = sorted(Path(args.dir).glob("*.cfg"))
    if not paths:
        raise SystemExit(f"error: no .cfg files in {args.dir}")
    configs = [load_config(p) for p in paths]
    policies = args.policies.split(",") if args.policies else list(POLICY_KINDS)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    records = run_matrix(configs, policies, seeds, workers=args.workers)
    failed = _check(records)
    _write(emit_csv(records), args.out)
    if failed:
        raise SystemExit(f"error: {len(failed)} run(s) failed")


def cmd_plot(args):
    records = read_csv(Path(args.csv).read_text())
    if args.config:
        times = tuple(load_config(args.config).phase_change_times)
        for r in records:
            r.phase_times = times
    _write(emit_plot_script(records, args.panel, args.csv, args.scenario), args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="qosroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a topology file")
    p.add_argument("topology")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("paths", help="print the K best paths between two nodes")
    p.add_argument("topology")
    p.add_argument("s", type=int)
    p.add_argument("t", type=int)
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=[k.lower() for k in POLICY_KINDS] + list(POLICY_KINDS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="run every scenario in a directory under several policies")
    p.add_argument("dir")
    p.add_argument("--out", default="-")
    p.add_argument("--policies", help="comma-separated, default all four")
    p.add_argument("--seeds", help="comma-separated, default each scenario's own list")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("plot", help="write a plotting script for one figure panel")
    p.add_argument("csv")
    p.add_argument("--panel", required=True, choices=sorted(PANELS))
    p.add_argument("--scenario")
    p.add_argument("--config", help="scenario file supplying phase-change markers")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (TopologyError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    return 0

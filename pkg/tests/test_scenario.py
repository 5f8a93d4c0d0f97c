import ast
import csv
import io
import random
from dataclasses import replace
from pathlib import Path

import pytest

from qosroute.cli import main
from qosroute.netmodel import dump_topology
from qosroute.policies import POLICY_KINDS, PolicyParams
from qosroute.scenario import (
    CSV_COLUMNS, SCENARIO_DIR, ConfigError, RunRecord, bundled_scenarios, emit_csv,
    emit_plot_script, load_config, parse_config, read_csv, run_matrix, serialize_config,
)
from qosroute.sim import MetricsSeries

from oracles import diamond

DIAMOND_TOPO = dump_topology(diamond())


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "diamond.topo").write_text(DIAMOND_TOPO)
    return tmp_path


def small_cfg(workdir, policy="KSPQR", extra=""):
    text = (
        "[scenario]\nname = tiny\ntopology = diamond.topo\nduration = 4\nwindow = 1\nseeds = 1, 2\n"
        f"[routing]\npolicy = {policy}\nk = 3\n{extra}"
        "[traffic]\nphases = 0:50, 2:300\n"
    )
    path = workdir / "tiny.cfg"
    path.write_text(text)
    return load_config(path)


# ---------------------------------------------------------------- parsing

def test_minimal_config_gets_defaults(workdir):
    cfg = parse_config(
        "[scenario]\ntopology = diamond.topo\nduration = 30\n[routing]\npolicy = kspqr\n"
        "[traffic]\nlambda = 10\n", base_dir=workdir)
    assert cfg.policy == "KSPQR"
    assert cfg.k == 3
    assert cfg.params == PolicyParams(p_max=0.9, eta=0.3, alpha=2.0, beta=1.0)
    assert cfg.phases == ((0.0, 10.0),)
    assert (cfg.window, cfg.seeds, cfg.data_size, cfg.ack_size) == (5.0, (1,), 8192, 64)


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("[routing]\npolicy = SPF\np_max = 1.5\n[traffic]\nlambda = 1\n", "p_max"),
        ("[routing]\npolicy = SPF\n[traffic]\nlambda = 1\nbogus = 2\n", "unknown key"),
        ("[routing]\npolicy = XYZ\n[traffic]\nlambda = 1\n", "policy"),
        ("[routing]\npolicy = SPF\n[traffic]\n", "lambda"),
        ("[routing]\npolicy = SPF\nk = 0\n[traffic]\nlambda = 1\n", "k must"),
        ("[routing]\npolicy = SPF\n[traffic]\nlambda = 1\n[extra]\nx = 1\n", "unknown section"),
        ("[routing]\npolicy = SPF\n[traffic]\nphases = 5:1\n", "start at 0"),
    ],
)
def test_config_errors(workdir, body, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config("[scenario]\ntopology = diamond.topo\n" + body, base_dir=workdir)


def test_missing_required_key(workdir):
    with pytest.raises(ConfigError, match="policy"):
        parse_config("[scenario]\ntopology = diamond.topo\n[traffic]\nlambda = 1\n", base_dir=workdir)


def test_unreadable_topology(workdir):
    with pytest.raises(ConfigError, match="not found"):
        parse_config("[scenario]\ntopology = nope.topo\n[routing]\npolicy = SPF\n[traffic]\nlambda = 1\n",
                     base_dir=workdir)


def test_constraint_vector_passes_through(workdir):
    cfg = small_cfg(workdir, extra="")
    cfg2 = parse_config(serialize_config(replace(cfg, constraints=(0.05, 1e6))), base_dir=workdir)
    assert cfg2.constraints == (0.05, 1e6)


@pytest.mark.parametrize("name", ["low", "heavy", "peak"])
def test_bundled_scenarios_round_trip(name):
    cfg = load_config(SCENARIO_DIR / f"{name}.cfg")
    text = serialize_config(cfg)
    again = parse_config(text, base_dir=cfg.base_dir)
    assert again == cfg
    assert serialize_config(again) == text


def test_bundled_low_scenario_golden():
    cfg = load_config(SCENARIO_DIR / "low.cfg")
    assert (cfg.name, cfg.policy, cfg.k, cfg.phases, cfg.duration, cfg.window, cfg.seeds) == (
        "low", "KSPQR", 3, ((0.0, 50.0),), 300.0, 5.0, (1, 2, 3, 4, 5))
    assert cfg.topology_path.resolve() == (SCENARIO_DIR.parent / "nttnet.topo").resolve()
    assert {c.name for c in bundled_scenarios()} == {"low", "heavy", "peak"}


def test_random_configs_round_trip(workdir):
    rng = random.Random(0)
    base = small_cfg(workdir)
    for _ in range(30):
        cfg = replace(
            base,
            policy=rng.choice(POLICY_KINDS),
            params=PolicyParams(p_max=rng.uniform(0.01, 1), eta=rng.uniform(0.01, 1),
                                alpha=rng.uniform(0.1, 4), beta=rng.uniform(0, 3)),
            k=rng.randint(1, 6),
            cost=(rng.uniform(0.1, 5),),
            phases=((0.0, rng.uniform(0, 100)), (rng.uniform(1, 9), rng.uniform(0, 100))),
            duration=rng.uniform(1, 100),
            seeds=tuple(rng.sample(range(100), 3)),
        )
        assert parse_config(serialize_config(cfg), base_dir=workdir) == cfg


# ---------------------------------------------------------------- batch runs

def test_matrix_cardinality_and_order_independence(workdir):
    cfg = small_cfg(workdir)
    records = run_matrix([cfg], list(POLICY_KINDS), [1, 2, 3, 4, 5])
    assert len(records) == 20
    assert all(r.error is None and r.conservation_ok for r in records)
    shuffled = run_matrix([cfg], list(reversed(POLICY_KINDS)), [5, 3, 1, 4, 2])
    assert [(r.key, r.metrics.key()) for r in shuffled] == [(r.key, r.metrics.key()) for r in records]


def test_matrix_control_bits_by_policy(workdir):
    cfg = small_cfg(workdir)
    recs = {r.policy: r for r in run_matrix([cfg], ["SPF", "KSPQR"], [1])}
    assert recs["SPF"].metrics.total_control_bits == 0
    assert recs["KSPQR"].metrics.total_control_bits > 0


def test_failed_run_is_reported_and_others_continue(workdir):
    cfg = small_cfg(workdir)
    records = run_matrix([cfg], ["SPF", "NOPE"], [1])
    by_policy = {r.policy: r for r in records}
    assert by_policy["NOPE"].error and by_policy["NOPE"].metrics is None
    assert by_policy["SPF"].error is None


# ---------------------------------------------------------------- CSV

def _records():
    m = MetricsSeries(1.0, window_start=[0.0, 1.0], mean_delay=[0.0125, None],
                      delivered=[3, 0], dropped=[0, 1], control_bits=[192, 0])
    return [RunRecord("s", "KSPQR", 2, m), RunRecord("s", "SPF", 1, m), RunRecord("s", "KSPQR", 1, m)]


def test_csv_header_rows_and_missing_values():
    text = emit_csv(_records())
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[0] == "scenario,policy,seed,window_start_s,window_mean_delay_s,delivered,dropped,control_bits"
    assert lines[1:] == [
        "s,SPF,1,0.000000,0.012500000,3,0,192",
        "s,SPF,1,1.000000,,0,1,0",
        "s,KSPQR,1,0.000000,0.012500000,3,0,192",
        "s,KSPQR,1,1.000000,,0,1,0",
        "s,KSPQR,2,0.000000,0.012500000,3,0,192",
        "s,KSPQR,2,1.000000,,0,1,0",
    ]
    assert emit_csv(_records()) == text
    assert emit_csv(list(reversed(_records()))) == text


def test_csv_read_back():
    back = read_csv(emit_csv(_records()))
    assert [r.key for r in back] == [("s", "SPF", 1), ("s", "KSPQR", 1), ("s", "KSPQR", 2)]
    assert back[0].metrics.mean_delay == [0.0125, None]
    assert emit_csv(back) == emit_csv(_records())


def test_csv_needs_records():
    with pytest.raises(ValueError):
        emit_csv([])


def test_simulated_csv_is_deterministic(workdir):
    cfg = small_cfg(workdir)
    a = emit_csv(run_matrix([cfg], ["KOQRA"], [7]))
    b = emit_csv(run_matrix([cfg], ["KOQRA"], [7]))
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert len(rows) == 4


# ---------------------------------------------------------------- plot script

def test_plot_script_has_one_curve_per_policy(workdir):
    cfg = small_cfg(workdir)
    records = run_matrix([cfg], list(POLICY_KINDS), [1])
    script = emit_plot_script(records, "heavy", "out.csv")
    ast.parse(script)
    assert "POLICIES = ['SPF', 'SOMR', 'KSPQR', 'KOQRA']" in script
    assert "mean end-to-end delay" in script
    assert "PHASE_CHANGES = []" in script


def test_plot_peak_marks_phase_changes(workdir):
    cfg = small_cfg(workdir)
    records = run_matrix([cfg], ["SPF", "KOQRA"], [1])
    script = emit_plot_script(records, "peak", "out.csv")
    assert "PHASE_CHANGES = [2.0]" in script


def test_plot_needs_two_policies(workdir):
    records = run_matrix([small_cfg(workdir)], ["SPF"], [1])
    with pytest.raises(ValueError, match="2 policies"):
        emit_plot_script(records, "low")


def test_plot_script_runs(workdir, monkeypatch):
    pytest.importorskip("matplotlib")
    monkeypatch.setenv("MPLBACKEND", "Agg")
    cfg = small_cfg(workdir)
    csv_path = workdir / "r.csv"
    records = run_matrix([cfg], ["SPF", "KOQRA"], [1, 2])
    csv_path.write_text(emit_csv(records))
    script = emit_plot_script(records, "peak", str(csv_path))
    monkeypatch.chdir(workdir)
    exec(compile(script, "plot.py", "exec"), {"__name__": "__main__"})
    assert (workdir / "r_peak.png").exists()


# ---------------------------------------------------------------- CLI

def test_cli_validate(workdir, capsys):
    assert main(["validate", str(workdir / "diamond.topo")]) == 0
    assert "4 nodes" in capsys.readouterr().out
    bad = workdir / "bad.topo"
    bad.write_text("nodes 3\n0 1 cap=1 prop=0 q=1 w=1\n")
    assert main(["validate", str(bad)]) == 1
    bad.write_text("nodes 3\n0 9 cap=1 prop=0 q=1 w=1\n")
    assert main(["validate", str(bad)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: line 2: dangling")


def test_cli_paths(workdir, capsys):
    assert main(["paths", str(workdir / "diamond.topo"), "0", "3", "--k", "4"]) == 0
    out = capsys.readouterr().out
    assert "[0] cost=2 0 1 3" in out and "[3] cost=3 0 2 1 3" in out


def test_cli_bundled_topology_by_name(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["validate", "nttnet.topo"]) == 0
    assert "57 nodes" in capsys.readouterr().out


def test_cli_run_and_plot(workdir, capsys):
    small_cfg(workdir)
    out = workdir / "run.csv"
    assert main(["run", str(workdir / "tiny.cfg"), "--policy", "koqra", "--seed", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert {(r["policy"], r["seed"]) for r in rows} == {("KOQRA", "3")}
    assert main(["plot", str(out), "--panel", "low"]) == 1  # one policy only
    assert "at least 2 policies" in capsys.readouterr().err


def test_cli_matrix(workdir):
    small_cfg(workdir)
    out = workdir / "m.csv"
    assert main(["matrix", str(workdir), "--out", str(out), "--seeds", "1,2"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert {r["policy"] for r in rows} == set(POLICY_KINDS)
    assert len(rows) == 4 * 2 * 4
    script = workdir / "plot.py"
    assert main(["plot", str(out), "--panel", "peak", "--config", str(workdir / "tiny.cfg"),
                 "--out", str(script)]) == 0
    assert "PHASE_CHANGES = [2.0]" in script.read_text()


def test_cli_bad_config(workdir, capsys):
    (workdir / "broken.cfg").write_text("[routing]\npolicy = SPF\n")
    assert main(["run", str(workdir / "broken.cfg")]) == 1
    assert capsys.readouterr().err.count("\n") == 1

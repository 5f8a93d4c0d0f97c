"""
Four policies under light and heavy load
========================================

Short single-seed versions of the bundled scenarios. Under light load the
shortest path is already good and exploration only adds detours; once the
shortest paths saturate, spreading traffic by learned delay pays off.
The full five-seed comparison is part of the test suite.
"""

import dataclasses

from qosroute.scenario import SCENARIO_DIR, load_config, run_one

for name, duration in [("low", 60.0), ("heavy", 30.0)]:
    cfg = dataclasses.replace(load_config(SCENARIO_DIR / f"{name}.cfg"), duration=duration)
    print(f"{name}: lambda={cfg.phases[0][1]:g} packets/s, {duration:g}s simulated")
    for policy in ("SPF", "SOMR", "KSPQR", "KOQRA"):
        r = run_one(cfg, policy, seed=1)
        m = r.metrics
        print(f"  {policy:6s} mean delay {m.mean_delay_overall * 1e3:8.2f} ms  "
              f"dropped {m.total_dropped:5d}  ACK bits {m.total_control_bits}")

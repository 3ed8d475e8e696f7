#!/usr/bin/env python3
"""Scripted payload-manipulation run with and without the camera cost."""

import json
from pathlib import Path

from hpa_sim.metrics import fov_retention
from hpa_sim.scenarios import manipulation_scenario
from hpa_sim.simulator import run
from hpa_sim.traceio import write_csv

if __name__ == "__main__":
    out = Path("out/manipulation")
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for q_cam in (2000.0, 0.0):
        scenario = manipulation_scenario(q_cam=q_cam, seed=4)
        trace = run(scenario)
        write_csv(trace, out / f"{scenario.name}.csv")
        results[scenario.name] = fov_retention(trace, after=2.0)
        print(f"{scenario.name}: retention {results[scenario.name]:.3f}")
    (out / "retention.json").write_text(json.dumps(results, indent=2) + "\n")

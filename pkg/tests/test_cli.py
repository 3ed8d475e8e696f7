from __future__ import annotations

import json
from pathlib import Path

import pytest

from hpa_sim.cli import EXIT_CONFIG, EXIT_OK, main
from hpa_sim.scenarios import hover_scenario, save_scenario


@pytest.fixture
def short_hover(tmp_path) -> Path:
    sc = hover_scenario(duration=0.3, seed=12)
    path = tmp_path / "hover.json"
    save_scenario(sc, path)
    return path


def test_run_writes_three_artifacts(short_hover, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(short_hover), "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "hover.csv").exists()
    assert (out / "hover_rmse.json").exists()
    assert (out / "hover_manifest.json").exists()
    manifest = json.loads((out / "hover_manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 12


def test_run_missing_file_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code = main(["run", "--scenario", str(missing), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "nope.json" in err  # error names the path


def test_run_malformed_scenario_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["run", "--scenario", str(bad), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "bad.json" in capsys.readouterr().err


def test_run_deterministic_artifacts(short_hover, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", str(short_hover), "--out", str(out_a)]) == EXIT_OK
    assert main(["run", "--scenario", str(short_hover), "--out", str(out_b)]) == EXIT_OK
    assert (out_a / "hover.csv").read_bytes() == (out_b / "hover.csv").read_bytes()


def test_run_controller_override(short_hover, tmp_path):
    out = tmp_path / "geo"
    code = main(["run", "--scenario", str(short_hover), "--out", str(out),
                 "--controller", "geometric"])
    assert code == EXIT_OK
    manifest = json.loads((out / "hover_manifest.json").read_text())
    assert manifest["scenario"]["controller"] == "geometric"


def test_run_jsonl_format(short_hover, tmp_path):
    out = tmp_path / "j"
    code = main(["run", "--scenario", str(short_hover), "--out", str(out),
                 "--format", "jsonl"])
    assert code == EXIT_OK
    lines = (out / "hover.jsonl").read_text().strip().split("\n")
    assert len(lines) == 300
    json.loads(lines[0])


def test_artifacts_roundtrip_through_parsers(short_hover, tmp_path):
    from hpa_sim.scenarios import load_scenario
    from hpa_sim.traceio import read_csv

    out = tmp_path / "rt"
    main(["run", "--scenario", str(short_hover), "--out", str(out)])
    trace = read_csv(out / "hover.csv")
    assert len(trace) == 300
    manifest = json.loads((out / "hover_manifest.json").read_text())
    json.loads((out / "hover_rmse.json").read_text())
    # the manifest embeds a loadable scenario
    sc_path = tmp_path / "resaved.json"
    sc_path.write_text(json.dumps(manifest["scenario"]))
    load_scenario(sc_path)

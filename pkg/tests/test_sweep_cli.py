import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from cfgenergy import cli, sweep
from cfgenergy.config import parse_config_text
from cfgenergy.metrics import EnergyScores, aggregate_report
from cfgenergy.plotting import emit_plots, render_energy_svg
from cfgenergy.report import format_cell, summary_table
from cfgenergy.runio import list_run_dirs, read_runs, run_key
from cfgenergy.sweep import run_configs, run_sweep

SVG = "{http://www.w3.org/2000/svg}"

SCENARIOS = """
[[scenarios]]
name = "a"
dim = 3
components = [
  { weight = 0.5, mean = 1.0, variance = 0.25 },
  { weight = 0.5, mean = -1.0, variance = 0.25 },
]

[[scenarios]]
name = "b"
dim = 3
target = [1]
components = [
  { weight = 0.7, mean = 0.5, variance = 0.5 },
  { weight = 0.3, mean = -0.5, variance = 0.1 },
]
"""


def _write(tmp_path, head, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(head + SCENARIOS)
    return p


def test_grid_order_and_size():
    cfg = parse_config_text("steps = 5\nseeds = [0, 1, 2]\n" + SCENARIOS)
    configs = run_configs(cfg)
    assert len(configs) == cfg.grid_size == 2 * 3 * 7 * 3
    assert [c["seed"] for c in configs[:4]] == [0, 1, 2, 0]
    assert configs[0]["scenario"]["name"] == "a" and configs[-1]["scenario"]["name"] == "b"


def test_single_point_sweep(tmp_path):
    cfg = parse_config_text('steps = 5\nseeds = [4]\nsamplers = ["ddim"]\ncfg_scales = [7]\n'
                            + SCENARIOS.split("[[scenarios]]\nname = \"b\"")[0])
    res = run_sweep(cfg, tmp_path)
    assert res.ok
    assert len(list_run_dirs(tmp_path)) == 1


def test_full_grid_dir_count(tmp_path):
    cfg = parse_config_text("steps = 4\n" + SCENARIOS)
    res = run_sweep(cfg, tmp_path)
    assert res.ok and len(res.artifacts) == 126
    assert len(list_run_dirs(tmp_path)) == 126


def _csvs(root):
    return {d.name: (d / "trajectory.csv").read_bytes() for d in list_run_dirs(root)}


def test_rerun_byte_identical(tmp_path):
    cfg = parse_config_text('steps = 8\nsamplers = ["euler_ancestral", "dpmpp_2m"]\ncfg_scales = [3, 18]\n'
                            '[energy]\nclipping = true\nrefresh = true\n' + SCENARIOS)
    run_sweep(cfg, tmp_path / "one")
    run_sweep(cfg, tmp_path / "two")
    run_sweep(cfg, tmp_path / "par", workers=2)
    one = _csvs(tmp_path / "one")
    assert len(one) == 24
    assert one == _csvs(tmp_path / "two") == _csvs(tmp_path / "par")


def test_failures_recorded(tmp_path, monkeypatch):
    real = sweep.execute_run

    def flaky(rc):
        if rc["seed"] == 1:
            raise FloatingPointError("boom")
        return real(rc)

    monkeypatch.setattr(sweep, "execute_run", flaky)
    cfg = parse_config_text('steps = 4\nsamplers = ["ddim"]\ncfg_scales = [7]\n' + SCENARIOS)
    res = run_sweep(cfg, tmp_path)
    assert not res.ok
    assert len(res.failures) == 2 and len(res.artifacts) == 4
    recorded = json.loads((tmp_path / "failures.json").read_text())
    assert all("boom" in f["error"] for f in recorded)


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, 'steps = 4\nsamplers = ["ddim"]\ncfg_scales = [3, 7]\n')
    out = tmp_path / "runs"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(list_run_dirs(out)) == 12

    bad = tmp_path / "bad.toml"
    bad.write_text("steps = [\n")
    assert cli.main(["sweep", "--config", str(bad), "--out", str(out)]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.toml")]) == 2
    assert "line" in capsys.readouterr().err

    real = sweep.execute_run
    monkeypatch.setattr(sweep, "execute_run", lambda rc: (_ for _ in ()).throw(RuntimeError("x"))
                        if rc["seed"] == 0 else real(rc))
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "partial")]) == 1


def test_cli_run_metrics_plot_report(tmp_path, capsys):
    cfg = _write(tmp_path, 'steps = 6\ncfg_scales = [3, 5, 7, 10, 12, 15, 18]\nseeds = [0]\n')
    out = tmp_path / "runs"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--index", "3",
                     "--seed-override", "9"]) == 0
    (d,) = list_run_dirs(out)
    assert json.loads((d / "config.json").read_text())["seed"] == 9
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--index", "999"]) == 2

    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    before = json.loads((d / "metrics.json").read_text())
    assert cli.main(["metrics", "--out", str(out), "--skip-initial"]) == 0
    after = json.loads((d / "metrics.json").read_text())
    assert after["skip_initial"] is True and after != before

    capsys.readouterr()
    assert cli.main(["plot", "--out", str(out)]) == 0
    plots = capsys.readouterr().out.split()
    assert len(plots) == 3  # one panel per sampler
    assert cli.main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[1].split()[1:] == ["3", "5", "7", "10", "12", "15", "18"]
    assert (out / "summary_stab.csv").exists()
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 1


def _legend(svg_text):
    root = ET.fromstring(svg_text)
    return [g for g in root.iter(f"{SVG}g") if g.get("class") == "legend-entry"]


def test_plot_legend_counts(tmp_path):
    cfg = parse_config_text('steps = 5\nsamplers = ["ddim", "dpmpp_2m"]\ncfg_scales = [3, 7, 18]\n'
                            '[[schedules]]\nkind = "linear_decreasing"\ns0 = 3\ns1 = 18\n' + SCENARIOS)
    run_sweep(cfg, tmp_path / "runs")
    runs = read_runs(tmp_path / "runs")
    by_scale = emit_plots(runs, "scale", tmp_path / "p")
    assert [p.name for p in by_scale] == ["energy_by_scale__ddim.svg", "energy_by_scale__dpmpp_2m.svg"]
    for p in by_scale:
        assert len(_legend(p.read_text())) == 3
    for p in emit_plots(runs, "schedule", tmp_path / "p"):
        assert len(_legend(p.read_text())) == 4
    by_sampler = emit_plots(runs, "sampler", tmp_path / "p")
    assert len(by_sampler) == 4
    for p in by_sampler:
        assert len(_legend(p.read_text())) == 2


def test_constant_series_is_horizontal():
    root = ET.fromstring(render_energy_svg([("flat", np.ones(11), None)]))
    (line,) = [e for e in root.iter(f"{SVG}polyline") if e.get("class") == "series"]
    ys = {pt.split(",")[1] for pt in line.get("points").split()}
    assert len(ys) == 1
    assert not [e for e in root.iter(f"{SVG}polygon")]


def test_format_cell():
    assert format_cell(0.99985) == "0.9998"
    assert format_cell(0.99995) == "1.0000"
    assert format_cell(0.12344999) == "0.1234"
    assert format_cell(0.5) == "0.5000"
    assert format_cell(None) == "--"


def test_table_shape_and_missing_cells():
    runs = []
    for sampler in ("ddim", "euler_ancestral", "dpmpp_2m"):
        for s in (3, 5, 7, 10, 12, 15, 18):
            if sampler == "ddim" and s == 12:
                continue
            key = run_key({"sampler": sampler, "seed": 0, "scenario": {"name": "a"},
                                 "guidance": {"kind": "fixed", "s0": float(s), "s1": 0.0}})
            runs.append((key, EnergyScores(0.5, 0.5, 0.5, 0.5)))
    table = summary_table(aggregate_report(runs))
    assert table.rows == ["dpmpp_2m", "ddim", "euler_ancestral"]
    assert table.columns == ["3", "5", "7", "10", "12", "15", "18"]
    assert table.cells[("ddim", "12")] is None
    body = table.csv.splitlines()
    assert len(body) == 4 and body[2].split(",")[5] == "--"

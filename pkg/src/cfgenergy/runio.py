"""Run directories: ``config.json``, ``trajectory.csv``, ``metrics.json``, ``final.json``.

Floats in the trajectory CSV are written with 17 significant digits so that
reading a run back yields bit-identical values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .guidance import GuidanceSchedule
from .metrics import EnergyScores, RunKey
from .oracle import Component, ScenarioSpec
from .samplers import RunRecord, StepEntry

CSV_COLUMNS = ("step", "timestep", "s_effective", "energy", "clipped", "refreshed")
CONFIG_FILE = "config.json"
TRAJECTORY_FILE = "trajectory.csv"
METRICS_FILE = "metrics.json"
FINAL_FILE = "final.json"


class SchemaError(ValueError):
    pass


@dataclass
class RunArtifacts:
    config: dict
    record: RunRecord
    scores: EnergyScores
    path: Optional[Path] = None

    @property
    def key(self) -> RunKey:
        return run_key(self.config)


def scenario_to_dict(sc: ScenarioSpec) -> dict:
    return {
        "name": sc.name,
        "target": list(sc.target),
        "components": [
            {"weight": c.weight, "mean": [float(v) for v in c.mean], "variance": c.variance}
            for c in sc.components
        ],
    }


def scenario_from_dict(d: dict) -> ScenarioSpec:
    return ScenarioSpec(
        name=d["name"],
        components=tuple(
            Component(c["weight"], np.asarray(c["mean"], dtype=np.float64), c["variance"])
            for c in d["components"]
        ),
        target=tuple(d["target"]),
    )


def run_key(config: dict) -> RunKey:
    g = config["guidance"]
    return RunKey(
        sampler=config["sampler"],
        schedule="fixed" if g["kind"] == "fixed" else _schedule_label(g),
        scale=float(g["s0"]) if g["kind"] == "fixed" else None,
        scenario=config["scenario"]["name"],
        seed=int(config["seed"]),
    )


def _schedule_label(g: dict) -> str:
    return GuidanceSchedule(g["kind"], g["s0"], g["s1"], g.get("alpha"), g.get("beta")).label


def run_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def run_dir_name(config: dict) -> str:
    return f"run_{run_hash(config)}"


def _fmt(v: float) -> str:
    return format(v, ".17g")


def trajectory_to_csv(entries: list[StepEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in entries:
        w.writerow(
            [e.step, e.timestep, _fmt(e.s_effective), _fmt(e.energy), int(e.clipped), int(e.refreshed)]
        )
    return buf.getvalue()


def _parse_bool(text: str, line: int) -> bool:
    if text not in ("0", "1"):
        raise SchemaError(f"line {line}: expected 0 or 1, got {text!r}")
    return text == "1"


def trajectory_from_csv(text: str) -> list[StepEntry]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        got = rows[0] if rows else []
        raise SchemaError(f"trajectory header {got} != {list(CSV_COLUMNS)}")
    entries = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise SchemaError(f"line {line}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            entries.append(
                StepEntry(
                    step=int(row[0]),
                    timestep=int(row[1]),
                    s_effective=float(row[2]),
                    energy=float(row[3]),
                    clipped=_parse_bool(row[4], line),
                    refreshed=_parse_bool(row[5], line),
                )
            )
        except ValueError as exc:
            raise SchemaError(f"line {line}: {exc}") from exc
    for i, e in enumerate(entries):
        if e.step != i:
            raise SchemaError(f"step column out of order at row {i}: {e.step}")
    return entries


def read_trajectory(path: str | Path) -> list[StepEntry]:
    return trajectory_from_csv(Path(path).read_text(encoding="utf-8"))


def _scores_to_dict(scores: EnergyScores, skip_initial: bool) -> dict:
    d = scores._asdict()
    d["skip_initial"] = skip_initial
    return d


def write_metrics(run_dir: Path, scores: EnergyScores, skip_initial: bool) -> None:
    (run_dir / METRICS_FILE).write_text(
        json.dumps(_scores_to_dict(scores, skip_initial), indent=2) + "\n", encoding="utf-8"
    )


def write_run(artifacts: RunArtifacts, out_dir: str | Path) -> Path:
    """Write a run into ``out_dir/run_<hash>/`` and return that directory."""
    run_dir = Path(out_dir) / run_dir_name(artifacts.config)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / CONFIG_FILE).write_text(
        json.dumps(artifacts.config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (run_dir / TRAJECTORY_FILE).write_text(
        trajectory_to_csv(artifacts.record.entries), encoding="utf-8"
    )
    write_metrics(run_dir, artifacts.scores, bool(artifacts.config.get("skip_initial", False)))
    (run_dir / FINAL_FILE).write_text(
        json.dumps({"seed": artifacts.record.seed, "x": [float(v) for v in artifacts.record.final]})
        + "\n",
        encoding="utf-8",
    )
    artifacts.path = run_dir
    return run_dir


def read_run(run_dir: str | Path) -> RunArtifacts:
    run_dir = Path(run_dir)
    try:
        config = json.loads((run_dir / CONFIG_FILE).read_text(encoding="utf-8"))
        entries = read_trajectory(run_dir / TRAJECTORY_FILE)
        metrics = json.loads((run_dir / METRICS_FILE).read_text(encoding="utf-8"))
        final = json.loads((run_dir / FINAL_FILE).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{run_dir}: {exc}") from exc
    expected = int(config["steps"]) + 1
    if len(entries) != expected:
        raise SchemaError(f"{run_dir}: {len(entries)} trajectory rows, expected {expected}")
    try:
        scores = EnergyScores(metrics["stab"], metrics["cons"], metrics["eff"], metrics["conv"])
    except KeyError as exc:
        raise SchemaError(f"{run_dir}: metrics.json missing {exc}") from exc
    record = RunRecord(
        config=config,
        entries=entries,
        final=np.asarray(final["x"], dtype=np.float64),
        seed=int(final["seed"]),
    )
    return RunArtifacts(config=config, record=record, scores=scores, path=run_dir)


def list_run_dirs(out_dir: str | Path) -> list[Path]:
    return sorted(p for p in Path(out_dir).glob("run_*") if p.is_dir())


def read_runs(out_dir: str | Path) -> list[RunArtifacts]:
    return [read_run(p) for p in list_run_dirs(out_dir)]


"""Cartesian sweep over scenarios, samplers, guidance schedules and seeds.

Each grid point is described by a self-contained JSON-able *run config*
(the ``config.json`` echo). :func:`execute_run` rebuilds everything from that
dict alone, so any stored run can be replayed exactly.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .config import NoiseParams, SweepConfig
from .diffusion import make_timestep_grid
from .energy import EnergyControl
from .guidance import GuidanceSchedule
from .metrics import energy_metrics
from .oracle import make_conditional_pair
from .runio import RunArtifacts, run_dir_name, scenario_from_dict, scenario_to_dict, write_run
from .samplers import run_sampler

log = logging.getLogger(__name__)

FAILURES_FILE = "failures.json"


@dataclass
class SweepResult:
    artifacts: list[RunArtifacts]
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_configs(config: SweepConfig) -> list[dict]:
    """Expand a sweep into one run config per grid point, in grid order."""
    out = []
    for sc in config.scenarios:
        sc_dict = scenario_to_dict(sc)
        for sampler in config.samplers:
            for g in config.guidance:
                for seed in config.seeds:
                    out.append(
                        {
                            "scenario": sc_dict,
                            "sampler": sampler.value,
                            "guidance": g.to_dict(),
                            "steps": config.steps,
                            "seed": seed,
                            "noise": config.noise.to_dict(),
                            "energy": config.energy_ctrl.to_dict(),
                            "skip_initial": config.skip_initial,
                        }
                    )
    return out


def execute_run(run_config: dict) -> RunArtifacts:
    noise = NoiseParams(**run_config["noise"]).build()
    grid = make_timestep_grid(noise, run_config["steps"])
    g = run_config["guidance"]
    guidance = GuidanceSchedule(g["kind"], g["s0"], g["s1"], g.get("alpha"), g.get("beta"))
    pair = make_conditional_pair(scenario_from_dict(run_config["scenario"]))
    record = run_sampler(
        pair,
        noise,
        grid,
        guidance,
        run_config["sampler"],
        EnergyControl(**run_config["energy"]),
        run_config["seed"],
        config=run_config,
    )
    scores = energy_metrics(record.energies, skip_initial=run_config["skip_initial"])
    return RunArtifacts(config=run_config, record=record, scores=scores)


def _execute_and_write(run_config: dict, out_dir: str) -> RunArtifacts:
    artifacts = execute_run(run_config)
    write_run(artifacts, out_dir)
    return artifacts


def run_sweep(
    config: SweepConfig,
    out_dir: Optional[Path] = None,
    workers: int = 1,
    progress: Optional[Callable[[int, int, dict], None]] = None,
) -> SweepResult:
    """Execute every grid point, writing each run directory as it completes.

    Failed runs are logged, collected in ``failures.json`` and skipped.
    Results come back in grid order regardless of ``workers``.
    """
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = run_configs(config)
    total = len(configs)
    results: dict[int, RunArtifacts] = {}
    failures: list[dict] = []

    def finished(i: int, done: int) -> None:
        log.info("[%d/%d] %s", done, total, run_dir_name(configs[i]))
        if progress is not None:
            progress(done, total, configs[i])

    def failed(i: int, exc: BaseException) -> None:
        log.error("run %s failed: %s", run_dir_name(configs[i]), exc)
        failures.append({"run": run_dir_name(configs[i]), "error": repr(exc), "config": configs[i]})

    if workers <= 1:
        for i, rc in enumerate(configs):
            try:
                results[i] = _execute_and_write(rc, str(out_dir))
            except Exception as exc:  # noqa: BLE001 - one bad run must not stop the sweep
                failed(i, exc)
            finished(i, i + 1)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_execute_and_write, rc, str(out_dir)): i for i, rc in enumerate(configs)}
            for done, fut in enumerate(as_completed(futures), start=1):
                i = futures[fut]
                try:
                    art = fut.result()
                    art.path = out_dir / run_dir_name(configs[i])
                    results[i] = art
                except Exception as exc:  # noqa: BLE001
                    failed(i, exc)
                finished(i, done)

    failures_path = out_dir / FAILURES_FILE
    if failures:
        failures.sort(key=lambda f: f["run"])
        failures_path.write_text(json.dumps(failures, indent=2) + "\n", encoding="utf-8")
    elif failures_path.exists():
        failures_path.unlink()
    return SweepResult(artifacts=[results[i] for i in sorted(results)], failures=failures)

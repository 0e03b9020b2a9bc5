"""Energy-trajectory scores and their grouped averages."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .energy import EmptyInputError, EnergyTrajectory


class EnergyScores(NamedTuple):
    stab: float
    cons: float
    eff: float
    conv: float


@dataclass(frozen=True, order=True)
class RunKey:
    sampler: str
    schedule: str
    scale: Optional[float]
    scenario: str = ""
    seed: int = 0

    @property
    def group(self) -> tuple:
        return (self.sampler, self.schedule, self.scale)


def energy_metrics(E: EnergyTrajectory | np.ndarray, skip_initial: bool = False) -> EnergyScores:
    """Stability, consistency, efficiency and convergence of one trajectory.

    Variance is the population variance over steps; ``E_T`` is the last entry.
    """
    e = np.asarray(getattr(E, "energies", E), dtype=np.float64)
    if skip_initial:
        e = e[1:]
    if e.size == 0:
        raise EmptyInputError("empty energy trajectory")
    var = float(np.var(e))
    stab = 1.0 / (1.0 + var)
    cons = 1.0 / (1.0 + float(np.sqrt(var)))
    eff = stab / (1.0 + abs(float(e[-1]) - 1.0))
    conv = 1.0 / (1.0 + float(e.max() - e.min()))
    return EnergyScores(stab, cons, eff, conv)


@dataclass
class GroupSummary:
    scores: EnergyScores
    count: int


@dataclass
class MetricsReport:
    per_run: dict[RunKey, EnergyScores]
    groups: dict[tuple, GroupSummary]

    def samplers(self) -> list[str]:
        return sorted({g[0] for g in self.groups})


def aggregate_report(runs: Iterable[tuple[RunKey, EnergyScores]]) -> MetricsReport:
    """Mean of each score within each (sampler, schedule, scale) group."""
    per_run = dict(runs)
    if not per_run:
        raise EmptyInputError("no runs to aggregate")
    buckets: dict[tuple, list[EnergyScores]] = defaultdict(list)
    for key, scores in per_run.items():
        buckets[key.group].append(scores)
    groups = {}
    for g, members in buckets.items():
        arr = np.array(members, dtype=np.float64)
        groups[g] = GroupSummary(EnergyScores(*(float(v) for v in arr.mean(axis=0))), len(members))
    return MetricsReport(per_run=per_run, groups=groups)

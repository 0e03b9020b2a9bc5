"""Reverse-process samplers and the guided sampling loop.

Step conventions follow the standard references for each name: DDIM with
``eta = 0``, Euler ancestral as DDIM with ``eta = 1``, and the data-prediction
DPM-Solver++(2M) multistep update in half-log-SNR time.

Every function that touches latents accepts a single vector ``(N,)`` or a
batch ``(B, N)``; :func:`sample_batch` exploits this to run many seeds at once.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import CLEAN_TIMESTEP, InvalidRangeError, NoiseSchedule, TimestepGrid
from .energy import EnergyControl, adaptive_threshold, clip_energy, energy, noise_refresh
from .guidance import GuidanceSchedule, combine_cfg, evaluate_schedule
from .oracle import ConditionalPair, epsilon_hat

log = logging.getLogger(__name__)


class SamplerKind(str, enum.Enum):
    DDIM = "ddim"
    EULER_ANCESTRAL = "euler_ancestral"
    DPMPP_2M = "dpmpp_2m"


class DegenerateStepError(ValueError):
    pass


class NonFiniteEnergyError(FloatingPointError):
    pass


def _check_pair(alpha_bar_t: float, alpha_bar_next: float) -> None:
    if not 0.0 < alpha_bar_t < 1.0:
        raise InvalidRangeError(f"alpha_bar_t={alpha_bar_t} outside (0, 1)")
    if not 0.0 < alpha_bar_next <= 1.0:
        raise InvalidRangeError(f"alpha_bar_next={alpha_bar_next} outside (0, 1]")


def predict_x0(x_t: np.ndarray, eps_hat: np.ndarray, alpha_bar_t: float) -> np.ndarray:
    return (x_t - math.sqrt(1.0 - alpha_bar_t) * eps_hat) / math.sqrt(alpha_bar_t)


def half_log_snr(alpha_bar: float) -> float:
    return 0.5 * (math.log(alpha_bar) - math.log1p(-alpha_bar))


def ddim_step(
    x_t: np.ndarray, eps_hat: np.ndarray, alpha_bar_t: float, alpha_bar_next: float
) -> np.ndarray:
    _check_pair(alpha_bar_t, alpha_bar_next)
    x0 = predict_x0(x_t, eps_hat, alpha_bar_t)
    return math.sqrt(alpha_bar_next) * x0 + math.sqrt(1.0 - alpha_bar_next) * eps_hat


def euler_ancestral_step(
    x_t: np.ndarray,
    eps_hat: np.ndarray,
    alpha_bar_t: float,
    alpha_bar_next: float,
    z: np.ndarray,
) -> np.ndarray:
    _check_pair(alpha_bar_t, alpha_bar_next)
    x0 = predict_x0(x_t, eps_hat, alpha_bar_t)
    var_up = (1.0 - alpha_bar_next) / (1.0 - alpha_bar_t) * (1.0 - alpha_bar_t / alpha_bar_next)
    var_up = max(var_up, 0.0)
    radicand = 1.0 - alpha_bar_next - var_up
    if radicand < 0.0:
        if radicand < -1e-12:
            log.warning("negative radicand %.3e in ancestral step clamped to 0", radicand)
        radicand = 0.0
    return (
        math.sqrt(alpha_bar_next) * x0
        + math.sqrt(radicand) * eps_hat
        + math.sqrt(var_up) * z
    )


def dpmpp_2m_step(
    x_prev: np.ndarray,
    x0_pred_curr: np.ndarray,
    x0_pred_prev: Optional[np.ndarray],
    lambda_triplet: tuple[Optional[float], float, float],
    alpha_curr: float,
    sigma_prev: float,
    sigma_curr: float,
) -> np.ndarray:
    """Advance from ``lambda_prev`` to ``lambda_curr`` with DPM-Solver++(2M).

    ``x0_pred_curr`` is the data prediction at the current state (time
    ``lambda_prev``); ``x0_pred_prev`` is the one from the step before (time
    ``lambda_prev2``), or ``None`` on the first step.
    """
    lam_prev2, lam_prev, lam_curr = lambda_triplet
    if not (math.isfinite(lam_prev) and math.isfinite(lam_curr)):
        raise InvalidRangeError("lambda values must be finite")
    h = lam_curr - lam_prev
    if h == 0.0:
        raise DegenerateStepError("zero step in half-log-SNR")
    if x0_pred_prev is None or lam_prev2 is None:
        D = x0_pred_curr
    else:
        r = (lam_prev - lam_prev2) / h
        if r == 0.0:
            raise DegenerateStepError("previous step has zero length")
        D = (1.0 + 1.0 / (2.0 * r)) * x0_pred_curr - (1.0 / (2.0 * r)) * x0_pred_prev
    return (sigma_curr / sigma_prev) * x_prev - alpha_curr * math.expm1(-h) * D


@dataclass(frozen=True)
class StepEntry:
    step: int
    timestep: int
    s_effective: float
    energy: float
    clipped: bool
    refreshed: bool


@dataclass
class RunRecord:
    config: dict
    entries: list[StepEntry]
    final: np.ndarray
    seed: int

    @property
    def energies(self) -> np.ndarray:
        return np.array([e.energy for e in self.entries])


@dataclass
class BatchResult:
    """Trajectories of ``B`` runs sharing one configuration."""

    seeds: list[int]
    timesteps: np.ndarray  # (steps+1,)
    s_effective: np.ndarray  # (steps+1,)
    refreshed: np.ndarray  # (steps+1,)
    energies: np.ndarray  # (B, steps+1)
    clipped: np.ndarray  # (B, steps+1)
    final: np.ndarray  # (B, N)
    config: dict = field(default_factory=dict)

    def record(self, i: int) -> RunRecord:
        entries = [
            StepEntry(
                step=k,
                timestep=int(self.timesteps[k]),
                s_effective=float(self.s_effective[k]),
                energy=float(self.energies[i, k]),
                clipped=bool(self.clipped[i, k]),
                refreshed=bool(self.refreshed[k]),
            )
            for k in range(len(self.timesteps))
        ]
        return RunRecord(
            config=dict(self.config), entries=entries, final=self.final[i].copy(), seed=self.seeds[i]
        )


def refresh_step_index(steps: int, fraction: float) -> Optional[int]:
    """Sampling step after which the refresh fires, or None if the grid is too short."""
    if steps < 2:
        return None
    return min(max(int(round(fraction * steps)), 1), steps - 1)


def _draw(gens: Sequence[np.random.Generator], n: int) -> np.ndarray:
    return np.stack([g.standard_normal(n) for g in gens])


def sample_batch(
    pair: ConditionalPair,
    sched: NoiseSchedule,
    grid: TimestepGrid,
    guidance: GuidanceSchedule,
    sampler: SamplerKind | str,
    energy_ctrl: EnergyControl,
    seeds: Sequence[int],
    config: Optional[dict] = None,
) -> BatchResult:
    """Run one guided sampling loop per seed, vectorised over the seeds.

    Row ``k`` of each trajectory holds the energy after sampling step ``k``
    (row 0 is the initial noise). ``s_effective[k]`` is the guidance scale
    used to produce row ``k`` and is NaN for row 0. The guidance schedule is
    evaluated at the 0-based step index. Within a step the refresh (if due)
    runs before clipping.
    """
    sampler = SamplerKind(sampler)
    guidance = guidance.with_default_steepness()
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    gens = [np.random.default_rng(s) for s in seeds]
    N = pair.N
    steps = grid.steps
    B = len(seeds)

    timesteps = np.empty(steps + 1, dtype=np.int64)
    s_eff = np.full(steps + 1, np.nan)
    refreshed = np.zeros(steps + 1, dtype=bool)
    energies = np.empty((B, steps + 1))
    clipped = np.zeros((B, steps + 1), dtype=bool)

    x = _draw(gens, N)
    timesteps[0] = grid.indices[0]
    energies[:, 0] = energy(x)

    refresh_at = refresh_step_index(steps, energy_ctrl.refresh_fraction) if energy_ctrl.refresh_enabled else None
    x0_last: Optional[np.ndarray] = None
    lam_last: Optional[float] = None

    for k in range(steps):
        t = grid.indices[k]
        t_next = grid.indices[k + 1] if k + 1 < steps else CLEAN_TIMESTEP
        ab = sched.alpha_bar_at(t)
        ab_next = sched.alpha_bar_at(t_next)
        s = evaluate_schedule(guidance, k, steps)
        eps_c = epsilon_hat(pair.cond, x, ab)
        eps_u = epsilon_hat(pair.uncond, x, ab)
        eps = combine_cfg(eps_c, eps_u, s)

        if sampler is SamplerKind.DDIM:
            x = ddim_step(x, eps, ab, ab_next)
        elif sampler is SamplerKind.EULER_ANCESTRAL:
            x = euler_ancestral_step(x, eps, ab, ab_next, _draw(gens, N))
        else:
            x0 = predict_x0(x, eps, ab)
            lam = half_log_snr(ab)
            if t_next == CLEAN_TIMESTEP:
                # lambda is infinite at the clean boundary; the update reduces to the data prediction
                x = x0
            else:
                x = dpmpp_2m_step(
                    x, x0, x0_last, (lam_last, lam, half_log_snr(ab_next)),
                    alpha_curr=math.sqrt(ab_next),
                    sigma_prev=math.sqrt(1.0 - ab),
                    sigma_curr=math.sqrt(1.0 - ab_next),
                )
            x0_last, lam_last = x0, lam

        row = k + 1
        if refresh_at is not None and row == refresh_at:
            x = noise_refresh(x, ab_next, _draw(gens, N), energy_ctrl.refresh_blend)
            refreshed[row] = True
        if energy_ctrl.clipping_enabled:
            if energy_ctrl.adaptive_threshold:
                # counted in remaining steps so the cap is loosest while the latent is noisiest
                e_max = adaptive_threshold(energy_ctrl.E_base, energy_ctrl.gamma, steps - row, steps)
            else:
                e_max = energy_ctrl.E_base
            x, was_clipped = clip_energy(x, e_max, energy_ctrl.clip_mode)
            clipped[:, row] = was_clipped

        e = energy(x)
        if not np.all(np.isfinite(e)):
            bad = [seeds[i] for i in np.flatnonzero(~np.isfinite(e))]
            raise NonFiniteEnergyError(
                f"non-finite energy at step {row} (timestep {t_next}, s={s}) for seeds {bad}"
            )
        energies[:, row] = e
        timesteps[row] = t_next
        s_eff[row] = s

    return BatchResult(
        seeds=seeds,
        timesteps=timesteps,
        s_effective=s_eff,
        refreshed=refreshed,
        energies=energies,
        clipped=clipped,
        final=x,
        config=dict(config or {}),
    )


def run_sampler(
    pair: ConditionalPair,
    sched: NoiseSchedule,
    grid: TimestepGrid,
    guidance: GuidanceSchedule,
    sampler: SamplerKind | str,
    energy_ctrl: EnergyControl,
    seed: int,
    config: Optional[dict] = None,
) -> RunRecord:
    batch = sample_batch(pair, sched, grid, guidance, sampler, energy_ctrl, [seed], config)
    return batch.record(0)

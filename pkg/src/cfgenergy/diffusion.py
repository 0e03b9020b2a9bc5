"""Variance-preserving noise schedule, sampling grid and forward marginal.

Convention: timestep ``t`` indexes the training grid ``0..T_train-1`` and
``t = -1`` is the clean boundary where ``alpha_bar`` is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLEAN_TIMESTEP = -1


class InvalidRangeError(ValueError):
    """A parameter lies outside its admissible range."""


class DimensionMismatchError(ValueError):
    """Two vectors that must share a length do not."""


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    beta: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T_train(self) -> int:
        return len(self.beta)

    def alpha_bar_at(self, t: int) -> float:
        """``alpha_bar`` at training timestep ``t``; 1.0 at the clean boundary."""
        if t == CLEAN_TIMESTEP:
            return 1.0
        if not 0 <= t < self.T_train:
            raise InvalidRangeError(f"timestep {t} outside [0, {self.T_train})")
        return float(self.alpha_bar[t])


@dataclass(frozen=True)
class TimestepGrid:
    indices: tuple[int, ...]

    @property
    def steps(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class LatentState:
    x: np.ndarray
    t: int

    @property
    def N(self) -> int:
        return self.x.shape[-1]


def build_noise_schedule(
    kind: str = "linear",
    T_train: int = 1000,
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
) -> NoiseSchedule:
    if kind != "linear":
        raise InvalidRangeError(f"unsupported noise schedule kind {kind!r}")
    if T_train < 1:
        raise InvalidRangeError(f"T_train must be >= 1, got {T_train}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise InvalidRangeError(
            f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
        )
    beta = np.linspace(beta_min, beta_max, T_train, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    beta.setflags(write=False)
    alpha_bar.setflags(write=False)
    return NoiseSchedule(kind=kind, beta=beta, alpha_bar=alpha_bar)


def make_timestep_grid(schedule: NoiseSchedule, steps: int) -> TimestepGrid:
    """Uniform stride over the training timesteps, starting at ``T_train - 1``."""
    T = schedule.T_train
    if not 1 <= steps <= T:
        raise InvalidRangeError(f"steps must lie in [1, {T}], got {steps}")
    stride = T // steps
    return TimestepGrid(tuple(T - 1 - stride * k for k in range(steps)))


def forward_diffuse(
    x0: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule
) -> LatentState:
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise DimensionMismatchError(f"x0 {x0.shape} vs noise {noise.shape}")
    ab = schedule.alpha_bar_at(t)
    x = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
    return LatentState(x=x, t=t)

"""Latent energy, energy clipping, adaptive thresholds and noise refresh."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .diffusion import DimensionMismatchError, InvalidRangeError

CLIP_MODES = ("ratio", "sqrt")


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyControl:
    clipping_enabled: bool = False
    E_base: float = 2.0
    gamma: float = 0.0
    adaptive_threshold: bool = False
    refresh_enabled: bool = False
    refresh_fraction: float = 0.5
    refresh_blend: float = 0.5
    clip_mode: str = "ratio"

    def __post_init__(self):
        if self.E_base <= 0:
            raise InvalidRangeError(f"E_base must be positive, got {self.E_base}")
        if self.gamma < 0:
            raise InvalidRangeError(f"gamma must be >= 0, got {self.gamma}")
        if self.adaptive_threshold and not self.clipping_enabled:
            raise InvalidRangeError("adaptive threshold requires clipping to be enabled")
        if not 0.0 < self.refresh_fraction < 1.0:
            raise InvalidRangeError(f"refresh_fraction must lie in (0, 1), got {self.refresh_fraction}")
        if not 0.0 <= self.refresh_blend <= 1.0:
            raise InvalidRangeError(f"refresh_blend must lie in [0, 1], got {self.refresh_blend}")
        if self.clip_mode not in CLIP_MODES:
            raise InvalidRangeError(f"clip_mode must be one of {CLIP_MODES}, got {self.clip_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyTrajectory:
    energies: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        if e.ndim != 1:
            raise DimensionMismatchError(f"trajectory must be 1-D, got shape {e.shape}")
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise InvalidRangeError("energies must be finite and non-negative")
        object.__setattr__(self, "energies", e)

    @property
    def step_count(self) -> int:
        return len(self.energies) - 1

    def __len__(self) -> int:
        return len(self.energies)


def energy(x: np.ndarray) -> np.ndarray | float:
    """Mean squared component ``||x||^2 / N`` over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise EmptyInputError("energy of an empty vector is undefined")
    e = np.einsum("...n,...n->...", x, x) / x.shape[-1]
    return float(e) if np.ndim(e) == 0 else e


def clip_energy(
    x: np.ndarray, E_max: float, mode: str = "ratio"
) -> tuple[np.ndarray, np.ndarray | bool]:
    """Scale ``x`` down when its energy exceeds ``E_max``.

    ``mode="ratio"`` multiplies by ``min(1, E_max / E)``, which leaves the
    clipped latent at energy ``E_max**2 / E``. ``mode="sqrt"`` multiplies by
    ``min(1, sqrt(E_max / E))`` and lands on ``E_max``. The returned flag is
    true where the factor was below 1.
    """
    if not E_max > 0:
        raise InvalidRangeError(f"E_max must be positive, got {E_max}")
    if mode not in CLIP_MODES:
        raise InvalidRangeError(f"unknown clip mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    E = np.asarray(energy(x))
    clipped = E > E_max
    if not np.any(clipped):
        return x.copy(), (bool(clipped) if clipped.ndim == 0 else clipped)
    with np.errstate(divide="ignore"):
        ratio = np.where(clipped, E_max / np.where(clipped, E, 1.0), 1.0)
    factor = ratio if mode == "ratio" else np.sqrt(ratio)
    out = x * factor[..., None]
    # rounding guard: the clipped latent must never sit above the cap
    over = np.asarray(energy(out)) > E_max
    while np.any(over):
        factor = np.where(over, np.nextafter(factor, 0.0), factor)
        out = x * factor[..., None]
        over = np.asarray(energy(out)) > E_max
    return out, (bool(clipped) if clipped.ndim == 0 else clipped)


def adaptive_threshold(E_base: float, gamma: float, t: float, T: int) -> float:
    """Step-dependent cap ``E_base * (1 + gamma * t / T)``."""
    if T < 1:
        raise InvalidRangeError(f"T must be >= 1, got {T}")
    if not 0 <= t <= T:
        raise InvalidRangeError(f"t={t} outside [0, {T}]")
    return E_base * (1.0 + gamma * t / T)


def noise_refresh(
    x: np.ndarray, alpha_bar_t: float, z: np.ndarray, blend: float
) -> np.ndarray:
    """Blend ``x`` with fresh noise at the current noise level.

    Returns ``sqrt(1-blend) * x + sqrt(blend) * sqrt(1-alpha_bar_t) * z``, so a
    latent with per-component variance ``v`` comes out with variance
    ``(1-blend) * v + blend * (1-alpha_bar_t)``.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise DimensionMismatchError(f"x {x.shape} vs z {z.shape}")
    if not 0.0 < alpha_bar_t < 1.0:
        raise InvalidRangeError(f"alpha_bar_t={alpha_bar_t} outside (0, 1)")
    if not 0.0 <= blend <= 1.0:
        raise InvalidRangeError(f"blend={blend} outside [0, 1]")
    if blend == 0.0:
        return x.copy()
    return np.sqrt(1.0 - blend) * x + np.sqrt(blend) * np.sqrt(1.0 - alpha_bar_t) * z


def aggregate_trajectories(
    runs: Sequence[EnergyTrajectory | np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step mean and population variance across runs."""
    if len(runs) == 0:
        raise EmptyInputError("no trajectories to aggregate")
    arrays = [np.asarray(getattr(r, "energies", r), dtype=np.float64) for r in runs]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise DimensionMismatchError(f"trajectory lengths differ: {sorted(lengths)}")
    stack = np.stack(arrays)
    return stack.mean(axis=0), stack.var(axis=0)

"""Classifier-free guidance combination and time-indexed guidance schedules.

Each schedule maps a sampling step ``t`` in ``0..T`` to a scale. The formulas
are applied as written: ``linear_decreasing`` starts at ``s1`` and ends at
``s0``, while ``cosine_ramp``, ``step``, ``exponential`` and ``sigmoid`` run
from ``s0`` to ``s1``. Pass ``s0 > s1`` to make the latter four decrease.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .diffusion import DimensionMismatchError, InvalidRangeError

log = logging.getLogger(__name__)

KINDS = ("fixed", "linear_decreasing", "cosine_ramp", "step", "exponential", "sigmoid")
DEFAULT_ALPHA = 3.0
DEFAULT_BETA_STEEP = 10.0


class MissingParameterError(ValueError):
    pass


@dataclass(frozen=True)
class GuidanceSchedule:
    kind: str
    s0: float
    s1: float = 0.0
    alpha: Optional[float] = None
    beta_steep: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidRangeError(f"unknown guidance kind {self.kind!r}; expected one of {KINDS}")
        if self.s0 < 0 or self.s1 < 0:
            raise InvalidRangeError(f"guidance scales must be >= 0, got s0={self.s0}, s1={self.s1}")
        for name in ("alpha", "beta_steep"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise InvalidRangeError(f"{name} must be positive, got {v}")

    @classmethod
    def fixed(cls, s: float) -> "GuidanceSchedule":
        return cls("fixed", s0=s, s1=s)

    def with_default_steepness(self) -> "GuidanceSchedule":
        """Fill a missing steepness for exponential/sigmoid, logging a warning."""
        if self.kind == "exponential" and self.alpha is None:
            log.warning("exponential schedule without alpha; using %s", DEFAULT_ALPHA)
            return GuidanceSchedule(self.kind, self.s0, self.s1, DEFAULT_ALPHA, self.beta_steep)
        if self.kind == "sigmoid" and self.beta_steep is None:
            log.warning("sigmoid schedule without beta; using %s", DEFAULT_BETA_STEEP)
            return GuidanceSchedule(self.kind, self.s0, self.s1, self.alpha, DEFAULT_BETA_STEEP)
        return self

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.s0:g})"
        extra = ""
        if self.kind == "exponential" and self.alpha is not None:
            extra = f",a={self.alpha:g}"
        elif self.kind == "sigmoid" and self.beta_steep is not None:
            extra = f",b={self.beta_steep:g}"
        return f"{self.kind}({self.s0:g}->{self.s1:g}{extra})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "s0": self.s0, "s1": self.s1}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.beta_steep is not None:
            d["beta"] = self.beta_steep
        return d


def evaluate_schedule(sched: GuidanceSchedule, t: float, T: int) -> float:
    if T < 1:
        raise InvalidRangeError(f"T must be >= 1, got {T}")
    if not 0 <= t <= T:
        raise InvalidRangeError(f"t={t} outside [0, {T}]")
    s0, s1 = sched.s0, sched.s1
    u = t / T
    kind = sched.kind
    if kind == "fixed":
        return s0
    if kind == "linear_decreasing":
        return s1 - (s1 - s0) * u
    if kind == "cosine_ramp":
        return s0 + (s1 - s0) * (1.0 - math.cos(math.pi * u)) / 2.0
    if kind == "step":
        return s0 if t < T / 2 else s1
    if kind == "exponential":
        if sched.alpha is None:
            raise MissingParameterError("exponential schedule requires alpha")
        return s0 + (s1 - s0) * (1.0 - math.exp(-sched.alpha * u))
    if kind == "sigmoid":
        if sched.beta_steep is None:
            raise MissingParameterError("sigmoid schedule requires beta_steep")
        return s0 + (s1 - s0) / (1.0 + math.exp(-sched.beta_steep * (u - 0.5)))
    raise InvalidRangeError(f"unknown guidance kind {kind!r}")


def combine_cfg(eps_cond: np.ndarray, eps_uncond: np.ndarray, s: float) -> np.ndarray:
    """Guided prediction ``(1 + s) * eps_cond - s * eps_uncond``.

    Evaluated as ``eps_cond + s * (eps_cond - eps_uncond)`` so that ``s = 0``
    and ``eps_cond == eps_uncond`` both return ``eps_cond`` bit-for-bit.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise DimensionMismatchError(f"{eps_cond.shape} vs {eps_uncond.shape}")
    if not math.isfinite(s):
        raise InvalidRangeError(f"guidance scale must be finite, got {s}")
    return eps_cond + s * (eps_cond - eps_uncond)

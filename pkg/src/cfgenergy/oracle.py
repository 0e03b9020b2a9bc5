"""Closed-form denoisers for isotropic Gaussian-mixture data.

Under ``x_t = a * x0 + s * eps`` with ``a = sqrt(alpha_bar)`` and
``s = sqrt(1 - alpha_bar)``, component ``k`` with data law
``N(mu_k, var_k I)`` has marginal ``N(a mu_k, (a^2 var_k + s^2) I)`` and the
conjugate posterior mean

    E[x0 | x_t, k] = mu_k + a var_k / (a^2 var_k + s^2) * (x_t - a mu_k).

The mixture posterior mean weights these by the component responsibilities.
All predictors accept a single vector of shape ``(N,)`` or a batch ``(B, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .diffusion import DimensionMismatchError, InvalidRangeError


class UnknownTargetError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    weight: float
    mean: np.ndarray
    variance: float


@dataclass(frozen=True, eq=False)
class GaussianMixtureScoreModel:
    weights: np.ndarray
    means: np.ndarray  # (K, N)
    variances: np.ndarray  # (K,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0 or mu.shape[0] != len(w) or var.shape != w.shape:
            raise DimensionMismatchError("weights, means and variances disagree on K")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidRangeError(f"weights must be positive and sum to 1, got {w}")
        if np.any(var <= 0):
            raise InvalidRangeError(f"variances must be positive, got {var}")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, GaussianMixtureScoreModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    __hash__ = None

    @classmethod
    def from_components(cls, components: Sequence[Component]) -> "GaussianMixtureScoreModel":
        w = np.array([c.weight for c in components], dtype=np.float64)
        w = w / w.sum()
        return cls(
            weights=w,
            means=np.stack([np.asarray(c.mean, dtype=np.float64) for c in components]),
            variances=np.array([c.variance for c in components], dtype=np.float64),
        )

    @property
    def N(self) -> int:
        return self.means.shape[1]

    @property
    def K(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class ConditionalPair:
    cond: GaussianMixtureScoreModel
    uncond: GaussianMixtureScoreModel

    def __post_init__(self):
        if self.cond.N != self.uncond.N:
            raise DimensionMismatchError(
                f"cond N={self.cond.N} differs from uncond N={self.uncond.N}"
            )

    @property
    def N(self) -> int:
        return self.cond.N


@dataclass(frozen=True)
class ScenarioSpec:
    """A mixture plus the component indices acting as the "prompt"."""

    name: str
    components: tuple[Component, ...]
    target: tuple[int, ...]
    dim: int = field(default=0)

    def __post_init__(self):
        if not self.components:
            raise ValueError(f"scenario {self.name!r} has no components")
        dims = {len(c.mean) for c in self.components}
        if len(dims) != 1:
            raise DimensionMismatchError(f"scenario {self.name!r} mixes dimensions {dims}")
        (n,) = dims
        if self.dim and self.dim != n:
            raise DimensionMismatchError(
                f"scenario {self.name!r} declares dim={self.dim} but means have length {n}"
            )
        object.__setattr__(self, "dim", n)


def _check_alpha_bar(alpha_bar_t: float, upper_inclusive: bool) -> None:
    ok = 0.0 < alpha_bar_t <= 1.0 if upper_inclusive else 0.0 < alpha_bar_t < 1.0
    if not ok:
        bound = "(0, 1]" if upper_inclusive else "(0, 1)"
        raise InvalidRangeError(f"alpha_bar_t={alpha_bar_t} outside {bound}")


def _check_dim(model: GaussianMixtureScoreModel, x_t: np.ndarray) -> None:
    if x_t.shape[-1] != model.N:
        raise DimensionMismatchError(f"x_t has length {x_t.shape[-1]}, model N={model.N}")


def responsibilities(
    model: GaussianMixtureScoreModel, x_t: np.ndarray, alpha_bar_t: float
) -> np.ndarray:
    """Posterior component probabilities p(k | x_t), shape ``(..., K)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_alpha_bar(alpha_bar_t, upper_inclusive=True)
    _check_dim(model, x_t)
    a = np.sqrt(alpha_bar_t)
    marg_var = alpha_bar_t * model.variances + (1.0 - alpha_bar_t)
    diff = x_t[..., None, :] - a * model.means
    sq = np.einsum("...kn,...kn->...k", diff, diff)
    log_lik = (
        np.log(model.weights)
        - 0.5 * model.N * np.log(2.0 * np.pi * marg_var)
        - 0.5 * sq / marg_var
    )
    return np.exp(log_lik - logsumexp(log_lik, axis=-1, keepdims=True))


def posterior_x0_mean(
    model: GaussianMixtureScoreModel, x_t: np.ndarray, alpha_bar_t: float
) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    resp = responsibilities(model, x_t, alpha_bar_t)
    a = np.sqrt(alpha_bar_t)
    gain = a * model.variances / (alpha_bar_t * model.variances + (1.0 - alpha_bar_t))
    # per-component posterior means, (..., K, N)
    comp = model.means + gain[:, None] * (x_t[..., None, :] - a * model.means)
    return np.einsum("...k,...kn->...n", resp, comp)


def epsilon_hat(
    model: GaussianMixtureScoreModel, x_t: np.ndarray, alpha_bar_t: float
) -> np.ndarray:
    """Bayes-optimal noise prediction E[eps | x_t]; undefined at the clean boundary."""
    _check_alpha_bar(alpha_bar_t, upper_inclusive=False)
    x_t = np.asarray(x_t, dtype=np.float64)
    x0 = posterior_x0_mean(model, x_t, alpha_bar_t)
    return (x_t - np.sqrt(alpha_bar_t) * x0) / np.sqrt(1.0 - alpha_bar_t)


def make_conditional_pair(scenario: ScenarioSpec) -> ConditionalPair:
    K = len(scenario.components)
    if not scenario.target:
        raise UnknownTargetError(f"scenario {scenario.name!r} names no target")
    for k in scenario.target:
        if not 0 <= k < K:
            raise UnknownTargetError(
                f"scenario {scenario.name!r}: target {k} not in 0..{K - 1}"
            )
    uncond = GaussianMixtureScoreModel.from_components(scenario.components)
    cond = GaussianMixtureScoreModel.from_components(
        [scenario.components[k] for k in sorted(set(scenario.target))]
    )
    return ConditionalPair(cond=cond, uncond=uncond)


def two_mode_scenario(
    dim: int = 8, separation: float = 1.0, variance: float = 0.25, name: str = "two_mode"
) -> ScenarioSpec:
    """Symmetric pair of modes at ``+-separation`` along every axis; target is ``+``."""
    mu = np.full(dim, separation)
    return ScenarioSpec(
        name=name,
        components=(Component(0.5, mu, variance), Component(0.5, -mu, variance)),
        target=(0,),
    )


def standard_normal_scenario(dim: int = 8, name: str = "standard_normal") -> ScenarioSpec:
    return ScenarioSpec(
        name=name, components=(Component(1.0, np.zeros(dim), 1.0),), target=(0,)
    )

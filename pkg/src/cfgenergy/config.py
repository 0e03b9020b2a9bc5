"""Sweep configuration: TOML parsing, validation and defaults.

A config is a TOML document. Top-level keys::

    steps = 50                      # sampling steps
    seeds = [0, 1, 2]
    samplers = ["ddim", "euler_ancestral", "dpmpp_2m"]
    cfg_scales = [3, 5, 7, 10, 12, 15, 18]   # fixed-scale runs
    output_dir = "runs/example"
    skip_initial = false            # drop the step-0 energy from scores

    [noise]    kind, T_train, beta_min, beta_max
    [energy]   clipping, e_base, gamma, adaptive, refresh,
               refresh_fraction, refresh_blend, clip_mode

    [[schedules]]                   # adaptive guidance, in addition to cfg_scales
    kind = "linear_decreasing"
    s0 = 3
    s1 = 18                         # alpha / beta set exponential / sigmoid steepness

    [[scenarios]]
    name = "two_mode"
    dim = 8                         # needed only when a mean is a scalar
    target = [0]                    # component indices forming the "prompt"
    components = [
      { weight = 0.5, mean = 1.0, variance = 0.25 },
      { weight = 0.5, mean = -1.0, variance = 0.25 },
    ]

Unknown keys anywhere are rejected. ``scenarios`` is the only required key;
when neither ``cfg_scales`` nor ``schedules`` is given the default scale grid
is used.
"""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diffusion import build_noise_schedule
from .energy import EnergyControl
from .guidance import KINDS, GuidanceSchedule
from .oracle import Component, ScenarioSpec
from .samplers import SamplerKind

DEFAULT_SCALES = (3.0, 5.0, 7.0, 10.0, 12.0, 15.0, 18.0)
DEFAULT_SEEDS = (0, 1, 2)
DEFAULT_STEPS = 50

_TOP_KEYS = {
    "steps", "seeds", "samplers", "cfg_scales", "schedules", "output_dir",
    "skip_initial", "noise", "energy", "scenarios",
}
_NOISE_KEYS = {"kind", "T_train", "beta_min", "beta_max"}
_ENERGY_KEYS = {
    "clipping": "clipping_enabled",
    "e_base": "E_base",
    "gamma": "gamma",
    "adaptive": "adaptive_threshold",
    "refresh": "refresh_enabled",
    "refresh_fraction": "refresh_fraction",
    "refresh_blend": "refresh_blend",
    "clip_mode": "clip_mode",
}
_SCHEDULE_KEYS = {"kind", "s0", "s1", "alpha", "beta"}
_SCENARIO_KEYS = {"name", "dim", "target", "components"}
_COMPONENT_KEYS = {"weight", "mean", "variance"}


class ConfigError(ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int]):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ConfigValidationError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class NoiseParams:
    kind: str = "linear"
    T_train: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02

    def build(self):
        return build_noise_schedule(self.kind, self.T_train, self.beta_min, self.beta_max)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepConfig:
    scenarios: tuple[ScenarioSpec, ...]
    samplers: tuple[SamplerKind, ...] = tuple(SamplerKind)
    guidance: tuple[GuidanceSchedule, ...] = tuple(GuidanceSchedule.fixed(s) for s in DEFAULT_SCALES)
    steps: int = DEFAULT_STEPS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    energy_ctrl: EnergyControl = field(default_factory=EnergyControl)
    noise: NoiseParams = field(default_factory=NoiseParams)
    output_dir: Path = Path("runs")
    skip_initial: bool = False

    def __post_init__(self):
        for name in ("scenarios", "samplers", "guidance", "seeds"):
            if not getattr(self, name):
                raise ConfigValidationError(name, "must be non-empty")

    @property
    def grid_size(self) -> int:
        return len(self.scenarios) * len(self.samplers) * len(self.guidance) * len(self.seeds)


def _line_of(err: Exception) -> Optional[int]:
    line = getattr(err, "lineno", None)
    if line is None:
        m = re.search(r"line (\d+)", str(err))
        line = int(m.group(1)) if m else None
    return line


def _reject_unknown(table: dict, allowed, where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigValidationError(f"{where}{key}", "unknown key")


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(key, f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigValidationError(key, f"expected an integer, got {value!r}")
    return value


def _boolean(value: Any, key: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigValidationError(key, f"expected true/false, got {value!r}")
    return value


def _list(value: Any, key: str) -> list:
    if not isinstance(value, list):
        raise ConfigValidationError(key, f"expected a list, got {value!r}")
    return value


def _parse_component(raw: Any, dim: Optional[int], key: str) -> Component:
    if not isinstance(raw, dict):
        raise ConfigValidationError(key, "component must be a table")
    _reject_unknown(raw, _COMPONENT_KEYS, f"{key}.")
    for required in ("mean", "variance"):
        if required not in raw:
            raise ConfigValidationError(f"{key}.{required}", "required")
    weight = _number(raw.get("weight", 1.0), f"{key}.weight")
    variance = _number(raw["variance"], f"{key}.variance")
    if weight <= 0:
        raise ConfigValidationError(f"{key}.weight", "must be positive")
    if variance <= 0:
        raise ConfigValidationError(f"{key}.variance", "must be positive")
    mean_raw = raw["mean"]
    if isinstance(mean_raw, list):
        mean = np.array([_number(v, f"{key}.mean") for v in mean_raw])
        if mean.size == 0:
            raise ConfigValidationError(f"{key}.mean", "empty mean vector")
        if dim is not None and mean.size != dim:
            raise ConfigValidationError(f"{key}.mean", f"length {mean.size} != dim {dim}")
    else:
        if dim is None:
            raise ConfigValidationError(f"{key}.mean", "scalar mean needs the scenario's dim")
        mean = np.full(dim, _number(mean_raw, f"{key}.mean"))
    return Component(weight=weight, mean=mean, variance=variance)


def parse_scenario(raw: Any, index: int) -> ScenarioSpec:
    key = f"scenarios[{index}]"
    if not isinstance(raw, dict):
        raise ConfigValidationError(key, "scenario must be a table")
    _reject_unknown(raw, _SCENARIO_KEYS, f"{key}.")
    name = raw.get("name", f"scenario{index}")
    if not isinstance(name, str) or not name:
        raise ConfigValidationError(f"{key}.name", "must be a non-empty string")
    dim = raw.get("dim")
    if dim is not None:
        dim = _integer(dim, f"{key}.dim")
        if dim < 1:
            raise ConfigValidationError(f"{key}.dim", "must be >= 1")
    comps_raw = _list(raw.get("components", []), f"{key}.components")
    if not comps_raw:
        raise ConfigValidationError(f"{key}.components", "at least one component required")
    comps = tuple(
        _parse_component(c, dim, f"{key}.components[{i}]") for i, c in enumerate(comps_raw)
    )
    lengths = {len(c.mean) for c in comps}
    if len(lengths) != 1:
        raise ConfigValidationError(f"{key}.components", f"means disagree on length {sorted(lengths)}")
    target_raw = raw.get("target", [0])
    target_list = target_raw if isinstance(target_raw, list) else [target_raw]
    target = tuple(_integer(t, f"{key}.target") for t in target_list)
    if not target:
        raise ConfigValidationError(f"{key}.target", "must name at least one component")
    for t in target:
        if not 0 <= t < len(comps):
            raise ConfigValidationError(f"{key}.target", f"unknown component {t}")
    return ScenarioSpec(name=name, components=comps, target=target)


def _parse_schedule(raw: Any, index: int) -> GuidanceSchedule:
    key = f"schedules[{index}]"
    if not isinstance(raw, dict):
        raise ConfigValidationError(key, "schedule must be a table")
    _reject_unknown(raw, _SCHEDULE_KEYS, f"{key}.")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigValidationError(f"{key}.kind", f"expected one of {KINDS}, got {kind!r}")
    if "s0" not in raw:
        raise ConfigValidationError(f"{key}.s0", "required")
    s0 = _number(raw["s0"], f"{key}.s0")
    s1 = _number(raw.get("s1", s0), f"{key}.s1")
    alpha = _number(raw["alpha"], f"{key}.alpha") if "alpha" in raw else None
    beta = _number(raw["beta"], f"{key}.beta") if "beta" in raw else None
    try:
        return GuidanceSchedule(kind, s0, s1, alpha, beta).with_default_steepness()
    except ValueError as exc:
        raise ConfigValidationError(key, str(exc)) from exc


def config_from_dict(doc: dict, base_dir: Optional[Path] = None) -> SweepConfig:
    _reject_unknown(doc, _TOP_KEYS, "")
    if "scenarios" not in doc:
        raise ConfigValidationError("scenarios", "required")
    scenarios = tuple(
        parse_scenario(s, i) for i, s in enumerate(_list(doc["scenarios"], "scenarios"))
    )
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigValidationError("scenarios", f"duplicate scenario names in {names}")

    samplers_raw = _list(doc.get("samplers", [k.value for k in SamplerKind]), "samplers")
    try:
        samplers = tuple(SamplerKind(s) for s in samplers_raw)
    except ValueError as exc:
        raise ConfigValidationError("samplers", str(exc)) from exc

    guidance: list[GuidanceSchedule] = []
    if "cfg_scales" in doc:
        for s in _list(doc["cfg_scales"], "cfg_scales"):
            scale = _number(s, "cfg_scales")
            if scale < 0:
                raise ConfigValidationError("cfg_scales", f"negative scale {scale}")
            guidance.append(GuidanceSchedule.fixed(scale))
    if "schedules" in doc:
        guidance.extend(
            _parse_schedule(s, i) for i, s in enumerate(_list(doc["schedules"], "schedules"))
        )
    if "cfg_scales" not in doc and "schedules" not in doc:
        guidance = [GuidanceSchedule.fixed(s) for s in DEFAULT_SCALES]

    steps = _integer(doc.get("steps", DEFAULT_STEPS), "steps")
    seeds = tuple(_integer(s, "seeds") for s in _list(doc.get("seeds", list(DEFAULT_SEEDS)), "seeds"))
    if len(set(seeds)) != len(seeds):
        raise ConfigValidationError("seeds", "duplicate seeds")

    noise_raw = doc.get("noise", {})
    if not isinstance(noise_raw, dict):
        raise ConfigValidationError("noise", "must be a table")
    _reject_unknown(noise_raw, _NOISE_KEYS, "noise.")
    noise = NoiseParams(
        kind=noise_raw.get("kind", "linear"),
        T_train=_integer(noise_raw.get("T_train", 1000), "noise.T_train"),
        beta_min=_number(noise_raw.get("beta_min", 1e-4), "noise.beta_min"),
        beta_max=_number(noise_raw.get("beta_max", 0.02), "noise.beta_max"),
    )
    try:
        noise.build()
    except ValueError as exc:
        raise ConfigValidationError("noise", str(exc)) from exc
    if not 1 <= steps <= noise.T_train:
        raise ConfigValidationError("steps", f"must lie in [1, {noise.T_train}], got {steps}")

    energy_raw = doc.get("energy", {})
    if not isinstance(energy_raw, dict):
        raise ConfigValidationError("energy", "must be a table")
    _reject_unknown(energy_raw, _ENERGY_KEYS, "energy.")
    kwargs = {}
    for key, attr in _ENERGY_KEYS.items():
        if key not in energy_raw:
            continue
        value = energy_raw[key]
        if key in ("clipping", "adaptive", "refresh"):
            kwargs[attr] = _boolean(value, f"energy.{key}")
        elif key == "clip_mode":
            kwargs[attr] = value
        else:
            kwargs[attr] = _number(value, f"energy.{key}")
    try:
        energy_ctrl = EnergyControl(**kwargs)
    except ValueError as exc:
        raise ConfigValidationError("energy", str(exc)) from exc

    out = Path(doc.get("output_dir", "runs"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return SweepConfig(
        scenarios=scenarios,
        samplers=samplers,
        guidance=tuple(guidance),
        steps=steps,
        seeds=seeds,
        energy_ctrl=energy_ctrl,
        noise=noise,
        output_dir=out,
        skip_initial=_boolean(doc.get("skip_initial", False), "skip_initial"),
    )


def parse_config_text(text: str, base_dir: Optional[Path] = None) -> SweepConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(str(exc), _line_of(exc)) from exc
    return config_from_dict(doc, base_dir)


def parse_config(path: str | Path) -> SweepConfig:
    """Read and validate a sweep config.

    A relative ``output_dir`` is kept relative to the current directory.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text)

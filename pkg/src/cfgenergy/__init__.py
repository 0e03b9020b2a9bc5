"""Energy profiling and scheduled classifier-free guidance on analytic diffusion testbeds."""

from .diffusion import (
    CLEAN_TIMESTEP,
    NoiseSchedule,
    TimestepGrid,
    build_noise_schedule,
    forward_diffuse,
    make_timestep_grid,
)
from .energy import (
    EnergyControl,
    EnergyTrajectory,
    adaptive_threshold,
    aggregate_trajectories,
    clip_energy,
    energy,
    noise_refresh,
)
from .guidance import GuidanceSchedule, combine_cfg, evaluate_schedule
from .metrics import EnergyScores, MetricsReport, RunKey, aggregate_report, energy_metrics
from .oracle import (
    Component,
    ConditionalPair,
    GaussianMixtureScoreModel,
    ScenarioSpec,
    epsilon_hat,
    make_conditional_pair,
    posterior_x0_mean,
    standard_normal_scenario,
    two_mode_scenario,
)
from .samplers import (
    RunRecord,
    SamplerKind,
    ddim_step,
    dpmpp_2m_step,
    euler_ancestral_step,
    run_sampler,
    sample_batch,
)

__version__ = "0.1.0"

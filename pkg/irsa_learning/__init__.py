"""
IRSA 传输策略在线学习包
"""

__version__ = "0.1.0"

from .irsa import (
    ConstraintViolation,
    DegreeDistribution,
    ScenarioConfig,
    TransmissionStrategy,
    FrameRealization,
    DecodeResult,
    generate_frame,
    sic_decode,
    frame_reward,
)
from .asymptotic import (
    DensityEvolutionParams,
    density_evolution_pe,
    waterfall_threshold,
    decode_pmf,
    prior_moments,
    asymptotic_optimize,
)
from .bandit import PolicyKind, run_episode, estimate_mu_star
from .harness import ExperimentSpec, ExperimentError, build_arm_set, run_experiment
from .oracle_store import MuStarStore
from .output_organizer import OutputOrganizer, emit_results

__all__ = [
    "ConstraintViolation",
    "DegreeDistribution",
    "ScenarioConfig",
    "TransmissionStrategy",
    "FrameRealization",
    "DecodeResult",
    "generate_frame",
    "sic_decode",
    "frame_reward",
    "DensityEvolutionParams",
    "density_evolution_pe",
    "waterfall_threshold",
    "decode_pmf",
    "prior_moments",
    "asymptotic_optimize",
    "PolicyKind",
    "run_episode",
    "estimate_mu_star",
    "ExperimentSpec",
    "ExperimentError",
    "build_arm_set",
    "run_experiment",
    "MuStarStore",
    "OutputOrganizer",
    "emit_results",
]

"""DPP-based batch selection and batch active learning."""

from dppal.data import Dataset, SineSpec, generate_sine_dataset, load_csv
from dppal.errors import DppError
from dppal.harness import ExperimentConfig, mode_compare, run_experiment, strategy_config
from dppal.kernel import (
    KernelMatrix,
    SimilarityMatrix,
    build_kernel,
    condition_kernel,
    default_sigma,
    gaussian_similarity,
)
from dppal.learner import MlpSpec, TrainConfig, train_ensemble, uncertainty
from dppal.mode import ModeResult, greedy_mode, mcr_mode, smd_relaxation
from dppal.sampler import DppDistribution, McmcConfig, sample_exact, sample_mcmc
from dppal.strategies import PoolState, StrategyConfig, select_batch

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DppDistribution",
    "DppError",
    "ExperimentConfig",
    "KernelMatrix",
    "McmcConfig",
    "MlpSpec",
    "ModeResult",
    "PoolState",
    "SimilarityMatrix",
    "SineSpec",
    "StrategyConfig",
    "TrainConfig",
    "build_kernel",
    "condition_kernel",
    "default_sigma",
    "gaussian_similarity",
    "generate_sine_dataset",
    "greedy_mode",
    "load_csv",
    "mcr_mode",
    "mode_compare",
    "run_experiment",
    "sample_exact",
    "sample_mcmc",
    "select_batch",
    "smd_relaxation",
    "strategy_config",
    "train_ensemble",
    "uncertainty",
]

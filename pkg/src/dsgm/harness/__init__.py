"""Experiment configuration, datasets, pipelines and reporting."""

from .config import ConfigError, ExperimentConfig, build_config, load_config
from .datasets import Dataset, DatasetError, Split, community_split, export_dataset, load_dataset
from .experiments import (
    run_concentration_study,
    run_frequency_analysis,
    run_interpolate_demo,
    run_real_benchmark,
    run_synthetic_benchmark,
)
from .reporting import RunResult

__all__ = [
    "ConfigError",
    "Dataset",
    "DatasetError",
    "ExperimentConfig",
    "RunResult",
    "Split",
    "build_config",
    "community_split",
    "export_dataset",
    "load_config",
    "load_dataset",
    "run_concentration_study",
    "run_frequency_analysis",
    "run_interpolate_demo",
    "run_real_benchmark",
    "run_synthetic_benchmark",
]

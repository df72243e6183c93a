"""Training orchestration, evaluation, comparison, plotting and the CLI."""

from .collect import EnvWorker, EpisodeStats, make_workers
from .compare import bootstrap_greater, compare
from .config import ExperimentConfig, config_hash, load_config, save_config, smoke_config
from .divergence import measure_divergence
from .evaluate import evaluate
from .metrics import MetricsRow, MetricsWriter, read_metrics_csv, symbol_statistics
from .plots import emit_plots
from .runtime import (
    DreamerBundle,
    DreamerDriver,
    build_dreamer_bundle,
    load_dreamer_checkpoint,
    run_eval_episodes,
    save_dreamer_checkpoint,
)
from .train import DreamerTrainer, MaddpgTrainer, PpoTrainer, TrainingAborted, train

__all__ = [
    "ExperimentConfig",
    "load_config",
    "save_config",
    "smoke_config",
    "config_hash",
    "train",
    "TrainingAborted",
    "DreamerTrainer",
    "PpoTrainer",
    "MaddpgTrainer",
    "evaluate",
    "compare",
    "bootstrap_greater",
    "emit_plots",
    "measure_divergence",
    "EnvWorker",
    "EpisodeStats",
    "make_workers",
    "MetricsWriter",
    "MetricsRow",
    "read_metrics_csv",
    "symbol_statistics",
    "DreamerBundle",
    "DreamerDriver",
    "build_dreamer_bundle",
    "save_dreamer_checkpoint",
    "load_dreamer_checkpoint",
    "run_eval_episodes",
]

"""Seeded experiment orchestration: config, seeds, runners and persistence."""

from clqg.harness.config import EXPERIMENTS, ExperimentConfig, load_config, parse_config
from clqg.harness.experiments import RUNNERS, Outcome
from clqg.harness.output import run_experiment
from clqg.harness.seeds import derive_seed

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config", "parse_config", "RUNNERS", "Outcome",
           "run_experiment", "derive_seed"]

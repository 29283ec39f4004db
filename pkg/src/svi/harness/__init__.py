"""Config parsing, study orchestration and report output behind the ``svi`` command."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .report import ConvergenceReport, read_report, write_report

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "ConvergenceReport", "read_report", "write_report"]

"""Config-driven experiment runner with CSV and SVG outputs."""
from .commands import cmd_curve, cmd_fluct, cmd_sweep, cmd_trajectories, cmd_validate
from .config import ConfigError, ExperimentConfig, load_config, parse_config

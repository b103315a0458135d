"""Cooperative UAV navigation for RSS source localization driven by Fisher information."""

from .config import ScenarioConfig, builtin_scenario, load_config
from .fisher import Criterion, assemble_fim, cost, peb
from .harness import MonteCarloResult, TrialResult, run_monte_carlo, run_trial

__all__ = [
    "Criterion",
    "MonteCarloResult",
    "ScenarioConfig",
    "TrialResult",
    "assemble_fim",
    "builtin_scenario",
    "cost",
    "load_config",
    "peb",
    "run_monte_carlo",
    "run_trial",
]
__version__ = "0.1.0"

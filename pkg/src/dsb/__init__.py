"""Deterministic simulator of a centralized-trust and a decentralized-trust data space."""

from .config import SimulationConfig, load_config
from .connector import Connector, ExchangeOptions, ExchangeReport, discover, run_exchange, verify_counterpart
from .gap import GapMatrix, gap_report, run_probes
from .network import Network
from .scenario import Scenario, ScenarioResult, load_scenario, run_scenario, shipped_scenarios

__all__ = [
    "Connector",
    "ExchangeOptions",
    "ExchangeReport",
    "GapMatrix",
    "Network",
    "Scenario",
    "ScenarioResult",
    "SimulationConfig",
    "discover",
    "gap_report",
    "load_config",
    "load_scenario",
    "run_exchange",
    "run_probes",
    "run_scenario",
    "shipped_scenarios",
    "verify_counterpart",
]
__version__ = "0.1.0"

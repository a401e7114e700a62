"""
Scenario files and built-in presets.
"""

from .scenario import (
    CALIBRATED,
    AttackerSpec,
    ControllerSettings,
    EngineSettings,
    LatencySettings,
    ProxySettings,
    Scenario,
    ScenarioError,
    UaSpec,
    dump_scenario,
    load_scenario,
    parse_scenario,
)
from .presets import PRESETS

__all__ = [
    "CALIBRATED",
    "AttackerSpec",
    "ControllerSettings",
    "EngineSettings",
    "LatencySettings",
    "ProxySettings",
    "Scenario",
    "ScenarioError",
    "UaSpec",
    "dump_scenario",
    "load_scenario",
    "parse_scenario",
    "PRESETS",
]

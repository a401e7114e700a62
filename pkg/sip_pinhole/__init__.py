"""
SIP Pinhole Greylisting

A Python library for defending a SIP proxy against spoofed-source floods
by greylisting first contact at a default-deny firewall, including:
- SIP-over-UDP message parsing and rendering
- Pinhole keys and the greylisting engine
- Firewall controllers with a calibrated rule-installation latency model
- A deterministic discrete-event testbed with user agents and attackers
- Run metrics, CSV reports and declarative scenarios
"""

from .config import (
    ControllerKind,
    KeyStrategy,
    OpeningPolicy,
    get_controller_kind,
    get_key_strategy,
    get_opening_policy,
)
from .sip import Endpoint, SipMessage, SipParseError, parse_datagram, render_datagram
from .pinhole import EngineConfig, PinholeEngine, PinholeKey, derive_key
from .firewall import (
    BatchedFirewall,
    CalibrationError,
    LatencyModel,
    RealTimeFirewall,
    calibrate,
    make_firewall,
)
from .sim import AttackerModel, EventLog, ProxyModel, Simulator, UaModel, run, run_seeds
from .analysis import MalformedLogError, RunReport, analyze, emit_csv, render_table
from .scenarios import PRESETS, Scenario, ScenarioError, dump_scenario, load_scenario

__all__ = [
    # Config
    "ControllerKind",
    "KeyStrategy",
    "OpeningPolicy",
    "get_controller_kind",
    "get_key_strategy",
    "get_opening_policy",
    # SIP
    "Endpoint",
    "SipMessage",
    "SipParseError",
    "parse_datagram",
    "render_datagram",
    # Pinhole engine
    "EngineConfig",
    "PinholeEngine",
    "PinholeKey",
    "derive_key",
    # Firewall
    "BatchedFirewall",
    "CalibrationError",
    "LatencyModel",
    "RealTimeFirewall",
    "calibrate",
    "make_firewall",
    # Simulation
    "AttackerModel",
    "EventLog",
    "ProxyModel",
    "Simulator",
    "UaModel",
    "run",
    "run_seeds",
    # Metrics
    "MalformedLogError",
    "RunReport",
    "analyze",
    "emit_csv",
    "render_table",
    # Scenarios
    "PRESETS",
    "Scenario",
    "ScenarioError",
    "dump_scenario",
    "load_scenario",
]

__version__ = "1.0.0"

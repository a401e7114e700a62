"""
Perimeter firewall model: rule updates, controllers and latency.
"""

from .rules import RuleOp, RuleRecord, RuleUpdate
from .latency import (
    TABLE_1,
    CalibrationError,
    CapacityObservation,
    CapacityResidual,
    CapacityStats,
    LatencyModel,
    calibrate,
    capacity_residuals,
    capacity_speeds,
    default_latency_model,
    predict_install_times,
    sustainable_rule_count,
)
from .controller import (
    BatchedFirewall,
    Firewall,
    RealTimeFirewall,
    make_firewall,
    write_installed_log,
)

__all__ = [
    "RuleOp",
    "RuleRecord",
    "RuleUpdate",
    "TABLE_1",
    "CalibrationError",
    "CapacityObservation",
    "CapacityResidual",
    "CapacityStats",
    "LatencyModel",
    "calibrate",
    "capacity_residuals",
    "capacity_speeds",
    "default_latency_model",
    "predict_install_times",
    "sustainable_rule_count",
    "BatchedFirewall",
    "Firewall",
    "RealTimeFirewall",
    "make_firewall",
    "write_installed_log",
]

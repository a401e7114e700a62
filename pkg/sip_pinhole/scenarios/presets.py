"""
Built-in scenarios reproducing the standard experiments.
"""

from typing import Dict

from .scenario import (
    AttackerSpec,
    ControllerSettings,
    EngineSettings,
    LatencySettings,
    Scenario,
    UaSpec,
)

_REALTIME = ControllerSettings(mode="realtime")
_BATCHED = ControllerSettings(mode="batched", interval_s=1.0)


def _flood(rate: float, total: int, **options) -> AttackerSpec:
    return AttackerSpec(kind="spoof-flood", rate=rate, total=total, **options)


def _build() -> Dict[str, Scenario]:
    presets = [
        Scenario(
            name="operation",
            description="Background callers and registrations under a 20 msg/s spoofed flood.",
            horizon_s=60.0,
            engine=EngineSettings(strategy="source-ip", policy="immediate"),
            controller=_REALTIME,
            uas=(
                UaSpec(id="caller", count=6, transactions=10, interval_s=4.0),
                UaSpec(id="registrar", count=2, behavior="register", transactions=4, interval_s=10.0),
                UaSpec(id="sos", emergency=True, transactions=3, interval_s=15.0, start_s=5.0),
            ),
            attackers=(_flood(20.0, 1200),),
            seeds=tuple(range(10)),
            outputs="results/operation",
        ),
        Scenario(
            name="setup-delay",
            description="Every call greylisted once: setup delay is proxy delay plus T1.",
            horizon_s=200.0,
            engine=EngineSettings(strategy="transaction", policy="immediate"),
            controller=_REALTIME,
            uas=(
                UaSpec(id="normal", transactions=20, interval_s=2.0),
                UaSpec(id="emergency", emergency=True, transactions=20, interval_s=2.0),
            ),
            outputs="results/setup-delay",
        ),
        Scenario(
            name="setup-delay-deferred",
            description="Deferred opening: the pinhole opens on the first retransmission.",
            horizon_s=200.0,
            engine=EngineSettings(strategy="transaction", policy="deferred"),
            controller=_REALTIME,
            uas=(
                UaSpec(id="normal", transactions=20, interval_s=2.0),
                UaSpec(id="emergency", emergency=True, transactions=20, interval_s=2.0),
            ),
            outputs="results/setup-delay-deferred",
        ),
        Scenario(
            name="perf-realtime-10k",
            description="10000 spoofed requests at 500 msg/s, one rule push per request.",
            horizon_s=300.0,
            controller=_REALTIME,
            attackers=(_flood(500.0, 10000),),
            outputs="results/perf-realtime-10k",
        ),
        Scenario(
            name="perf-realtime-10k-late-caller",
            description="One caller right after the 10000-request flood waits behind the rule backlog.",
            horizon_s=300.0,
            controller=_REALTIME,
            uas=(UaSpec(id="late", start_s=20.5),),
            attackers=(_flood(500.0, 10000),),
            outputs="results/perf-realtime-10k-late-caller",
        ),
        Scenario(
            name="perf-batched-10k",
            description="10000 spoofed requests at 500 msg/s, rules pushed once per second.",
            horizon_s=60.0,
            controller=_BATCHED,
            attackers=(_flood(500.0, 10000),),
            outputs="results/perf-batched-10k",
        ),
        Scenario(
            name="perf-batched-50k",
            description="50000 spoofed requests at 500 msg/s, rules pushed once per second.",
            horizon_s=240.0,
            controller=_BATCHED,
            attackers=(_flood(500.0, 50000),),
            outputs="results/perf-batched-50k",
        ),
        Scenario(
            name="deferred-spoof-flood",
            description="Deferred opening keeps a never-repeating flood from creating any rule.",
            horizon_s=30.0,
            engine=EngineSettings(policy="deferred"),
            controller=_REALTIME,
            attackers=(_flood(500.0, 10000),),
            outputs="results/deferred-spoof-flood",
        ),
        Scenario(
            name="rate-halving",
            description="A flood that retransmits like a real client halves its useful rate.",
            horizon_s=15.0,
            controller=_REALTIME,
            latency=LatencySettings(),
            attackers=(
                AttackerSpec(kind="conforming-flood", rate=1000.0, total=10000, repeats=1),
            ),
            outputs="results/rate-halving",
        ),
        Scenario(
            name="fixed-spoof-set",
            description="A flood from one fixed spoofed address passes after its first packet.",
            horizon_s=15.0,
            controller=_REALTIME,
            attackers=(AttackerSpec(kind="fixed-spoof-set", rate=20.0, total=200, pool_size=1),),
            outputs="results/fixed-spoof-set",
        ),
    ]
    return {scenario.name: scenario for scenario in presets}


PRESETS: Dict[str, Scenario] = _build()

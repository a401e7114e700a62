"""
Declarative scenario files.

A scenario is a YAML mapping whose keys are the field names of
:class:`Scenario`. Unknown keys, missing required keys and invariant
violations are reported together, each with the line it occurs on:

    name: my-run
    horizon_s: 60
    controller: {mode: batched, interval_s: 1.0}
    attackers:
      - {kind: spoof-flood, rate: 500, total: 10000}
    seeds: [0, 1, 2]
"""

from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    ValidationError,
    field_validator,
    model_validator,
)

from ..config import (
    DEFAULT_BATCH_INTERVAL,
    DEFAULT_EMERGENCY_MARKERS,
    DEFAULT_EXPIRY_AFTER_IDLE,
    DEFAULT_PROXY_DELAYS,
    DEFAULT_SWEEP_INTERVAL,
    DEFAULT_TIMERS,
    ControllerKind,
    KeyStrategy,
    OpeningPolicy,
)
from ..firewall.controller import Firewall, make_firewall
from ..firewall.latency import LatencyModel, default_latency_model
from ..pinhole.engine import EngineConfig
from ..sim.agents import PROXY_ADDRESS, AttackerModel, AttackKind, ProxyModel, UaBehavior, UaModel
from ..sip.message import Endpoint

CALIBRATED = "calibrate-from-table1"


class ScenarioError(ValueError):
    """
    A scenario could not be loaded.

    Attributes:
        problems: One 'source:line: field: message' entry per problem.
    """

    def __init__(self, problems: Sequence[str]) -> None:
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EngineSettings(_Section):
    """Pinhole engine settings."""

    strategy: KeyStrategy = KeyStrategy.SOURCE_IP
    policy: OpeningPolicy = OpeningPolicy.IMMEDIATE
    expiry_after_idle_s: float = Field(DEFAULT_EXPIRY_AFTER_IDLE, gt=0)


class ControllerSettings(_Section):
    """Firewall controller mode; the interval applies to batched pushes."""

    mode: ControllerKind = ControllerKind.REALTIME
    interval_s: float = Field(DEFAULT_BATCH_INTERVAL, gt=0)


class LatencySettings(_Section):
    """Explicit latency coefficients (s and s/rule)."""

    per_rule_base: float = Field(0.0, ge=0)
    per_existing_rule: float = Field(0.0, ge=0)
    per_batch_base: float = Field(0.0, ge=0)
    per_batch_per_existing_rule: float = Field(0.0, ge=0)


class ProxySettings(_Section):
    """Protected proxy."""

    delay_normal_s: float = Field(DEFAULT_PROXY_DELAYS.normal, gt=0)
    delay_emergency_s: float = Field(DEFAULT_PROXY_DELAYS.emergency, gt=0)
    address: str = str(PROXY_ADDRESS)

    @field_validator("address")
    @classmethod
    def _valid_address(cls, value: str) -> str:
        return str(Endpoint.parse(value))

    @model_validator(mode="after")
    def _ordered_delays(self) -> "ProxySettings":
        if self.delay_emergency_s < self.delay_normal_s:
            raise ValueError("delay_emergency_s must be at least delay_normal_s")
        return self


class UaSpec(_Section):
    """
    A group of ``count`` identical user agents.

    Members are named '<id>-<k>' when count > 1.
    """

    id: str = Field(min_length=1, pattern=r"^[A-Za-z0-9.!%*_+`'~-]+$")
    count: int = Field(1, ge=1)
    behavior: UaBehavior = UaBehavior.CALL
    emergency: bool = False
    emergency_ratio: Optional[float] = Field(None, ge=0, le=1)
    transactions: int = Field(1, ge=0)
    interval_s: float = Field(1.0, ge=0)
    start_s: float = Field(0.0, ge=0)
    t1_s: float = Field(DEFAULT_TIMERS.t1, gt=0)
    t2_s: float = Field(DEFAULT_TIMERS.t2, gt=0)
    give_up_after_s: float = Field(DEFAULT_TIMERS.give_up_after, gt=0)
    rng_seed: NonNegativeInt = 0

    @model_validator(mode="after")
    def _ordered_timers(self) -> "UaSpec":
        if self.t2_s < self.t1_s:
            raise ValueError("t2_s must be at least t1_s")
        if self.give_up_after_s < self.t1_s:
            raise ValueError("give_up_after_s must be at least t1_s")
        return self

    def member_ids(self) -> List[str]:
        return [self.id] if self.count == 1 else [f"{self.id}-{k}" for k in range(self.count)]

    def models(self) -> List[UaModel]:
        return [
            UaModel(
                id=name,
                behavior=self.behavior,
                emergency=self.emergency,
                emergency_ratio=self.emergency_ratio,
                transactions=self.transactions,
                interval=self.interval_s,
                start=self.start_s,
                t1=self.t1_s,
                t2=self.t2_s,
                give_up_after=self.give_up_after_s,
                rng_seed=self.rng_seed,
            )
            for name in self.member_ids()
        ]


class AttackerSpec(_Section):
    """Flooding attacker."""

    kind: AttackKind = AttackKind.SPOOF_FLOOD
    rate: float = Field(gt=0)
    total: int = Field(gt=0)
    pool_size: int = Field(1, ge=1)
    repeats: int = Field(1, ge=1)
    method: Literal["INVITE", "REGISTER"] = "INVITE"
    emergency: bool = False
    start_s: float = Field(0.0, ge=0)
    t1_s: float = Field(DEFAULT_TIMERS.t1, gt=0)
    rng_seed: NonNegativeInt = 0

    def model(self) -> AttackerModel:
        return AttackerModel(
            kind=self.kind,
            rate=self.rate,
            total=self.total,
            pool_size=self.pool_size,
            repeats=self.repeats,
            method=self.method,
            emergency=self.emergency,
            start=self.start_s,
            t1=self.t1_s,
            rng_seed=self.rng_seed,
        )


class Scenario(_Section):
    """
    One experiment: traffic, defense settings, seeds and output directory.

    ``latency`` is either explicit coefficients or 'calibrate-from-table1'
    for the model fitted to the built-in capacity table. A scenario needs
    at least one user agent or attacker unless ``null_run`` is set.
    """

    name: str = Field(min_length=1)
    description: str = ""
    horizon_s: float = Field(gt=0)
    engine: EngineSettings = EngineSettings()
    controller: ControllerSettings = ControllerSettings()
    latency: Union[Literal["calibrate-from-table1"], LatencySettings] = CALIBRATED
    proxy: ProxySettings = ProxySettings()
    uas: Tuple[UaSpec, ...] = ()
    attackers: Tuple[AttackerSpec, ...] = ()
    seeds: Tuple[NonNegativeInt, ...] = Field((0,), min_length=1)
    outputs: str = "results"
    null_run: bool = False
    sweep_interval_s: float = Field(DEFAULT_SWEEP_INTERVAL, gt=0)
    emergency_markers: Tuple[str, ...] = DEFAULT_EMERGENCY_MARKERS

    @model_validator(mode="after")
    def _has_traffic(self) -> "Scenario":
        if not (self.uas or self.attackers or self.null_run):
            raise ValueError("needs at least one ua or attacker (or null_run: true)")
        return self

    @model_validator(mode="after")
    def _unique_ua_ids(self) -> "Scenario":
        seen = set()
        for spec in self.uas:
            for member in spec.member_ids():
                if member in seen:
                    raise ValueError(f"duplicate ua id '{member}'")
                seen.add(member)
        return self

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            strategy=self.engine.strategy,
            policy=self.engine.policy,
            expiry_after_idle=self.engine.expiry_after_idle_s,
        )

    def latency_model(self) -> LatencyModel:
        if self.latency == CALIBRATED:
            return default_latency_model()
        return LatencyModel(**self.latency.model_dump())

    def build_firewall(self) -> Firewall:
        return make_firewall(self.controller.mode, self.latency_model(), self.controller.interval_s)

    def proxy_model(self) -> ProxyModel:
        return ProxyModel(
            delay_normal=self.proxy.delay_normal_s,
            delay_emergency=self.proxy.delay_emergency_s,
            address=Endpoint.parse(self.proxy.address),
        )

    def ua_models(self) -> List[UaModel]:
        return [model for spec in self.uas for model in spec.models()]

    def attacker_models(self) -> List[AttackerModel]:
        return [spec.model() for spec in self.attackers]


def _node_line(root: Optional[yaml.Node], loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest YAML node on the path loc."""
    node = root
    if node is None:
        return None
    line = node.start_mark.line + 1
    for part in loc:
        child = None
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    child = value_node
                    line = key_node.start_mark.line + 1
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int):
            if 0 <= part < len(node.value):
                child = node.value[part]
                line = child.start_mark.line + 1
        if child is None:
            break
        node = child
    return line


def _problems(error: ValidationError, root: Optional[yaml.Node], source: str) -> List[str]:
    problems = []
    for item in error.errors():
        # Drop union/literal branch names pydantic inserts into the path.
        loc = [
            part for part in item["loc"]
            if isinstance(part, int) or not (part.startswith("literal[") or part == "LatencySettings")
        ]
        line = _node_line(root, loc)
        where = f"{source}:{line}" if line is not None else source
        field = ".".join(str(part) for part in loc) or "<scenario>"
        problems.append(f"{where}: {field}: {item['msg']}")
    return problems


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """
    Validate scenario YAML text.

    Args:
        text: YAML document.
        source: Name used in diagnostics.

    Returns:
        Scenario: The validated scenario with defaults applied.

    Raises:
        ScenarioError: On YAML syntax errors, unknown keys or invalid
            values, with line numbers.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ScenarioError([f"{where}: invalid YAML: {getattr(e, 'problem', None) or e}"]) from None
    if not isinstance(data, dict):
        raise ScenarioError([f"{source}: a scenario must be a mapping of fields"])
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(_problems(e, root, source)) from None


def load_scenario(source: Union[str, Path]) -> Scenario:
    """
    Load a scenario from a YAML file or a built-in preset name.

    Args:
        source: Path of a scenario file, or a preset name such as
            'perf-batched-10k'.

    Returns:
        Scenario: The validated scenario.

    Raises:
        ScenarioError: If the file is missing or unreadable and no preset
            has that name, or if the scenario is invalid.

    Examples:
        >>> load_scenario("perf-realtime-10k").attackers[0].total
        10000
    """
    from .presets import PRESETS

    path = Path(source)
    if not path.is_file():
        if str(source) in PRESETS:
            return PRESETS[str(source)]
        raise ScenarioError([f"{source}: no such scenario file or preset"])
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioError([f"{source}: cannot read scenario: {e}"]) from None
    return parse_scenario(text, str(source))


def dump_scenario(scenario: Scenario) -> str:
    """
    Serialize a scenario as YAML that loads back to an equal scenario.
    """
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)

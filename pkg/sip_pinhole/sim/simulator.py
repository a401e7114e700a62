"""
Discrete-event testbed for the pinholing defense.

User agents and attackers send rendered SIP datagrams towards the proxy.
Each datagram is parsed at the firewall, classified by the pinhole engine
and either dropped or handed to the proxy, whose reply travels back
unfiltered. Rule updates go to the firewall controller, which makes them
effective after the modelled installation latency.

The kernel is simpy: events are dispatched in (time, scheduling order),
so a run is a pure function of its scenario and seed.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import simpy

from ..config import DEFAULT_EMERGENCY_MARKERS, DEFAULT_SWEEP_INTERVAL
from ..firewall.controller import BatchedFirewall, Firewall
from ..firewall.rules import RuleOp, RuleRecord, RuleUpdate
from ..pinhole.engine import EngineConfig, PinholeEngine
from ..pinhole.keys import key_digest
from ..sip.message import Endpoint, Method, SipMessage
from ..sip.parser import (
    SipParseError,
    build_request,
    build_response,
    parse_datagram,
    render_datagram,
)
from .agents import (
    AttackerModel,
    AttackKind,
    ProxyModel,
    SpoofAddressPool,
    UaBehavior,
    UaModel,
    emission_schedule,
    fixed_spoof_pool,
    ua_address,
)
from .events import EventKind, EventLog

if TYPE_CHECKING:
    from ..scenarios.scenario import Scenario

logger = logging.getLogger(__name__)


@dataclass
class Transaction:
    """
    Client transaction of a user agent.

    Attributes:
        txn_id: Identifier used in the log.
        ua_id: Owning user agent.
        request: The request being (re)sent.
        started_at: Time of the first send (s).
        completed_at: Time of the first reply (s), if any.
        failed: True once the transaction gave up.
        retransmissions: Resends so far.
    """

    txn_id: str
    ua_id: str
    request: SipMessage
    started_at: float
    reply: simpy.Event
    finished: simpy.Event
    completed_at: Optional[float] = None
    failed: bool = False
    retransmissions: int = 0
    final_response: Optional[SipMessage] = field(default=None, repr=False)

    @property
    def completed(self) -> bool:
        return self.completed_at is not None

    @property
    def setup_delay(self) -> Optional[float]:
        return None if self.completed_at is None else self.completed_at - self.started_at


def _check_unique(what: str, values: Sequence[str]) -> None:
    # Call-IDs, tags and branches are built from the UA id; replies route by IP
    seen = set()
    for value in values:
        if value in seen:
            raise ValueError(f"{what} must be unique. Got duplicate: {value}")
        seen.add(value)


class Simulator:
    """
    One seeded run of the testbed.

    Args:
        firewall: Firewall with its controller.
        engine_config: Pinhole engine settings (default: EngineConfig()).
        proxy: Protected proxy (default: ProxyModel()).
        uas: Conforming user agents.
        attackers: Attackers.
        horizon: Time at which the run stops (s).
        seed: Run seed, mixed into every agent's random stream.
        sweep_interval: Period of the pinhole expiry sweep (s).
        markers: Emergency markers used when parsing.

    Raises:
        ValueError: If horizon or sweep_interval is not positive, or if
            two user agents share an id or an address.

    Examples:
        >>> from sip_pinhole.firewall import RealTimeFirewall
        >>> sim = Simulator(RealTimeFirewall(), uas=[UaModel("alice")], horizon=10.0)
        >>> log = sim.run()
        >>> [r.kind.value for r in log][:3]
        ['txn_start', 'arrival', 'rule_request']
    """

    def __init__(
        self,
        firewall: Firewall,
        engine_config: Optional[EngineConfig] = None,
        proxy: Optional[ProxyModel] = None,
        uas: Sequence[UaModel] = (),
        attackers: Sequence[AttackerModel] = (),
        horizon: float = 60.0,
        seed: int = 0,
        sweep_interval: float = DEFAULT_SWEEP_INTERVAL,
        markers: Iterable[str] = DEFAULT_EMERGENCY_MARKERS,
    ) -> None:
        if horizon <= 0:
            raise ValueError(f"Horizon must be positive. Got: {horizon}")
        if sweep_interval <= 0:
            raise ValueError(f"Sweep interval must be positive. Got: {sweep_interval}")
        self.env = simpy.Environment()
        self.firewall = firewall
        self.engine = PinholeEngine(engine_config, rule_view=firewall)
        self.proxy = proxy if proxy is not None else ProxyModel()
        self.uas = [
            ua if ua.address is not None else replace(ua, address=ua_address(index))
            for index, ua in enumerate(uas)
        ]
        _check_unique("UA ids", [ua.id for ua in self.uas])
        _check_unique("UA addresses", [ua.address.ip for ua in self.uas])
        self.attackers = list(attackers)
        self.horizon = horizon
        self.seed = seed
        self.sweep_interval = sweep_interval
        self.markers = tuple(markers)
        self.log = EventLog(horizon=horizon, seed=seed, controller=firewall.kind.value)
        self.proxy_arrivals = 0
        self.transactions: Dict[Tuple[str, str], Transaction] = {}
        self._ua_by_ip = {ua.address.ip: ua for ua in self.uas}
        self._spoofed = SpoofAddressPool()
        self._outstanding = 0
        self._attacker_count = 0
        self._ran = False

    @classmethod
    def from_scenario(cls, scenario: "Scenario", seed: Optional[int] = None) -> "Simulator":
        """Build the run of a scenario for one seed (default: its first)."""
        return cls(
            firewall=scenario.build_firewall(),
            engine_config=scenario.engine_config(),
            proxy=scenario.proxy_model(),
            uas=scenario.ua_models(),
            attackers=scenario.attacker_models(),
            horizon=scenario.horizon_s,
            seed=scenario.seeds[0] if seed is None else seed,
            sweep_interval=scenario.sweep_interval_s,
            markers=scenario.emergency_markers,
        )

    def _rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, *stream])

    # -- firewall path -----------------------------------------------------

    def _inspect(
        self, payload: bytes, src: Endpoint, attack: bool, txn_id: Optional[str] = None
    ) -> None:
        now = self.env.now
        dst = self.proxy.address
        try:
            msg = parse_datagram(payload, src, dst, self.markers)
        except SipParseError as e:
            logger.debug("dropping unparseable datagram from %s: %s", src, e)
            self.log.add(
                now, EventKind.UNPARSEABLE, src=str(src), dst=str(dst),
                action="drop", txn_id=txn_id, attack=attack,
            )
            return

        decision = self.engine.process_packet(msg, now)
        digest = key_digest(decision.key) if decision.key is not None else ""
        self.log.add(
            now, EventKind.ARRIVAL, src=str(src), dst=str(dst), method=msg.method_token,
            key_digest=digest, action=decision.action.value, txn_id=txn_id,
            emergency=msg.is_emergency, attack=attack,
        )
        if decision.rule_request is not None:
            self._request_rule(decision.rule_request)
        if decision.passed:
            self.proxy_handle(msg, now, txn_id=txn_id, attack=attack)

    def _request_rule(self, update: RuleUpdate) -> None:
        now = self.env.now
        self.log.add(
            now, EventKind.RULE_REQUEST, key_digest=key_digest(update.key),
            action=update.op.value, requested_at=update.requested_at,
        )
        self._schedule_effective(self.firewall.submit(update, now))

    def _schedule_effective(self, records: List[RuleRecord]) -> None:
        if records:
            self.env.process(self._effective(records))

    def _effective(self, records: List[RuleRecord]):
        self._outstanding += 1
        yield self.env.timeout(max(0.0, records[-1].completed_at - self.env.now))
        for record in records:
            kind = EventKind.RULE_INSTALLED if record.op is RuleOp.INSTALL else EventKind.RULE_REMOVED
            self.log.add(
                self.env.now, kind, key_digest=key_digest(record.key),
                action=record.op.value, requested_at=record.requested_at,
                queue_wait=record.queue_wait,
            )
        self._outstanding -= 1

    def _batch_ticker(self, firewall: BatchedFirewall):
        while True:
            yield self.env.timeout(firewall.interval)
            records = firewall.tick(self.env.now)
            if records:
                self.log.add(self.env.now, EventKind.BATCH_TICK, action=str(len(records)))
                self._schedule_effective(records)

    def _expiry_sweep(self):
        while True:
            yield self.env.timeout(self.sweep_interval)
            expired = self.engine.expire(self.env.now)
            if expired:
                self.log.add(self.env.now, EventKind.EXPIRY_SWEEP, action=str(len(expired)))
            for update in self.engine.drain_rule_requests():
                self._request_rule(update)

    # -- proxy -------------------------------------------------------------

    def proxy_handle(
        self,
        msg: SipMessage,
        now: float,
        txn_id: Optional[str] = None,
        attack: bool = False,
    ) -> Optional[simpy.Process]:
        """
        Hand a request that passed the firewall to the proxy.

        Args:
            msg: Request.
            now: Arrival time (s).
            txn_id: Originating transaction, for the log.
            attack: Sent by an attacker.

        Returns:
            simpy.Process | None: The pending reply, sent after the proxy
            delay; None for ACK, which gets no reply.
        """
        self.proxy_arrivals += 1
        if msg.method is Method.ACK:
            return None
        delay = self.proxy.delay(msg)
        return self.env.process(self._reply(msg, now + delay, txn_id, attack))

    def _reply(self, msg: SipMessage, at: float, txn_id: Optional[str], attack: bool):
        self._outstanding += 1
        yield self.env.timeout(max(0.0, at - self.env.now))
        response = build_response(msg, 200, to_tag=f"p{msg.from_tag}")
        self.log.add(
            self.env.now, EventKind.PROXY_REPLY, src=str(response.src), dst=str(response.dst),
            method=str(response.status_code), txn_id=txn_id,
            emergency=msg.is_emergency, attack=attack,
        )
        self._deliver(render_datagram(response), response.dst)
        self._outstanding -= 1

    def _deliver(self, payload: bytes, dst: Endpoint) -> None:
        if dst.ip not in self._ua_by_ip:
            return  # spoofed source; nobody listens
        response = parse_datagram(payload, self.proxy.address, dst, self.markers)
        txn = self.transactions.get((response.via_branch, response.cseq_method))
        if txn is None or txn.completed or txn.failed:
            return
        txn.completed_at = self.env.now
        txn.final_response = response
        txn.reply.succeed()
        self.log.add(
            self.env.now, EventKind.TXN_COMPLETE, src=str(response.src), dst=str(dst),
            method=txn.request.method_token, txn_id=txn.txn_id,
            emergency=txn.request.is_emergency, delay=txn.setup_delay,
        )

    # -- user agents -------------------------------------------------------

    def ua_send_with_retransmission(
        self, ua: UaModel, msg: SipMessage, start: float
    ) -> Transaction:
        """
        Start a client transaction with UDP retransmission.

        The request is sent at ``start`` and resent at the offsets of
        :meth:`UaModel.retransmission_offsets` until a reply arrives; with
        no reply by ``give_up_after`` the transaction fails.

        Args:
            ua: Sending user agent.
            msg: Initial request.
            start: Time of the first send (s).

        Returns:
            Transaction: Handle whose ``finished`` event fires on completion
            or failure.
        """
        txn = Transaction(
            txn_id=f"{ua.id}/{len(self.transactions)}",
            ua_id=ua.id,
            request=msg,
            started_at=start,
            reply=self.env.event(),
            finished=self.env.event(),
        )
        self.transactions[(msg.via_branch, msg.cseq_method)] = txn
        self.env.process(self._transaction(ua, txn))
        return txn

    def _transaction(self, ua: UaModel, txn: Transaction):
        self._outstanding += 1
        if txn.started_at > self.env.now:
            yield self.env.timeout(txn.started_at - self.env.now)
        txn.started_at = self.env.now
        msg = txn.request
        payload = render_datagram(msg)
        self.log.add(
            self.env.now, EventKind.TXN_START, src=str(ua.address), method=msg.method_token,
            txn_id=txn.txn_id, emergency=msg.is_emergency,
        )
        self._inspect(payload, ua.address, attack=False, txn_id=txn.txn_id)

        for offset in ua.retransmission_offsets():
            if txn.completed:
                break
            wait = max(0.0, txn.started_at + offset - self.env.now)
            yield txn.reply | self.env.timeout(wait)
            if txn.completed:
                break
            txn.retransmissions += 1
            self.log.add(
                self.env.now, EventKind.RETRANSMIT, src=str(ua.address),
                method=msg.method_token, txn_id=txn.txn_id, emergency=msg.is_emergency,
            )
            self._inspect(payload, ua.address, attack=False, txn_id=txn.txn_id)

        if not txn.completed:
            wait = max(0.0, txn.started_at + ua.give_up_after - self.env.now)
            yield txn.reply | self.env.timeout(wait)
        if not txn.completed:
            txn.failed = True
            logger.info("transaction %s gave up at t=%.3f", txn.txn_id, self.env.now)
            self.log.add(
                self.env.now, EventKind.TXN_FAILED, src=str(ua.address),
                method=msg.method_token, txn_id=txn.txn_id, emergency=msg.is_emergency,
            )
        self._outstanding -= 1
        txn.finished.succeed()

    def _ua(self, ua: UaModel, index: int):
        rng = self._rng(0, index, ua.rng_seed)
        at = ua.start
        for number in range(ua.transactions):
            if at > self.env.now:
                yield self.env.timeout(at - self.env.now)
            if ua.emergency_ratio is not None:
                emergency = bool(rng.random() < ua.emergency_ratio)
            else:
                emergency = ua.emergency
            tag = f"{ua.id}x{number}"
            msg = build_request(
                ua.method,
                ua.request_uri(emergency, number),
                ua.address,
                self.proxy.address,
                call_id=f"{tag}@{ua.address.ip}",
                branch=f"z9hG4bK{tag}",
                from_tag=tag,
                cseq_number=number + 1,
                from_uri=f"sip:{ua.id}@{ua.address.ip}",
                markers=self.markers,
            )
            txn = self.ua_send_with_retransmission(ua, msg, self.env.now)
            yield txn.finished
            if txn.completed and ua.behavior is UaBehavior.CALL:
                self._send_ack(ua, txn)
            gap = float(rng.exponential(ua.interval)) if ua.interval > 0 else 0.0
            at = self.env.now + gap

    def _send_ack(self, ua: UaModel, txn: Transaction) -> None:
        invite = txn.request
        ack = replace(
            invite,
            method=Method.ACK,
            method_token=Method.ACK.value,
            cseq_method=Method.ACK.value,
            to_tag=txn.final_response.to_tag if txn.final_response else None,
            contact=None,
        )
        self._inspect(render_datagram(ack), ua.address, attack=False, txn_id=txn.txn_id)

    # -- attackers ---------------------------------------------------------

    def attacker_emit(
        self, model: AttackerModel, start: Optional[float] = None
    ) -> simpy.Process:
        """
        Start an attacker.

        Args:
            model: Attack description.
            start: Time of the first packet (s, default: ``model.start``).

        Returns:
            simpy.Process: The emitting process.
        """
        if start is not None:
            model = replace(model, start=start)
        index = self._attacker_count
        self._attacker_count += 1
        return self.env.process(self._attack(model, index))

    def _attack(self, model: AttackerModel, index: int):
        self._outstanding += 1
        rng = self._rng(1, index, model.rng_seed)
        pool = fixed_spoof_pool(model.pool_size, rng) if model.kind is AttackKind.FIXED_SPOOF_SET else None
        resends: Dict[int, Tuple[Endpoint, bytes]] = {}
        for emission in emission_schedule(model):
            wait = emission.time - self.env.now
            if wait > 0:
                yield self.env.timeout(wait)
            if emission.copy == 0:
                if pool is not None:
                    src = pool[int(rng.integers(len(pool)))]
                else:
                    src = next(self._spoofed)
                tag = f"atk{index}x{emission.request}"
                msg = build_request(
                    model.method,
                    model.request_uri(emission.request),
                    src,
                    self.proxy.address,
                    call_id=f"{tag}@{src.ip}",
                    branch=f"z9hG4bK{tag}",
                    from_tag=tag,
                    markers=self.markers,
                )
                payload = render_datagram(msg)
                if model.copies > 1:
                    resends[emission.request] = (src, payload)
            else:
                src, payload = resends[emission.request]
                if emission.copy == model.copies - 1:
                    del resends[emission.request]
            self._inspect(payload, src, attack=True)
        self._outstanding -= 1

    # -- driver ------------------------------------------------------------

    def run(self) -> EventLog:
        """
        Run to the horizon.

        Work still pending at the horizon (open transactions, attack
        packets, rule installs) marks the log as truncated; open
        transactions get a ``txn_truncated`` row.

        Returns:
            EventLog: The run's log.

        Raises:
            RuntimeError: If the simulator was already run.
        """
        if self._ran:
            raise RuntimeError("A Simulator instance runs only once.")
        self._ran = True
        logger.info(
            "run seed=%d: %d UA(s), %d attacker(s), horizon %.1f s",
            self.seed, len(self.uas), len(self.attackers), self.horizon,
        )
        for index, ua in enumerate(self.uas):
            self.env.process(self._ua(ua, index))
        for model in self.attackers:
            self.attacker_emit(model)
        if isinstance(self.firewall, BatchedFirewall):
            self.env.process(self._batch_ticker(self.firewall))
        self.env.process(self._expiry_sweep())

        self.env.run(until=self.horizon)

        open_txns = [
            txn for txn in self.transactions.values() if not (txn.completed or txn.failed)
        ]
        for txn in open_txns:
            self.log.add(
                self.horizon, EventKind.TXN_TRUNCATED, src=str(txn.request.src),
                method=txn.request.method_token, txn_id=txn.txn_id,
                emergency=txn.request.is_emergency,
            )
        self.log.truncated = self._outstanding > 0 or bool(self.firewall.pending)
        if self.log.truncated:
            logger.info("run seed=%d truncated at the %.1f s horizon", self.seed, self.horizon)
        logger.info(
            "run seed=%d finished: %d log rows, %d proxy arrivals, %d rules installed",
            self.seed, len(self.log), self.proxy_arrivals, len(self.firewall.installed_log),
        )
        return self.log


def run(scenario: "Scenario", seed: Optional[int] = None) -> EventLog:
    """
    Run a scenario for one seed.

    Args:
        scenario: Validated scenario.
        seed: Seed (default: the scenario's first seed).

    Returns:
        EventLog: Log of the run; equal inputs give equal logs.
    """
    return Simulator.from_scenario(scenario, seed).run()


def _run_one(args: Tuple["Scenario", int]) -> EventLog:
    scenario, seed = args
    return run(scenario, seed)


def run_seeds(
    scenario: "Scenario",
    seeds: Optional[Sequence[int]] = None,
    parallel: bool = False,
    max_workers: Optional[int] = None,
) -> List[EventLog]:
    """
    Run a scenario once per seed.

    Args:
        scenario: Validated scenario.
        seeds: Seeds (default: ``scenario.seeds``).
        parallel: Run seeds in worker processes.
        max_workers: Worker count for parallel runs.

    Returns:
        list[EventLog]: Logs in seed order.
    """
    seeds = list(scenario.seeds if seeds is None else seeds)
    if not parallel or len(seeds) < 2:
        return [run(scenario, seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_one, [(scenario, seed) for seed in seeds]))

"""
Tests for pinhole keys and the greylisting engine.
"""

import numpy as np
import pytest

from sip_pinhole.config import KeyStrategy, OpeningPolicy
from sip_pinhole.firewall import RealTimeFirewall, RuleOp, RuleUpdate
from sip_pinhole.pinhole import (
    Action,
    EngineConfig,
    PinholeEngine,
    PinholeKey,
    RecordState,
    derive_key,
    key_digest,
)
from sip_pinhole.sip import Endpoint, build_request, build_response

PROXY = Endpoint("192.0.2.10")


def _request(ip="10.0.0.5", method="INVITE", branch="z9hG4bK1", call_id="c1", from_tag="t1"):
    return build_request(method, "sip:bob@example.org", Endpoint(ip), PROXY, call_id, branch, from_tag)


class TestDeriveKey:
    """Tests for derive_key function."""

    def test_source_ip(self):
        """Test that source-ip keys ignore everything but the address."""
        a = derive_key(_request(branch="z9hG4bKa", call_id="x"), "source-ip")
        b = derive_key(_request(branch="z9hG4bKb", call_id="y"), "source-ip")
        assert a == b
        assert a.canonical() == "source-ip|10.0.0.5"

    def test_transaction(self):
        """Test the transaction key fields."""
        key = derive_key(_request(), KeyStrategy.TRANSACTION)
        assert (key.ip, key.branch, key.cseq_method) == ("10.0.0.5", "z9hG4bK1", "INVITE")
        assert key.call_id is None

    def test_transaction_ack_and_cancel_join_invite(self):
        """Test that ACK and CANCEL map to their INVITE's key."""
        invite = derive_key(_request(), "transaction")
        assert derive_key(_request(method="ACK"), "transaction") == invite
        assert derive_key(_request(method="CANCEL"), "transaction") == invite
        assert derive_key(_request(method="BYE"), "transaction") != invite

    def test_session(self):
        """Test that session keys follow Call-ID and From tag only."""
        a = derive_key(_request(ip="10.0.0.5", branch="z9hG4bKa"), "session")
        b = derive_key(_request(ip="10.0.0.6", branch="z9hG4bKb"), "session")
        assert a == b
        assert a != derive_key(_request(from_tag="t2"), "session")

    def test_retransmission_same_key(self):
        """Test that an identical resend derives the same key under every strategy."""
        for strategy in KeyStrategy:
            assert derive_key(_request(), strategy) == derive_key(_request(), strategy)

    def test_response_rejected(self):
        """Test that responses have no pinhole key."""
        with pytest.raises(ValueError):
            derive_key(build_response(_request(), 200), "source-ip")

    def test_invalid_strategy(self):
        """Test that an unknown strategy name raises error."""
        with pytest.raises(ValueError):
            derive_key(_request(), "port")


class TestPinholeKey:
    """Tests for PinholeKey."""

    def test_missing_field(self):
        """Test that a strategy's fields are required."""
        with pytest.raises(ValueError):
            PinholeKey(KeyStrategy.TRANSACTION, ip="10.0.0.5")

    def test_foreign_field(self):
        """Test that fields of other strategies are rejected."""
        with pytest.raises(ValueError):
            PinholeKey(KeyStrategy.SOURCE_IP, ip="10.0.0.5", call_id="c1")

    def test_digest_is_stable(self):
        """Test the short digest length and stability."""
        key = PinholeKey(KeyStrategy.SOURCE_IP, ip="10.0.0.5")
        assert key_digest(key) == key_digest(PinholeKey(KeyStrategy.SOURCE_IP, ip="10.0.0.5"))
        assert len(key_digest(key)) == 12


class TestImmediatePolicy:
    """Tests for the immediate opening policy."""

    def test_first_sighting_drops_and_opens(self):
        """Test that the first sighting is dropped and requests an install."""
        engine = PinholeEngine()
        decision = engine.process_packet(_request(), 0.0)
        assert decision.action is Action.DROP
        assert decision.sighting == 1
        assert decision.rule_request.op is RuleOp.INSTALL
        assert decision.rule_request.requested_at == 0.0

    def test_second_sighting_passes(self):
        """Test that the next sighting passes once the pinhole is open."""
        engine = PinholeEngine()
        engine.process_packet(_request(), 0.0)
        decision = engine.process_packet(_request(), 0.5)
        assert decision.passed
        assert decision.rule_request is None

    def test_single_install_per_key(self):
        """Test that repeated sightings emit exactly one install."""
        engine = PinholeEngine()
        requests = [engine.process_packet(_request(), t * 0.1).rule_request for t in range(50)]
        assert sum(r is not None for r in requests) == 1
        assert engine.stats().installs_requested == 1

    def test_rule_view_not_yet_effective(self):
        """Test that an open pinhole drops until its rule is effective."""
        firewall = RealTimeFirewall()
        engine = PinholeEngine(rule_view=firewall)
        decision = engine.process_packet(_request(), 0.0)
        assert engine.process_packet(_request(), 0.1).action is Action.DROP
        firewall.submit(decision.rule_request, 0.2)
        assert engine.process_packet(_request(), 0.2).passed

    def test_responses_pass_without_state(self):
        """Test that responses pass and create no record."""
        engine = PinholeEngine()
        decision = engine.process_packet(build_response(_request(), 200), 0.0)
        assert decision.passed and decision.key is None
        assert engine.stats().records == 0


class TestDeferredPolicy:
    """Tests for the deferred opening policy."""

    def test_opens_on_second_sighting(self):
        """Test drop, drop+install, pass."""
        engine = PinholeEngine(EngineConfig(policy="deferred"))
        first = engine.process_packet(_request(), 0.0)
        second = engine.process_packet(_request(), 0.5)
        third = engine.process_packet(_request(), 1.5)
        assert first.action is Action.DROP and first.rule_request is None
        assert second.action is Action.DROP and second.rule_request is not None
        assert third.passed

    def test_single_sightings_never_open(self):
        """Test that one-shot spoofed requests never reach the firewall."""
        engine = PinholeEngine(EngineConfig(policy=OpeningPolicy.DEFERRED))
        for i in range(100):
            assert engine.process_packet(_request(ip=f"10.0.1.{i + 1}"), i * 0.01).rule_request is None
        assert engine.stats().open == 0
        assert engine.stats().greylisted == 100


class TestGreylistOracle:
    """Replay random request sequences against a per-key counting oracle."""

    @pytest.mark.parametrize("policy", ["immediate", "deferred"])
    @pytest.mark.parametrize("strategy", ["source-ip", "transaction", "session"])
    def test_random_sequences(self, policy, strategy):
        """Test every verdict against the count of earlier sightings."""
        rng = np.random.default_rng(2024)
        engine = PinholeEngine(EngineConfig(strategy=strategy, policy=policy))
        threshold = engine.config.sightings_to_open
        seen = {}
        times = np.sort(rng.uniform(0.0, 100.0, size=2000))
        for t in times:
            i = int(rng.integers(40))
            msg = _request(ip=f"10.0.0.{i % 20 + 1}", branch=f"z9hG4bK{i}", call_id=f"c{i % 7}",
                           from_tag=f"t{i % 5}")
            key = derive_key(msg, strategy)
            seen[key] = seen.get(key, 0) + 1
            decision = engine.process_packet(msg, float(t))
            assert decision.passed == (seen[key] > threshold)
            assert (decision.rule_request is not None) == (seen[key] == threshold)
        assert engine.stats().records == len(seen)

    def test_retransmitting_sender_gets_through(self):
        """Test that any key sighted more often than the threshold eventually passes."""
        for policy in OpeningPolicy:
            engine = PinholeEngine(EngineConfig(policy=policy))
            results = [engine.process_packet(_request(), t).passed for t in (0.0, 0.5, 1.5, 3.5)]
            assert any(results)
            assert results.index(True) == engine.config.sightings_to_open


class TestKeyStrategyOrder:
    """Finer keys never let through more than coarser ones."""

    @pytest.mark.parametrize("policy", ["immediate", "deferred"])
    @pytest.mark.parametrize("seed", [1, 7, 42])
    def test_transaction_passes_subset_of_source_ip(self, policy, seed):
        """Test that a packet passing on transaction keys also passes on source-ip keys."""
        rng = np.random.default_rng(seed)
        engines = {
            strategy: PinholeEngine(EngineConfig(strategy=strategy, policy=policy))
            for strategy in ("source-ip", "transaction")
        }
        passed = {strategy: set() for strategy in engines}
        methods = ["INVITE", "ACK", "CANCEL", "BYE", "REGISTER"]
        times = np.sort(rng.uniform(0.0, 60.0, size=1500))
        for index, t in enumerate(times):
            msg = _request(
                ip=f"10.0.0.{int(rng.integers(1, 9))}",
                method=methods[int(rng.integers(len(methods)))],
                branch=f"z9hG4bK{int(rng.integers(6))}",
            )
            for strategy, engine in engines.items():
                if engine.process_packet(msg, float(t)).passed:
                    passed[strategy].add(index)
        assert passed["transaction"] <= passed["source-ip"]
        assert passed["transaction"]
        assert len(passed["source-ip"]) > len(passed["transaction"])


class TestExpire:
    """Tests for pinhole expiry."""

    def test_boundary_is_kept(self):
        """Test that a record idle for exactly the expiry time survives."""
        engine = PinholeEngine(EngineConfig(expiry_after_idle=10.0))
        engine.process_packet(_request(), 5.0)
        assert engine.expire(15.0) == []
        assert len(engine.expire(15.001)) == 1

    def test_open_pinhole_emits_remove(self):
        """Test that expiring an open pinhole queues a remove request."""
        engine = PinholeEngine(EngineConfig(expiry_after_idle=10.0))
        engine.process_packet(_request(), 0.0)
        engine.process_packet(_request(ip="10.0.0.6"), 0.0)
        engine.process_packet(_request(), 6.0)
        expired = engine.expire(12.0)
        assert [key.ip for key in expired] == ["10.0.0.6"]
        updates = engine.drain_rule_requests()
        assert [(u.op, u.key.ip, u.requested_at) for u in updates] == [(RuleOp.REMOVE, "10.0.0.6", 12.0)]
        assert engine.drain_rule_requests() == []

    def test_greylisted_expiry_is_silent(self):
        """Test that expiring a greylisted record emits no remove."""
        engine = PinholeEngine(EngineConfig(policy="deferred", expiry_after_idle=1.0))
        engine.process_packet(_request(), 0.0)
        assert len(engine.expire(2.0)) == 1
        assert engine.drain_rule_requests() == []

    def test_sighting_after_expiry_starts_over(self):
        """Test that an expired key is greylisted again."""
        engine = PinholeEngine(EngineConfig(expiry_after_idle=1.0))
        engine.process_packet(_request(), 0.0)
        engine.expire(5.0)
        decision = engine.process_packet(_request(), 5.0)
        assert decision.action is Action.DROP and decision.sighting == 1
        assert engine.lookup(decision.key).state is RecordState.OPEN


class TestEngineConfig:
    """Tests for EngineConfig."""

    def test_defaults(self):
        """Test the default settings."""
        config = EngineConfig()
        assert config.strategy is KeyStrategy.SOURCE_IP
        assert config.policy is OpeningPolicy.IMMEDIATE
        assert config.expiry_after_idle == pytest.approx(3600.0)
        assert config.sightings_to_open == 1

    def test_nonpositive_expiry(self):
        """Test that a non-positive expiry raises error."""
        with pytest.raises(ValueError):
            EngineConfig(expiry_after_idle=0.0)

    def test_lookup_returns_copy(self):
        """Test that mutating a looked-up record leaves the engine untouched."""
        engine = PinholeEngine()
        key = engine.process_packet(_request(), 0.0).key
        engine.lookup(key).sightings = 99
        assert engine.lookup(key).sightings == 1


def test_rule_update_constructors():
    """Test the install and remove constructors."""
    key = PinholeKey(KeyStrategy.SOURCE_IP, ip="10.0.0.5")
    assert RuleUpdate.install(key, 1.0).op is RuleOp.INSTALL
    assert RuleUpdate.remove(key, 2.0).op is RuleOp.REMOVE

"""
Tests for run reports, CSV export and seed aggregation.
"""

import csv
import math

import pytest

from sip_pinhole.analysis import (
    MalformedLogError,
    aggregate_seeds,
    analyze,
    emit_csv,
    render_table,
    summary_rows,
    write_installs,
    write_mean_timeline,
)
from sip_pinhole.firewall import LatencyModel, RealTimeFirewall
from sip_pinhole.sim import AttackerModel, EventKind, EventLog, Simulator, UaModel


def _read(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def _mixed_log(seed=0):
    firewall = RealTimeFirewall(LatencyModel(per_rule_base=0.02, per_existing_rule=1e-4))
    sim = Simulator(
        firewall,
        uas=[UaModel("a", transactions=3), UaModel("b", emergency=True, start=10.0)],
        attackers=[AttackerModel(rate=100.0, total=200)],
        horizon=30.0,
        seed=seed,
    )
    return sim.run()


class TestAnalyze:
    """Tests for analyze function."""

    def test_empty_log(self):
        """Test the report of a run where nothing happened."""
        report = analyze(EventLog(horizon=10.0))
        assert report.is_empty
        assert report.false_positives == 0 and report.false_negatives == 0
        assert report.rules_installed == 0
        assert report.install_timeline == ()
        assert report.setup_delay.normal.count == 0
        assert math.isnan(report.setup_delay.normal.mean)
        assert report.last_install_s is None
        assert report.backlog_onset_installed is None

    def test_counts(self):
        """Test the counters of a run with users and an attacker."""
        report = analyze(_mixed_log())
        assert report.false_positives == 0
        assert report.false_negatives == 0
        assert report.attack_packets == 200
        assert report.transactions == 4
        assert report.completed == 4
        assert report.rules_requested == 202
        assert report.rules_installed == 202
        assert not report.truncated

    def test_setup_delay_split(self):
        """Test that emergency delays are reported separately."""
        report = analyze(_mixed_log())
        assert report.setup_delay.emergency.count == 1
        assert report.setup_delay.emergency.mean == pytest.approx(0.71, abs=0.01)
        assert report.setup_delay.normal.count == 3
        assert report.setup_delay.normal.max >= report.setup_delay.normal.mean

    def test_timeline(self):
        """Test that the install timeline is cumulative and ends at the total."""
        report = analyze(_mixed_log())
        times = [t for t, _ in report.install_timeline]
        totals = [n for _, n in report.install_timeline]
        assert times == sorted(times)
        assert totals == sorted(totals)
        assert totals[-1] == report.rules_installed
        assert report.last_install_s == times[-1]

    def test_backlog(self):
        """Test the worst lag and the backlog onset of a saturated firewall."""
        report = analyze(_mixed_log())
        assert report.worst_case_install_lag > 0.02
        assert report.backlog_onset_installed is not None
        assert report.capacity.flagged

    def test_pure(self):
        """Test that analysing the same log twice gives equal reports."""
        log = _mixed_log()
        assert analyze(log) == analyze(log)

    def test_false_positive(self):
        """Test that a user who gives up is counted."""
        firewall = RealTimeFirewall(LatencyModel(per_rule_base=100.0))
        log = Simulator(firewall, uas=[UaModel("alice")], horizon=40.0).run()
        report = analyze(log)
        assert report.false_positives == 1
        assert report.rules_installed == 0
        assert report.truncated

    def test_false_negative(self):
        """Test that attack packets reaching the proxy are counted."""
        log = Simulator(
            RealTimeFirewall(),
            attackers=[AttackerModel(kind="fixed-spoof-set", rate=10.0, total=10)],
            horizon=5.0,
        ).run()
        assert analyze(log).false_negatives == 9


class TestMalformedLog:
    """Tests for malformed log detection."""

    def test_time_goes_back(self):
        """Test that decreasing times are rejected."""
        log = EventLog(horizon=10.0)
        log.add(2.0, EventKind.TXN_START)
        log.add(1.0, EventKind.TXN_START)
        with pytest.raises(MalformedLogError, match="time goes back"):
            analyze(log)

    def test_install_without_request_time(self):
        """Test that an install row needs its request time."""
        log = EventLog(horizon=10.0)
        log.add(1.0, EventKind.RULE_INSTALLED, action="install")
        with pytest.raises(MalformedLogError, match="request time"):
            analyze(log)

    def test_more_installs_than_requests(self):
        """Test that installs cannot outnumber requests."""
        log = EventLog(horizon=10.0)
        log.add(1.0, EventKind.RULE_INSTALLED, action="install", requested_at=0.5)
        with pytest.raises(MalformedLogError):
            analyze(log)

    def test_install_before_request(self):
        """Test that an install cannot precede its request."""
        log = EventLog(horizon=10.0)
        log.add(0.5, EventKind.RULE_REQUEST, action="install", requested_at=0.5)
        log.add(0.6, EventKind.RULE_INSTALLED, action="install", requested_at=0.9)
        with pytest.raises(MalformedLogError):
            analyze(log)

    def test_completion_without_delay(self):
        """Test that a completed transaction needs its delay."""
        log = EventLog(horizon=10.0)
        log.add(1.0, EventKind.TXN_COMPLETE)
        with pytest.raises(MalformedLogError, match="setup delay"):
            analyze(log)

    def test_is_value_error(self):
        """Test that malformed logs can be caught as ValueError."""
        assert issubclass(MalformedLogError, ValueError)


class TestExport:
    """Tests for CSV export and rendering."""

    def test_emit_csv(self, tmp_path):
        """Test the timeline, summary and capacity files."""
        report = analyze(_mixed_log())
        emit_csv(report, tmp_path / "timeline.csv", tmp_path / "summary.csv", tmp_path / "capacity.csv")
        timeline = _read(tmp_path / "timeline.csv")
        assert timeline[0] == ["elapsed_s", "cumulative_installed"]
        assert timeline[-1][1] == str(report.rules_installed)
        summary = dict(_read(tmp_path / "summary.csv")[1:])
        assert summary["false_negatives"] == "0"
        assert summary["truncated"] == "false"
        assert summary["controller"] == "realtime"
        capacity = _read(tmp_path / "capacity.csv")
        assert capacity[0] == ["mode", "rules", "init_speed", "fin_speed"]
        assert capacity[1][:2] == ["realtime", "202"]

    def test_empty_report_gives_headers_only(self, tmp_path):
        """Test that an empty run writes header-only files."""
        report = analyze(EventLog(horizon=10.0))
        emit_csv(report, tmp_path / "t.csv", tmp_path / "s.csv", tmp_path / "c.csv")
        assert _read(tmp_path / "t.csv") == [["elapsed_s", "cumulative_installed"]]
        assert _read(tmp_path / "s.csv") == [["metric", "value"]]
        assert _read(tmp_path / "c.csv") == [["mode", "rules", "init_speed", "fin_speed"]]

    def test_unwritable(self, tmp_path):
        """Test that the error names the path."""
        report = analyze(EventLog(horizon=10.0))
        with pytest.raises(OSError, match="nowhere"):
            emit_csv(report, tmp_path / "nowhere" / "t.csv", tmp_path / "s.csv")

    def test_summary_formats(self):
        """Test the value formatting of the summary rows."""
        rows = dict(summary_rows(analyze(EventLog(horizon=10.0, seed=4))))
        assert rows["seed"] == "4"
        assert rows["horizon_s"] == "10.000000"
        assert rows["setup_delay_normal_mean_s"] == "nan"
        assert rows["last_install_s"] == ""

    def test_render_table(self):
        """Test that the table lists every metric."""
        report = analyze(_mixed_log())
        table = render_table(report)
        for name, _ in summary_rows(report):
            assert name in table

    def test_write_installs(self, tmp_path):
        """Test the install log written from the event log."""
        log = _mixed_log()
        rows = _read(write_installs(log, tmp_path / "installs.csv"))
        assert rows[0] == ["key_digest", "requested_at_s", "installed_at_s"]
        assert len(rows) - 1 == len(log.of_kind(EventKind.RULE_INSTALLED))
        assert all(float(r[2]) >= float(r[1]) for r in rows[1:])


class TestAggregate:
    """Tests for aggregate_seeds function."""

    def test_mean_timeline(self, tmp_path):
        """Test the point-wise mean and the worst-case figures."""
        reports = [analyze(_mixed_log(seed)) for seed in (0, 1)]
        aggregate = aggregate_seeds(reports)
        assert aggregate.seeds == 2
        assert aggregate.mean_timeline[0] == (0.0, 0.0)
        assert aggregate.mean_timeline[-1][1] == pytest.approx(202.0)
        assert aggregate.worst_install_lag == max(r.worst_case_install_lag for r in reports)
        rows = _read(write_mean_timeline(aggregate, tmp_path / "mean.csv"))
        assert rows[0] == ["elapsed_s", "mean_installed"]
        assert len(rows) == len(aggregate.mean_timeline) + 1

    def test_empty(self):
        """Test that aggregating nothing raises error."""
        with pytest.raises(ValueError):
            aggregate_seeds([])

"""
Tests for the firewall latency model and its calibration.
"""

import math

import numpy as np
import pytest

from sip_pinhole.config import ControllerKind
from sip_pinhole.firewall import (
    TABLE_1,
    CalibrationError,
    CapacityObservation,
    LatencyModel,
    calibrate,
    capacity_residuals,
    capacity_speeds,
    default_latency_model,
    predict_install_times,
    sustainable_rule_count,
)


@pytest.fixture(scope="module")
def model():
    return calibrate()


def _flood(rules: int, rate: float = 500.0) -> np.ndarray:
    return np.arange(rules, dtype=float) / rate


class TestLatencyModel:
    """Tests for LatencyModel class."""

    def test_costs(self):
        """Test the linear cost laws."""
        model = LatencyModel(0.002, 1e-6, 0.05, 2e-5)
        assert model.rule_cost(1000) == pytest.approx(0.003)
        assert model.batch_cost(1000) == pytest.approx(0.07)

    def test_zero(self):
        """Test that the zero model costs nothing."""
        assert LatencyModel.zero().rule_cost(10**6) == 0.0
        assert LatencyModel.zero().batch_cost(10**6) == 0.0

    def test_negative_coefficient(self):
        """Test that negative coefficients raise error."""
        with pytest.raises(ValueError):
            LatencyModel(per_existing_rule=-1e-6)

    def test_nan_coefficient(self):
        """Test that NaN coefficients raise error."""
        with pytest.raises(ValueError):
            LatencyModel(per_rule_base=float("nan"))


class TestPredictInstallTimes:
    """Tests for predict_install_times function."""

    def test_realtime_idle_gaps(self):
        """Test that a firewall that keeps up installs after one rule cost."""
        done = predict_install_times([0.0, 1.0, 2.0], LatencyModel(per_rule_base=0.1), "realtime")
        assert done.tolist() == pytest.approx([0.1, 1.1, 2.1])

    def test_realtime_backlog_closed_form(self):
        """Test that a saturated firewall completes rule k at sum of costs."""
        model = LatencyModel(per_rule_base=0.01, per_existing_rule=0.001)
        done = predict_install_times(np.zeros(10), model, "realtime")
        k = np.arange(10)
        assert done.tolist() == pytest.approx(np.cumsum(0.01 + 0.001 * k).tolist())

    def test_committed_offset(self):
        """Test that pre-existing rules raise the cost."""
        model = LatencyModel(per_existing_rule=0.001)
        assert predict_install_times([0.0], model, "realtime", committed=100)[0] == pytest.approx(0.1)

    def test_batched_boundaries(self):
        """Test that requests join the next boundary strictly after them."""
        done = predict_install_times([0.0, 0.5, 1.0, 1.2], LatencyModel(per_batch_base=0.1), "batched")
        assert done.tolist() == pytest.approx([1.1, 1.1, 2.1, 2.1])

    def test_batched_backlog(self):
        """Test that a slow batch delays the next one."""
        done = predict_install_times([0.0, 1.5], LatencyModel(per_batch_base=1.5), "batched")
        assert done.tolist() == pytest.approx([2.5, 4.0])

    def test_empty(self):
        """Test that no requests give no installs."""
        assert predict_install_times([], LatencyModel(), "realtime").size == 0

    def test_decreasing_times(self):
        """Test that decreasing request times raise error."""
        with pytest.raises(ValueError):
            predict_install_times([1.0, 0.5], LatencyModel(), "realtime")

    def test_invalid_interval(self):
        """Test that a non-positive interval raises error."""
        with pytest.raises(ValueError):
            predict_install_times([0.0], LatencyModel(), "batched", interval=0.0)


class TestCapacitySpeeds:
    """Tests for capacity_speeds function."""

    def test_windows(self):
        """Test the first and last window speeds."""
        requested = np.arange(4000) / 500.0
        installed = np.concatenate([np.arange(1, 2001) * 0.01, 20.0 + np.arange(1, 2001) * 0.04])
        stats = capacity_speeds(requested, installed, window=1000)
        assert stats.initial_speed == pytest.approx(100.0)
        assert stats.final_speed == pytest.approx(25.0)
        assert not stats.flagged

    def test_short_run_is_flagged(self):
        """Test that fewer than two windows are flagged and use all installs."""
        stats = capacity_speeds([0.0, 0.0, 0.0], [0.5, 1.0, 1.5], window=1000)
        assert stats.flagged
        assert stats.window == 3
        assert stats.initial_speed == pytest.approx(2.0)
        assert stats.final_speed == stats.initial_speed

    def test_no_installs(self):
        """Test that no installs give zero speeds."""
        assert capacity_speeds([], []) == (0.0, 0.0, 0, True)

    def test_instantaneous(self):
        """Test that a zero span gives infinite speed."""
        assert math.isinf(capacity_speeds([0.0], [0.0], window=1).initial_speed)

    def test_invalid_window(self):
        """Test that a non-positive window raises error."""
        with pytest.raises(ValueError):
            capacity_speeds([0.0], [1.0], window=0)


class TestCalibrate:
    """Tests for calibrate function."""

    def test_coefficients_non_negative(self, model):
        """Test that every fitted coefficient is non-negative."""
        assert model.per_rule_base > 0
        assert model.per_existing_rule > 0
        assert model.per_batch_base >= 0
        assert model.per_batch_per_existing_rule > 0

    def test_realtime_coefficients(self, model):
        """Test the real-time fit against the two speeds it must reproduce."""
        assert model.per_rule_base == pytest.approx(3.544e-3, rel=0.02)
        assert model.per_existing_rule == pytest.approx(3.3865e-6, rel=0.02)

    def test_realtime_residuals(self, model):
        """Test that the real-time row is reproduced closely."""
        residual = capacity_residuals(model)[0]
        assert abs(residual.initial_error) < 0.01
        assert abs(residual.final_error) < 0.01

    def test_all_residuals_within_tolerance(self, model):
        """Test that every row is reproduced within 25 %."""
        for residual in capacity_residuals(model):
            assert abs(residual.initial_error) < 0.25
            assert abs(residual.final_error) < 0.25

    def test_realtime_10k_completion(self, model):
        """Test the predicted completion of a 10 000-rule real-time flood."""
        done = predict_install_times(_flood(10000), model, "realtime")
        assert 170.0 <= done[-1] <= 210.0

    def test_batched_10k_completion(self, model):
        """Test the predicted completion of a 10 000-rule batched flood."""
        done = predict_install_times(_flood(10000), model, "batched")
        assert 20.0 <= done[-1] <= 23.0

    def test_batched_50k_worst_lag(self, model):
        """Test the worst install lag of a 50 000-rule batched flood."""
        requested = _flood(50000)
        done = predict_install_times(requested, model, "batched")
        assert float(np.max(done - requested)) == pytest.approx(68.0, rel=0.25)

    def test_sustainable_count(self, model):
        """Test the committed count at which batching falls behind 500 r/s."""
        count = sustainable_rule_count(model, "batched", rate=500.0)
        assert count == pytest.approx(18000, abs=4000)

    def test_missing_kind(self):
        """Test that a table without batched rows raises error."""
        with pytest.raises(CalibrationError):
            calibrate(TABLE_1[:1])

    def test_bad_row(self):
        """Test that a row with non-positive speed raises error."""
        table = TABLE_1 + (CapacityObservation(ControllerKind.REALTIME, 5000, 0.0, 10.0),)
        with pytest.raises(CalibrationError):
            calibrate(table)

    def test_calibration_error_is_value_error(self):
        """Test that calibration errors can be caught as ValueError."""
        assert issubclass(CalibrationError, ValueError)

    def test_default_model_cached(self):
        """Test that the default model is computed once."""
        assert default_latency_model() is default_latency_model()


class TestSustainableRuleCount:
    """Tests for sustainable_rule_count function."""

    def test_realtime(self):
        """Test the real-time budget of 1/rate per rule."""
        model = LatencyModel(per_rule_base=0.001, per_existing_rule=1e-6)
        assert sustainable_rule_count(model, "realtime", rate=500.0) == pytest.approx(1000.0)

    def test_never_keeps_up(self):
        """Test that a base cost above the budget gives zero."""
        model = LatencyModel(per_batch_base=2.0)
        assert sustainable_rule_count(model, "batched", rate=500.0) == 0.0

    def test_always_keeps_up(self):
        """Test that a flat cost within the budget gives infinity."""
        assert math.isinf(sustainable_rule_count(LatencyModel(), "realtime", rate=500.0))

    def test_invalid_rate(self):
        """Test that a non-positive rate raises error."""
        with pytest.raises(ValueError):
            sustainable_rule_count(LatencyModel(), "realtime", rate=0.0)

"""
Rule installation latency of the perimeter firewall.

Installing a rule costs time proportional to the size of the rule set
already present, because the whole set is copied between kernel and user
space on every change. Real-time updates pay that copy once per rule,
batched updates once per batch:

    real-time rule cost   = a  + b  * n
    batched batch cost    = c0 + c1 * n

where n is the number of rules committed before the operation starts. The
coefficients are fitted to measured rule-adding capacities.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from ..config import (
    DEFAULT_BATCH_INTERVAL,
    DEFAULT_CAPACITY_WINDOW,
    ControllerKind,
    get_controller_kind,
)

logger = logging.getLogger(__name__)


class CalibrationError(ValueError):
    """The latency model could not be fitted to the capacity observations."""


@dataclass(frozen=True)
class LatencyModel:
    """
    Linear copy-cost model of the firewall.

    Attributes:
        per_rule_base: Real-time cost of one rule on an empty set, a (s).
        per_existing_rule: Real-time extra cost per committed rule, b (s).
        per_batch_base: Batched cost of one batch on an empty set, c0 (s).
        per_batch_per_existing_rule: Batched extra cost per committed
            rule, c1 (s).

    Raises:
        ValueError: If any coefficient is negative.
    """

    per_rule_base: float = 0.0
    per_existing_rule: float = 0.0
    per_batch_base: float = 0.0
    per_batch_per_existing_rule: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "per_rule_base",
            "per_existing_rule",
            "per_batch_base",
            "per_batch_per_existing_rule",
        ):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative. Got: {value}")

    @classmethod
    def zero(cls) -> "LatencyModel":
        """Firewall that installs every rule instantly."""
        return cls()

    def rule_cost(self, n: int) -> float:
        """Real-time cost of one rule with n rules committed (s)."""
        return self.per_rule_base + self.per_existing_rule * n

    def batch_cost(self, n: int) -> float:
        """Batched cost of one batch with n rules committed (s)."""
        return self.per_batch_base + self.per_batch_per_existing_rule * n


class CapacityObservation(NamedTuple):
    """
    One measured rule-adding capacity.

    The run offers ``rules`` install requests at ``rate`` requests/s from
    t=0; batched runs push every ``interval`` seconds.
    """

    mode: ControllerKind
    rules: int
    initial_speed: float
    final_speed: float
    rate: float = 500.0
    interval: float = DEFAULT_BATCH_INTERVAL


# Worst-case capacities of an iptables firewall under a 500 msg/s flood.
TABLE_1: Tuple[CapacityObservation, ...] = (
    CapacityObservation(ControllerKind.REALTIME, 10000, 191.0, 28.0),
    CapacityObservation(ControllerKind.BATCHED, 10000, 500.0, 433.0),
    CapacityObservation(ControllerKind.BATCHED, 50000, 499.0, 184.0),
)


class CapacityStats(NamedTuple):
    """
    Rule-adding speeds at the start and the end of a run.

    Attributes:
        initial_speed: Rules/s over the first ``window`` installs.
        final_speed: Rules/s over the last ``window`` installs.
        window: Installs per window actually used.
        flagged: True when fewer than two full windows were available and
            both speeds were computed over all installs.
    """

    initial_speed: float
    final_speed: float
    window: int
    flagged: bool


class CapacityResidual(NamedTuple):
    """Predicted against observed speeds for one observation."""
    observation: CapacityObservation
    predicted_initial: float
    predicted_final: float
    initial_error: float  # relative
    final_error: float  # relative


def _validated_requests(requested: Sequence[float]) -> np.ndarray:
    times = np.asarray(requested, dtype=float)
    if times.ndim != 1:
        raise ValueError("Request times must be a one-dimensional sequence.")
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("Request times must be non-decreasing.")
    return times


def predict_install_times(
    requested: Sequence[float],
    model: LatencyModel,
    kind: Union[ControllerKind, str],
    interval: float = DEFAULT_BATCH_INTERVAL,
    committed: int = 0,
) -> np.ndarray:
    """
    Install completion times for a stream of distinct install requests.

    This is the closed form of what the firewall controllers do event by
    event, used for calibration and as a cross-check of simulated runs.
    A batched request at time r joins the push at the next interval
    boundary strictly after r; boundaries without requests are skipped.

    Args:
        requested: Non-decreasing request times (s).
        model: Latency model.
        kind: Controller kind.
        interval: Batch push interval (s, batched only).
        committed: Rules already committed before the first request.

    Returns:
        np.ndarray: Completion time of each request, in request order.

    Raises:
        ValueError: If the request times decrease or interval is not
            positive.

    Examples:
        >>> model = LatencyModel(per_rule_base=0.01)
        >>> predict_install_times([0.0, 0.0], model, "realtime").tolist()
        [0.01, 0.02]
    """
    kind = get_controller_kind(kind)
    times = _validated_requests(requested)
    if times.size == 0:
        return times.copy()

    if kind is ControllerKind.REALTIME:
        k = committed + np.arange(times.size, dtype=float)
        cumulative = np.cumsum(model.per_rule_base + model.per_existing_rule * k)
        before = np.concatenate(([0.0], cumulative[:-1]))
        # Max-plus form of start = max(request, previous completion).
        return cumulative + np.maximum.accumulate(times - before)

    if interval <= 0:
        raise ValueError(f"Batch interval must be positive. Got: {interval}")
    ticks = (np.floor(times / interval) + 1.0) * interval
    boundaries, first_index, counts = np.unique(
        ticks, return_index=True, return_counts=True
    )
    done = np.empty_like(times)
    busy_until = -math.inf
    n = committed
    for tick, first, count in zip(boundaries, first_index, counts):
        start = max(tick, busy_until)
        busy_until = start + model.batch_cost(n)
        done[first:first + count] = busy_until
        n += int(count)
    return done


def capacity_speeds(
    requested: Sequence[float],
    installed: Sequence[float],
    window: int = DEFAULT_CAPACITY_WINDOW,
) -> CapacityStats:
    """
    Rule-adding speeds over the first and last ``window`` installs.

    initial = W / (W-th install time - first request time)
    final   = W / (last install time - install time just before the window)

    With fewer than 2W installs both speeds are taken over all installs and
    the result is flagged.

    Args:
        requested: Request times of the installed rules (s).
        installed: Install completion times (s), any order.
        window: Installs per window (default: 1000).

    Returns:
        CapacityStats: Speeds in rules/s. An instantaneous span gives inf.

    Raises:
        ValueError: If window is not positive.
    """
    if window <= 0:
        raise ValueError(f"Capacity window must be positive. Got: {window}")
    done = np.sort(np.asarray(installed, dtype=float))
    count = done.size
    if count == 0:
        return CapacityStats(0.0, 0.0, 0, True)
    first_request = float(np.min(np.asarray(requested, dtype=float)))

    flagged = count < 2 * window
    used = count if flagged else window

    def speed(rules: int, span: float) -> float:
        return rules / span if span > 0 else math.inf

    initial = speed(used, done[used - 1] - first_request)
    if flagged:
        final = initial
    else:
        final = speed(used, done[-1] - done[count - used - 1])
    return CapacityStats(float(initial), float(final), used, flagged)


def _replay(
    observation: CapacityObservation, model: LatencyModel, window: int
) -> CapacityStats:
    requested = np.arange(observation.rules, dtype=float) / observation.rate
    installed = predict_install_times(
        requested, model, observation.mode, observation.interval
    )
    return capacity_speeds(requested, installed, window)


def capacity_residuals(
    model: LatencyModel,
    table: Sequence[CapacityObservation] = TABLE_1,
    window: int = DEFAULT_CAPACITY_WINDOW,
) -> List[CapacityResidual]:
    """
    Compare the speeds a model predicts with the observed ones.

    Args:
        model: Latency model.
        table: Capacity observations (default: TABLE_1).
        window: Capacity window (default: 1000).

    Returns:
        list[CapacityResidual]: One entry per observation, with relative
        errors (predicted / observed - 1).
    """
    residuals = []
    for row in table:
        predicted = _replay(row, model, window)
        residuals.append(
            CapacityResidual(
                observation=row,
                predicted_initial=predicted.initial_speed,
                predicted_final=predicted.final_speed,
                initial_error=predicted.initial_speed / row.initial_speed - 1.0,
                final_error=predicted.final_speed / row.final_speed - 1.0,
            )
        )
    return residuals


def _initial_guess(kind: ControllerKind, rows: Sequence[CapacityObservation]) -> np.ndarray:
    if kind is ControllerKind.REALTIME:
        row = max(rows, key=lambda r: r.rules)
        base = 1.0 / row.initial_speed
        slope = (1.0 / row.final_speed - base) / row.rules
        return np.array([base, max(slope, 1e-9)])
    slope = min(r.rate * r.interval / r.final_speed / r.rules for r in rows)
    return np.array([0.01, max(slope, 1e-9)])


def _fit(
    kind: ControllerKind, rows: Sequence[CapacityObservation], window: int
) -> Tuple[float, float]:
    def model_for(x: np.ndarray) -> LatencyModel:
        base, slope = (max(float(v), 0.0) for v in x)
        if kind is ControllerKind.REALTIME:
            return LatencyModel(per_rule_base=base, per_existing_rule=slope)
        return LatencyModel(per_batch_base=base, per_batch_per_existing_rule=slope)

    def residual(x: np.ndarray) -> np.ndarray:
        errors = []
        for row in rows:
            predicted = _replay(row, model_for(x), window)
            errors.append(predicted.initial_speed / row.initial_speed - 1.0)
            errors.append(predicted.final_speed / row.final_speed - 1.0)
        return np.asarray(errors)

    x0 = _initial_guess(kind, rows)
    try:
        result = least_squares(
            residual, x0, bounds=(0.0, np.inf), x_scale=x0, method="trf"
        )
    except ValueError as e:
        raise CalibrationError(
            f"Could not fit the {kind.value} latency coefficients. "
            f"Original error: {e}"
        )
    if not result.success or not np.all(np.isfinite(result.x)):
        raise CalibrationError(
            f"Fit of the {kind.value} latency coefficients did not converge: "
            f"{result.message}"
        )
    base, slope = (float(v) for v in result.x)
    if base < 0 or slope < 0:
        raise CalibrationError(
            f"Fitted {kind.value} coefficients are negative: ({base}, {slope})"
        )
    logger.info(
        "%s fit: base=%.6g s, slope=%.6g s/rule, rms relative residual=%.4f",
        kind.value, base, slope, float(np.sqrt(np.mean(result.fun ** 2))),
    )
    return base, slope


def calibrate(
    table: Sequence[CapacityObservation] = TABLE_1,
    window: int = DEFAULT_CAPACITY_WINDOW,
) -> LatencyModel:
    """
    Fit the latency model to rule-adding capacity observations.

    Each observation is replayed through :func:`predict_install_times` and
    the coefficients of its controller kind are chosen by bounded
    (non-negative) least squares on the relative speed errors.

    Args:
        table: Capacity observations; needs at least one row per
            controller kind (default: TABLE_1).
        window: Capacity window used for the speeds (default: 1000).

    Returns:
        LatencyModel: Fitted coefficients.

    Raises:
        CalibrationError: If a controller kind has no usable row or the fit
            fails.

    Examples:
        >>> model = calibrate()
        >>> round(model.per_rule_base * 1000, 1)
        3.5
    """
    coefficients = {}
    for kind in ControllerKind:
        rows = [row for row in table if get_controller_kind(row.mode) is kind]
        if not rows:
            raise CalibrationError(f"No {kind.value} capacity observation to fit.")
        for row in rows:
            if row.rules <= 0 or row.rate <= 0 or row.interval <= 0:
                raise CalibrationError(f"Unusable capacity observation: {row}")
            if row.initial_speed <= 0 or row.final_speed <= 0:
                raise CalibrationError(f"Capacity speeds must be positive: {row}")
        coefficients[kind] = _fit(kind, rows, window)

    a, b = coefficients[ControllerKind.REALTIME]
    c0, c1 = coefficients[ControllerKind.BATCHED]
    return LatencyModel(
        per_rule_base=a,
        per_existing_rule=b,
        per_batch_base=c0,
        per_batch_per_existing_rule=c1,
    )


@lru_cache(maxsize=1)
def default_latency_model() -> LatencyModel:
    """The model calibrated from TABLE_1, computed once per process."""
    return calibrate()


def sustainable_rule_count(
    model: LatencyModel,
    kind: Union[ControllerKind, str],
    rate: float,
    interval: float = DEFAULT_BATCH_INTERVAL,
) -> float:
    """
    Committed rule count beyond which the firewall falls behind.

    A real-time firewall keeps up while one rule costs at most 1/rate; a
    batched one while one batch costs at most one interval.

    Args:
        model: Latency model.
        kind: Controller kind.
        rate: Offered install requests per second.
        interval: Batch push interval (s, batched only).

    Returns:
        float: Rule count (0 if the firewall never keeps up, inf if it
        always does).

    Raises:
        ValueError: If rate or interval is not positive.

    Examples:
        >>> model = LatencyModel(per_batch_per_existing_rule=5e-5)
        >>> round(sustainable_rule_count(model, "batched", rate=500.0))
        20000
    """
    if rate <= 0:
        raise ValueError(f"Offered rate must be positive. Got: {rate}")
    if interval <= 0:
        raise ValueError(f"Batch interval must be positive. Got: {interval}")
    kind = get_controller_kind(kind)
    if kind is ControllerKind.REALTIME:
        budget, base, slope = 1.0 / rate, model.per_rule_base, model.per_existing_rule
    else:
        budget, base, slope = interval, model.per_batch_base, model.per_batch_per_existing_rule
    if base > budget:
        return 0.0
    if slope == 0:
        return math.inf
    return (budget - base) / slope

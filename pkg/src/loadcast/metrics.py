"""Point and probabilistic forecast scores.

Probabilistic: mean pinball over all (instant, level) pairs, the Winkler
interval score, and PICP (empirical interval coverage). Point: MAE, RMSE,
MAPE, computed from the median column when scoring a quantile forecast.
Interval membership is closed on both ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, LevelNotForecast
from .qrnn import QuantileForecast


@dataclass(frozen=True)
class IntervalSpec:
    """A central prediction interval named by its two quantile levels."""

    lower_level: float = 0.05
    upper_level: float = 0.95

    def __post_init__(self):
        if not (0.0 < self.lower_level < self.upper_level < 1.0):
            raise ValueError(
                f"need 0 < lower < upper < 1, got {self.lower_level}, {self.upper_level}"
            )

    @property
    def alpha(self) -> float:
        """Confidence complement: 1 - (upper - lower)."""
        return 1.0 - (self.upper_level - self.lower_level)


DEFAULT_INTERVAL = IntervalSpec(0.05, 0.95)


@dataclass(frozen=True)
class EvalReport:
    """One row of forecast scores; mape is None when an actual is zero."""

    mae: float
    rmse: float
    mape: float | None
    pi_width: float
    pinball: float
    winkler: float
    picp: float

    CSV_FIELDS = ("mae", "rmse", "pi_width", "pinball", "winkler", "picp")

    def csv_values(self) -> list[str]:
        return [str(getattr(self, f)) for f in self.CSV_FIELDS]


def _check_lengths(forecast: QuantileForecast, actuals: np.ndarray) -> np.ndarray:
    actuals = np.asarray(actuals, dtype=np.float64)
    if len(actuals) != forecast.n_instants:
        raise LengthMismatch(
            f"{len(actuals)} actuals for {forecast.n_instants} forecast rows"
        )
    return actuals


def mean_pinball(forecast: QuantileForecast, actuals: np.ndarray) -> float:
    """Average pinball loss over every instant and quantile level."""
    actuals = _check_lengths(forecast, actuals)
    levels = np.array(forecast.levels)
    diff = forecast.values - actuals[:, None]
    losses = np.where(diff >= 0, (1.0 - levels) * diff, -levels * diff)
    return float(losses.mean())


def _bounds(forecast: QuantileForecast, spec: IntervalSpec):
    try:
        lower = forecast.level_column(spec.lower_level)
        upper = forecast.level_column(spec.upper_level)
    except LevelNotForecast:
        raise
    return lower, upper


def winkler(
    forecast: QuantileForecast, actuals: np.ndarray, spec: IntervalSpec = DEFAULT_INTERVAL
) -> float:
    """Mean Winkler score: interval width plus 2/alpha times any miss distance."""
    actuals = _check_lengths(forecast, actuals)
    lower, upper = _bounds(forecast, spec)
    width = upper - lower
    below = np.maximum(lower - actuals, 0.0)
    above = np.maximum(actuals - upper, 0.0)
    scores = width + 2.0 * (below + above) / spec.alpha
    return float(scores.mean())


def picp(
    forecast: QuantileForecast, actuals: np.ndarray, spec: IntervalSpec = DEFAULT_INTERVAL
) -> float:
    """Fraction of actuals inside the closed interval [lower, upper]."""
    actuals = _check_lengths(forecast, actuals)
    lower, upper = _bounds(forecast, spec)
    inside = (actuals >= lower) & (actuals <= upper)
    return float(inside.mean())


def interval_width(
    forecast: QuantileForecast, spec: IntervalSpec = DEFAULT_INTERVAL
) -> float:
    lower, upper = _bounds(forecast, spec)
    return float(np.mean(upper - lower))


def point_metrics(
    predictions: np.ndarray, actuals: np.ndarray
) -> tuple[float, float, float | None]:
    """(MAE, RMSE, MAPE percent); MAPE is None when any actual is zero."""
    predictions = np.asarray(predictions, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if predictions.shape != actuals.shape:
        raise LengthMismatch(
            f"prediction shape {predictions.shape} != actual shape {actuals.shape}"
        )
    err = predictions - actuals
    mae = float(np.mean(np.abs(err)))
    rmse = float(math.sqrt(np.mean(err**2)))
    if np.any(actuals == 0.0):
        mape = None
    else:
        mape = float(100.0 * np.mean(np.abs(err / actuals)))
    return mae, rmse, mape


def evaluate_forecast(
    forecast: QuantileForecast,
    actuals: np.ndarray,
    spec: IntervalSpec = DEFAULT_INTERVAL,
) -> EvalReport:
    """Score a quantile forecast; the median column is the point forecast."""
    actuals = _check_lengths(forecast, actuals)
    median = forecast.level_column(0.5)
    mae, rmse, mape = point_metrics(median, actuals)
    return EvalReport(
        mae=mae,
        rmse=rmse,
        mape=mape,
        pi_width=interval_width(forecast, spec),
        pinball=mean_pinball(forecast, actuals),
        winkler=winkler(forecast, actuals, spec),
        picp=picp(forecast, actuals, spec),
    )

"""Turn a Series into a feature matrix aligned to hour-ahead targets.

For each instant t with enough history the matrix carries lagged demand,
current/lagged weather (temperature and a humidity index), and one-hot
calendar indicators; the target is the demand at t itself. Instants
without full lag history are dropped, so the matrix never contains
missing values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Series
from .errors import DuplicateColumn, LengthMismatch, SeriesTooShort, UnknownColumn

# Lag sets used when a config does not override them. The demand set covers
# every lag seen to matter for hour-ahead load (previous day block, previous
# week block and their neighbours); weather lags implement the recency
# effect, including the current hour.
DEFAULT_DEMAND_LAGS = tuple(range(1, 28)) + (143, 144, 145) + (166, 167, 168)
DEFAULT_WEATHER_LAGS = tuple(range(0, 25))

CALENDAR_GROUPS = ("month", "dow", "hour")


def relative_humidity(drybulb: float | np.ndarray, dewpoint: float | np.ndarray):
    """Humidity index: 100 minus the dry-bulb/dew-point spread.

    Deliberately not clamped; values above 100 (dew point above dry bulb)
    are preserved so the feature stays affine in its inputs.
    """
    return 100.0 - (np.asarray(drybulb, dtype=np.float64) - dewpoint)


@dataclass(frozen=True)
class FeatureSpec:
    """Which lags and calendar indicator groups to generate."""

    demand_lags: tuple[int, ...] = DEFAULT_DEMAND_LAGS
    weather_lags: tuple[int, ...] = DEFAULT_WEATHER_LAGS
    calendar: tuple[str, ...] = CALENDAR_GROUPS

    def __post_init__(self):
        object.__setattr__(self, "demand_lags", tuple(sorted(set(self.demand_lags))))
        object.__setattr__(self, "weather_lags", tuple(sorted(set(self.weather_lags))))
        object.__setattr__(self, "calendar", tuple(self.calendar))
        if not self.demand_lags:
            raise ValueError("at least one demand lag is required")
        if min(self.demand_lags) < 1:
            raise ValueError("demand lags must be >= 1 (hour-ahead causality)")
        if self.weather_lags and min(self.weather_lags) < 0:
            raise ValueError("weather lags must be >= 0")
        unknown = set(self.calendar) - set(CALENDAR_GROUPS)
        if unknown:
            raise ValueError(f"unknown calendar groups: {sorted(unknown)}")

    @property
    def max_lag(self) -> int:
        return max((*self.demand_lags, *self.weather_lags))

    def column_names(self) -> list[str]:
        names = [f"demand_lag_{k}" for k in self.demand_lags]
        names += [f"temp_lag_{j}" for j in self.weather_lags]
        names += [f"humid_lag_{j}" for j in self.weather_lags]
        if "month" in self.calendar:
            names += [f"month_{m}" for m in range(1, 13)]
        if "dow" in self.calendar:
            names += [f"dow_{d}" for d in range(1, 8)]
        if "hour" in self.calendar:
            names += [f"hour_{h}" for h in range(0, 24)]
        return names


class FeatureMatrix:
    """Named feature columns plus the aligned target vector and instants."""

    def __init__(
        self,
        column_names: Sequence[str],
        rows: np.ndarray,
        targets: np.ndarray,
        instants: Sequence,
    ):
        self.column_names = list(column_names)
        self.rows = np.ascontiguousarray(rows, dtype=np.float64)
        self.targets = np.ascontiguousarray(targets, dtype=np.float64)
        self.instants = list(instants)
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("column names must be unique")
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.column_names):
            raise ValueError("rows shape does not match column names")
        if len(self.targets) != self.rows.shape[0] or len(self.instants) != self.rows.shape[0]:
            raise ValueError("targets/instants length must match row count")
        if self.rows.size and not np.all(np.isfinite(self.rows)):
            raise ValueError("feature matrix contains non-finite values")
        self.rows.flags.writeable = False
        self.targets.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.column_names.index(name)
        except ValueError:
            raise UnknownColumn(name) from None
        return self.rows[:, j]

    def select_rows(self, mask: np.ndarray) -> "FeatureMatrix":
        idx = np.flatnonzero(mask) if mask.dtype == bool else np.asarray(mask)
        return FeatureMatrix(
            self.column_names,
            self.rows[idx],
            self.targets[idx],
            [self.instants[i] for i in idx],
        )

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.column_names + ["target"]) + "\n")
            for i in range(self.n_rows):
                vals = [str(float(v)) for v in self.rows[i]]
                vals.append(str(float(self.targets[i])))
                fh.write(",".join(vals) + "\n")


def build_matrix(series: Series, spec: FeatureSpec) -> FeatureMatrix:
    """Assemble the hour-ahead feature matrix for every instant with history.

    Row count is ``len(series) - max_lag``; lag columns are exact lookups
    into the series, and each enabled calendar group one-hot sums to 1.
    """
    n = len(series)
    max_lag = spec.max_lag
    if n <= max_lag:
        raise SeriesTooShort(max_lag, n)
    m = n - max_lag
    sl = slice(max_lag, n)

    humidity = relative_humidity(series.drybulb, series.dewpoint)
    cols: list[np.ndarray] = []
    for k in spec.demand_lags:
        cols.append(series.demand[max_lag - k : n - k])
    for j in spec.weather_lags:
        cols.append(series.drybulb[max_lag - j : n - j])
    for j in spec.weather_lags:
        cols.append(humidity[max_lag - j : n - j])

    instants = series.timestamps[sl]
    if "month" in spec.calendar:
        months = np.array([ts.month for ts in instants])
        for mth in range(1, 13):
            cols.append((months == mth).astype(np.float64))
    if "dow" in spec.calendar:
        dows = np.array([ts.isoweekday() for ts in instants])
        for d in range(1, 8):
            cols.append((dows == d).astype(np.float64))
    if "hour" in spec.calendar:
        hours = np.array([ts.hour for ts in instants])
        for h in range(0, 24):
            cols.append((hours == h).astype(np.float64))

    rows = np.column_stack(cols) if cols else np.empty((m, 0))
    return FeatureMatrix(spec.column_names(), rows, series.demand[sl], instants)


def project(matrix: FeatureMatrix, keep: Sequence[str]) -> FeatureMatrix:
    """Column subset in the order given by ``keep``."""
    indices = []
    for name in keep:
        try:
            indices.append(matrix.column_names.index(name))
        except ValueError:
            raise UnknownColumn(name) from None
    return FeatureMatrix(
        list(keep), matrix.rows[:, indices], matrix.targets, matrix.instants
    )


def append_column(
    matrix: FeatureMatrix, name: str, values: np.ndarray
) -> FeatureMatrix:
    """Return a new matrix with one extra column on the right."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (matrix.n_rows,):
        raise LengthMismatch(
            f"column of length {values.shape} does not fit {matrix.n_rows} rows"
        )
    if name in matrix.column_names:
        raise DuplicateColumn(name)
    return FeatureMatrix(
        matrix.column_names + [name],
        np.column_stack([matrix.rows, values]),
        matrix.targets,
        matrix.instants,
    )

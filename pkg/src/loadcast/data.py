"""Hourly demand/weather series: CSV ingestion, partitioning, synthesis.

A :class:`Series` is the package's unit of data: a strictly hourly,
gap-free sequence of demand (MW), dry-bulb and dew-point temperatures
(degrees F) for one zone. Gappy input is rejected rather than silently
imputed; :func:`fill_forward` exists for callers who explicitly want
forward-filled gaps.

CSV schema (exact header)::

    timestamp,demand_mw,drybulb_f,dewpoint_f

with timestamps formatted ``YYYY-MM-DDTHH:00`` at hour resolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import (
    DuplicateTimestamp,
    MissingColumn,
    NonHourlyGap,
    SpecOutOfRange,
    TooShort,
    UnparseableRow,
)

CSV_HEADER = "timestamp,demand_mw,drybulb_f,dewpoint_f"
TIMESTAMP_FMT = "%Y-%m-%dT%H:00"
HOUR = timedelta(hours=1)

# Dew point may exceed dry bulb by up to this much before a row is flagged
# (sensor noise allowance). Flagged rows are kept, never dropped.
DEWPOINT_TOLERANCE_F = 0.5

# Longest demand lag the feature stage can request, plus one day of margin.
MIN_SYNTH_HOURS = 24 * 8


@dataclass(frozen=True)
class HourlyRecord:
    """One observation: local-time hour, demand in MW, temperatures in F."""

    timestamp: datetime
    demand: float
    drybulb: float
    dewpoint: float

    def __post_init__(self):
        if self.demand < 0:
            raise ValueError(f"demand must be nonnegative, got {self.demand}")

    @property
    def dewpoint_flagged(self) -> bool:
        """True when dew point exceeds dry bulb beyond the sensor tolerance."""
        return self.dewpoint > self.drybulb + DEWPOINT_TOLERANCE_F


class Series:
    """Strictly hourly, gap-free sequence of records for one zone.

    Immutable after construction; the backing arrays are marked read-only
    so a Series can be shared freely across threads.
    """

    def __init__(
        self,
        zone: str,
        timestamps: Sequence[datetime],
        demand: np.ndarray,
        drybulb: np.ndarray,
        dewpoint: np.ndarray,
    ):
        self.zone = zone
        self.timestamps = list(timestamps)
        self.demand = np.ascontiguousarray(demand, dtype=np.float64)
        self.drybulb = np.ascontiguousarray(drybulb, dtype=np.float64)
        self.dewpoint = np.ascontiguousarray(dewpoint, dtype=np.float64)
        for arr in (self.demand, self.drybulb, self.dewpoint):
            arr.flags.writeable = False
        self._validate()

    def _validate(self):
        n = len(self.timestamps)
        if not (len(self.demand) == len(self.drybulb) == len(self.dewpoint) == n):
            raise ValueError("series arrays must have equal length")
        if n == 0:
            raise ValueError("series must contain at least one record")
        if np.any(self.demand < 0):
            bad = int(np.argmax(self.demand < 0))
            raise ValueError(
                f"negative demand {self.demand[bad]} at {self.timestamps[bad]}"
            )
        prev = self.timestamps[0]
        for ts in self.timestamps[1:]:
            delta = ts - prev
            if delta == timedelta(0):
                raise DuplicateTimestamp(ts)
            if delta != HOUR:
                if delta < timedelta(0):
                    raise ValueError("timestamps must be sorted ascending")
                raise NonHourlyGap(prev + HOUR)
            prev = ts

    @classmethod
    def from_records(cls, records: Sequence[HourlyRecord], zone: str) -> "Series":
        records = sorted(records, key=lambda r: r.timestamp)
        return cls(
            zone=zone,
            timestamps=[r.timestamp for r in records],
            demand=np.array([r.demand for r in records]),
            drybulb=np.array([r.drybulb for r in records]),
            dewpoint=np.array([r.dewpoint for r in records]),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> HourlyRecord:
        return HourlyRecord(
            self.timestamps[i],
            float(self.demand[i]),
            float(self.drybulb[i]),
            float(self.dewpoint[i]),
        )

    def records(self) -> Iterator[HourlyRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def start(self) -> datetime:
        return self.timestamps[0]

    @property
    def end(self) -> datetime:
        """Exclusive end bound: one hour past the last record."""
        return self.timestamps[-1] + HOUR

    def dewpoint_violation_mask(self) -> np.ndarray:
        return self.dewpoint > self.drybulb + DEWPOINT_TOLERANCE_F

    def index_of(self, instant: datetime) -> int:
        offset = instant - self.start
        hours, rem = divmod(offset.total_seconds(), 3600.0)
        if rem != 0 or not (0 <= hours < len(self)):
            raise SpecOutOfRange(f"{instant} is not an hour of this series")
        return int(hours)


@dataclass(frozen=True)
class SplitSpec:
    """Boundaries of the three chronological partitions (half-open).

    Boundary hours belong to the later partition, so no observation is
    ever trained on twice.
    """

    stage1_end: datetime
    stage2_end: datetime
    test_end: datetime

    def __post_init__(self):
        if not (self.stage1_end < self.stage2_end <= self.test_end):
            raise SpecOutOfRange(
                "require stage1_end < stage2_end <= test_end, got "
                f"{self.stage1_end} / {self.stage2_end} / {self.test_end}"
            )


def split(series: Series, spec: SplitSpec) -> tuple[Series, Series, Series]:
    """Cut a series into (stage1, stage2, test) per the half-open boundaries."""
    if not (series.start < spec.stage1_end and spec.test_end <= series.end):
        raise SpecOutOfRange(
            f"split boundaries must lie inside [{series.start}, {series.end}]"
        )
    i1 = series.index_of(spec.stage1_end)
    i2 = series.index_of(spec.stage2_end)
    i3 = (
        len(series)
        if spec.test_end == series.end
        else series.index_of(spec.test_end)
    )

    def piece(lo: int, hi: int) -> Series:
        return Series(
            series.zone,
            series.timestamps[lo:hi],
            series.demand[lo:hi],
            series.drybulb[lo:hi],
            series.dewpoint[lo:hi],
        )

    return piece(0, i1), piece(i1, i2), piece(i2, i3)


def fill_forward(records: Sequence[HourlyRecord]) -> list[HourlyRecord]:
    """Fill hourly gaps by repeating the previous record's values.

    Only for callers who explicitly accept forward-filled data; the loaders
    never do this on their own.
    """
    ordered = sorted(records, key=lambda r: r.timestamp)
    out: list[HourlyRecord] = []
    for rec in ordered:
        while out and rec.timestamp - out[-1].timestamp > HOUR:
            prev = out[-1]
            out.append(
                HourlyRecord(
                    prev.timestamp + HOUR, prev.demand, prev.drybulb, prev.dewpoint
                )
            )
        out.append(rec)
    return out


def _parse_timestamp(text: str, line: int) -> datetime:
    try:
        ts = datetime.strptime(text, "%Y-%m-%dT%H:%M")
    except ValueError as exc:
        raise UnparseableRow(line, f"bad timestamp {text!r}: {exc}") from exc
    if ts.minute != 0:
        raise UnparseableRow(line, f"timestamp {text!r} is not on the hour")
    return ts


def load_csv(path: str | Path, zone: str) -> Series:
    """Read and validate a series CSV.

    Rows are sorted by timestamp before the hourly-spacing check, so an
    out-of-order file is accepted; duplicate or missing hours are not.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MissingColumn("timestamp")
    header = [c.strip() for c in lines[0].split(",")]
    expected = CSV_HEADER.split(",")
    for col in expected:
        if col not in header:
            raise MissingColumn(col)
    if header != expected:
        raise UnparseableRow(1, f"header must be exactly {CSV_HEADER!r}")

    records: list[HourlyRecord] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise UnparseableRow(lineno, f"expected 4 fields, got {len(parts)}")
        ts = _parse_timestamp(parts[0].strip(), lineno)
        try:
            demand, drybulb, dewpoint = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise UnparseableRow(lineno, f"bad numeric field: {exc}") from exc
        if demand < 0:
            raise UnparseableRow(lineno, f"negative demand {demand}")
        records.append(HourlyRecord(ts, demand, drybulb, dewpoint))
    if not records:
        raise UnparseableRow(1, "file contains a header but no data rows")

    series = Series.from_records(records, zone)
    flagged = int(series.dewpoint_violation_mask().sum())
    if flagged:
        warnings.warn(
            f"{path.name}: {flagged} rows with dewpoint above drybulb "
            f"(+{DEWPOINT_TOLERANCE_F} F tolerance); kept as-is",
            stacklevel=2,
        )
    return series


def write_csv(series: Series, path: str | Path) -> None:
    """Write a series in the external CSV schema (6 significant digits)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for i, ts in enumerate(series.timestamps):
            fh.write(
                f"{ts.strftime(TIMESTAMP_FMT)},"
                f"{series.demand[i]:.6g},{series.drybulb[i]:.6g},"
                f"{series.dewpoint[i]:.6g}\n"
            )


@dataclass(frozen=True)
class SynthProfile:
    """Shape parameters of the synthetic demand/weather generator.

    Demand combines a base level, a season-morphing daily shape (double
    morning/evening peaks in winter blending into a single afternoon peak
    in summer, damped on weekends), a weekly sinusoid, piecewise-linear
    heating/cooling responses (load rises when temperature drops below
    ``heat_ref_f`` or climbs above ``cool_ref_f``, the V shape of demand
    against temperature), and AR(1) noise. Temperature follows annual and
    daily cycles; dew point sits a nonnegative random gap below dry bulb.
    """

    base_mw: float = 1000.0
    daily_amp_mw: float = 150.0
    weekly_amp_mw: float = 40.0
    weekend_daily_factor: float = 0.7
    weekend_level_mw: float = -50.0
    heat_ref_f: float = 50.0
    heat_coeff_mw_per_f: float = 5.0
    cool_ref_f: float = 68.0
    cool_coeff_mw_per_f: float = 7.0
    noise_mw: float = 12.0
    ar_coeff: float = 0.7
    temp_mean_f: float = 50.0
    temp_annual_amp_f: float = 25.0
    temp_daily_amp_f: float = 8.0
    temp_noise_f: float = 3.0
    dew_gap_scale_f: float = 8.0
    start: datetime = field(default=datetime(2013, 1, 1))


def synth_series(
    seed: int,
    n_hours: int,
    profile: SynthProfile | None = None,
    zone: str = "SYNTH",
) -> Series:
    """Generate a deterministic synthetic series of ``n_hours`` records.

    Pure function of (seed, n_hours, profile): the same arguments always
    produce bitwise-identical output.
    """
    if n_hours < MIN_SYNTH_HOURS:
        raise TooShort(
            f"need at least {MIN_SYNTH_HOURS} hours to cover the 168-hour "
            f"demand lag plus warm-up, got {n_hours}"
        )
    p = profile or SynthProfile()
    rng = np.random.default_rng(seed)
    t = np.arange(n_hours, dtype=np.float64)
    start_hour = p.start.timetuple().tm_yday * 24.0 + p.start.hour

    phase = 2.0 * np.pi * (t + start_hour)
    annual = phase / (24.0 * 365.25)
    daily = phase / 24.0
    weekly = phase / (24.0 * 7.0)

    drybulb = (
        p.temp_mean_f
        - p.temp_annual_amp_f * np.cos(annual)
        + p.temp_daily_amp_f * np.sin(daily - np.pi / 2.0)
        + rng.normal(0.0, p.temp_noise_f, n_hours)
    )
    dewpoint = drybulb - np.abs(rng.normal(0.0, p.dew_gap_scale_f, n_hours))

    timestamps = [p.start + HOUR * i for i in range(n_hours)]
    weekend = np.array([ts.isoweekday() >= 6 for ts in timestamps])
    daily_amp = p.daily_amp_mw * np.where(weekend, p.weekend_daily_factor, 1.0)

    # hour-of-day shape morphs with the season: narrow morning and evening
    # peaks in winter, one broad afternoon peak in summer
    hour = np.array([ts.hour for ts in timestamps], dtype=np.float64)
    winter_shape = (
        np.exp(-0.5 * ((hour - 8.0) / 2.5) ** 2)
        + 0.9 * np.exp(-0.5 * ((hour - 19.0) / 2.5) ** 2)
        + 0.3 * np.sin(daily - np.pi / 2.0)
    )
    summer_shape = 1.2 * np.exp(-0.5 * ((hour - 16.0) / 3.0) ** 2) + 0.3 * np.sin(
        daily - np.pi / 2.0
    )
    season = 0.5 * (1.0 - np.cos(annual))  # 0 at the January start, 1 mid-year
    shape = (1.0 - season) * winter_shape + season * summer_shape

    ar_noise = lfilter(
        [1.0], [1.0, -p.ar_coeff], rng.normal(0.0, p.noise_mw, n_hours)
    )
    demand = (
        p.base_mw
        + daily_amp * shape
        + p.weekly_amp_mw * np.sin(weekly)
        + p.weekend_level_mw * weekend
        + p.heat_coeff_mw_per_f * np.maximum(p.heat_ref_f - drybulb, 0.0)
        + p.cool_coeff_mw_per_f * np.maximum(drybulb - p.cool_ref_f, 0.0)
        + ar_noise
    )
    demand = np.maximum(demand, 0.0)

    return Series(zone, timestamps, demand, drybulb, dewpoint)

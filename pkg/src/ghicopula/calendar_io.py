"""Hourly irradiation panels on a fixed 365-day solar calendar.

Days are numbered ``d = 1..365`` (Feb 29 is dropped) and hours ``h = 0..23``
are the ingested hour labels.  Panel arrays are indexed ``[year, d - 1, h]``.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    EmptyFile,
    GapTooLarge,
    IncompleteYears,
    MissingColumn,
    NonMonotoneTimestamps,
)

SOLAR_CONSTANT = 1367.0  # W/m^2
DAYS = 365
HOURS = 24

DEFAULT_SCHEMA = {"timestamp": "timestamp_utc", "ghi": "ghi_whm2", "toa": "toa_whm2"}


@dataclass(frozen=True)
class Site:
    latitude: float
    longitude: float
    name: str = ""


@dataclass(frozen=True)
class HourlyRecord:
    timestamp_utc: dt.datetime
    ghi: float
    toa: float


@dataclass
class CleaningReport:
    clamped_negative: int = 0
    flagged_ghi_above_toa: list[str] = field(default_factory=list)
    interpolated: int = 0
    dropped_leap_day: int = 0
    zeroed_night: int = 0
    toa_computed: bool = False

    @property
    def is_empty(self) -> bool:
        return (
            self.clamped_negative == 0
            and not self.flagged_ghi_above_toa
            and self.interpolated == 0
            and self.zeroed_night == 0
        )

    def to_dict(self) -> dict:
        return {
            "clamped_negative": self.clamped_negative,
            "flagged_ghi_above_toa": list(self.flagged_ghi_above_toa),
            "n_flagged_ghi_above_toa": len(self.flagged_ghi_above_toa),
            "interpolated": self.interpolated,
            "dropped_leap_day": self.dropped_leap_day,
            "zeroed_night": self.zeroed_night,
            "toa_computed": self.toa_computed,
            "gap_policy": "linear interpolation of runs <= max_gap hours; "
            "ghi forced to 0 where interpolated toa is 0",
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class HourlyPanel:
    """Gap-free hourly GHI/TOA over whole years.

    ``ghi`` and ``toa`` have shape ``(n_years, 365, 24)`` in Wh/m^2.
    """

    site: Site
    years: tuple[int, ...]
    ghi: np.ndarray
    toa: np.ndarray
    report: CleaningReport = field(default_factory=CleaningReport)

    def __post_init__(self):
        shape = (len(self.years), DAYS, HOURS)
        if self.ghi.shape != shape or self.toa.shape != shape:
            raise ValueError(f"panel arrays must have shape {shape}")
        if not (np.all(np.isfinite(self.ghi)) and np.all(np.isfinite(self.toa))):
            raise ValueError("panel contains non-finite values")
        if (self.ghi < 0).any() or (self.toa < 0).any():
            raise ValueError("panel contains negative irradiation")
        self.ghi.setflags(write=False)
        self.toa.setflags(write=False)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def __len__(self) -> int:
        return self.ghi.size

    def index(self, i: int, d: int, h: int) -> int:
        """Flat record index of (year position i, day d in 1..365, hour h)."""
        if not (0 <= i < self.n_years and 1 <= d <= DAYS and 0 <= h < HOURS):
            raise IndexError((i, d, h))
        return (i * DAYS + d - 1) * HOURS + h

    def record(self, i: int, d: int, h: int) -> HourlyRecord:
        self.index(i, d, h)
        ts = calendar_timestamp(self.years[i], d, h)
        return HourlyRecord(ts, float(self.ghi[i, d - 1, h]), float(self.toa[i, d - 1, h]))

    def subset(self, years) -> "HourlyPanel":
        pos = [self.years.index(y) for y in years]
        return HourlyPanel(
            self.site,
            tuple(years),
            self.ghi[pos].copy(),
            self.toa[pos].copy(),
            self.report,
        )

    def toa_climatology(self) -> np.ndarray:
        """Mean TOA per (d, h) over the panel years, shape (365, 24)."""
        return self.toa.mean(axis=0)

    def daily_sums(self) -> np.ndarray:
        return self.ghi.sum(axis=2)


def day_of_year365(ts: dt.datetime) -> int:
    """Day number on the 365-day calendar (Feb 29 must be removed beforehand)."""
    doy = ts.timetuple().tm_yday
    if _is_leap(ts.year) and (ts.month > 2):
        doy -= 1
    return doy


def calendar_timestamp(year: int, d: int, h: int) -> dt.datetime:
    date = dt.date(year, 1, 1) + dt.timedelta(days=d - 1)
    if _is_leap(year) and date >= dt.date(year, 2, 29):
        date += dt.timedelta(days=1)
    return dt.datetime(date.year, date.month, date.day, h, tzinfo=dt.timezone.utc)


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def ingest_csv(
    path,
    schema: dict | None = None,
    site: Site | None = None,
    max_gap: int = 3,
    measurement_slack: float = 0.0,
) -> HourlyPanel:
    """Read an hourly CSV into a gap-free :class:`HourlyPanel`.

    Negative GHI is clamped to 0; GHI above TOA (+ slack) is kept and flagged;
    interior gaps of at most ``max_gap`` hours are linearly interpolated.  When
    the TOA column is absent it is computed from ``site``.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.stat().st_size == 0:
        raise EmptyFile(f"{path} is empty")
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise EmptyFile(f"{path} has no data") from exc
    if frame.empty:
        raise EmptyFile(f"{path} has a header but no records")
    for key in ("timestamp", "ghi"):
        if schema[key] not in frame.columns:
            raise MissingColumn(f"column {schema[key]!r} not found in {path}")
    has_toa = schema["toa"] in frame.columns
    if not has_toa and site is None:
        raise MissingColumn(f"column {schema['toa']!r} not found and no site given to compute it")

    stamps = pd.to_datetime(frame[schema["timestamp"]], utc=True)
    if ((stamps.dt.minute != 0) | (stamps.dt.second != 0)).any():
        raise NonMonotoneTimestamps("timestamps must be at whole hours")
    report = CleaningReport(toa_computed=not has_toa)
    leap = ((stamps.dt.month == 2) & (stamps.dt.day == 29)).to_numpy()
    report.dropped_leap_day = int(leap.sum())
    keep = ~leap
    stamps = stamps[keep]
    ghi = frame[schema["ghi"]].to_numpy(dtype=float)[keep]
    years_arr = stamps.dt.year.to_numpy()
    doy = stamps.dt.dayofyear.to_numpy()
    leap_year = stamps.dt.is_leap_year.to_numpy()
    doy = doy - ((leap_year) & (stamps.dt.month.to_numpy() > 2))
    hour = stamps.dt.hour.to_numpy()
    if has_toa:
        toa = frame[schema["toa"]].to_numpy(dtype=float)[keep]
    else:
        toa = compute_toa(site, doy, hour)

    first_year, last_year = int(years_arr[0]), int(years_arr[-1])
    lin = (years_arr - first_year) * DAYS * HOURS + (doy - 1) * HOURS + hour
    steps = np.diff(lin)
    if (steps <= 0).any():
        k = int(np.argmax(steps <= 0))
        raise NonMonotoneTimestamps(f"timestamp {stamps.iloc[k + 1]} does not increase")
    if lin[0] != 0 or lin[-1] != (last_year - first_year + 1) * DAYS * HOURS - 1:
        raise IncompleteYears("data must start on Jan 1 00:00 and end on Dec 31 23:00")
    if (steps - 1 > max_gap).any():
        k = int(np.argmax(steps - 1 > max_gap))
        raise GapTooLarge(f"gap of {steps[k] - 1} hours after {stamps.iloc[k]} exceeds {max_gap}")
    if not (np.isfinite(ghi).all() and np.isfinite(toa).all()):
        raise GapTooLarge("non-finite values present; missing readings must be absent rows")

    n_total = lin[-1] + 1
    grid = np.arange(n_total)
    missing = n_total - len(lin)
    if missing:
        ghi = np.interp(grid, lin, ghi)
        toa = np.interp(grid, lin, toa)
        filled = np.ones(n_total, dtype=bool)
        filled[lin] = False
        ghi[filled & (toa <= 0)] = 0.0
        report.interpolated = int(missing)

    neg = ghi < 0
    report.clamped_negative = int(neg.sum())
    ghi = np.where(neg, 0.0, ghi)
    toa = np.maximum(toa, 0.0)
    night = (toa <= 0) & (ghi > 0)
    report.zeroed_night = int(night.sum())
    ghi = np.where(night, 0.0, ghi)
    above = np.flatnonzero(ghi > toa + measurement_slack)
    n_years = last_year - first_year + 1
    years = tuple(range(first_year, last_year + 1))
    for k in above:
        i, rem = divmod(int(k), DAYS * HOURS)
        d, h = divmod(rem, HOURS)
        report.flagged_ghi_above_toa.append(calendar_timestamp(years[i], d + 1, h).isoformat())
    shape = (n_years, DAYS, HOURS)
    return HourlyPanel(
        site or Site(float("nan"), float("nan"), path.stem),
        years,
        ghi.reshape(shape),
        toa.reshape(shape),
        report,
    )


def export_csv(panel: HourlyPanel, path, header_comment: str | None = None) -> None:
    """Write a panel in the ingestion schema (lossless float formatting)."""
    rows = []
    for i, year in enumerate(panel.years):
        start = pd.Timestamp(year=year, month=1, day=1, tz="UTC")
        idx = pd.date_range(start, periods=366 * HOURS if _is_leap(year) else DAYS * HOURS, freq="h")
        idx = idx[~((idx.month == 2) & (idx.day == 29))]
        rows.append(
            pd.DataFrame(
                {
                    DEFAULT_SCHEMA["timestamp"]: idx.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    DEFAULT_SCHEMA["ghi"]: panel.ghi[i].ravel(),
                    DEFAULT_SCHEMA["toa"]: panel.toa[i].ravel(),
                }
            )
        )
    frame = pd.concat(rows, ignore_index=True)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        frame.to_csv(fh, index=False, float_format="%.17g")


def compute_toa(site: Site, d, h):
    """Hourly extraterrestrial irradiation on a horizontal plane, Wh/m^2.

    Hour label ``h`` covers ``[h, h+1)`` UTC; local solar time is
    UTC + longitude/15.  Uses the closed-form hour-angle integral with
    Cooper's declination and the usual eccentricity correction.
    """
    if not -90 <= site.latitude <= 90:
        raise ValueError("latitude must be in [-90, 90]")
    d = np.asarray(d, dtype=float)
    h = np.asarray(h, dtype=float)
    lat = np.deg2rad(site.latitude)
    decl = np.deg2rad(23.45) * np.sin(2 * np.pi * (284 + d) / 365)
    ecc = 1 + 0.033 * np.cos(2 * np.pi * d / 365)
    cos_ws = np.clip(-np.tan(lat) * np.tan(decl), -1.0, 1.0)
    ws = np.arccos(cos_ws)
    offset = site.longitude / 15.0 if np.isfinite(site.longitude) else 0.0
    # hour angle at interval start, wrapped to [-pi, pi)
    w1 = np.deg2rad(15.0 * (h + offset - 12.0))
    w1 = (w1 + np.pi) % (2 * np.pi) - np.pi
    w2 = w1 + np.deg2rad(15.0)
    total = np.zeros(np.broadcast(d, h).shape)
    # an interval may straddle +pi; evaluate it against both copies of the daylight window
    for shift in (0.0, -2 * np.pi):
        a = np.clip(w1 + shift, -ws, ws)
        b = np.clip(w2 + shift, -ws, ws)
        total = total + _toa_integral(lat, decl, a, b)
    return SOLAR_CONSTANT * ecc * total * 12 / np.pi


def _toa_integral(lat, decl, a, b):
    return np.cos(lat) * np.cos(decl) * (np.sin(b) - np.sin(a)) + (b - a) * np.sin(lat) * np.sin(decl)


def toa_grid(site: Site) -> np.ndarray:
    d, h = np.meshgrid(np.arange(1, DAYS + 1), np.arange(HOURS), indexing="ij")
    return compute_toa(site, d, h)

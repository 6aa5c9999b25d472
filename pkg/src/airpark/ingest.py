"""Hourly station CSV parsing, grid assembly, gap filling and min-max scaling.

Canonical input CSV::

    station,datetime,no2
    EA,2010-01-01T00:00,41.0
    EA,2010-01-01T01:00,

``no2`` is in µg/m³ and left empty when the instrument reported nothing.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import InputError, ParseError

DATETIME_FORMAT = "%Y-%m-%dT%H:%M"
GRID_MAGIC = "# airpark-grid v1"


@dataclass(frozen=True)
class CsvSchema:
    """Column names of an hourly CSV; lets adapters map other layouts."""

    station: str = "station"
    datetime: str = "datetime"
    no2: str = "no2"
    datetime_format: str = DATETIME_FORMAT


@dataclass(frozen=True)
class RawRecord:
    station_id: str
    timestamp: datetime
    no2: float
    valid: bool


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HourlyGrid:
    """Stations x hours NO2 matrix with an observation mask.

    ``values[s, t]`` is the concentration of ``station_ids[s]`` at
    ``start + t hours``; cells with ``mask`` false carry no information.
    """

    station_ids: tuple[str, ...]
    start: datetime
    values: np.ndarray
    mask: np.ndarray
    scaled: bool = False  # unitless min-max values; may be negative or > 1

    def __post_init__(self):
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        object.__setattr__(self, "values", _readonly(self.values, np.float64))
        object.__setattr__(self, "mask", _readonly(self.mask, bool))
        if len(set(self.station_ids)) != len(self.station_ids):
            raise InputError("station ids must be unique")
        if self.values.ndim != 2 or self.values.shape[0] != len(self.station_ids):
            raise InputError(f"values must be (stations, hours), got {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise InputError("mask shape differs from values shape")
        if self.start.minute or self.start.second or self.start.microsecond:
            raise InputError("grid start must be on the hour")
        observed = self.values[self.mask]
        if not np.all(np.isfinite(observed)) or (not self.scaled and np.any(observed < 0)):
            raise InputError("observed cells must be finite and non-negative")

    @property
    def n_stations(self) -> int:
        return self.values.shape[0]

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    @property
    def end(self) -> datetime:
        return self.start + timedelta(hours=self.n_hours)

    def hours(self) -> np.ndarray:
        """datetime64[h] stamp of every column."""
        return np.datetime64(self.start, "h") + np.arange(self.n_hours)

    def hour_index(self, when: datetime) -> int:
        return int((when - self.start) // timedelta(hours=1))

    def station_index(self, station: str) -> int:
        try:
            return self.station_ids.index(station)
        except ValueError:
            raise InputError(f"unknown station {station!r}") from None

    def __eq__(self, other):
        if not isinstance(other, HourlyGrid):
            return NotImplemented
        return (
            self.station_ids == other.station_ids
            and self.scaled == other.scaled
            and self.start == other.start
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(np.where(self.mask, self.values, 0.0), np.where(other.mask, other.values, 0.0))
        )


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    """Per-station min/max fitted on ``[fit_start, fit_end)``."""

    station_ids: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    fit_start: datetime | None = None
    fit_end: datetime | None = None

    def __post_init__(self):
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        object.__setattr__(self, "mins", _readonly(self.mins, np.float64))
        object.__setattr__(self, "maxs", _readonly(self.maxs, np.float64))
        if np.any(self.mins > self.maxs):
            raise InputError("min must not exceed max")

    def to_dict(self) -> dict:
        return {
            "stations": list(self.station_ids),
            "min": [float(v) for v in self.mins],
            "max": [float(v) for v in self.maxs],
            "fit_start": self.fit_start.strftime(DATETIME_FORMAT) if self.fit_start else None,
            "fit_end": self.fit_end.strftime(DATETIME_FORMAT) if self.fit_end else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        parse = lambda s: datetime.strptime(s, DATETIME_FORMAT) if s else None  # noqa: E731
        return cls(tuple(d["stations"]), d["min"], d["max"], parse(d.get("fit_start")), parse(d.get("fit_end")))

    def __eq__(self, other):
        if not isinstance(other, NormalizationParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# -- parsing ---------------------------------------------------------------

def _parse_timestamp(text: str, fmt: str) -> datetime:
    ts = datetime.strptime(text.strip(), fmt)
    if ts.minute or ts.second:
        raise ValueError("timestamp must fall on the hour")
    return ts


def parse_csv(source: BinaryIO | bytes | str | Path, schema: CsvSchema | None = None) -> list[RawRecord]:
    """Parse an hourly CSV into records.

    ``source`` is a binary stream, raw bytes or a file path. An empty
    concentration field yields ``valid=False``. Any malformed row raises
    :class:`ParseError` naming its line.
    """
    schema = schema or CsvSchema()
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return parse_csv(fh, schema)
    raw = source if isinstance(source, bytes) else source.read()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(1, f"input is not UTF-8: {exc}") from None

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "missing header row") from None
    header = [h.strip() for h in header]
    try:
        i_st, i_dt, i_no2 = (header.index(c) for c in (schema.station, schema.datetime, schema.no2))
    except ValueError:
        raise ParseError(1, f"header must contain {schema.station!r}, {schema.datetime!r}, {schema.no2!r}") from None

    width = len(header)
    stamps: dict[str, datetime] = {}
    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(line, f"expected {width} fields, found {len(row)}")
        station = row[i_st].strip()
        if not station:
            raise ParseError(line, "empty station id")
        dt_text = row[i_dt]
        ts = stamps.get(dt_text)
        if ts is None:
            try:
                ts = _parse_timestamp(dt_text, schema.datetime_format)
            except ValueError as exc:
                raise ParseError(line, f"bad timestamp {dt_text!r}: {exc}") from None
            stamps[dt_text] = ts
        conc = row[i_no2].strip()
        if not conc:
            records.append(RawRecord(station, ts, math.nan, False))
            continue
        try:
            value = float(conc)
        except ValueError:
            raise ParseError(line, f"bad concentration {conc!r}") from None
        if not math.isfinite(value) or value < 0:
            raise ParseError(line, f"concentration must be finite and >= 0, got {conc!r}")
        records.append(RawRecord(station, ts, value, True))
    return records


def write_csv(records: Iterable[RawRecord], dest, schema: CsvSchema | None = None) -> None:
    """Write records in the canonical layout to a path or text stream."""
    schema = schema or CsvSchema()
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_csv(records, fh, schema)
    w = csv.writer(dest, lineterminator="\n")
    w.writerow([schema.station, schema.datetime, schema.no2])
    for r in records:
        w.writerow([r.station_id, r.timestamp.strftime(schema.datetime_format), repr(float(r.no2)) if r.valid else ""])


# -- grid ------------------------------------------------------------------

def build_grid(records: Iterable[RawRecord], stations: Sequence[str],
               hours: tuple[datetime, datetime]) -> tuple[HourlyGrid, int]:
    """Assemble records for ``stations`` over ``[start, end)``.

    Returns the grid and the number of duplicate (station, hour) records;
    on duplicates the later record wins. Records for other stations or
    outside the interval are ignored.
    """
    start, end = hours
    if not stations:
        raise InputError("station list is empty")
    n_hours = int((end - start) // timedelta(hours=1))
    if n_hours <= 0:
        raise InputError("hour range is empty")
    index = {s: i for i, s in enumerate(stations)}
    if len(index) != len(stations):
        raise InputError("duplicate station ids")
    values = np.full((len(stations), n_hours), np.nan)
    mask = np.zeros((len(stations), n_hours), dtype=bool)
    seen = np.zeros((len(stations), n_hours), dtype=bool)
    dup = 0
    hour = timedelta(hours=1)
    for r in records:
        s = index.get(r.station_id)
        if s is None:
            continue
        t = (r.timestamp - start) // hour
        if not 0 <= t < n_hours:
            continue
        if seen[s, t]:
            dup += 1
        seen[s, t] = True
        mask[s, t] = r.valid
        values[s, t] = r.no2 if r.valid else np.nan
    return HourlyGrid(tuple(stations), start, values, mask), dup


def grid_to_records(grid: HourlyGrid) -> list[RawRecord]:
    """Observed cells back to records (station-major, chronological)."""
    out = []
    for s, sid in enumerate(grid.station_ids):
        for t in np.flatnonzero(grid.mask[s]):
            out.append(RawRecord(sid, grid.start + timedelta(hours=int(t)), float(grid.values[s, t]), True))
    return out


def _year_month(grid: HourlyGrid):
    months = grid.hours().astype("datetime64[M]").astype(np.int64)
    years = grid.hours().astype("datetime64[Y]").astype(np.int64)
    return years, months


def impute_monthly_mean(grid: HourlyGrid) -> HourlyGrid:
    """Fill unobserved cells with the station's mean for that calendar month.

    Falls back to the station's mean for the year, then to the mean of all
    observed cells in the grid. Observed cells are left untouched.
    """
    if not grid.mask.any():
        raise InputError("grid has no observed cells to impute from")
    if grid.mask.all():
        return grid
    years, months = _year_month(grid)
    m_idx = months - months.min()
    y_idx = years - years.min()
    filled = np.where(grid.mask, grid.values, 0.0)
    global_mean = filled.sum() / grid.mask.sum()
    out = filled.copy()
    for s in range(grid.n_stations):
        obs = grid.mask[s]
        if obs.all():
            continue
        w = obs.astype(np.float64)
        m_sum = np.bincount(m_idx, weights=filled[s], minlength=m_idx.max() + 1)
        m_cnt = np.bincount(m_idx, weights=w, minlength=m_idx.max() + 1)
        y_sum = np.bincount(y_idx, weights=filled[s], minlength=y_idx.max() + 1)
        y_cnt = np.bincount(y_idx, weights=w, minlength=y_idx.max() + 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            m_mean = m_sum / m_cnt
            y_mean = y_sum / y_cnt
        fill = np.where(m_cnt[m_idx] > 0, m_mean[m_idx],
                        np.where(y_cnt[y_idx] > 0, y_mean[y_idx], global_mean))
        out[s] = np.where(obs, filled[s], fill)
    return HourlyGrid(grid.station_ids, grid.start, out, np.ones_like(grid.mask), scaled=grid.scaled)


def _slice(grid: HourlyGrid, start: datetime | None, end: datetime | None) -> slice:
    lo = 0 if start is None else max(0, grid.hour_index(start))
    hi = grid.n_hours if end is None else min(grid.n_hours, grid.hour_index(end))
    return slice(lo, hi)


def fit_minmax(grid: HourlyGrid, start: datetime | None = None, end: datetime | None = None) -> NormalizationParams:
    """Per-station min and max over ``[start, end)`` (whole grid by default)."""
    sl = _slice(grid, start, end)
    if sl.stop <= sl.start:
        raise InputError("normalization fit range is empty")
    if not grid.mask[:, sl].all():
        raise InputError("fit range contains unobserved cells; impute first")
    v = grid.values[:, sl]
    fs = grid.start + timedelta(hours=sl.start)
    fe = grid.start + timedelta(hours=sl.stop)
    return NormalizationParams(grid.station_ids, v.min(axis=1), v.max(axis=1), fs, fe)


def apply_minmax(grid: HourlyGrid, params: NormalizationParams) -> HourlyGrid:
    """Rescale each station with ``(x - min) / (max - min)``; 0 when max == min.

    Values outside the fitted range are not clipped.
    """
    lookup = {s: i for i, s in enumerate(params.station_ids)}
    missing = [s for s in grid.station_ids if s not in lookup]
    if missing:
        raise InputError(f"normalization params lack stations {missing}")
    order = [lookup[s] for s in grid.station_ids]
    lo = params.mins[order][:, None]
    span = (params.maxs - params.mins)[order][:, None]
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (grid.values - lo) / safe, 0.0)
    scaled = np.where(grid.mask, scaled, np.nan)
    return HourlyGrid(grid.station_ids, grid.start, scaled, grid.mask, scaled=True)


# -- persistence -----------------------------------------------------------

def write_grid(grid: HourlyGrid, path: str | Path) -> None:
    """Columnar text file: two comment lines, a header, one row per hour."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"{GRID_MAGIC}\n# start={grid.start.strftime(DATETIME_FORMAT)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["datetime", *grid.station_ids])
        vals = grid.values.T
        msk = grid.mask.T
        for t, stamp in enumerate(grid.hours()):
            row = [str(stamp)[:16]]
            row.extend(repr(float(v)) if m else "" for v, m in zip(vals[t], msk[t]))
            w.writerow(row)


def read_grid(path: str | Path) -> HourlyGrid:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != GRID_MAGIC:
            raise ParseError(1, "not an airpark grid file")
        second = fh.readline().rstrip("\n")
        if not second.startswith("# start="):
            raise ParseError(2, "missing start line")
        start = datetime.strptime(second[len("# start="):], DATETIME_FORMAT)
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "datetime":
            raise ParseError(3, "missing column header")
        stations = header[1:]
        vals, msk = [], []
        for k, row in enumerate(reader):
            if len(row) != len(header):
                raise ParseError(k + 4, "wrong field count")
            vals.append([float(c) if c else np.nan for c in row[1:]])
            msk.append([bool(c) for c in row[1:]])
    if not vals:
        raise InputError(f"{path}: grid has no hours")
    return HourlyGrid(tuple(stations), start, np.array(vals).T, np.array(msk).T)


def write_params(params: NormalizationParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_params(path: str | Path) -> NormalizationParams:
    return NormalizationParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

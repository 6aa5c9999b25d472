"""Annual-percentile alert rules and block labelling.

A block (a quarter of a civil day) gets severity *s* when some set of
``min_stations`` stations all exceed their own annual percentile for *s*
during ``run_hours`` consecutive hours inside the block. The highest
triggered severity wins.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import InputError
from .ingest import HourlyGrid

BLOCK_HOURS = 6


class AlertLevel(IntEnum):
    NO_ALERT = 0
    PRE_WARNING = 1
    WARNING = 2
    ALERT = 3


class Block(IntEnum):
    I = 1  # noqa: E741
    II = 2
    III = 3
    IV = 4

    @property
    def start_hour(self) -> int:
        return (self.value - 1) * BLOCK_HOURS

    @classmethod
    def parse(cls, token) -> "Block":
        if isinstance(token, Block):
            return token
        text = str(token).strip().upper()
        if text.isdigit():
            return cls(int(text))
        try:
            return cls[text]
        except KeyError:
            raise InputError(f"unknown block {token!r}") from None


@dataclass(frozen=True)
class RuleSpec:
    name: str
    percentiles: tuple[float, float, float]  # pre-warning, warning, alert
    min_stations: int = 3
    run_hours: int = 3
    same_stations: bool = True

    def __post_init__(self):
        pre, warn, alert = self.percentiles
        if not 0 < pre < warn < alert < 100:
            raise InputError(f"percentiles must be increasing in (0, 100): {self.percentiles}")
        if self.min_stations < 1 or self.run_hours < 1:
            raise InputError("min_stations and run_hours must be >= 1")

    def to_dict(self) -> dict:
        return {"name": self.name, "percentiles": list(self.percentiles), "min_stations": self.min_stations,
                "run_hours": self.run_hours, "same_stations": self.same_stations}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleSpec":
        return cls(d["name"], tuple(d["percentiles"]), d["min_stations"], d["run_hours"], d["same_stations"])


RULE_I = RuleSpec("RuleI", (75, 90, 95))
RULE_II = RuleSpec("RuleII", (50, 75, 95))


def rule_by_number(n) -> RuleSpec:
    key = str(n).strip().upper().removeprefix("RULE")
    rules = {"1": RULE_I, "I": RULE_I, "2": RULE_II, "II": RULE_II}
    if key not in rules:
        raise InputError(f"unknown rule {n!r}")
    return rules[key]


def rule_number(rule: RuleSpec) -> int:
    return {"RuleI": 1, "RuleII": 2}.get(rule.name, 0)


@dataclass(frozen=True)
class BlockLabel:
    date: date
    block: Block
    level: AlertLevel


def _rank(p: float, n: int) -> int:
    """1-indexed nearest rank ceil(p/100 * n), computed exactly."""
    return max(1, math.ceil(Fraction(p) * n / 100))


def annual_percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not 0 < p < 100:
        raise InputError(f"percentile must lie in (0, 100), got {p}")
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if arr.size == 0:
        raise InputError("cannot take a percentile of an empty list")
    return float(arr[_rank(p, arr.size) - 1])


@dataclass(frozen=True, eq=False)
class ThresholdTable:
    """``table[s, y, k]``: threshold of station s, year ``years[y]``, ``percentiles[k]``."""

    station_ids: tuple[str, ...]
    years: tuple[int, ...]
    percentiles: tuple[float, ...]
    table: np.ndarray

    def lookup(self, station: str, year: int, p: float) -> float:
        try:
            return float(self.table[self.station_ids.index(station), self.years.index(year),
                                    self.percentiles.index(p)])
        except ValueError:
            raise InputError(f"no threshold for ({station!r}, {year}, {p})") from None

    def for_blocks(self, station_ids: Sequence[str], years: np.ndarray, percentiles: Sequence[float]) -> np.ndarray:
        """(B, S, K) thresholds for blocks in the given calendar years."""
        try:
            s_idx = [self.station_ids.index(s) for s in station_ids]
            k_idx = [self.percentiles.index(p) for p in percentiles]
            y_pos = {y: i for i, y in enumerate(self.years)}
            y_idx = np.array([y_pos[int(y)] for y in years], dtype=np.int64)
        except (ValueError, KeyError) as exc:
            raise InputError(f"threshold table does not cover the request: {exc}") from None
        sub = self.table[np.ix_(s_idx, y_idx, k_idx)]  # S, B, K
        return np.ascontiguousarray(sub.transpose(1, 0, 2))


def compute_thresholds(grid: HourlyGrid, rule: RuleSpec) -> ThresholdTable:
    """Per-station, per-calendar-year nearest-rank thresholds on raw values."""
    if not grid.mask.all():
        raise InputError("thresholds need a fully imputed grid")
    years_of_hour = grid.hours().astype("datetime64[Y]").astype(np.int64) + 1970
    years = tuple(int(y) for y in np.unique(years_of_hour))
    pct = tuple(rule.percentiles)
    table = np.empty((grid.n_stations, len(years), len(pct)))
    for yi, year in enumerate(years):
        cols = years_of_hour == year
        n = int(cols.sum())
        if n == 0:
            raise InputError(f"year {year} has no hours")
        ranks = [_rank(p, n) - 1 for p in pct]
        ordered = np.sort(grid.values[:, cols], axis=1)
        table[:, yi, :] = ordered[:, ranks]
    table.setflags(write=False)
    return ThresholdTable(grid.station_ids, years, pct, table)


def _block_starts(grid: HourlyGrid, blocks: Iterable[Block]):
    blocks = sorted({Block.parse(b) for b in blocks})
    if not blocks:
        return [], np.zeros(0, dtype=np.int64)
    first = grid.start.date()
    last = (grid.end - timedelta(hours=1)).date()
    keys, starts = [], []
    day = first
    while day <= last:
        midnight = datetime(day.year, day.month, day.day)
        for b in blocks:
            t = grid.hour_index(midnight + timedelta(hours=b.start_hour))
            if t >= 0 and t + BLOCK_HOURS <= grid.n_hours:
                keys.append((day, b))
                starts.append(t)
        day += timedelta(days=1)
    return keys, np.array(starts, dtype=np.int64)


def _levels(grid, thresholds, rule, keys, starts) -> np.ndarray:
    if len(keys) == 0:
        return np.zeros(0, dtype=np.int64)
    cols = starts[:, None] + np.arange(BLOCK_HOURS)
    values = np.ascontiguousarray(grid.values[:, cols].transpose(1, 0, 2))  # B, S, 6
    years = np.array([k[0].year for k in keys])
    thr = thresholds.for_blocks(grid.station_ids, years, rule.percentiles)
    return _kernels.block_levels(values, thr, rule.min_stations, rule.run_hours, rule.same_stations)


def block_alert_level(grid: HourlyGrid, thresholds: ThresholdTable, rule: RuleSpec,
                      day: date, block) -> AlertLevel:
    block = Block.parse(block)
    t = grid.hour_index(datetime(day.year, day.month, day.day) + timedelta(hours=block.start_hour))
    if t < 0 or t + BLOCK_HOURS > grid.n_hours:
        raise InputError(f"grid does not cover block {block.name} of {day}")
    return AlertLevel(int(_levels(grid, thresholds, rule, [(day, block)], np.array([t]))[0]))


def label_dataset(grid: HourlyGrid, rule: RuleSpec, blocks: Iterable = (Block.II, Block.III),
                  thresholds: ThresholdTable | None = None) -> list[BlockLabel]:
    """One label per (day, block) fully covered by the grid, chronological."""
    if thresholds is None:
        thresholds = compute_thresholds(grid, rule)
    keys, starts = _block_starts(grid, blocks)
    levels = _levels(grid, thresholds, rule, keys, starts)
    return [BlockLabel(d, b, AlertLevel(int(lv))) for (d, b), lv in zip(keys, levels)]


def write_labels(labels: Iterable[BlockLabel], rule: RuleSpec, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "block", "rule", "level"])
        for lab in labels:
            w.writerow([lab.date.isoformat(), lab.block.name, rule_number(rule), int(lab.level)])


def read_labels(path: str | Path, rule: int | None = None) -> list[BlockLabel]:
    """Read a labels CSV; ``rule`` keeps only rows of that rule number."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if rule is not None and int(row["rule"]) != int(rule):
                continue
            out.append(BlockLabel(date.fromisoformat(row["date"]), Block.parse(row["block"]),
                                  AlertLevel(int(row["level"]))))
    return out

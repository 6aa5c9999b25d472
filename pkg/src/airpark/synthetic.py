"""Synthetic grids with known block labels, and separable window sets.

Grid construction
-----------------
Each station-year has its nearest-rank percentiles pinned by construction
to ``f * (40, 60, 80, 100)`` for p50/p75/p90/p95, where ``f`` is a random
per-station scale. Quiet odd hours never exceed ``40 f``, so no 3-hour run
can trigger without an injected episode. An episode raises three stations
for three consecutive in-block hours to one of four bands:

====  =======  ======  =======
band  value    Rule I  Rule II
====  =======  ======  =======
1     50 f     none    pre
2     70 f     pre     warning
3     90 f     warning warning
4     120 f    alert   alert
====  =======  ======  =======

Remaining quiet cells are then filled so the pinned percentiles hold
exactly, whatever the episode load.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Iterable, Mapping

import numpy as np

from .dataset import N_CLASSES, Sample
from .errors import InputError
from .ingest import HourlyGrid, RawRecord, grid_to_records
from .labeling import (BLOCK_HOURS, RULE_I, RULE_II, AlertLevel, Block, BlockLabel, RuleSpec, _rank)

BAND_VALUES = {1: 50.0, 2: 70.0, 3: 90.0, 4: 120.0}
BAND_LEVELS = {
    RULE_I.name: {0: 0, 1: 0, 2: 1, 3: 2, 4: 3},
    RULE_II.name: {0: 0, 1: 1, 2: 2, 3: 2, 4: 3},
}
_PLATEAUS = (40.0, 60.0, 80.0, 100.0)
_ABOVE = 110.0
_LOW = (5.0, 38.0)


def band_for(level: int, rule: RuleSpec) -> int:
    """Smallest band producing ``level`` under ``rule``."""
    table = BAND_LEVELS[rule.name]
    for band in range(5):
        if table[band] == int(level):
            return band
    raise InputError(f"level {level} unreachable under {rule.name}")


@dataclass(frozen=True)
class Episode:
    day: date
    block: Block
    band: int
    stations: tuple[int, int, int] | None = None
    offset: int | None = None  # first hour inside the block


@dataclass
class SyntheticData:
    grid: HourlyGrid
    labels: dict[str, list[BlockLabel]]  # rule name -> labels for all four blocks
    episodes: list[Episode]
    scales: np.ndarray

    def records(self) -> list[RawRecord]:
        return grid_to_records(self.grid)


def generate_synthetic(stations: int = 12, days: int = 30, seed: int = 0, *,
                       start: date = date(2010, 1, 1),
                       episodes: Iterable[Episode] | Mapping | None = None,
                       episode_rate: float = 0.0,
                       blocks: Iterable = (Block.II, Block.III),
                       band_weights: Iterable[float] = (1, 1, 1, 1),
                       run_hours: int = 3,
                       precursor: bool = True) -> SyntheticData:
    """Build a grid whose block labels are known in advance.

    Parameters
    ----------
    episodes : explicit episodes, either :class:`Episode` objects or a
        mapping ``(day, block) -> band``.
    episode_rate : probability that each block in ``blocks`` receives a
        random episode (in addition to the explicit ones).
    precursor : copy the episode value onto the even hours of the six hours
        before the block for the episode stations, so past windows carry a
        learnable signal. Precursors never change any label.
    """
    if stations < 3 or days < 2:
        raise InputError("need at least 3 stations and 2 days")
    if not 1 <= run_hours <= BLOCK_HOURS:
        raise InputError(f"a {run_hours}-hour episode does not fit a {BLOCK_HOURS}-hour block")
    rng = np.random.default_rng(seed)
    n_hours = 24 * days
    t0 = datetime(start.year, start.month, start.day)

    chosen: dict[tuple[date, Block], Episode] = {}
    if isinstance(episodes, Mapping):
        episodes = [Episode(d, Block.parse(b), int(band)) for (d, b), band in episodes.items()]
    for ep in episodes or ():
        chosen[(ep.day, Block.parse(ep.block))] = ep
    weights = np.asarray(list(band_weights), dtype=float)
    weights = weights / weights.sum()
    random_blocks = sorted({Block.parse(b) for b in blocks})
    for d in range(days):
        day = start + timedelta(days=d)
        for b in random_blocks:
            if episode_rate > 0 and rng.random() < episode_rate:
                band = int(rng.choice(4, p=weights)) + 1
                chosen.setdefault((day, b), Episode(day, b, band))

    # band per cell; 0 = quiet
    band_of = np.zeros((stations, n_hours), dtype=np.int64)
    is_episode = np.zeros((stations, n_hours), dtype=bool)
    placed = []
    for key in sorted(chosen, key=lambda k: (k[0], k[1])):
        ep = chosen[key]
        if not 1 <= ep.band <= 4:
            raise InputError(f"band must be 1..4, got {ep.band}")
        bstart = (ep.day - start).days * 24 + ep.block.start_hour
        if bstart < 0 or bstart + BLOCK_HOURS > n_hours:
            raise InputError(f"episode {ep.day} {ep.block.name} outside the grid")
        sts = ep.stations or tuple(int(s) for s in rng.choice(stations, size=3, replace=False))
        off = ep.offset if ep.offset is not None else int(rng.integers(0, BLOCK_HOURS - run_hours + 1))
        if len(set(sts)) != 3 or not 0 <= off <= BLOCK_HOURS - run_hours:
            raise InputError(f"invalid episode placement {ep}")
        for s in sts:
            band_of[s, bstart + off:bstart + off + run_hours] = ep.band
            is_episode[s, bstart + off:bstart + off + run_hours] = True
        placed.append(Episode(ep.day, ep.block, ep.band, tuple(sts), off))
    if precursor:
        for ep in placed:
            bstart = (ep.day - start).days * 24 + ep.block.start_hour
            for t in range(max(0, bstart - BLOCK_HOURS), bstart):
                if t % 2:
                    continue
                for s in ep.stations:
                    if not is_episode[s, t]:
                        band_of[s, t] = max(band_of[s, t], ep.band)

    base = np.empty((stations, n_hours))
    hours = np.datetime64(t0, "h") + np.arange(n_hours)
    years = hours.astype("datetime64[Y]").astype(np.int64) + 1970
    odd = (np.arange(n_hours) % 2) == 1
    for s in range(stations):
        for year in np.unique(years):
            cols = np.flatnonzero(years == year)
            base[s, cols] = _fill_station_year(band_of[s, cols], odd[cols], rng, s, int(year))
    scales = rng.uniform(0.75, 1.5, size=stations)
    values = base * scales[:, None]
    names = tuple(f"S{i + 1:02d}" for i in range(stations))
    grid = HourlyGrid(names, t0, values, np.ones_like(values, dtype=bool))

    by_key = {(ep.day, ep.block): ep.band for ep in placed}
    labels = {}
    for rule in (RULE_I, RULE_II):
        table = BAND_LEVELS[rule.name]
        labels[rule.name] = [
            BlockLabel(start + timedelta(days=d), b, AlertLevel(table[by_key.get((start + timedelta(days=d), b), 0)]))
            for d in range(days) for b in Block
        ]
    return SyntheticData(grid, labels, placed, scales)


def _fill_station_year(bands: np.ndarray, odd: np.ndarray, rng, station: int, year: int) -> np.ndarray:
    n = bands.size
    k50, k75, k90, k95 = (_rank(p, n) for p in (50, 75, 90, 95))
    e = [int(np.sum(bands == b)) for b in range(1, 5)]
    n_low = k50 - 1
    n40 = k75 - k50 - e[0]
    n60 = k90 - k75 - e[1]
    n80 = k95 - k90 - e[2]
    n100 = 1
    n_hi = n - k95 - e[3]
    quiet = bands == 0
    q_odd = np.flatnonzero(quiet & odd)
    q_even = np.flatnonzero(quiet & ~odd)
    if min(n40, n60, n80) < 1 or n_hi < 0 or n_low + n40 < q_odd.size:
        raise InputError(f"infeasible injection for station {station} in {year}: too many episodes "
                         f"(band counts {e} over {n} hours)")
    lows = rng.uniform(*_LOW, size=n_low)
    small = np.concatenate([lows, np.full(n40, _PLATEAUS[0])])
    large = np.concatenate([np.full(n60, _PLATEAUS[1]), np.full(n80, _PLATEAUS[2]),
                            np.full(n100, _PLATEAUS[3]), np.full(n_hi, _ABOVE)])
    small = rng.permutation(small)
    out = np.empty(n)
    out[~quiet] = [BAND_VALUES[int(b)] for b in bands[~quiet]]
    out[q_odd] = small[:q_odd.size]
    rest = rng.permutation(np.concatenate([small[q_odd.size:], large]))
    out[q_even] = rest
    return out


def make_separable_windows(n: int, window: int = 24, stations: int = 12, seed: int = 0,
                           amplitudes=(0.65, 0.8, 0.95), jitter: float = 0.03,
                           recent: int = 12) -> list[Sample]:
    """Normalized windows whose class is the amplitude of one injected episode.

    Background is uniform on [0, 0.5]. Classes 1..3 add a 3-station x 3-hour
    episode at ``amplitudes[c-1] +- jitter`` inside the last ``recent`` hours;
    class 0 has none. Classes are balanced and the bands disjoint, so the set
    is separable.
    """
    if window < recent or recent < 3:
        raise InputError("window too short for the episode placement")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % N_CLASSES)
    out = []
    day0 = date(2000, 1, 1)
    for i, c in enumerate(labels):
        w = rng.uniform(0.0, 0.5, size=(window, stations))
        if c:
            sts = rng.choice(stations, size=3, replace=False)
            t = int(rng.integers(window - recent, window - 2))
            amp = amplitudes[c - 1] + rng.uniform(-jitter, jitter, size=(3, 3))
            for j, s in enumerate(sts):
                w[t:t + 3, s] = amp[j]
        w.setflags(write=False)
        out.append(Sample(w, AlertLevel(int(c)), day0 + timedelta(days=i // 2), Block.II if i % 2 == 0 else Block.III))
    return out

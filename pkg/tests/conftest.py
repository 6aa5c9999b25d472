import itertools
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from airpark.ingest import HourlyGrid
from airpark.labeling import BLOCK_HOURS, AlertLevel, Block, RuleSpec


def brute_force_level(block_values, thresholds, rule: RuleSpec) -> int:
    """Enumerate every station triple and every in-block run.

    block_values: (S, 6) raw values; thresholds: (S, K) per-station
    thresholds for the rule's percentiles in ascending order.
    """
    n_st = block_values.shape[0]
    runs = range(BLOCK_HOURS - rule.run_hours + 1)
    for sev in (3, 2, 1):
        thr = thresholds[:, sev - 1]
        above = (block_values > thr[:, None]).tolist()  # plain lists: numpy scalar indexing is slow
        if rule.same_stations:
            for trio in itertools.combinations(range(n_st), rule.min_stations):
                for h in runs:
                    if all(above[s][h + k] for s in trio for k in range(rule.run_hours)):
                        return sev
        else:
            for h in runs:
                if all(sum(row[h + k] for row in above) >= rule.min_stations for k in range(rule.run_hours)):
                    return sev
    return 0


def one_day_grid(values_s_by_24, start=date(2015, 3, 10), names=None) -> HourlyGrid:
    v = np.asarray(values_s_by_24, dtype=float)
    names = names or tuple(f"S{i}" for i in range(v.shape[0]))
    return HourlyGrid(names, datetime(start.year, start.month, start.day), v, np.ones_like(v, dtype=bool))


def timestamp_grid(stations=2, days=10, start=datetime(2015, 1, 1)) -> HourlyGrid:
    """Each cell holds its own hour index (plus a station offset in the fraction)."""
    t = np.arange(24 * days, dtype=float)
    values = np.stack([t + s / 10 for s in range(stations)])
    return HourlyGrid(tuple(f"S{s}" for s in range(stations)), start, values, np.ones_like(values, dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["brute_force_level", "one_day_grid", "timestamp_grid", "AlertLevel", "Block", "timedelta"]

"""Forecasting samples: past-window tensors paired with block labels.

Binary dataset container (little-endian)::

    magic   b"APDS"      4 bytes
    version uint16       currently 1
    L, S    uint32 x 2   window hours, stations
    count   uint64       number of samples
    seed    int64        balancing seed (-1 if unbalanced)
    windows float64      count * L * S, row-major, oldest hour first
    labels  int64        count
    days    int64        count, proleptic Gregorian ordinal of the date
    blocks  int64        count, block number 1..4
"""
from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .ingest import HourlyGrid
from .labeling import AlertLevel, Block, BlockLabel

WINDOW_CHOICES = (24, 72, 168)
N_CLASSES = 4
_MAGIC = b"APDS"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIQq")


@dataclass(frozen=True, eq=False)
class Sample:
    window: np.ndarray  # (L, S)
    label: AlertLevel
    day: date
    block: Block

    @property
    def key(self) -> tuple[date, Block]:
        return (self.day, self.block)


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive calendar-year ranges, chronological and disjoint."""

    train: tuple[int, int] = (2010, 2017)
    validation: tuple[int, int] = (2018, 2018)
    test: tuple[int, int] = (2019, 2019)

    def __post_init__(self):
        parts = (self.train, self.validation, self.test)
        for lo, hi in parts:
            if lo > hi:
                raise InputError(f"year range {lo}-{hi} is reversed")
        if not (self.train[1] < self.validation[0] and self.validation[1] < self.test[0]):
            raise InputError(f"split ranges must be disjoint and chronological: {parts}")

    def to_dict(self) -> dict:
        return {"train": list(self.train), "validation": list(self.validation), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(tuple(d["train"]), tuple(d["validation"]), tuple(d["test"]))


@dataclass
class BalancedDataset:
    samples: list[Sample]
    seed: int
    counts_before: dict[int, int] = field(default_factory=dict)
    counts_after: dict[int, int] = field(default_factory=dict)


def make_windows(grid: HourlyGrid, labels: Iterable[BlockLabel], window: int) -> tuple[list[Sample], int]:
    """Pair each label with the ``window`` hours preceding its block start.

    Returns ``(samples, dropped)``; labels without a full history inside the
    grid are dropped. Samples come out sorted by (date, block).
    """
    if window < 1:
        raise InputError("window must be positive")
    values = grid.values.T  # hours x stations
    samples, dropped = [], 0
    for lab in sorted(labels, key=lambda b: (b.date, b.block)):
        start = datetime(lab.date.year, lab.date.month, lab.date.day) + timedelta(hours=lab.block.start_hour)
        t = grid.hour_index(start)
        if t - window < 0 or t > grid.n_hours:
            dropped += 1
            continue
        win = values[t - window:t]
        if not np.all(np.isfinite(win)):
            dropped += 1
            continue
        w = np.array(win, dtype=np.float64)
        w.setflags(write=False)
        samples.append(Sample(w, AlertLevel(lab.level), lab.date, lab.block))
    return samples, dropped


def split(samples: Sequence[Sample], spec: SplitSpec) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Partition by the sample date's year; each part sorted by key."""
    parts: tuple[list, list, list] = ([], [], [])
    for smp in sorted(samples, key=lambda s: (s.day, s.block)):
        y = smp.day.year
        for i, (lo, hi) in enumerate((spec.train, spec.validation, spec.test)):
            if lo <= y <= hi:
                parts[i].append(smp)
                break
    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise InputError(f"{name} split is empty for {spec}")
    return parts


def class_counts(samples: Iterable[Sample]) -> dict[int, int]:
    c = Counter(int(s.label) for s in samples)
    return {k: c.get(k, 0) for k in range(N_CLASSES)}


def balance(train: Sequence[Sample], seed: int) -> BalancedDataset:
    """Oversample minority classes with replacement up to the majority count.

    Classes absent from ``train`` stay absent; only present classes are
    equalized.
    """
    before = class_counts(train)
    present = [k for k, v in before.items() if v > 0]
    if len(present) < 2:
        raise InputError("balancing needs at least two classes")
    rng = np.random.default_rng(seed)
    target = max(before.values())
    out = list(train)
    by_class = {k: [i for i, s in enumerate(train) if int(s.label) == k] for k in present}
    for k in present:
        need = target - before[k]
        if need:
            picks = rng.choice(np.array(by_class[k]), size=need, replace=True)
            out.extend(train[i] for i in picks)
    return BalancedDataset(out, seed, before, class_counts(out))


def stack(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """(N, L, S) windows and (N,) int labels."""
    if not samples:
        raise InputError("no samples")
    x = np.stack([s.window for s in samples]).astype(np.float64)
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return x, y


def save_samples(samples: Sequence[Sample], path: str | Path, seed: int = -1) -> None:
    x, y = stack(samples)
    n, L, S = x.shape
    days = np.array([s.day.toordinal() for s in samples], dtype="<i8")
    blocks = np.array([int(s.block) for s in samples], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, L, S, n, seed))
        fh.write(x.astype("<f8").tobytes())
        fh.write(y.astype("<i8").tobytes())
        fh.write(days.tobytes())
        fh.write(blocks.tobytes())


def load_samples(path: str | Path) -> tuple[list[Sample], int]:
    """Returns ``(samples, seed)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated dataset header")
    magic, version, L, S, n, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise InputError(f"{path}: not a dataset container")
    if version != _VERSION:
        raise InputError(f"{path}: unsupported dataset version {version}")
    expect = _HEADER.size + n * (L * S * 8 + 24)
    if len(data) != expect:
        raise InputError(f"{path}: expected {expect} bytes, found {len(data)}")
    off = _HEADER.size
    x = np.frombuffer(data, "<f8", n * L * S, off).reshape(n, L, S)
    off += n * L * S * 8
    y, days, blocks = (np.frombuffer(data, "<i8", n, off + i * n * 8) for i in range(3))
    samples = []
    for i in range(n):
        w = np.array(x[i], dtype=np.float64)
        w.setflags(write=False)
        samples.append(Sample(w, AlertLevel(int(y[i])), date.fromordinal(int(days[i])), Block(int(blocks[i]))))
    return samples, seed

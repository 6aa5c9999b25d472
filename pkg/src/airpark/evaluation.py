"""Confusion matrices, adjacency-aware error rates and the tariff fairness metric."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .labeling import AlertLevel

N_LEVELS = 4


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are actual levels, columns predicted levels."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (N_LEVELS, N_LEVELS) or (c < 0).any():
            raise InputError("a confusion matrix is a 4x4 array of non-negative counts")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def _levels(seq, what: str) -> np.ndarray:
    arr = np.asarray([int(v) for v in seq], dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= N_LEVELS):
        raise InputError(f"{what} contain a value outside the alert levels 0..3")
    return arr


def _pair(preds, truths) -> tuple[np.ndarray, np.ndarray]:
    p, t = _levels(preds, "predictions"), _levels(truths, "truths")
    if len(p) != len(t):
        raise InputError(f"{len(p)} predictions for {len(t)} truths")
    return p, t


def confusion(preds: Sequence[int], truths: Sequence[int]) -> ConfusionMatrix:
    p, t = _pair(preds, truths)
    if len(p) == 0:
        raise InputError("cannot build a confusion matrix from no samples")
    counts = np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def normalize_rows(cm: ConfusionMatrix | np.ndarray) -> np.ndarray:
    """Row-stochastic copy; all-zero rows stay zero."""
    c = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.float64)
    sums = c.sum(axis=1, keepdims=True)
    return np.divide(c, sums, out=np.zeros_like(c), where=sums > 0)


@dataclass(frozen=True)
class ErrorTaxonomy:
    accuracy_per_class: tuple[float, ...]
    adjacent_per_class: tuple[float, ...]
    non_adjacent_per_class: tuple[float, ...]
    accuracy: float
    adjacent: float
    non_adjacent: float
    fp_rate: float
    fn_rate: float


def error_taxonomy(cm: ConfusionMatrix) -> ErrorTaxonomy:
    """Per-class and overall rates.

    Per class, accuracy, adjacent (distance 1) and non-adjacent (distance
    >= 2) fractions partition the row; empty rows report zeros. Overall
    rates, including over- (fp) and under-prediction (fn), are fractions of
    all samples.
    """
    c = cm.counts.astype(np.float64)
    i, j = np.indices(c.shape)
    dist = np.abs(i - j)
    rows = c.sum(axis=1)

    def per_row(mask):
        part = (c * mask).sum(axis=1)
        return tuple(float(x) for x in np.divide(part, rows, out=np.zeros_like(part), where=rows > 0))

    total = c.sum()

    def overall(mask):
        return float((c * mask).sum() / total) if total else 0.0

    return ErrorTaxonomy(
        accuracy_per_class=per_row(dist == 0),
        adjacent_per_class=per_row(dist == 1),
        non_adjacent_per_class=per_row(dist >= 2),
        accuracy=overall(dist == 0),
        adjacent=overall(dist == 1),
        non_adjacent=overall(dist >= 2),
        fp_rate=overall(j > i),
        fn_rate=overall(j < i),
    )


@dataclass(frozen=True)
class TariffTable:
    """Hourly parking price per alert level, in euros."""

    prices: tuple[float, float, float, float] = (0.40, 0.60, 1.20, 2.40)
    block_hours: int = 6

    def __post_init__(self):
        prices = tuple(float(p) for p in self.prices)
        if len(prices) != N_LEVELS:
            raise InputError("a tariff needs one price per alert level")
        if prices[0] <= 0 or any(b <= a for a, b in zip(prices, prices[1:])):
            raise InputError("tariff prices must be positive and strictly increasing")
        if self.block_hours < 1:
            raise InputError("block_hours must be positive")
        object.__setattr__(self, "prices", prices)

    def charge(self, level: int) -> float:
        return self.block_hours * self.prices[int(level)]

    @classmethod
    def from_dict(cls, d: dict) -> "TariffTable":
        base = cls()
        return cls(tuple(d.get("prices", base.prices)), int(d.get("block_hours", base.block_hours)))


@dataclass(frozen=True)
class EconomicReport:
    overcharge: float
    undercharge: float
    fairness: float
    n_blocks: int
    fairness_per_block: float


def economic_impact(preds: Sequence[int], truths: Sequence[int], tariff: TariffTable = TariffTable()) -> EconomicReport:
    """Euros over- and under-charged when blocks are priced at the predicted level."""
    p, t = _pair(preds, truths)
    charges = np.array([tariff.charge(k) for k in range(N_LEVELS)])
    delta = charges[p] - charges[t]
    # fsum keeps the totals independent of sample order
    over = math.fsum(float(d) for d in delta if d > 0)
    under = math.fsum(float(-d) for d in delta if d < 0)
    fair = math.fsum(float(abs(d)) for d in delta)
    n = len(p)
    return EconomicReport(over, under, fair, n, fair / n if n else 0.0)


# -- reports ---------------------------------------------------------------

LEVEL_NAMES = [lvl.name.lower() for lvl in AlertLevel]


def _write_matrix(path: Path, rows, fmt) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actual\\predicted"] + LEVEL_NAMES)
        for name, row in zip(LEVEL_NAMES, rows):
            w.writerow([name] + [fmt(v) for v in row])


def summary(cm: ConfusionMatrix, econ: EconomicReport) -> dict:
    tax = error_taxonomy(cm)
    return {
        "n_samples": cm.total,
        "accuracy": tax.accuracy,
        "accuracy_per_class": dict(zip(LEVEL_NAMES, tax.accuracy_per_class)),
        "adjacent_per_class": dict(zip(LEVEL_NAMES, tax.adjacent_per_class)),
        "non_adjacent_per_class": dict(zip(LEVEL_NAMES, tax.non_adjacent_per_class)),
        "adjacent": tax.adjacent,
        "non_adjacent": tax.non_adjacent,
        "fp_rate": tax.fp_rate,
        "fn_rate": tax.fn_rate,
        **asdict(econ),
    }


def write_reports(out_dir: str | Path, cm: ConfusionMatrix, econ: EconomicReport,
                  prefix: str = "", extra: dict | None = None) -> dict[str, Path]:
    """Write ``confusion.csv``, ``confusion_normalized.csv`` and ``report.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "confusion": out / f"{prefix}confusion.csv",
        "normalized": out / f"{prefix}confusion_normalized.csv",
        "report": out / f"{prefix}report.json",
    }
    _write_matrix(paths["confusion"], cm.counts, str)
    _write_matrix(paths["normalized"], normalize_rows(cm), lambda v: repr(float(v)))
    doc = summary(cm, econ)
    if extra:
        doc.update(extra)
    paths["report"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_confusion(path: str | Path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return ConfusionMatrix(np.array([[int(v) for v in r[1:]] for r in rows]))

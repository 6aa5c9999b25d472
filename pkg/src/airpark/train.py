"""Mini-batch training with early stopping and versioned checkpoints.

Checkpoint file layout (little-endian)::

    magic      b"APCK"
    version    uint16
    sections   uint16 count, then per section:
                 name length uint8, ASCII name,
                 payload length uint64, payload

Sections: ``spec``, ``rule``, ``normalization``, ``meta`` (UTF-8 JSON with
sorted keys) and ``params`` (uint32 count; per tensor a uint16-prefixed
name, uint8 rank, uint32 extents, float64 data).
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import BalancedDataset, stack
from .errors import (CheckpointFormatError, CheckpointVersionError, InputError, TrainingError,
                     TruncatedCheckpointError)
from .ingest import NormalizationParams
from .labeling import AlertLevel, RuleSpec
from .models import Model, ModelSpec, build_model
from .nn.functional import log_softmax, softmax_cross_entropy
from .nn.optim import Adam, AdamConfig

MAGIC = b"APCK"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    optimizer: AdamConfig = AdamConfig()
    target_accuracy: float | None = None  # stop once training accuracy reaches this

    def __post_init__(self):
        if self.batch < 1:
            raise InputError("batch must be >= 1")
        if self.max_epochs < 0 or self.patience < 0:
            raise InputError("epoch counts must be non-negative")
        if self.patience > self.max_epochs:
            raise InputError("patience must not exceed max_epochs")

    def to_dict(self) -> dict:
        o = self.optimizer
        return {"batch": self.batch, "max_epochs": self.max_epochs, "patience": self.patience, "seed": self.seed,
                "lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps,
                "target_accuracy": self.target_accuracy}


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass(eq=False)
class Checkpoint:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    normalization: NormalizationParams | None = None
    rule: RuleSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def window(self) -> int:
        return self.spec.window

    def build_model(self) -> Model:
        model = build_model(self.spec, seed=0)
        model.load_state(self.params)
        return model

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.build_model().forward(x, training=False).data


def _as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, BalancedDataset):
        data = data.samples
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        x, y = data
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)
    return stack(list(data))


def _batched_loss(model: Model, x: np.ndarray, y: np.ndarray, batch: int = 256):
    """Mean cross-entropy and argmax predictions in inference mode."""
    total, preds = 0.0, []
    for i in range(0, len(x), batch):
        logits = model.forward(x[i:i + batch], training=False).data
        lp = log_softmax(logits)
        total += -lp[np.arange(len(lp)), y[i:i + batch]].sum()
        preds.append(np.argmax(logits, axis=1))
    return total / len(x), np.concatenate(preds)


def train(model: Model, train_data, val_data, config: TrainConfig = TrainConfig(), *,
          normalization: NormalizationParams | None = None, rule: RuleSpec | None = None,
          meta: dict | None = None, log=None) -> tuple[Checkpoint, list[EpochRecord]]:
    """Fit ``model`` with Adam on cross-entropy; return the best-validation checkpoint.

    Each epoch shuffles with a generator seeded from ``(seed, epoch)``.
    Training stops after ``max_epochs`` or ``patience`` epochs without a
    validation-loss improvement. A non-finite batch loss raises
    :class:`TrainingError`.
    """
    x_tr, y_tr = _as_arrays(train_data)
    x_va, y_va = _as_arrays(val_data)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise InputError("training and validation sets must be non-empty")
    expected = (model.spec.window, model.spec.stations)
    if x_tr.shape[1:] != expected or x_va.shape[1:] != expected:
        raise InputError(f"sample windows {x_tr.shape[1:]} do not match the model input {expected}")

    opt = Adam(model.parameters(), config.optimizer)
    best_state, best_loss, best_epoch = model.state(), math.inf, 0
    history: list[EpochRecord] = []
    stale = 0
    stop_reason = "max_epochs"
    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(x_tr))
        drop_rng = np.random.default_rng([config.seed, epoch, 1])
        losses = []
        for b, i in enumerate(range(0, len(order), config.batch)):
            idx = order[i:i + config.batch]
            opt.zero_grad()
            loss = softmax_cross_entropy(model.forward(x_tr[idx], training=True, rng=drop_rng), y_tr[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(epoch, b)
            loss.backward()
            opt.step()
            losses.append(value * len(idx))
        train_loss = sum(losses) / len(order)
        val_loss, val_pred = _batched_loss(model, x_va, y_va)
        rec = EpochRecord(epoch, train_loss, float(val_loss), float(np.mean(val_pred == y_va)))
        history.append(rec)
        if log:
            log(rec)
        if val_loss < best_loss:
            best_loss, best_epoch, best_state = val_loss, epoch, model.state()
            stale = 0
        else:
            stale += 1
        if config.target_accuracy is not None:
            _, tr_pred = _batched_loss(model, x_tr, y_tr)
            if np.mean(tr_pred == y_tr) >= config.target_accuracy:
                stop_reason = "target_accuracy"
                break
        if stale >= config.patience:
            stop_reason = "patience"
            break

    model.load_state(best_state)
    info = dict(meta or {})
    info.update({
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_val_loss": None if not history else float(best_loss),
        "final_train_loss": history[-1].train_loss if history else None,
        "final_val_loss": history[-1].val_loss if history else None,
        "stop_reason": stop_reason if history else "no_epochs",
        "seed": config.seed,
        "train_config": config.to_dict(),
    })
    ckpt = Checkpoint(model.spec, model.state(), normalization, rule, info)
    return ckpt, history


def evaluate(checkpoint: Checkpoint, data) -> tuple[list[AlertLevel], float]:
    """Argmax predictions (dropout off) and mean cross-entropy."""
    x, y = _as_arrays(data) if not (isinstance(data, Sequence) and len(data) == 0) else (None, None)
    if x is None or len(x) == 0:
        raise InputError("cannot evaluate an empty dataset")
    if x.shape[1:] != (checkpoint.spec.window, checkpoint.spec.stations):
        raise InputError(f"windows {x.shape[1:]} do not match the checkpoint input "
                         f"{(checkpoint.spec.window, checkpoint.spec.stations)}")
    loss, pred = _batched_loss(checkpoint.build_model(), x, y)
    return [AlertLevel(int(p)) for p in pred], float(loss)


def write_history(history: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc)])


# -- checkpoint file ---------------------------------------------------------

def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _params_bytes(params: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    sections = [
        ("spec", _json_bytes(ckpt.spec.to_dict())),
        ("rule", _json_bytes(ckpt.rule.to_dict() if ckpt.rule else None)),
        ("normalization", _json_bytes(ckpt.normalization.to_dict() if ckpt.normalization else None)),
        ("meta", _json_bytes(ckpt.meta)),
        ("params", _params_bytes(ckpt.params)),
    ]
    out = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(sections))]
    for name, payload in sections:
        raw = name.encode("ascii")
        out.append(struct.pack("<B", len(raw)) + raw + struct.pack("<Q", len(payload)))
        out.append(payload)
    return b"".join(out)


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(f"checkpoint truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse_params(payload: bytes) -> dict[str, np.ndarray]:
    r = _Reader(payload)
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(payload):
        raise CheckpointFormatError("trailing bytes in params section")
    return params


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("not a checkpoint (bad magic bytes)")
    r.take(len(MAGIC))
    version, count = r.unpack("<HH")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    sections = {}
    for _ in range(count):
        (n,) = r.unpack("<B")
        name = r.take(n).decode("ascii", errors="replace")
        (size,) = r.unpack("<Q")
        sections[name] = r.take(size)
    if r.pos != len(data):
        raise CheckpointFormatError("trailing bytes after the last section")
    missing = {"spec", "rule", "normalization", "meta", "params"} - set(sections)
    if missing:
        raise CheckpointFormatError(f"missing sections {sorted(missing)}")
    try:
        spec = ModelSpec.from_dict(json.loads(sections["spec"]))
        rule_d = json.loads(sections["rule"])
        norm_d = json.loads(sections["normalization"])
        meta = json.loads(sections["meta"])
    except (ValueError, KeyError) as exc:
        raise CheckpointFormatError(f"corrupt checkpoint metadata: {exc}") from None
    return Checkpoint(spec, _parse_params(sections["params"]),
                      NormalizationParams.from_dict(norm_d) if norm_d else None,
                      RuleSpec.from_dict(rule_d) if rule_d else None, meta)


def load(path: str | Path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())

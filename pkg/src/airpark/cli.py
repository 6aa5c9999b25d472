"""Command-line front end: ``airpark {synth,ingest,label,train,eval,gradcheck}``.

Every subcommand reads and writes under ``--out`` (default ``./workspace``):

=============================================  ==========================================
file                                           written by
=============================================  ==========================================
``synthetic.csv``, ``truth_labels.csv``        synth
``grid.csv``, ``normalization.json``           ingest (imputed raw grid, min-max params)
``labels_rule{r}.csv``                         label (blocks II and III)
``{model}_r{r}_b{b}_w{L}.ckpt``                train
``{model}_r{r}_b{b}_w{L}_history.csv``         train
``{model}_r{r}_b{b}_w{L}_{part}.apds``         train, with ``save_datasets``
``{stem}_confusion.csv``,
``{stem}_confusion_normalized.csv``,
``{stem}_report.json``,
``{stem}_predictions.csv``                     eval (``stem`` is the checkpoint name)
``gradcheck.txt``                              gradcheck
=============================================  ==========================================

Exit status: 0 success, 1 verification failure (gradient check or a
diverged training run), 2 usage or input error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import ingest, labeling
from . import train as tr
from .errors import AirparkError, InputError, TrainingError
from .labeling import Block
from .models import KINDS, ModelSpec, build_model
from .nn.gradcheck import finite_diff_check
from .nn.optim import AdamConfig

EXIT_OK, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2

DEFAULTS = {
    "out": "workspace",
    "input": None,
    "rule": 1,
    "block": 2,
    "window": 24,
    "model": "cnn",
    "seed": 0,
    "split": {"train": [2010, 2017], "validation": [2018, 2018], "test": [2019, 2019]},
    "train": {"batch": 32, "max_epochs": 100, "patience": 10, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
              "eps": 1e-8},
    "layers": {},
    "tariff": {"prices": [0.40, 0.60, 1.20, 2.40], "block_hours": 6},
    "synth": {"stations": 12, "start": "2017-07-01", "days": 915, "episode_rate": 0.3},
    "save_datasets": False,
    "runs": [],
    "jobs": 1,
}


@dataclass
class RunConfig:
    out: Path
    input: Path | None
    rule: int
    block: int
    window: int
    model: str
    seed: int
    split: ds.SplitSpec
    train: tr.TrainConfig
    layers: dict
    tariff: ev.TariffTable
    synth: dict
    save_datasets: bool = False
    runs: list = field(default_factory=list)
    jobs: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        d = _merge(DEFAULTS, raw)
        if d["rule"] not in (1, 2):
            raise InputError(f"rule must be 1 or 2, got {d['rule']}")
        if d["block"] not in (2, 3):
            raise InputError(f"block must be 2 or 3, got {d['block']}")
        if d["window"] not in ds.WINDOW_CHOICES:
            raise InputError(f"window must be one of {ds.WINDOW_CHOICES}, got {d['window']}")
        if d["model"] not in KINDS:
            raise InputError(f"model must be one of {KINDS}, got {d['model']!r}")
        t = d["train"]
        try:
            tc = tr.TrainConfig(batch=int(t["batch"]), max_epochs=int(t["max_epochs"]), patience=int(t["patience"]),
                                seed=int(d["seed"]),
                                optimizer=AdamConfig(float(t["lr"]), float(t["beta1"]), float(t["beta2"]),
                                                     float(t["eps"])),
                                target_accuracy=t.get("target_accuracy"))
            split = ds.SplitSpec.from_dict(d["split"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad configuration: {exc}") from None
        return cls(Path(d["out"]), Path(d["input"]) if d["input"] else None, int(d["rule"]), int(d["block"]),
                   int(d["window"]), d["model"], int(d["seed"]), split, tc, dict(d["layers"]),
                   ev.TariffTable.from_dict(d["tariff"]), dict(d["synth"]), bool(d["save_datasets"]),
                   list(d["runs"]), int(d["jobs"]))

    @property
    def rule_spec(self):
        return labeling.rule_by_number(self.rule)

    @property
    def stem(self) -> str:
        return f"{self.model}_r{self.rule}_b{self.block}_w{self.window}"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise InputError(f"unknown configuration key {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("layers",):
            unknown = set(v) - set(base[k]) - {"target_accuracy"}
            if unknown:
                raise InputError(f"unknown keys under {k!r}: {sorted(unknown)}")
            out[k].update(v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _overlay(base: dict, over: dict) -> dict:
    """``over`` on top of ``base``, one level deep; validation happens in from_dict."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


# -- subcommands -------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    from .synthetic import generate_synthetic

    s = cfg.synth
    data = generate_synthetic(stations=int(s["stations"]), days=int(s["days"]), seed=cfg.seed,
                              start=date.fromisoformat(s["start"]), episode_rate=float(s["episode_rate"]))
    cfg.out.mkdir(parents=True, exist_ok=True)
    ingest.write_csv(data.records(), cfg.out / "synthetic.csv")
    with open(cfg.out / "truth_labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "block", "rule", "level"])
        for rule in (labeling.RULE_I, labeling.RULE_II):
            for lab in data.labels[rule.name]:
                w.writerow([lab.date.isoformat(), lab.block.name, labeling.rule_number(rule), int(lab.level)])
    print(f"synth: {data.grid.n_stations} stations x {data.grid.n_hours} hours, "
          f"{len(data.episodes)} episodes -> {cfg.out}")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig) -> int:
    src = cfg.input or cfg.out / "synthetic.csv"
    if not src.is_file():
        raise InputError(f"input CSV {src} not found")
    records = ingest.parse_csv(src)
    valid = [r for r in records if r.valid]
    if not valid:
        raise InputError(f"{src} holds no valid measurements")
    stations = sorted({r.station_id for r in records})
    first = min(r.timestamp for r in records)
    last = max(r.timestamp for r in records)
    start = datetime(first.year, first.month, first.day)
    end = datetime(last.year, last.month, last.day) + timedelta(days=1)
    grid, dups = ingest.build_grid(records, stations, (start, end))
    missing = int((~grid.mask).sum())
    grid = ingest.impute_monthly_mean(grid)
    lo, hi = cfg.split.train
    params = ingest.fit_minmax(grid, datetime(lo, 1, 1), datetime(hi + 1, 1, 1))
    cfg.out.mkdir(parents=True, exist_ok=True)
    ingest.write_grid(grid, cfg.out / "grid.csv")
    ingest.write_params(params, cfg.out / "normalization.json")
    print(f"ingest: {len(records)} records, {len(stations)} stations, {grid.n_hours} hours, "
          f"{missing} cells imputed, {dups} duplicates")
    return EXIT_OK


def _read_grid(cfg: RunConfig):
    path = cfg.out / "grid.csv"
    if not path.is_file():
        raise InputError(f"{path} not found; run ingest first")
    return ingest.read_grid(path)


def cmd_label(cfg: RunConfig) -> int:
    grid = _read_grid(cfg)
    rule = cfg.rule_spec
    labels = labeling.label_dataset(grid, rule, (Block.II, Block.III))
    if not labels:
        raise InputError("grid covers no complete block")
    path = cfg.out / f"labels_rule{cfg.rule}.csv"
    labeling.write_labels(labels, rule, path)
    counts = Counter(int(lab.level) for lab in labels)
    counts = {k: counts.get(k, 0) for k in range(ds.N_CLASSES)}
    print(f"label: {len(labels)} blocks under {rule.name}, levels {counts} -> {path.name}")
    return EXIT_OK


def _samples(cfg: RunConfig, window: int, params: ingest.NormalizationParams, rule: int):
    grid = _read_grid(cfg)
    lab_path = cfg.out / f"labels_rule{rule}.csv"
    if not lab_path.is_file():
        raise InputError(f"{lab_path} not found; run label --rule {rule} first")
    labels = [lab for lab in labeling.read_labels(lab_path, rule) if lab.block == Block(cfg.block)]
    scaled = ingest.apply_minmax(grid, params)
    samples, dropped = ds.make_windows(scaled, labels, window)
    return samples, dropped


def _train_one(cfg: RunConfig) -> str:
    norm_path = cfg.out / "normalization.json"
    if not norm_path.is_file():
        raise InputError(f"{norm_path} not found; run ingest first")
    params = ingest.read_params(norm_path)
    samples, dropped = _samples(cfg, cfg.window, params, cfg.rule)
    train_s, val_s, test_s = ds.split(samples, cfg.split)
    balanced = ds.balance(train_s, cfg.seed)
    spec = ModelSpec(cfg.model, cfg.window, len(params.station_ids), layers=cfg.layers)
    model = build_model(spec, cfg.seed)
    if cfg.save_datasets:
        ds.save_samples(balanced.samples, cfg.out / f"{cfg.stem}_train.apds", cfg.seed)
        ds.save_samples(val_s, cfg.out / f"{cfg.stem}_validation.apds", cfg.seed)
        ds.save_samples(test_s, cfg.out / f"{cfg.stem}_test.apds", cfg.seed)
    meta = {"block": cfg.block, "dropped_windows": dropped, "split": cfg.split.to_dict(),
            "class_counts_before": {str(k): v for k, v in balanced.counts_before.items()},
            "class_counts_after": {str(k): v for k, v in balanced.counts_after.items()}}
    ckpt, history = tr.train(model, balanced, val_s, cfg.train, normalization=params, rule=cfg.rule_spec,
                             meta=meta)
    tr.save(ckpt, cfg.out / f"{cfg.stem}.ckpt")
    tr.write_history(history, cfg.out / f"{cfg.stem}_history.csv")
    return (f"train {cfg.stem}: {len(balanced.samples)} balanced samples, {ckpt.meta['epochs_run']} epochs, "
            f"best epoch {ckpt.meta['best_epoch']}, val loss {ckpt.meta['best_val_loss']:.4f}")


def cmd_train(cfg: RunConfig, raw: dict | None = None) -> int:
    configs = [cfg]
    if cfg.runs:
        base = {k: v for k, v in (raw or {}).items() if k != "runs"}
        configs = [RunConfig.from_dict(_overlay(base, run)) for run in cfg.runs]
        stems = [c.stem for c in configs]
        if len(set(stems)) != len(stems):
            raise InputError(f"runs collide on output names: {stems}")
    if cfg.jobs > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            lines = list(pool.map(_train_one, configs))
    else:
        lines = [_train_one(c) for c in configs]
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, checkpoint: Path | None = None) -> int:
    path = checkpoint or cfg.out / f"{cfg.stem}.ckpt"
    if not path.is_file():
        raise InputError(f"checkpoint {path} not found")
    ckpt = tr.load(path)
    if ckpt.normalization is None or ckpt.rule is None:
        raise InputError(f"{path} lacks normalization or rule state")
    rule = labeling.rule_number(ckpt.rule)
    samples, _ = _samples(cfg, ckpt.window, ckpt.normalization, rule)
    split = ds.SplitSpec.from_dict(ckpt.meta.get("split", cfg.split.to_dict()))
    test_s = ds.split(samples, split)[2]
    preds, loss = tr.evaluate(ckpt, test_s)
    truths = [s.label for s in test_s]
    cm = ev.confusion(preds, truths)
    econ = ev.economic_impact(preds, truths, cfg.tariff)
    stem = path.stem
    ev.write_reports(cfg.out, cm, econ, prefix=f"{stem}_",
                     extra={"checkpoint": path.name, "loss": loss, "rule": rule,
                            "block": ckpt.meta.get("block", cfg.block), "window": ckpt.window,
                            "model": ckpt.spec.kind})
    with open(cfg.out / f"{stem}_predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "block", "truth", "predicted"])
        for s, p in zip(test_s, preds):
            w.writerow([s.day.isoformat(), s.block.name, int(s.label), int(p)])
    print(f"eval {stem}: {cm.total} test blocks, accuracy {cm.accuracy:.3f}, fairness {econ.fairness:.2f} EUR")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, tol: float = 1e-4, coords: int = 200) -> int:
    rng = np.random.default_rng(cfg.seed)
    window = cfg.window
    lines, ok = [], True
    for kind, L in (("lstm", window), ("cnn", window), ("utime", 168)):
        model = build_model(ModelSpec(kind, L, 12), cfg.seed)
        x = rng.uniform(0.0, 1.0, size=(2, L, 12))
        y = rng.integers(0, 4, size=2)
        report = finite_diff_check(model, x, y, n_coords=coords, seed=cfg.seed)
        passed = report.passed(tol)
        ok &= passed
        lines.append(f"[{kind} L={L}] {'PASS' if passed else 'FAIL'} (tolerance {tol:g})")
        lines.extend("  " + ln for ln in report.lines())
    cfg.out.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (cfg.out / "gradcheck.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK if ok else EXIT_VERIFY


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--rule", type=int, choices=(1, 2))
    common.add_argument("--block", type=int, choices=(2, 3))
    common.add_argument("--window", type=int, choices=ds.WINDOW_CHOICES)
    common.add_argument("--model", choices=KINDS)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="workspace directory (default ./workspace)")

    parser = argparse.ArgumentParser(prog="airpark", description="NO2 alert labeling, forecasting and tariff evaluation")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic CSV with known labels")
    p = sub.add_parser("ingest", parents=[common], help="parse, grid, impute and fit normalization")
    p.add_argument("--input", type=Path, help="hourly CSV (default OUT/synthetic.csv)")
    sub.add_parser("label", parents=[common], help="label blocks II and III under a rule")
    p = sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    p.add_argument("--epochs", type=int, help="override train.max_epochs")
    p.add_argument("--jobs", type=int, help="parallel worker threads for config runs")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", type=Path)
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all architectures")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=200)
    return parser


def _raw_config(args) -> dict:
    raw: dict = {}
    if args.config is not None:
        if not args.config.is_file():
            raise InputError(f"config file {args.config} not found")
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise InputError(f"{args.config}: top level must be an object")
    for key in ("rule", "block", "window", "model", "seed", "out", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = str(val) if isinstance(val, Path) else val
    if getattr(args, "input", None) is not None:
        raw["input"] = str(args.input)
    if getattr(args, "epochs", None) is not None:
        epochs = args.epochs
        t = dict(raw.get("train", {}))
        t["max_epochs"] = epochs
        t["patience"] = min(int(t.get("patience", DEFAULTS["train"]["patience"])), epochs)
        raw["train"] = t
    return raw


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _raw_config(args)
        cfg = RunConfig.from_dict(raw)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "label":
            return cmd_label(cfg)
        if args.command == "train":
            return cmd_train(cfg, raw)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        return cmd_gradcheck(cfg, args.tol, args.coords)
    except TrainingError as exc:
        print(f"airpark {args.command}: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (AirparkError, OSError) as exc:
        print(f"airpark {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"airpark {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

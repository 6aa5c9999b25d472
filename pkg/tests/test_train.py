from datetime import datetime

import numpy as np
import pytest

from airpark.errors import (CheckpointFormatError, CheckpointVersionError, InputError, TrainingError,
                            TruncatedCheckpointError)
from airpark.ingest import NormalizationParams
from airpark.labeling import RULE_II
from airpark.models import build_cnn, build_lstm
from airpark.nn.optim import AdamConfig
from airpark.synthetic import make_separable_windows
from airpark.train import (Checkpoint, TrainConfig, checkpoint_bytes, checkpoint_from_bytes, evaluate, load, save,
                           train, write_history)


@pytest.fixture(scope="module")
def data():
    return make_separable_windows(64, window=24, seed=3), make_separable_windows(32, window=24, seed=4)


def norm():
    return NormalizationParams(tuple(f"S{i:02d}" for i in range(12)), np.zeros(12), np.full(12, 100.0),
                               datetime(2010, 1, 1), datetime(2018, 1, 1))


class TestConfig:
    def test_invariants(self):
        with pytest.raises(InputError):
            TrainConfig(batch=0)
        with pytest.raises(InputError):
            TrainConfig(max_epochs=5, patience=6)
        assert TrainConfig().batch == 32 and TrainConfig().max_epochs == 100 and TrainConfig().patience == 10


class TestTrain:
    def test_zero_epochs_returns_init(self, data):
        m = build_cnn(24, seed=5)
        init = m.state()
        ck, hist = train(m, *data, TrainConfig(max_epochs=0, patience=0))
        assert hist == [] and all(np.array_equal(init[k], v) for k, v in ck.params.items())

    def test_deterministic(self, data):
        cfg = TrainConfig(max_epochs=4, patience=4, seed=9)
        a, ha = train(build_lstm(24, seed=1), *data, cfg)
        b, hb = train(build_lstm(24, seed=1), *data, cfg)
        assert checkpoint_bytes(a) == checkpoint_bytes(b) and ha == hb

    def test_best_epoch_restored(self, data):
        cfg = TrainConfig(max_epochs=12, patience=12, seed=0, optimizer=AdamConfig(lr=0.05))
        ck, hist = train(build_cnn(24, seed=0), *data, cfg)
        best = min(h.val_loss for h in hist)
        assert ck.meta["best_val_loss"] == best
        assert hist[ck.meta["best_epoch"] - 1].val_loss == best
        _, loss = evaluate(ck, data[1])
        assert loss == pytest.approx(best, rel=0, abs=1e-12)

    def test_patience_stops(self, data):
        cfg = TrainConfig(max_epochs=60, patience=2, seed=0, optimizer=AdamConfig(lr=0.2))
        ck, hist = train(build_cnn(24, seed=0), *data, cfg)
        if ck.meta["stop_reason"] == "patience":
            assert len(hist) - ck.meta["best_epoch"] == 2
        assert len(hist) <= 60

    def test_loss_decreases_early(self, data):
        cfg = TrainConfig(batch=32, max_epochs=6, patience=6, seed=0)
        _, hist = train(build_cnn(24, seed=0), *data, cfg)
        steps = [b.train_loss < a.train_loss for a, b in zip(hist, hist[1:])]
        assert sum(steps) >= 4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss(self, data):
        m = build_cnn(24, seed=0)
        bad = [type(s)(np.full_like(s.window, np.inf), s.label, s.day, s.block) for s in data[0]]
        with pytest.raises(TrainingError) as exc:
            train(m, bad, data[1], TrainConfig(max_epochs=1, patience=1))
        assert exc.value.epoch == 1 and exc.value.batch == 0

    def test_shape_mismatch(self, data):
        with pytest.raises(InputError):
            train(build_cnn(72), *data, TrainConfig(max_epochs=1, patience=1))
        with pytest.raises(InputError):
            train(build_cnn(24), [], data[1], TrainConfig(max_epochs=1, patience=1))


class TestEvaluate:
    def test_empty(self, data):
        ck = Checkpoint(build_cnn(24).spec, build_cnn(24).state())
        with pytest.raises(InputError):
            evaluate(ck, [])

    def test_window_mismatch(self):
        ck = Checkpoint(build_cnn(72).spec, build_cnn(72).state())
        with pytest.raises(InputError):
            evaluate(ck, make_separable_windows(4, window=24))

    def test_repeatable(self, data):
        ck, _ = train(build_lstm(24), *data, TrainConfig(max_epochs=2, patience=2))
        assert evaluate(ck, data[1]) == evaluate(ck, data[1])


class TestCheckpointFile:
    @pytest.fixture
    def ckpt(self, data):
        ck, _ = train(build_cnn(24, seed=2), *data, TrainConfig(max_epochs=2, patience=2, seed=2),
                      normalization=norm(), rule=RULE_II, meta={"note": "x"})
        return ck

    def test_roundtrip(self, ckpt, tmp_path, rng):
        save(ckpt, tmp_path / "a.ckpt")
        back = load(tmp_path / "a.ckpt")
        save(back, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
        assert back.spec == ckpt.spec and back.rule == RULE_II and back.normalization == norm()
        assert back.meta == ckpt.meta and back.window == 24
        x = rng.uniform(size=(5, 24, 12))
        assert ckpt.forward(x).tobytes() == back.forward(x).tobytes()

    def test_bad_magic(self, ckpt):
        raw = bytearray(checkpoint_bytes(ckpt))
        raw[0] ^= 0xFF
        with pytest.raises(CheckpointFormatError):
            checkpoint_from_bytes(bytes(raw))

    def test_version(self, ckpt):
        raw = bytearray(checkpoint_bytes(ckpt))
        raw[4] = 99
        with pytest.raises(CheckpointVersionError):
            checkpoint_from_bytes(bytes(raw))

    @pytest.mark.parametrize("cut", [6, 20, 200, -1])
    def test_truncated(self, ckpt, cut):
        raw = checkpoint_bytes(ckpt)
        with pytest.raises(TruncatedCheckpointError):
            checkpoint_from_bytes(raw[:cut])

    def test_trailing_garbage(self, ckpt):
        with pytest.raises(CheckpointFormatError):
            checkpoint_from_bytes(checkpoint_bytes(ckpt) + b"\0")


def test_history_csv(tmp_path, data):
    _, hist = train(build_lstm(24), *data, TrainConfig(max_epochs=2, patience=2))
    write_history(hist, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_acc" and len(lines) == 3

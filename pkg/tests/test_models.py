import numpy as np
import pytest

from airpark.errors import InputError
from airpark.models import ModelSpec, build_cnn, build_lstm, build_model, build_utime
from airpark.nn.gradcheck import finite_diff_check


@pytest.mark.parametrize("L", [24, 72, 168])
def test_lstm_counts_and_output(L, rng):
    m = build_lstm(L)
    assert m.layer_counts() == {"lstm1": 12600, "lstm2": 2440, "head": 44}
    out = m.forward(rng.uniform(size=(3, L, 12)))
    assert out.shape == (3, 4) and np.all(np.isfinite(out.data))


def test_lstm_zero_input_uniform():
    m = build_lstm(24)
    logits = m.forward(np.zeros((1, 24, 12))).data
    assert np.array_equal(logits, np.zeros((1, 4)))


@pytest.mark.parametrize("L,flat", [(24, 1152), (72, 64 * 18 * 3), (168, 8064)])
def test_cnn_flatten(L, flat, rng):
    m = build_cnn(L)
    assert m.flat_features == flat
    assert m.features(rng.uniform(size=(2, L, 12))).shape == (2, flat)
    assert m.forward(rng.uniform(size=(2, L, 12))).shape == (2, 4)


def test_cnn_too_small():
    with pytest.raises(InputError):
        build_cnn(3)


def test_utime_structure(rng):
    m = build_utime()
    x = rng.uniform(size=(2, 168, 12))
    crop = m.cropped_input(x)
    assert crop.shape == (2, 12, 160) and crop.data[0].size == 1920
    assert np.array_equal(crop.data[0].T, x[0, 8:])  # the 8 oldest hours are dropped
    latent, skips = m.encode(x)
    assert latent.shape == (2, 256, 1)
    assert [s.shape[1:] for s in skips] == [(16, 160), (32, 80), (64, 40), (128, 20), (256, 10)]
    assert m.forward(x).shape == (2, 4)


@pytest.mark.parametrize("L", [24, 72])
def test_utime_rejects_other_windows(L):
    with pytest.raises(InputError):
        build_utime(L)


def test_spec_validation():
    with pytest.raises(InputError):
        ModelSpec("transformer", 24, 12)
    with pytest.raises(InputError):
        ModelSpec("cnn", 24, 12, classes=3)
    spec = ModelSpec("lstm", 24, 12, layers={"units": [8]})
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    assert build_model(spec).layer_counts()["lstm1"] == 4 * ((12 + 8) * 8 + 8)


def test_input_shape_checked():
    with pytest.raises(InputError):
        build_cnn(24).forward(np.zeros((1, 24, 11)))


def test_state_roundtrip(rng):
    a, b = build_cnn(24, seed=1), build_cnn(24, seed=2)
    x = rng.uniform(size=(2, 24, 12))
    assert not np.array_equal(a.forward(x).data, b.forward(x).data)
    b.load_state(a.state())
    assert np.array_equal(a.forward(x).data, b.forward(x).data)


def test_seeded_build_deterministic(rng):
    x = rng.uniform(size=(2, 24, 12))
    assert np.array_equal(build_lstm(24, seed=3).forward(x).data, build_lstm(24, seed=3).forward(x).data)


@pytest.mark.parametrize("builder,L", [(build_lstm, 24), (build_cnn, 24)])
def test_small_models_gradcheck(builder, L, rng):
    m = builder(L, seed=0)
    rep = finite_diff_check(m, rng.uniform(size=(2, L, 12)), rng.integers(0, 4, 2), n_coords=200)
    assert rep.checked >= 200 and rep.passed(1e-4)
    assert set(rep.per_param) == {n for n, _ in m.named_parameters()}

from datetime import date

import numpy as np
import pytest

from airpark.errors import InputError
from airpark.labeling import RULE_I, RULE_II, AlertLevel, Block, compute_thresholds, label_dataset
from airpark.synthetic import Episode, band_for, generate_synthetic, make_separable_windows


def test_no_episodes_all_quiet():
    data = generate_synthetic(stations=12, days=10, seed=1)
    for rule in (RULE_I, RULE_II):
        assert all(lb.level == 0 for lb in label_dataset(data.grid, rule, list(Block)))


def test_injected_alert_on_day_three():
    d3 = date(2010, 1, 3)
    data = generate_synthetic(stations=12, days=10, seed=2, episodes={(d3, Block.II): band_for(3, RULE_I)})
    labels = label_dataset(data.grid, RULE_I, list(Block))
    assert [(lb.date, lb.block, lb.level) for lb in labels if lb.level] == [(d3, Block.II, AlertLevel.ALERT)]


@pytest.mark.parametrize("seed", [0, 5, 9])
def test_labels_match_labeler(seed):
    data = generate_synthetic(stations=12, days=120, seed=seed, episode_rate=0.4, start=date(2014, 11, 15))
    for rule in (RULE_I, RULE_II):
        got = label_dataset(data.grid, rule, list(Block))
        assert got == data.labels[rule.name]


def test_pinned_thresholds():
    data = generate_synthetic(stations=12, days=40, seed=3, episode_rate=0.3)
    t = compute_thresholds(data.grid, RULE_I)
    expected = np.array([60.0, 80.0, 100.0])
    for s in range(12):
        assert np.allclose(t.table[s, 0] / data.scales[s], expected)


def test_deterministic():
    a = generate_synthetic(stations=5, days=20, seed=4, episode_rate=0.3)
    b = generate_synthetic(stations=5, days=20, seed=4, episode_rate=0.3)
    assert a.grid == b.grid and a.labels == b.labels


def test_infeasible():
    with pytest.raises(InputError):
        generate_synthetic(stations=3, days=2, seed=0, run_hours=7)
    with pytest.raises(InputError):
        generate_synthetic(stations=12, days=5, seed=0, episode_rate=1.0, blocks=list(Block))
    with pytest.raises(InputError):
        generate_synthetic(stations=2, days=5)


def test_explicit_episode_placement():
    ep = Episode(date(2010, 1, 2), Block.III, 4, stations=(0, 1, 2), offset=3)
    data = generate_synthetic(stations=6, days=4, seed=0, episodes=[ep], precursor=False)
    hour = 24 + 12 + 3
    v = data.grid.values
    assert np.all(v[:3, hour:hour + 3] > 100 * data.scales[:3, None])


def test_separable_windows():
    s = make_separable_windows(400, window=24, seed=0)
    labels = np.array([x.label for x in s])
    assert np.bincount(labels, minlength=4).tolist() == [100] * 4
    assert all(x.window.shape == (24, 12) for x in s)
    peak = np.array([x.window.max() for x in s])
    for k in range(1, 4):
        assert peak[labels == k].min() > peak[labels == k - 1].max() - 0.1

import itertools
import json

import numpy as np
import pytest

from _oracles import textbook_dcov2
from rjdcov.calibration import (
    CACHE_VERSION,
    CacheMiss,
    ChecksumMismatch,
    NullCache,
    NullDistribution,
    default_cache_dir,
    p_value,
    quantile_cutoff,
    simulate_null,
)
from rjdcov.core import WeightScheme
from rjdcov.grids import default_grids, iid_uniform_grid

W1 = WeightScheme.geometric(1.0)


def null_from(draws, seed=0):
    ref = simulate_null(5, (1, 1), W1, B=1, seed=seed)
    return NullDistribution(np.asarray(draws, dtype=float), ref.key)


def test_exhaustive_null_matches_enumeration():
    n = 3
    null = simulate_null(n, (1, 2), W1, exhaustive=True)
    assert null.B == 36
    assert null.key.exhaustive
    g1, g2 = default_grids(n, (1, 2))
    expected = []
    for sigma in itertools.permutations(range(n)):
        expected += [textbook_dcov2(g1.points, g2.points[list(sigma)])] * 6
    np.testing.assert_allclose(np.sort(null.draws), np.sort(expected), atol=1e-14)


def test_simulation_is_deterministic_and_thread_independent():
    a = simulate_null(30, (2, 1, 1), W1, B=40, seed=3)
    b = simulate_null(30, (2, 1, 1), W1, B=40, seed=3, workers=3)
    c = simulate_null(30, (2, 1, 1), W1, B=40, seed=4)
    assert np.array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, c.draws)


def test_prefix_property():
    # Draw b uses its own substream, so a longer run extends a shorter one.
    a = simulate_null(20, (1, 1), W1, B=10, seed=1)
    b = simulate_null(20, (1, 1), W1, B=25, seed=1)
    assert np.array_equal(a.draws, b.draws[:10])


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        simulate_null(10, (1, 2), W1, grids=default_grids(10, (1, 1)), B=5)
    with pytest.raises(ValueError):
        simulate_null(10, (1, 1), W1, B=0)
    with pytest.raises(ValueError):
        simulate_null(10, (1,), W1, B=5)


def test_p_value_by_hand():
    null = null_from([1.0, 2.0, 3.0, 4.0])
    res = p_value(3.5, null)
    assert res.rank_R == 2
    assert res.p_value == pytest.approx(2 / 5)
    assert p_value(10.0, null).p_value == pytest.approx(1 / 5)
    assert p_value(0.0, null).p_value == pytest.approx(1.0)


def test_ties_are_broken_by_coin():
    null = null_from([2.0] * 9)
    res = p_value(2.0, null)
    assert 1 <= res.rank_R <= 10
    assert res.rank_R == p_value(2.0, null).rank_R
    # A constant statistic against many tied zero draws lands mid-range.
    zeros = null_from(np.zeros(999))
    assert 0.4 < p_value(0.0, zeros).p_value < 0.6


def test_quantile_cutoff_by_hand():
    null = null_from(np.arange(1.0, 100.0))
    assert quantile_cutoff(null, 0.05) == 95.0
    assert quantile_cutoff(null, 0.5) == 50.0
    with pytest.raises(ValueError):
        quantile_cutoff(null, 1.0)


def test_reject_agrees_with_rank_rule():
    null = null_from(np.arange(1.0, 200.0))
    for stat in [150.5, 189.5, 190.5, 195.5, 250.0]:
        res = p_value(stat, null, alpha=0.05)
        assert res.reject == (res.rank_R <= 0.05 * 200)


def test_cache_round_trip(tmp_path):
    cache = NullCache(tmp_path, memory=False)
    null = simulate_null(15, (1, 2), W1, B=30, seed=2)
    path = cache.store(null)
    assert path.exists() and path.parent == tmp_path
    back = cache.load(null.key)
    assert np.array_equal(back.draws, null.draws)
    payload = json.loads(path.read_text())
    assert payload["version"] == CACHE_VERSION
    assert not any(p.name.startswith(".tmp") for p in tmp_path.iterdir())


def test_cache_corruption_detected(tmp_path):
    cache = NullCache(tmp_path, memory=False)
    null = simulate_null(15, (1, 1), W1, B=10, seed=0)
    path = cache.store(null)
    payload = json.loads(path.read_text())
    payload["draws"][0] = (1.0).hex()
    path.write_text(json.dumps(payload))
    with pytest.raises(ChecksumMismatch):
        cache.load(null.key)
    path.write_text("{not json")
    with pytest.raises(ChecksumMismatch):
        cache.load(null.key)


def test_cache_version_and_miss(tmp_path):
    cache = NullCache(tmp_path, memory=False)
    null = simulate_null(15, (1, 1), W1, B=10, seed=0)
    path = cache.store(null)
    payload = json.loads(path.read_text())
    payload["version"] = CACHE_VERSION + 1
    path.write_text(json.dumps(payload))
    with pytest.raises(CacheMiss):
        cache.load(null.key)
    other = simulate_null(15, (1, 1), W1, B=11, seed=0)
    with pytest.raises(CacheMiss):
        cache.load(other.key)


def test_get_or_simulate_reuses(tmp_path):
    cache = NullCache(tmp_path)
    a = cache.get_or_simulate(12, (1, 1), W1, B=20, seed=5)
    b = NullCache(tmp_path).get_or_simulate(12, (1, 1), W1, B=20, seed=5)
    assert np.array_equal(a.draws, b.draws)
    assert len(list(tmp_path.glob("*.json"))) == 1


def test_key_separates_grids_and_weights(tmp_path):
    cache = NullCache(tmp_path)
    iid = (iid_uniform_grid(12, 1, 1), iid_uniform_grid(12, 1, 2))
    a = cache.get_or_simulate(12, (1, 1), W1, B=10)
    b = cache.get_or_simulate(12, (1, 1), W1, grids=iid, B=10)
    c = cache.get_or_simulate(12, (1, 1), WeightScheme.explicit([2.0]), B=10)
    assert len({a.key.digest(), b.key.digest(), c.key.digest()}) == 3


def test_in_memory_cache_never_writes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cache = NullCache.in_memory()
    a = cache.get_or_simulate(10, (1, 1), W1, B=5)
    assert cache.load(a.key) is a
    assert list(tmp_path.iterdir()) == []


def test_default_cache_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("RJDCOV_CACHE_DIR", str(tmp_path))
    assert default_cache_dir() == tmp_path
    monkeypatch.delenv("RJDCOV_CACHE_DIR")
    assert str(default_cache_dir()) == ".rjdcov-cache"

"""Synthetic load/price generation: shapes, correlations, determinism."""

import numpy as np
import pytest

from storageshare.dataio import read_loads, read_prices
from storageshare.synthetic import (
    gen_synthetic,
    synth_series,
    tou_schedule,
    write_series,
)


def test_series_are_deterministic():
    a = synth_series("duck", "conflicting", 3, 24, 42)
    b = synth_series("duck", "conflicting", 3, 24, 42)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    c = synth_series("duck", "conflicting", 3, 24, 43)
    assert not np.array_equal(a[0], c[0])


def test_duck_profile_has_trough_and_evening_ramp():
    loads, _, _ = synth_series("duck", "conforming", 1, 48, 0)
    prof = loads[0]
    midday = prof[int(0.54 * 48)]
    evening = prof[int(0.85 * 48)]
    morning = prof[int(0.33 * 48)]
    assert evening > morning > midday
    assert loads.min() >= 0.0


def test_typical_profile_has_two_humps():
    loads, _, _ = synth_series("typical", "conforming", 1, 48, 0)
    prof = loads[0]
    morning = prof[int(0.33 * 48)]
    evening = prof[int(0.80 * 48)]
    midday = prof[int(0.55 * 48)]
    night = prof[2]
    assert morning > midday and evening > midday
    assert morning > night and evening > night


def test_tou_has_three_increasing_tiers():
    tou = tou_schedule(48)
    tiers = np.unique(tou)
    assert len(tiers) == 3
    assert tiers[0] == tou[0]  # night is the cheapest band
    assert tou[int(0.75 * 48)] == tiers[2]  # evening is the peak band


def test_conforming_prices_track_aggregate_load():
    rng = np.random.default_rng(20260819)
    for seed in rng.integers(0, 10_000, 10):
        for profile in ("duck", "typical"):
            loads, lmp, _ = synth_series(profile, "conforming", 4, 24, int(seed))
            corr = np.corrcoef(loads.sum(axis=0), lmp)[0, 1]
            assert corr > 0.5, f"seed {seed} {profile}: corr {corr}"


def test_conflicting_prices_oppose_retail():
    rng = np.random.default_rng(20260819)
    for seed in rng.integers(0, 10_000, 10):
        loads, lmp, tou = synth_series("duck", "conflicting", 4, 24, int(seed))
        corr = np.corrcoef(tou, lmp)[0, 1]
        assert corr < -0.3, f"seed {seed}: corr {corr}"


def test_written_files_parse_back(tmp_path):
    lpath = tmp_path / "loads.csv"
    ppath = tmp_path / "prices.csv"
    loads, lmp, tou = synth_series("typical", "conforming", 3, 12, 9)
    write_series(loads, lmp, tou, lpath, ppath)
    np.testing.assert_allclose(read_loads(lpath), loads, rtol=1e-9, atol=1e-12)
    back_lmp, back_tou = read_prices(ppath)
    np.testing.assert_allclose(back_lmp, lmp, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(back_tou, tou, rtol=1e-9, atol=1e-12)


def test_gen_synthetic_is_byte_stable(tmp_path):
    first = (tmp_path / "l1.csv", tmp_path / "p1.csv")
    second = (tmp_path / "l2.csv", tmp_path / "p2.csv")
    gen_synthetic("duck", "conflicting", 2, 8, 7, *first)
    gen_synthetic("duck", "conflicting", 2, 8, 7, *second)
    assert first[0].read_bytes() == second[0].read_bytes()
    assert first[1].read_bytes() == second[1].read_bytes()


def test_bad_recipes_are_rejected():
    with pytest.raises(ValueError):
        synth_series("sine", "conforming", 2, 8, 0)
    with pytest.raises(ValueError):
        synth_series("duck", "random", 2, 8, 0)
    with pytest.raises(ValueError):
        synth_series("duck", "conforming", 0, 8, 0)
    with pytest.raises(ValueError):
        synth_series("duck", "conforming", 2, 0, 0)

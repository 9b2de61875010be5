import dataclasses

import numpy as np
import pytest
from scipy import stats

from modalnode.excitation import (
    ParameterRanges,
    PluckParams,
    draw_trajectory_params,
    pluck_value,
    sample_pluck_sequence,
    trajectory_rng,
)


def test_pluck_values():
    p = PluckParams(2.5e4, 1e-3, 0.3)
    assert pluck_value(p, 0.0) == 0.0
    assert pluck_value(p, 1e-3) == pytest.approx(2.5e4, rel=1e-15)
    assert pluck_value(p, 0.5e-3) == pytest.approx(1.25e4, rel=1e-12)
    assert pluck_value(p, 1.0001e-3) == 0.0
    assert pluck_value(p, -1e-6) == 0.0


def test_pluck_support_and_peak():
    p = PluckParams(3e4, 1.3e-3, 0.5)
    t = np.linspace(-1e-3, 5e-3, 10001)
    v = pluck_value(p, t)
    assert np.all(v[(t > p.duration) | (t < 0)] == 0)
    assert v.max() <= p.amplitude


def test_sample_count_at_88_2_khz():
    p = PluckParams(2e4, 1e-3, 0.5)
    seq = sample_pluck_sequence(p, 88200.0, 500)
    expected = sum(1 for n in range(1, 500) if n / 88200.0 <= 1e-3)  # enumeration oracle
    assert expected == 88
    assert seq[0] == 0.0
    assert np.count_nonzero(seq) == expected
    assert np.all(seq[1 : expected + 1] > 0) and np.all(seq[expected + 1 :] == 0)
    assert np.array_equal(sample_pluck_sequence(p, 88200.0, 1), [0.0])


def test_doubling_rate_is_pointwise():
    p = PluckParams(2e4, 1.1e-3, 0.5)
    coarse = sample_pluck_sequence(p, 44100.0, 200)
    fine = sample_pluck_sequence(p, 88200.0, 400)
    assert np.array_equal(fine[::2], coarse)


def test_pluck_params_validated():
    with pytest.raises(ValueError):
        PluckParams(0.0, 1e-3, 0.5)
    with pytest.raises(ValueError):
        PluckParams(1.0, 1e-3, 1.0)


def test_degenerate_intervals_and_table1_draws():
    r = ParameterRanges()
    for i in range(50):
        s, p, x_o = draw_trajectory_params(r, trajectory_rng(3, i))
        assert s.gamma == 123.4 and s.kappa == 1.01 and s.sigma0 == 3.0 and s.sigma1 == 2e-4
        assert 0.1 <= p.position <= 0.9 and 0.1 <= x_o <= 0.9
        assert 2e4 <= p.amplitude <= 3e4 and 0.5e-3 <= p.duration <= 1.5e-3


def test_draws_deterministic():
    r = ParameterRanges(gamma=(130.0, 246.0))
    a = [draw_trajectory_params(r, trajectory_rng(7, i)) for i in range(5)]
    b = [draw_trajectory_params(r, trajectory_rng(7, i)) for i in range(5)]
    assert a == b
    c = [draw_trajectory_params(r, trajectory_rng(8, i)) for i in range(5)]
    assert a != c


def test_excitation_position_uniform():
    r = ParameterRanges()
    xs = [draw_trajectory_params(r, trajectory_rng(11, i))[1].position for i in range(10000)]
    res = stats.kstest(xs, stats.uniform(loc=0.1, scale=0.8).cdf)
    assert res.pvalue > 0.01


def test_ranges_json_round_trip(tmp_path):
    r = ParameterRanges(gamma=(130.0, 246.0), kappa=(1.01, 1.1), sigma0=2.0, fs=96000.0, duration=3.0, seed=42)
    path = tmp_path / "ranges.json"
    r.save(path)
    assert ParameterRanges.load(path) == r
    with pytest.raises(ValueError):
        ParameterRanges.from_dict(r.to_dict() | {"bogus": 1})


def test_ranges_validation():
    with pytest.raises(ValueError):
        ParameterRanges(gamma=(200.0, 100.0))
    with pytest.raises(ValueError):
        dataclasses.replace(ParameterRanges(), x_e=(-0.1, 0.5))

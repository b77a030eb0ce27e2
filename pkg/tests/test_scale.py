import numpy as np
import pytest

from margint.data import Dataset
from margint.errors import (DegenerateScaleError, MargintError,
                            WindowEmptyError)
from margint.scale import (MAD_NORMAL_CONSTANT, ScaleEstimate, local_median,
                           mad, residual_scale)

from conftest import make_rng, uniform_dataset


def test_mad_hand_values():
    v = [1.0, 2.0, 3.0, 4.0, 100.0]
    # median 3, abs deviations (2,1,0,1,97) -> median 1
    assert mad(v) == pytest.approx(1.0)
    assert mad(v, consistency=True) == pytest.approx(1.4826)
    assert MAD_NORMAL_CONSTANT == 1.4826
    assert mad([5.0]) == 0.0
    with pytest.raises(MargintError):
        mad([])


def test_mad_equivariance():
    rng = make_rng(1)
    v = rng.standard_normal(101)
    for a, b in ((2.0, 3.0), (-0.5, 10.0)):
        assert mad(a * v + b) == pytest.approx(abs(a) * mad(v), rel=1e-12)


def test_mad_normal_consistency():
    rng = make_rng(2)
    v = rng.standard_normal(20000)
    assert mad(v, consistency=True) == pytest.approx(1.0, abs=0.03)


def test_local_median_box_window():
    x = np.array([[0.0], [0.1], [0.2], [0.9]])
    y = np.array([1.0, 2.0, 3.0, 50.0])
    ds = Dataset(x, y, np.ones(4))
    # window around 0.1 with half-width 0.1 catches the first three points
    assert local_median(ds, [0.1], 0.1) == pytest.approx(2.0)
    with pytest.raises(WindowEmptyError):
        local_median(ds, [0.5], 0.05)


def test_local_median_ignores_missing():
    x = np.array([[0.0], [0.05], [0.1]])
    y = np.array([1.0, np.nan, 3.0])
    ds = Dataset(x, y, np.array([1, 0, 1]))
    assert local_median(ds, [0.05], 0.1) == pytest.approx(2.0)


def test_residual_scale_recovers_noise_level():
    ds = uniform_dataset(2000, 1, seed=9, noise=1.0,
                         fn=lambda x: np.sin(2 * np.pi * x[:, 0]))
    s = residual_scale(ds, 0.05)
    assert s.is_global
    assert 0.85 <= s.value <= 1.15


def test_residual_scale_resists_contamination():
    ds = uniform_dataset(1000, 1, seed=11, noise=0.5)
    y = ds.y.copy()
    rng = make_rng(12)
    bad = rng.random(1000) < 0.2
    y[bad] = 50.0
    contaminated = Dataset(ds.x, y, ds.delta)
    s0 = residual_scale(ds, 0.05).value
    s1 = residual_scale(contaminated, 0.05).value
    assert s1 < 2.0 * s0  # gross errors barely move the estimate


def test_residual_scale_degenerate():
    ds = uniform_dataset(100, 1, seed=3, fn=lambda x: np.zeros(len(x)))
    with pytest.raises(DegenerateScaleError):
        residual_scale(ds, 0.2)


def test_residual_scale_local_mode():
    ds = uniform_dataset(500, 1, seed=21, noise=1.0)
    s = residual_scale(ds, 0.2, mode="local")
    assert not s.is_global
    val = s.at(np.array([0.5]))
    assert 0.5 < val < 2.0
    with pytest.raises(MargintError):
        residual_scale(ds, 0.2, mode="banana")


def test_scale_estimate_container():
    fixed = ScaleEstimate.fixed(2.5)
    assert fixed.is_global and fixed.at([0.0]) == 2.5
    loc = ScaleEstimate.local(lambda x: 1.0 + float(x[0]))
    assert loc.at(np.array([0.5])) == pytest.approx(1.5)
    with pytest.raises(MargintError):
        ScaleEstimate.fixed(-1.0)
    with pytest.raises(MargintError):
        ScaleEstimate(value=1.0, fn=lambda x: 1.0)
    bad = ScaleEstimate.local(lambda x: 0.0)
    with pytest.raises(DegenerateScaleError):
        bad.at(np.zeros(1))

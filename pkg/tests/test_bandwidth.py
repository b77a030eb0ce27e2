import numpy as np
import pytest

from margint.bandwidth import (CvConfig, check_rate_window, cv_classical,
                               cv_robust, kfold_partition)
from margint.data import EvaluationGrid
from margint.errors import GridCoverageError, MargintError
from margint.integration import IntegrationMeasure, fit_additive
from margint.kernels import BandwidthSpec, KernelSpec
from margint.localfit import LocalFitConfig
from margint.losses import LossSpec
from margint.scale import ScaleEstimate

from conftest import uniform_dataset

EP = KernelSpec("epanechnikov")
BOX2 = np.array([[0.0, 1.0], [0.0, 1.0]])


def make_problem(n=250, seed=1, noise=0.3):
    ds = uniform_dataset(n, 2, seed=seed, noise=noise,
                         fn=lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2)
    measure = IntegrationMeasure(kind="uniform_box", box=BOX2, m=60,
                                 seed=(seed, 17))
    grids = [EvaluationGrid(a, np.linspace(0, 1, 21)) for a in (1, 2)]
    return ds, measure, grids


def test_kfold_partition_properties():
    labels = kfold_partition(103, 5, seed=3)
    sizes = np.bincount(labels, minlength=5)
    assert labels.size == 103
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(labels, kfold_partition(103, 5, seed=3))
    assert not np.array_equal(labels, kfold_partition(103, 5, seed=4))
    with pytest.raises(MargintError):
        kfold_partition(3, 5, seed=0)


def test_rate_window_endpoints():
    # q = 1, ell = 4, d = 4: window ((q+1)/(ell(2q+3)), (q+1)/((2q+3)(d-1)))
    chk = check_rate_window(1, 4, 4, 0.12)
    assert chk.ok
    assert chk.lower == pytest.approx(0.1)
    assert chk.upper == pytest.approx(2 / 15)        # 0.1333...
    assert not check_rate_window(1, 4, 4, 0.05).ok
    assert not check_rate_window(1, 4, 4, 0.2).ok
    # d = 2 with the second-order kernel: window (0.2, 0.4)
    chk2 = check_rate_window(1, 2, 2, 0.3)
    assert chk2.ok
    assert chk2.lower == pytest.approx(0.2)
    assert chk2.upper == pytest.approx(0.4)


def test_rate_window_kernel_order_violation():
    # ell < d leaves no admissible exponent
    chk = check_rate_window(1, 2, 4, 0.1)
    assert not chk.ok and not chk.kernel_order_ok
    assert "empty" in chk.message
    chk4 = check_rate_window(1, 4, 2, 0.3)
    assert chk4.kernel_order_ok
    assert chk4.upper == pytest.approx(0.4)
    with pytest.raises(MargintError):
        check_rate_window(1, 2, 1, 0.1)


def test_cv_config_validation():
    with pytest.raises(MargintError):
        CvConfig(grid_h=(), grid_htilde=(0.1,))
    with pytest.raises(MargintError):
        CvConfig(grid_h=(0.1,), grid_htilde=(0.0,))
    with pytest.raises(MargintError):
        CvConfig(grid_h=(0.1,), grid_htilde=(0.1,), k=1)
    with pytest.raises(MargintError):
        CvConfig(grid_h=(0.1,), grid_htilde=(0.1,), criterion="other")


def test_singleton_grid_classical_matches_direct_oracle():
    ds, measure, grids = make_problem(seed=5)
    cv = CvConfig(grid_h=(0.25,), grid_htilde=(0.25,), k=4, seed=9)
    res = cv_classical(ds, cv, measure, grids, fixed_scale=ScaleEstimate.fixed(1.0))
    assert res.best == (0.25, 0.25)

    # direct recomputation of the pooled held-out MSE
    labels = kfold_partition(ds.n, 4, seed=9)
    sq, used = 0.0, 0
    for k in range(4):
        train = ds.subset(np.flatnonzero(labels != k))

        def cfg_for(alpha):
            return LocalFitConfig(alpha=alpha, q=1,
                                  bw=BandwidthSpec(0.25, 0.25),
                                  kernel_alpha=EP, kernel_nuisance=EP,
                                  loss=LossSpec("ls"))

        fit = fit_additive(train, cfg_for, ScaleEstimate.fixed(1.0), measure,
                           grids, location="mean")
        for i in np.flatnonzero(labels == k):
            try:
                sq += (ds.y[i] - fit.predict(ds.x[i])) ** 2
                used += 1
            except (GridCoverageError, MargintError):
                pass
    assert res.table[(0.25, 0.25)] == pytest.approx(sq / used, rel=1e-12)


def test_cv_determinism_and_tie_break():
    ds, measure, grids = make_problem(seed=6)
    cv = CvConfig(grid_h=(0.2, 0.3), grid_htilde=(0.2, 0.3), k=5, seed=2)
    r1 = cv_classical(ds, cv, measure, grids,
                      fixed_scale=ScaleEstimate.fixed(1.0))
    r2 = cv_classical(ds, cv, measure, grids,
                      fixed_scale=ScaleEstimate.fixed(1.0))
    assert r1.best == r2.best
    assert r1.table == r2.table
    assert len(r1.table) == 4
    assert r1.best in r1.table
    assert r1.table[r1.best] == min(r1.table.values())
    # ties break toward the smaller bandwidths (exercised synthetically)
    from margint.bandwidth import CvResult
    tab = {(0.1, 0.1): 1.0, (0.2, 0.1): 1.0}
    assert min(sorted(tab), key=lambda k: (tab[k], k)) == (0.1, 0.1)


def test_cv_robust_runs_and_prefers_reasonable_h():
    ds, measure, grids = make_problem(n=300, seed=7, noise=0.3)
    # contaminate a slice of responses
    y = ds.y.copy()
    y[:30] += 25.0
    from margint.data import Dataset
    ds = Dataset(ds.x, y, ds.delta)
    cv = CvConfig(grid_h=(0.15, 0.3), grid_htilde=(0.2,), k=5, seed=11)
    res = cv_robust(ds, cv, measure, grids, scale_bw=0.15)
    assert res.best[0] in (0.15, 0.3)
    assert all(np.isfinite(v) or (k in res.infeasible)
               for k, v in res.table.items())


def test_cv_all_infeasible_raises():
    ds, measure, grids = make_problem(n=60, seed=8)
    # h far too small: most held-out predictions fail
    cv = CvConfig(grid_h=(0.005,), grid_htilde=(0.005,), k=5, seed=1)
    with pytest.raises(MargintError):
        cv_classical(ds, cv, measure, grids,
                     fixed_scale=ScaleEstimate.fixed(1.0))

import json

import numpy as np
import pytest

from margint.errors import MargintError
from margint.kernels import BandwidthSpec
from margint.losses import LossSpec
from margint.simulate import (EstimatorSpec, ScenarioConfig,
                              default_scale_bandwidth, design_box,
                              gen_dataset, ise, missing_probability_p2,
                              run_study, trimmed_mean, true_components)


def test_generation_determinism():
    cfg = ScenarioConfig(design="d2", n=100, contamination="c1", seed=42)
    d1, _ = gen_dataset(cfg)
    d2, _ = gen_dataset(cfg)
    assert np.array_equal(d1.x, d2.x)
    assert np.array_equal(d1.y, d2.y, equal_nan=True)
    d3, _ = gen_dataset(ScenarioConfig(design="d2", n=100,
                                       contamination="c1", seed=43))
    assert not np.array_equal(d1.y, d3.y)


def test_contaminations_share_clean_stream():
    # same seed: the clean scenario and c1 agree off the contaminated rows
    c0, _ = gen_dataset(ScenarioConfig(design="d2", n=400, seed=5))
    c1, _ = gen_dataset(ScenarioConfig(design="d2", n=400,
                                       contamination="c1", seed=5))
    assert np.array_equal(c0.x, c1.x)
    same = np.isclose(c0.y, c1.y)
    frac_outliers = 1 - same.mean()
    assert 0.08 <= frac_outliers <= 0.22  # nominal 15%
    assert np.all(c1.y[~same] > 5.0)      # shifted to the slippage point


def test_c2_c3_regions():
    c2, _ = gen_dataset(ScenarioConfig(design="d2", n=3000,
                                       contamination="c2", seed=6))
    c0, _ = gen_dataset(ScenarioConfig(design="d2", n=3000, seed=6))
    moved = ~np.isclose(c0.y, c2.y)
    assert np.all(np.all((c2.x[moved] >= 0.2) & (c2.x[moved] <= 0.29),
                         axis=1))
    c3, _ = gen_dataset(ScenarioConfig(design="d2", n=3000,
                                       contamination="c3", seed=6))
    moved3 = ~np.isclose(c0.y, c3.y)
    assert np.all(np.all((c3.x[moved3] >= 0.2) & (c3.x[moved3] <= 0.5),
                         axis=1))
    inside = np.all((c3.x >= 0.2) & (c3.x <= 0.5), axis=1)
    rate = moved3[inside].mean()
    assert 0.2 <= rate <= 0.4  # nominal 30% inside the square


def test_p2_missing_rate():
    cfg = ScenarioConfig(design="d2", n=20000, missing="p2", seed=7)
    ds, _ = gen_dataset(cfg)
    # E p2 over the design is about 0.685
    assert ds.delta.mean() == pytest.approx(0.685, abs=0.02)
    assert np.all(np.isnan(ds.y[ds.delta == 0]))
    p = missing_probability_p2(np.array([[0.0, 0.0]]))
    assert p[0] == pytest.approx(0.4 + 0.5 * np.cos(0.2) ** 2)


def test_true_components_integrate_to_zero():
    for design in ("d2", "d4"):
        box = design_box(design)
        for j, g in enumerate(true_components(design)):
            lo, hi = box[j]
            xs = np.linspace(lo, hi, 200001)
            avg = np.trapezoid(g(xs), xs) / (hi - lo)
            assert avg == pytest.approx(0.0, abs=1e-3)


def test_scenario_validation():
    with pytest.raises(MargintError):
        ScenarioConfig(design="d3", n=10)
    with pytest.raises(MargintError):
        ScenarioConfig(design="d4", n=10, contamination="c2")
    with pytest.raises(MargintError):
        ScenarioConfig(design="d4", n=10, missing="p2")
    assert ScenarioConfig(design="d2", n=10).sigma0 == 0.5
    assert ScenarioConfig(design="d4", n=10).sigma0 == 0.15


def test_trimmed_mean_examples():
    v = np.arange(1, 11, dtype=float)  # 1..10
    assert trimmed_mean(v, 0.0) == pytest.approx(5.5)
    # trim 10%: drop 1 value each side
    assert trimmed_mean(v, 0.1) == pytest.approx(np.mean(v[1:9]))
    assert trimmed_mean(v, 0.5) == pytest.approx(5.5)  # median
    with pytest.raises(MargintError):
        trimmed_mean([], 0.1)
    with pytest.raises(MargintError):
        trimmed_mean([1.0, 2.0], 0.4)  # everything trimmed
    with pytest.raises(MargintError):
        trimmed_mean(v, 0.7)


def test_ise_callable_and_hand_value():
    cfg = ScenarioConfig(design="d2", n=50, seed=8)
    ds, truths = gen_dataset(cfg)

    def truth_full(x):
        return truths[0](x[:, 0]) + truths[1](x[:, 1])

    # a constant offset of 0.3 has ISE 0.09 exactly
    off = lambda x: truth_full(x) + 0.3
    assert ise(off, truth_full, ds) == pytest.approx(0.09, rel=1e-12)


def test_default_scale_bandwidth():
    assert default_scale_bandwidth("d2", 500) == 0.1
    assert default_scale_bandwidth("d4", 500) == pytest.approx(0.93)
    assert default_scale_bandwidth("d4", 200) > 0.93


def test_small_study_end_to_end():
    cfg = ScenarioConfig(design="d2", n=150, contamination="c0", seed=0)
    estimators = [
        EstimatorSpec("classical", LossSpec("ls"), BandwidthSpec(0.15, 0.15)),
        EstimatorSpec("robust", LossSpec("huber"), BandwidthSpec(0.15, 0.15)),
    ]
    report = run_study(cfg, 3, estimators, base_seed=77, m_integration=80,
                       grid_size=21)
    assert report.completed() == 3
    assert report.estimator_names == ["classical", "robust"]
    assert set(report.targets) == {"g", "g1", "g2"}
    for name in report.estimator_names:
        for t in report.targets:
            vals = report.ise_values[name][t]
            assert len(vals) == 3
            assert all(np.isfinite(vals))
    summ = report.summaries()
    recomputed = float(np.median(report.ise_values["robust"]["g"]))
    assert summ["robust"]["g"]["medise"] == pytest.approx(recomputed)
    recomputed_mean = float(np.mean(report.ise_values["classical"]["g1"]))
    assert summ["classical"]["g1"]["mise"] == pytest.approx(recomputed_mean)
    # serialization round trips
    payload = json.loads(report.to_json())
    assert payload["n_reps"] == 3
    csv_text = report.summary_csv()
    assert csv_text.startswith("statistic,estimator,g,g1,g2")
    comp_text = report.components_csv()
    assert comp_text.splitlines()[0] == "estimator,component,x,value"
    # mean curves have one value per grid point
    assert len(report.component_means["robust"]["g1"]) == 21


def test_study_reproducibility():
    cfg = ScenarioConfig(design="d2", n=120, seed=0)
    est = [EstimatorSpec("robust", LossSpec("huber"),
                         BandwidthSpec(0.15, 0.15))]
    r1 = run_study(cfg, 2, est, base_seed=9, m_integration=60, grid_size=11)
    r2 = run_study(cfg, 2, est, base_seed=9, m_integration=60, grid_size=11)
    assert r1.ise_values == r2.ise_values
    r3 = run_study(cfg, 2, est, base_seed=10, m_integration=60, grid_size=11)
    assert r1.ise_values != r3.ise_values

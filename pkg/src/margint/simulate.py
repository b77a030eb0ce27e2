"""Monte Carlo harness: data generation, contamination, ISE metrics.

Two designs are built in: a bivariate uniform design on [0,1]^2 with a
quadratic and a sine component (error scale 0.5), and a four-dimensional
uniform design on [-3,3]^4 (error scale 0.15).  Contamination schemes add
gross errors globally (c1), on the small square [0.2,0.29]^2 (c2) or as a
30% mixture on [0.2,0.5]^2 (c3).  Missingness "p2" uses
p(x) = 0.4 + 0.5 cos^2(x1 + 0.2).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, EvaluationGrid
from .errors import MargintError
from .integration import (AdditiveFit, ComponentEstimate, IntegrationMeasure,
                          fit_additive, interp_component)
from .kernels import BandwidthSpec, KernelSpec
from .localfit import LocalFitConfig
from .losses import LossSpec
from .scale import ScaleEstimate, residual_scale

D2_BOX = np.array([[0.0, 1.0], [0.0, 1.0]])
D4_BOX = np.array([[-3.0, 3.0]] * 4)

C2_SQUARE = (0.2, 0.29)
C3_SQUARE = (0.2, 0.5)

_E3 = math.exp(3.0)


def _d2_g1(x):
    return 24.0 * (np.asarray(x) - 0.5) ** 2 - 2.0


def _d2_g2(x):
    return 2.0 * np.pi * np.sin(np.pi * np.asarray(x)) - 4.0


def _d4_g1(x):
    return np.asarray(x) ** 3 / 12.0


def _d4_g2(x):
    return np.sin(-np.asarray(x))


def _d4_g3(x):
    return np.asarray(x) ** 2 / 2.0 - 1.5


def _d4_g4(x):
    return np.exp(np.asarray(x)) / 4.0 - (_E3 - 1.0 / _E3) / 24.0


_DESIGNS = {
    "d2": {"box": D2_BOX, "components": (_d2_g1, _d2_g2), "sigma0": 0.5},
    "d4": {"box": D4_BOX, "components": (_d4_g1, _d4_g2, _d4_g3, _d4_g4),
           "sigma0": 0.15},
}


def missing_probability_p2(x):
    """p(x) = 0.4 + 0.5 cos^2(x1 + 0.2), defined on the d=2 design."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return 0.4 + 0.5 * np.cos(x[:, 0] + 0.2) ** 2


def true_components(design: str):
    return list(_DESIGNS[design]["components"])


def design_box(design: str) -> np.ndarray:
    return _DESIGNS[design]["box"]


@dataclass(frozen=True)
class ScenarioConfig:
    design: str
    n: int
    contamination: str = "c0"
    missing: str = "full"
    sigma0: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.design not in _DESIGNS:
            raise MargintError(f"unknown design {self.design!r}")
        if self.contamination not in ("c0", "c1", "c2", "c3"):
            raise MargintError(f"unknown contamination {self.contamination!r}")
        if self.missing not in ("full", "p2"):
            raise MargintError(f"unknown missingness {self.missing!r}")
        if self.design == "d4" and self.contamination in ("c2", "c3"):
            raise MargintError("c2/c3 are defined only for the d=2 design")
        if self.design == "d4" and self.missing == "p2":
            raise MargintError("p2 missingness is defined only for d=2")
        if self.n < 1:
            raise MargintError("sample size must be positive")
        if self.sigma0 is None:
            object.__setattr__(self, "sigma0", _DESIGNS[self.design]["sigma0"])


def gen_dataset(cfg: ScenarioConfig):
    """Generate one replication; returns (Dataset, component truth callables)."""
    spec = _DESIGNS[cfg.design]
    box = spec["box"]
    d = box.shape[0]
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([int(cfg.seed) & (2**63 - 1), 0])))
    x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((cfg.n, d))
    clean = cfg.sigma0 * rng.standard_normal(cfg.n)
    gross = rng.standard_normal(cfg.n)  # always drawn, for stream stability
    pick = rng.random(cfg.n)

    if cfg.contamination == "c0":
        u = clean
    elif cfg.contamination == "c1":
        u = np.where(pick < 0.15, 15.0 + 0.1 * gross, clean)
    elif cfg.contamination == "c2":
        lo, hi = C2_SQUARE
        region = np.all((x >= lo) & (x <= hi), axis=1)
        u = np.where(region, 10.0 + 0.1 * gross, clean)
    else:  # c3
        lo, hi = C3_SQUARE
        region = np.all((x >= lo) & (x <= hi), axis=1)
        u = np.where(region & (pick < 0.30), 15.0 + 0.1 * gross, clean)

    y = sum(g(x[:, j]) for j, g in enumerate(spec["components"])) + u
    if cfg.missing == "full":
        delta = np.ones(cfg.n, dtype=np.int64)
    else:
        p = missing_probability_p2(x)
        delta = (rng.random(cfg.n) < p).astype(np.int64)
    y = np.where(delta == 1, y, np.nan)
    return Dataset(x, y, delta), list(spec["components"])


def ise(estimate, truth, data: Dataset) -> float:
    """Average squared error over the observed design points.

    ``estimate`` is a ComponentEstimate (compared at the matching covariate
    column), an AdditiveFit, or a callable on covariate rows.
    """
    obs = data.delta == 1
    if not obs.any():
        raise MargintError("no observed responses")
    if isinstance(estimate, ComponentEstimate):
        xo = data.x[obs, estimate.alpha - 1]
        est = interp_component(estimate, xo, clamp=True)
        tru = np.asarray(truth(xo), dtype=float)
    elif isinstance(estimate, AdditiveFit):
        est = estimate.predict_many(data.x[obs], clamp=True)
        tru = np.asarray(truth(data.x[obs]), dtype=float)
    else:
        est = np.asarray(estimate(data.x[obs]), dtype=float)
        tru = np.asarray(truth(data.x[obs]), dtype=float)
    return float(np.mean((tru - est) ** 2))


def trimmed_mean(values, trim: float) -> float:
    """Symmetric trimmed mean; trim = 0.5 returns the median."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise MargintError("trimmed mean of an empty vector")
    if not 0.0 <= trim <= 0.5:
        raise MargintError("trim fraction must be in [0, 0.5]")
    if trim == 0.5:
        return float(np.median(v))
    k = math.ceil(trim * v.size)
    if 2 * k >= v.size:
        raise MargintError("all values trimmed")
    return float(v[k:v.size - k].mean())


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator: loss family plus fixed bandwidths."""

    name: str
    loss: LossSpec
    bw: BandwidthSpec


def default_scale_bandwidth(design: str, n: int) -> float:
    """Box half-width for the preliminary local-median regression."""
    if design == "d2":
        return 0.1
    # keep roughly five observed points per 4-d window as n varies
    return 0.93 * (500.0 / n) ** 0.25


@dataclass
class StudyReport:
    scenario: dict
    n_reps: int
    base_seed: int
    estimator_names: list
    targets: list
    ise_values: dict  # name -> target -> list of per-replication values
    failures: list  # (replication index, message)
    grid_points: dict  # alpha -> list
    component_means: dict  # name -> alpha -> list

    def completed(self) -> int:
        first = self.estimator_names[0]
        return len(self.ise_values[first]["g"])

    def summaries(self, trims=(0.01, 0.05)) -> dict:
        out = {}
        for name in self.estimator_names:
            out[name] = {}
            for target in self.targets:
                vals = np.asarray(self.ise_values[name][target])
                row = {"mise": float(vals.mean()),
                       "medise": float(np.median(vals))}
                for t in trims:
                    try:
                        row[f"trim{t:g}"] = trimmed_mean(vals, t)
                    except MargintError:
                        row[f"trim{t:g}"] = float("nan")
                out[name][target] = row
        return out

    def to_json(self) -> str:
        payload = {
            "scenario": self.scenario,
            "n_reps": self.n_reps,
            "base_seed": self.base_seed,
            "failures": [[int(r), m] for r, m in self.failures],
            "ise": self.ise_values,
            "summaries": self.summaries(),
            "grid_points": self.grid_points,
            "component_means": self.component_means,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def summary_csv(self) -> str:
        """Summary table: one row per (statistic, estimator), targets as columns."""
        lines = ["statistic,estimator," + ",".join(self.targets)]
        summ = self.summaries()
        for stat in ("mise", "medise", "trim0.01", "trim0.05"):
            for name in self.estimator_names:
                cells = [f"{summ[name][t][stat]:.6g}" for t in self.targets]
                lines.append(f"{stat},{name}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def components_csv(self) -> str:
        """Long-format mean component curves: estimator,component,x,value."""
        lines = ["estimator,component,x,value"]
        for name in self.estimator_names:
            for alpha_key, vals in sorted(self.component_means[name].items()):
                pts = self.grid_points[alpha_key]
                for xg, v in zip(pts, vals):
                    lines.append(f"{name},{alpha_key},{xg!r},{v!r}")
        return "\n".join(lines) + "\n"


def _replication(cfg: ScenarioConfig, rep: int, base_seed: int,
                 estimators, m_integration: int, grid_size: int,
                 scale_bw) -> dict:
    seed_r = base_seed ^ rep
    data, truths = gen_dataset(replace(cfg, seed=seed_r))
    box = design_box(cfg.design)
    d = box.shape[0]
    measure = IntegrationMeasure(kind="uniform_box", box=box,
                                 m=m_integration, seed=(seed_r, 17))
    grids = [EvaluationGrid(a + 1, np.linspace(box[a, 0], box[a, 1], grid_size))
             for a in range(d)]

    robust_scale = None
    if any(e.loss.family != "ls" for e in estimators):
        robust_scale = residual_scale(data, scale_bw)

    def truth_full(xmat):
        return sum(g(xmat[:, j]) for j, g in enumerate(truths))

    out = {}
    for est in estimators:
        scale = ScaleEstimate.fixed(1.0) if est.loss.family == "ls" \
            else robust_scale

        def cfg_for(alpha, _est=est):
            ka = KernelSpec("epanechnikov")
            kn = KernelSpec("epanechnikov") if d == 2 \
                else KernelSpec("fourth_order")
            return LocalFitConfig(alpha=alpha, q=1, bw=_est.bw,
                                  kernel_alpha=ka, kernel_nuisance=kn,
                                  loss=_est.loss)

        location = "mean" if est.loss.family == "ls" else "median"
        fit = fit_additive(data, cfg_for, scale, measure, grids,
                           location=location)
        row = {"g": ise(fit, truth_full, data)}
        curves = {}
        for j, comp in enumerate(fit.components, start=1):
            row[f"g{j}"] = ise(comp, truths[j - 1], data)
            curves[f"g{j}"] = comp.values.tolist()
        out[est.name] = {"ise": row, "curves": curves}
    return out


def run_study(cfg: ScenarioConfig, n_reps: int, estimators, base_seed: int,
              m_integration: int = 500, grid_size: int = 101,
              scale_bw: float | None = None, n_workers: int = 1) -> StudyReport:
    """Run the Monte Carlo study; failed replications are skipped and counted."""
    if n_reps < 1:
        raise MargintError("need at least one replication")
    estimators = list(estimators)
    if scale_bw is None:
        scale_bw = default_scale_bandwidth(cfg.design, cfg.n)
    box = design_box(cfg.design)
    d = box.shape[0]
    targets = ["g"] + [f"g{j}" for j in range(1, d + 1)]

    results: dict[int, dict] = {}
    failures: list = []
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futs = {rep: pool.submit(_replication, cfg, rep, base_seed,
                                     estimators, m_integration, grid_size,
                                     scale_bw)
                    for rep in range(n_reps)}
            for rep in range(n_reps):
                try:
                    results[rep] = futs[rep].result()
                except MargintError as exc:
                    failures.append((rep, str(exc)))
    else:
        for rep in range(n_reps):
            try:
                results[rep] = _replication(cfg, rep, base_seed, estimators,
                                            m_integration, grid_size, scale_bw)
            except MargintError as exc:
                failures.append((rep, str(exc)))

    if not results:
        raise MargintError("every replication failed")

    ise_values = {e.name: {t: [] for t in targets} for e in estimators}
    curve_sums = {e.name: {f"g{j}": None for j in range(1, d + 1)}
                  for e in estimators}
    for rep in sorted(results):
        for est in estimators:
            res = results[rep][est.name]
            for t in targets:
                ise_values[est.name][t].append(res["ise"][t])
            for j in range(1, d + 1):
                arr = np.asarray(res["curves"][f"g{j}"])
                prev = curve_sums[est.name][f"g{j}"]
                curve_sums[est.name][f"g{j}"] = arr if prev is None else prev + arr

    n_done = len(results)
    component_means = {
        name: {f"g{j}": (curve_sums[name][f"g{j}"] / n_done).tolist()
               for j in range(1, d + 1)}
        for name in curve_sums
    }
    grid_points = {f"g{a + 1}": np.linspace(box[a, 0], box[a, 1],
                                            grid_size).tolist()
                   for a in range(d)}
    return StudyReport(
        scenario={"design": cfg.design, "n": cfg.n,
                  "contamination": cfg.contamination, "missing": cfg.missing,
                  "sigma0": cfg.sigma0},
        n_reps=n_reps, base_seed=base_seed,
        estimator_names=[e.name for e in estimators], targets=targets,
        ise_values=ise_values, failures=failures, grid_points=grid_points,
        component_means=component_means)

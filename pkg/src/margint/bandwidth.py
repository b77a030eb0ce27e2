"""Bandwidth selection by K-fold cross-validation.

Both criteria refit the full additive model (all components plus location)
on each fold complement and score the held-out observed responses: the
classical criterion averages squared residuals, the robust criterion sums
squared fold medians and squared fold MADs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, EvaluationGrid
from .errors import GridCoverageError, MargintError
from .integration import IntegrationMeasure, fit_additive
from .kernels import BandwidthSpec, KernelSpec
from .localfit import LocalFitConfig
from .losses import LossSpec
from .scale import ScaleEstimate, mad, residual_scale

# fraction of held-out points allowed to fail before a pair is infeasible
_FAIL_LIMIT = 0.10


@dataclass(frozen=True)
class CvConfig:
    grid_h: tuple
    grid_htilde: tuple
    k: int = 5
    seed: int = 0
    criterion: str = "classical"
    extend_grid_once: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise MargintError("number of folds K must be >= 2")
        gh = tuple(float(h) for h in self.grid_h)
        gt = tuple(float(h) for h in self.grid_htilde)
        if not gh or not gt or min(gh) <= 0 or min(gt) <= 0:
            raise MargintError("bandwidth grids must be nonempty and positive")
        object.__setattr__(self, "grid_h", gh)
        object.__setattr__(self, "grid_htilde", gt)
        if self.criterion not in ("classical", "robust"):
            raise MargintError("criterion must be 'classical' or 'robust'")


@dataclass
class CvResult:
    best: tuple
    table: dict
    fold_sizes: list
    infeasible: set = field(default_factory=set)


@dataclass
class RateWindowCheck:
    ok: bool
    lower: float
    upper: float
    kernel_order_ok: bool
    message: str


def kfold_partition(n: int, k: int, seed) -> np.ndarray:
    """Fold labels 0..k-1 for indices 0..n-1; sizes differ by at most one."""
    if n < k:
        raise MargintError(f"cannot split n={n} into K={k} folds")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = np.arange(n) % k
    return labels


def check_rate_window(q: int, ell: int, d: int, tau: float) -> RateWindowCheck:
    """Check the nuisance-bandwidth exponent against its admissible window."""
    if d < 2:
        raise MargintError("the rate window is defined for d >= 2")
    lower = (q + 1) / (ell * (2 * q + 3))
    upper = (q + 1) / ((2 * q + 3) * (d - 1))
    kernel_ok = ell >= d
    if not kernel_ok:
        msg = (f"kernel order ell={ell} below dimension d={d}: "
               f"window ({lower:.6g}, {upper:.6g}) is empty")
        return RateWindowCheck(False, lower, upper, False, msg)
    if lower < tau < upper:
        return RateWindowCheck(True, lower, upper, True,
                               f"tau={tau} inside ({lower:.6g}, {upper:.6g})")
    return RateWindowCheck(False, lower, upper, True,
                           f"tau={tau} outside ({lower:.6g}, {upper:.6g})")


def _cv(data: Dataset, cv: CvConfig, loss: LossSpec,
        measure: IntegrationMeasure, grids, q: int,
        kernel_alpha: KernelSpec, kernel_nuisance: KernelSpec,
        scale_bw, fixed_scale) -> CvResult:
    labels = kfold_partition(data.n, cv.k, cv.seed)
    fold_sizes = [int((labels == k).sum()) for k in range(cv.k)]
    n_obs = int(data.delta.sum())

    def cfg_factory(h, htilde):
        bw = BandwidthSpec(h, htilde)

        def cfg_for(alpha):
            return LocalFitConfig(alpha=alpha, q=q, bw=bw,
                                  kernel_alpha=kernel_alpha,
                                  kernel_nuisance=kernel_nuisance, loss=loss)
        return cfg_for

    def evaluate(h, htilde):
        sq_sum, n_used, failed = 0.0, 0, 0
        robust_sum = 0.0
        for k in range(cv.k):
            train_idx = np.flatnonzero(labels != k)
            test_idx = np.flatnonzero(labels == k)
            train = data.subset(train_idx)
            if fixed_scale is not None:
                scale = fixed_scale
            elif loss.family == "ls":
                scale = ScaleEstimate.fixed(1.0)
            else:
                scale = residual_scale(train, scale_bw)
            location = "mean" if loss.family == "ls" else "median"
            try:
                fit = fit_additive(train, cfg_factory(h, htilde), scale,
                                   measure, grids, location=location)
            except MargintError:
                return np.inf, n_obs
            res = []
            for i in test_idx:
                if data.delta[i] != 1:
                    continue
                try:
                    res.append(data.y[i] - fit.predict(data.x[i]))
                except (GridCoverageError, MargintError):
                    failed += 1
            if cv.criterion == "classical":
                sq_sum += float(np.sum(np.square(res)))
                n_used += len(res)
            else:
                if not res:
                    return np.inf, n_obs
                med = float(np.median(res))
                robust_sum += med * med + mad(res) ** 2
        if failed > _FAIL_LIMIT * n_obs:
            return np.inf, failed
        if cv.criterion == "classical":
            if n_used == 0:
                return np.inf, failed
            return sq_sum / n_used, failed
        return robust_sum, failed

    def sweep(grid_h, grid_ht):
        table, infeasible = {}, set()
        for h in sorted(grid_h):
            for ht in sorted(grid_ht):
                val, _ = evaluate(h, ht)
                table[(h, ht)] = val
                if not np.isfinite(val):
                    infeasible.add((h, ht))
        return table, infeasible

    table, infeasible = sweep(cv.grid_h, cv.grid_htilde)
    if len(infeasible) == len(table):
        raise MargintError("every bandwidth pair was infeasible")

    def best_of(tab):
        best, best_val = None, np.inf
        for h in sorted({k[0] for k in tab}):
            for ht in sorted({k[1] for k in tab}):
                v = tab.get((h, ht), np.inf)
                if v < best_val:
                    best, best_val = (h, ht), v
        return best

    best = best_of(table)
    if cv.extend_grid_once and best[1] == max(cv.grid_htilde) \
            and len(cv.grid_htilde) > 1:
        spacing = np.diff(sorted(cv.grid_htilde)).mean()
        extra = [max(cv.grid_htilde) + spacing * (i + 1)
                 for i in range(len(cv.grid_htilde))]
        tab2, inf2 = sweep(cv.grid_h, extra)
        table.update(tab2)
        infeasible |= inf2
        best = best_of(table)
    return CvResult(best=best, table=table, fold_sizes=fold_sizes,
                    infeasible=infeasible)


def cv_classical(data: Dataset, cv: CvConfig, measure: IntegrationMeasure,
                 grids, q: int = 1,
                 kernel_alpha: KernelSpec = KernelSpec("epanechnikov"),
                 kernel_nuisance: KernelSpec = KernelSpec("epanechnikov"),
                 loss: LossSpec | None = None,
                 scale_bw=0.1, fixed_scale=None) -> CvResult:
    """Least-squares K-fold criterion; fits use the LS loss by default."""
    cv = CvConfig(cv.grid_h, cv.grid_htilde, cv.k, cv.seed, "classical",
                  cv.extend_grid_once)
    loss = loss if loss is not None else LossSpec("ls")
    return _cv(data, cv, loss, measure, grids, q, kernel_alpha,
               kernel_nuisance, scale_bw, fixed_scale)


def cv_robust(data: Dataset, cv: CvConfig, measure: IntegrationMeasure,
              grids, q: int = 1,
              kernel_alpha: KernelSpec = KernelSpec("epanechnikov"),
              kernel_nuisance: KernelSpec = KernelSpec("epanechnikov"),
              loss: LossSpec | None = None,
              scale_bw=0.1, fixed_scale=None) -> CvResult:
    """Robust K-fold criterion (fold median^2 + fold MAD^2), robust fits."""
    cv = CvConfig(cv.grid_h, cv.grid_htilde, cv.k, cv.seed, "robust",
                  cv.extend_grid_once)
    loss = loss if loss is not None else LossSpec("huber")
    return _cv(data, cv, loss, measure, grids, q, kernel_alpha,
               kernel_nuisance, scale_bw, fixed_scale)

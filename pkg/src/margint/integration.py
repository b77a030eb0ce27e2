"""Marginal integration over a product measure Q.

An additive component estimate at a grid point x_alpha is the average of the
local polynomial intercept beta_0(x_alpha, u) over M integration points u
drawn from the nuisance marginal of Q.  Components are empirically centered
(Q_alpha-sample mean subtracted) and the centering constants are folded into
the location estimate so that predictions are unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, EvaluationGrid
from .errors import (AllPointsFailedError, GridCoverageError, MargintError)
from .kernels import eval_kernel
from .localfit import (STATUS_OK, LocalFitConfig, _batch_fit)
from .scale import ScaleEstimate


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class IntegrationMeasure:
    """Monte Carlo approximation of the integration measure Q."""

    kind: str  # "uniform_box" | "explicit"
    box: np.ndarray | None = None  # (d, 2) lo/hi per coordinate
    sample: np.ndarray | None = None  # (M, d) draws from Q
    m: int = 500
    seed: int | None = None

    def __post_init__(self):
        if self.kind == "uniform_box":
            if self.box is None:
                raise MargintError("uniform_box measure requires a box")
            box = np.asarray(self.box, dtype=float)
            if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
                raise MargintError("box must be (d, 2) with lo < hi")
            object.__setattr__(self, "box", box)
            if self.m < 1:
                raise MargintError("integration sample size M must be >= 1")
            if self.seed is None:
                raise MargintError("uniform_box measure requires a seed")
        elif self.kind == "explicit":
            if self.sample is None:
                raise MargintError("explicit measure requires a sample matrix")
            smp = np.atleast_2d(np.asarray(self.sample, dtype=float))
            object.__setattr__(self, "sample", smp)
            object.__setattr__(self, "m", smp.shape[0])
        else:
            raise MargintError(f"unknown measure kind {self.kind!r}")

    @property
    def d(self) -> int:
        return self.box.shape[0] if self.kind == "uniform_box" else self.sample.shape[1]

    def points(self) -> np.ndarray:
        """The (M, d) integration sample; deterministic for a given seed."""
        if self.kind == "explicit":
            return self.sample
        rng = _rng(self.seed)
        lo, hi = self.box[:, 0], self.box[:, 1]
        return lo + (hi - lo) * rng.random((self.m, self.d))

    def coordinate_range(self, alpha: int) -> tuple[float, float]:
        if self.kind == "uniform_box":
            return float(self.box[alpha - 1, 0]), float(self.box[alpha - 1, 1])
        col = self.sample[:, alpha - 1]
        return float(col.min()), float(col.max())


@dataclass
class ComponentEstimate:
    """One additive component (or derivative) on an evaluation grid."""

    alpha: int
    nu: int
    grid: EvaluationGrid
    values: np.ndarray  # centered when nu = 0
    failures: list = field(default_factory=list)
    n_failed: np.ndarray | None = None  # dropped integration fits per node
    center: float = 0.0  # constant subtracted from the raw values

    def uncentered(self) -> np.ndarray:
        return self.values + self.center

    def valid_mask(self) -> np.ndarray:
        ok = np.isfinite(self.values)
        if self.failures:
            ok[np.asarray(self.failures, dtype=int)] = False
        return ok


def _valid_nodes(comp: ComponentEstimate):
    # flagged nodes (high drop fraction) still carry usable values; only
    # nodes where every integration fit failed are NaN and skipped here
    ok = np.isfinite(comp.values)
    if not ok.any():
        raise AllPointsFailedError(f"component {comp.alpha} has no valid grid nodes")
    return comp.grid.points[ok], comp.values[ok]


def interp_component(comp: ComponentEstimate, xq, clamp: bool = False,
                     uncentered: bool = False) -> np.ndarray:
    """Linear interpolation between valid grid nodes."""
    gx, gv = _valid_nodes(comp)
    if uncentered:
        gv = gv + comp.center
    xq = np.asarray(xq, dtype=float)
    if not clamp:
        out = (xq < gx[0]) | (xq > gx[-1])
        if np.any(out):
            raise GridCoverageError(
                f"coordinate outside grid range [{gx[0]}, {gx[-1]}] "
                f"for component {comp.alpha}"
            )
    return np.interp(xq, gx, gv)


def _nuisance_weights(data: Dataset, u: np.ndarray, cfg: LocalFitConfig):
    """(M, n) product of nuisance kernel weights times the delta mask."""
    h = cfg.bw.h_tilde
    w = np.ones((u.shape[0], data.n))
    for j in range(data.d):
        if (j + 1) == cfg.alpha:
            continue
        w *= eval_kernel(cfg.kernel_nuisance,
                         (data.x[None, :, j] - u[:, j, None]) / h) / h
    mask = (data.delta == 1) & ~np.isnan(data.y)
    return w * mask


def _estimate_raw(data: Dataset, cfg: LocalFitConfig, scale: ScaleEstimate,
                  measure: IntegrationMeasure, grid: EvaluationGrid, nu: int):
    if grid.component != cfg.alpha:
        raise MargintError("grid component must match cfg.alpha")
    if measure.d != data.d:
        raise MargintError("measure dimension must match the data")
    if not (0 <= nu <= cfg.q):
        raise MargintError("derivative order nu must be in 0..q")
    u = measure.points()
    wn = _nuisance_weights(data, u, cfg)
    xa = data.x[:, cfg.alpha - 1]
    ha = cfg.bw.h_alpha
    nfit = u.shape[0]

    if scale.is_global:
        svec_full = np.full(nfit, scale.value)

    gpts = grid.points
    values = np.full(gpts.size, np.nan)
    n_failed = np.zeros(gpts.size, dtype=np.int64)
    failures: list[int] = []
    for g, xg in enumerate(gpts):
        ka = eval_kernel(cfg.kernel_alpha, (xa - xg) / ha) / ha
        nz = np.flatnonzero((ka != 0.0) & (wn != 0.0).any(axis=0))
        if nz.size == 0:
            n_failed[g] = nfit
            failures.append(g)
            continue
        kw = wn[:, nz] * ka[nz]
        if scale.is_global:
            svec = svec_full
        else:
            svec = np.empty(nfit)
            for k in range(nfit):
                x_full = u[k].copy()
                x_full[cfg.alpha - 1] = xg
                svec[k] = scale.at(x_full)
        beta, status, _, _, _ = _batch_fit(
            data.y[nz], xa[nz] - xg, kw, cfg.loss, svec, cfg.q, ha,
            cfg.max_iter, cfg.tol, cfg.min_support)
        kept = status == STATUS_OK
        n_failed[g] = nfit - int(kept.sum())
        if kept.any():
            values[g] = float(math.factorial(nu)) * float(beta[kept, nu].mean())
        if n_failed[g] * 2 > nfit:
            failures.append(g)
    if not np.isfinite(values).any():
        raise AllPointsFailedError(
            f"all grid points failed for component {cfg.alpha}")
    return values, n_failed, failures, u


def estimate_component(data: Dataset, cfg: LocalFitConfig,
                       scale: ScaleEstimate, measure: IntegrationMeasure,
                       grid: EvaluationGrid) -> ComponentEstimate:
    """Centered marginal-integration estimate of one additive component."""
    values, n_failed, failures, u = _estimate_raw(
        data, cfg, scale, measure, grid, nu=0)
    raw = ComponentEstimate(alpha=cfg.alpha, nu=0, grid=grid, values=values,
                            failures=failures, n_failed=n_failed, center=0.0)
    # center on the alpha-marginal of the integration sample
    center = float(np.mean(interp_component(raw, u[:, cfg.alpha - 1],
                                            clamp=True)))
    return ComponentEstimate(alpha=cfg.alpha, nu=0, grid=grid,
                             values=values - center, failures=failures,
                             n_failed=n_failed, center=center)


def estimate_derivative(data: Dataset, cfg: LocalFitConfig,
                        scale: ScaleEstimate, measure: IntegrationMeasure,
                        grid: EvaluationGrid, nu: int) -> ComponentEstimate:
    """Marginal-integration estimate of the nu-th derivative (no centering)."""
    if nu < 1:
        raise MargintError("nu must be >= 1; use estimate_component for nu=0")
    values, n_failed, failures, _ = _estimate_raw(
        data, cfg, scale, measure, grid, nu=nu)
    return ComponentEstimate(alpha=cfg.alpha, nu=nu, grid=grid, values=values,
                             failures=failures, n_failed=n_failed, center=0.0)


def estimate_mu(data: Dataset, components, location: str = "median") -> float:
    """Location from the residuals of the uncentered marginal effects.

    ``location`` is the residual location estimator: "median" (robust
    default) or "mean" (the natural companion of the least-squares loss).
    """
    if location not in ("median", "mean"):
        raise MargintError("location must be 'median' or 'mean'")
    components = list(components)
    d = data.d
    if len(components) != d:
        raise MargintError("one component estimate per direction is required")
    obs = data.delta == 1
    total = np.zeros(int(obs.sum()))
    for comp in sorted(components, key=lambda c: c.alpha):
        total += interp_component(comp, data.x[obs, comp.alpha - 1],
                                  clamp=True, uncentered=True)
    res = data.y[obs] - total
    a_hat = float(np.median(res)) if location == "median" else float(res.mean())
    if d == 1:
        return a_hat
    return -a_hat / (d - 1)


def predict(components, mu: float, x) -> float:
    """Additive prediction mu + sum_alpha g_alpha(x_alpha) at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    out = mu
    for comp in components:
        out += float(interp_component(comp, x[comp.alpha - 1]))
    return out


@dataclass
class AdditiveFit:
    """A fitted additive model: centered components plus total location."""

    components: list
    mu: float  # total location entering predictions
    mu_location: float  # the -a_hat/(d-1) location estimate itself
    scale: ScaleEstimate

    def predict(self, x) -> float:
        return predict(self.components, self.mu, x)

    def predict_many(self, xmat, clamp: bool = False) -> np.ndarray:
        xmat = np.atleast_2d(np.asarray(xmat, dtype=float))
        out = np.full(xmat.shape[0], self.mu)
        for comp in self.components:
            out += interp_component(comp, xmat[:, comp.alpha - 1], clamp=clamp)
        return out


def fit_additive(data: Dataset, cfg_for_alpha, scale: ScaleEstimate,
                 measure: IntegrationMeasure, grids,
                 location: str = "median") -> AdditiveFit:
    """Fit every additive component and the location.

    cfg_for_alpha: callable alpha -> LocalFitConfig; grids: mapping or list of
    EvaluationGrid covering components 1..d; location: residual location
    estimator for the intercept ("median" or "mean").
    """
    grid_by_alpha = {g.component: g for g in grids}
    components = []
    for alpha in range(1, data.d + 1):
        cfg = cfg_for_alpha(alpha)
        if cfg.alpha != alpha:
            raise MargintError("cfg_for_alpha returned a mismatched alpha")
        components.append(
            estimate_component(data, cfg, scale, measure, grid_by_alpha[alpha]))
    mu_loc = estimate_mu(data, components, location=location)
    a_hat = mu_loc if data.d == 1 else -mu_loc * (data.d - 1)
    mu_total = sum(c.center for c in components) + a_hat
    return AdditiveFit(components=components, mu=float(mu_total),
                       mu_location=float(mu_loc), scale=scale)

"""Local polynomial M-fitting by iteratively reweighted least squares.

The polynomial is expanded only in the coordinate of interest (alpha); all
coordinates contribute kernel weights.  A vectorized batch engine solves many
fits sharing the same alpha-direction design (used heavily by the marginal
integration layer); ``local_m_fit`` is the single-point front end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import Dataset
from .errors import (InsufficientSupportError, MargintError,
                     SingularDesignError)
from .kernels import BandwidthSpec, KernelSpec, eval_kernel
from .losses import LossSpec
from .scale import ScaleEstimate

# per-fit status codes used by the batch engine
STATUS_OK = 0
STATUS_INSUFFICIENT = 1
STATUS_SINGULAR = 2
STATUS_NOCONV = 3

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class LocalFitConfig:
    alpha: int
    q: int
    bw: BandwidthSpec
    kernel_alpha: KernelSpec
    kernel_nuisance: KernelSpec
    loss: LossSpec
    max_iter: int = 100
    tol: float = 1e-8
    min_support: int | None = None

    def __post_init__(self):
        if self.alpha < 1:
            raise MargintError("alpha is 1-based and must be >= 1")
        if self.q < 0 or self.q > 5:
            raise MargintError("polynomial order q must be in 0..5")
        if not self.kernel_alpha.nonnegative:
            raise MargintError(
                "the kernel on the direction of interest must be nonnegative"
            )
        if not (self.tol > 0):
            raise MargintError("tol must be positive")
        ms = self.q + 2 if self.min_support is None else self.min_support
        if ms < self.q + 1:
            raise MargintError("min_support must be at least q+1")
        object.__setattr__(self, "min_support", ms)


@dataclass
class LocalFitResult:
    beta: np.ndarray
    score_norm: float
    iterations: int
    effective_n: int
    converged: bool = field(default=True)


def _weighted_median(y_sorted, w_sorted_abs):
    """Smallest y with cumulative |weight| >= half the total, per row."""
    cw = np.cumsum(w_sorted_abs, axis=1)
    total = cw[:, -1]
    # rows with zero total weight get index 0; callers mask them out
    target = 0.5 * total
    idx = np.argmax(cw >= target[:, None] - 1e-300, axis=1)
    return y_sorted[idx]


def _batch_irls(y, t, kw, loss, s, q, h_alpha, max_iter, tol, min_support,
                beta_init=None):
    """Solve F local M-fits sharing the design offsets t.

    y: (m,) responses, t: (m,) offsets X_alpha - x_alpha, kw: (F, m) signed
    kernel weights already masked by delta, s: (F,) scales.

    Returns (beta (F, q+1), status (F,), score_norm (F,), iters (F,),
    eff_n (F,)).
    """
    kw = np.atleast_2d(np.asarray(kw, dtype=float))
    nfit, m = kw.shape
    p = q + 1
    # columns with non-finite y carry zero weight in every fit, so zeroing
    # the response there is exact and keeps the matmuls NaN-free
    y = np.where(np.isfinite(y), y, 0.0)
    T = t[:, None] ** np.arange(p)
    # precomputed monomial products: normal equations become two matmuls
    jj, kk = np.triu_indices(p)
    TT = T[:, jj] * T[:, kk]
    Ty = T * y[:, None]
    hpow = h_alpha ** np.arange(p)
    abs_kw = np.abs(kw)
    mass = abs_kw.sum(axis=1)
    eff_n = np.count_nonzero(kw, axis=1)

    status = np.full(nfit, STATUS_NOCONV, dtype=np.int64)
    bad = eff_n < min_support
    status[bad] = STATUS_INSUFFICIENT

    beta = np.zeros((nfit, p))
    if beta_init is None:
        order = np.argsort(y, kind="stable")
        beta[:, 0] = _weighted_median(y[order], abs_kw[:, order])
    else:
        beta = np.array(beta_init, dtype=float)

    iters = np.zeros(nfit, dtype=np.int64)
    score_norm = np.full(nfit, np.inf)
    active = ~bad

    def scores(rows):
        r = (y[None, :] - beta[rows] @ T.T) / s[rows, None]
        ps = kw[rows] * losses.psi(loss, r)
        sc = np.abs(ps @ T).max(axis=1)
        return sc / np.maximum(mass[rows], 1e-300)

    it = 0
    while active.any() and it < max_iter:
        it += 1
        rows = np.flatnonzero(active)
        r = (y[None, :] - beta[rows] @ T.T) / s[rows, None]
        w = kw[rows] * losses.weight(loss, r)
        packed = w @ TT
        A = np.empty((rows.size, p, p))
        A[:, jj, kk] = packed
        A[:, kk, jj] = packed
        b = w @ Ty
        if it == 1:
            cond = np.linalg.cond(A)
            sing = ~(cond < _COND_LIMIT)
            if sing.any():
                status[rows[sing]] = STATUS_SINGULAR
                active[rows[sing]] = False
                keep = ~sing
                rows, A, b = rows[keep], A[keep], b[keep]
                if rows.size == 0:
                    continue
        try:
            new = np.linalg.solve(A, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            # isolated singular systems mid-iteration: solve one by one
            new = np.empty((rows.size, p))
            for k in range(rows.size):
                try:
                    new[k] = np.linalg.solve(A[k], b[k])
                except np.linalg.LinAlgError:
                    new[k] = beta[rows[k]]
                    status[rows[k]] = STATUS_SINGULAR
                    active[rows[k]] = False
        nonfin = ~np.isfinite(new).all(axis=1)
        if nonfin.any():
            status[rows[nonfin]] = STATUS_SINGULAR
            active[rows[nonfin]] = False
            new[nonfin] = beta[rows[nonfin]]
        step = np.abs((new - beta[rows]) * hpow).max(axis=1)
        beta[rows] = new
        iters[rows] = it
        small = step <= tol
        if small.any():
            cand = rows[small]
            sn = scores(cand)
            score_norm[cand] = sn
            ok = cand[sn <= tol]
            status[ok] = STATUS_OK
            active[ok] = False

    rem = np.flatnonzero(status == STATUS_NOCONV)
    if rem.size:
        score_norm[rem] = scores(rem)
        fine = score_norm[rem] <= tol
        status[rem[fine]] = STATUS_OK
    return beta, status, score_norm, iters, eff_n


def _batch_fit(y, t, kw, loss, s, q, h_alpha, max_iter, tol, min_support):
    """Batch M-fit with loss-specific initialization strategy."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if loss.family == "ls":
        # weights are constant: a single reweighted step is the exact WLS fit
        return _batch_irls(y, t, kw, loss, s, q, h_alpha, max_iter=2, tol=tol,
                           min_support=min_support)
    if loss.family == "tukey":
        pre = LossSpec("huber", losses.DEFAULT_HUBER_C)
        beta0, status0, _, _, _ = _batch_irls(
            y, t, kw, pre, s, q, h_alpha, max_iter, tol, min_support)
        beta, status, sn, iters, eff_n = _batch_irls(
            y, t, kw, loss, s, q, h_alpha, max_iter, tol, min_support,
            beta_init=beta0)
        # a singular Huber pre-fit dooms the main fit as well
        status = np.where(status0 == STATUS_SINGULAR, STATUS_SINGULAR, status)
        return beta, status, sn, iters, eff_n
    return _batch_irls(y, t, kw, loss, s, q, h_alpha, max_iter, tol,
                       min_support)


def _kernel_weights(data: Dataset, x, cfg: LocalFitConfig) -> np.ndarray:
    """Signed product kernel weights, delta-masked, for all n points."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != data.d:
        raise MargintError("evaluation point dimension mismatch")
    h = cfg.bw.per_coordinate(data.d, cfg.alpha)
    w = np.ones(data.n)
    for j in range(data.d):
        spec = cfg.kernel_alpha if (j + 1) == cfg.alpha else cfg.kernel_nuisance
        w *= eval_kernel(spec, (data.x[:, j] - x[j]) / h[j]) / h[j]
    w = w * data.delta
    return np.where(np.isnan(data.y), 0.0, w)


def local_m_fit(data: Dataset, x, cfg: LocalFitConfig,
                scale: ScaleEstimate) -> LocalFitResult:
    """Solve the local score system at a single evaluation point."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise MargintError("evaluation point must be finite")
    kw = _kernel_weights(data, x, cfg)
    nz = np.flatnonzero(kw != 0.0)
    if nz.size < cfg.min_support:
        raise InsufficientSupportError(
            f"{nz.size} observed points carry weight at {x} "
            f"(need {cfg.min_support})"
        )
    s = scale.at(x)
    t = data.x[nz, cfg.alpha - 1] - x[cfg.alpha - 1]
    beta, status, sn, iters, eff_n = _batch_fit(
        data.y[nz], t, kw[nz][None, :], cfg.loss, np.array([s]), cfg.q,
        cfg.bw.h_alpha, cfg.max_iter, cfg.tol, cfg.min_support)
    st = int(status[0])
    if st == STATUS_INSUFFICIENT:
        raise InsufficientSupportError(f"insufficient support at {x}")
    if st == STATUS_SINGULAR:
        raise SingularDesignError(f"singular local design at {x}")
    return LocalFitResult(
        beta=beta[0],
        score_norm=float(sn[0]),
        iterations=int(iters[0]),
        effective_n=int(eff_n[0]),
        converged=(st == STATUS_OK),
    )


def score(data: Dataset, beta, x, cfg: LocalFitConfig,
          scale: ScaleEstimate) -> np.ndarray:
    """Evaluate the (q+1)-vector of local score equations at beta."""
    beta = np.asarray(beta, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    kw = _kernel_weights(data, x, cfg)
    nz = np.flatnonzero(kw != 0.0)
    out = np.zeros(cfg.q + 1)
    if nz.size == 0:
        return out
    s = scale.at(x)
    t = data.x[nz, cfg.alpha - 1] - x[cfg.alpha - 1]
    T = t[:, None] ** np.arange(cfg.q + 1)
    r = (data.y[nz] - T @ beta) / s
    return (kw[nz] * losses.psi(cfg.loss, r)) @ T

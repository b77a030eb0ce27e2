"""Robust preliminary scale estimation.

The default pipeline is homoscedastic: fit a local median smoother at every
observed design point, take the MAD of the residuals (with the 1.4826 normal
consistency factor) and use that single sigma-hat to studentize all local
M-fits.  A local (per-point) MAD variant is available for heteroscedastic
settings.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .errors import DegenerateScaleError, MargintError, WindowEmptyError

MAD_NORMAL_CONSTANT = 1.4826


class ScaleEstimate:
    """Global scalar scale or a callable local scale s(x) > 0."""

    def __init__(self, value=None, fn=None):
        if (value is None) == (fn is None):
            raise MargintError("provide exactly one of value or fn")
        if value is not None and not (np.isfinite(value) and value > 0):
            raise MargintError("scale value must be positive and finite")
        self.value = None if value is None else float(value)
        self.fn = fn

    @classmethod
    def fixed(cls, value: float) -> "ScaleEstimate":
        return cls(value=value)

    @classmethod
    def local(cls, fn) -> "ScaleEstimate":
        return cls(fn=fn)

    @property
    def is_global(self) -> bool:
        return self.value is not None

    def at(self, x) -> float:
        if self.value is not None:
            return self.value
        s = float(self.fn(np.asarray(x, dtype=float)))
        if not (np.isfinite(s) and s > 0):
            raise DegenerateScaleError(f"local scale {s} at {x} is not positive")
        return s


def mad(values, consistency: bool = False) -> float:
    """Median absolute deviation about the median."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise MargintError("mad of an empty vector")
    m = float(np.median(np.abs(v - np.median(v))))
    return m * MAD_NORMAL_CONSTANT if consistency else m


def _window_mask(data: Dataset, x, bw) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    h = np.broadcast_to(np.asarray(bw, dtype=float), (data.d,))
    inside = np.all(np.abs(data.x - x) <= h, axis=1)
    return inside & (data.delta == 1)


def local_median(data: Dataset, x, bw) -> float:
    """Median response over the observed points in the product box window."""
    keep = _window_mask(data, x, bw)
    if not keep.any():
        raise WindowEmptyError(np.asarray(x, dtype=float))
    return float(np.median(data.y[keep]))


def _all_residuals(data: Dataset, bw) -> np.ndarray:
    """Local-median residuals at every observed design point (vectorized)."""
    obs = np.flatnonzero(data.delta == 1)
    if obs.size == 0:
        raise MargintError("no observed responses")
    h = np.broadcast_to(np.asarray(bw, dtype=float), (data.d,))
    xo = data.x[obs]
    yo = data.y[obs]
    res = np.empty(obs.size)
    # pairwise window membership among observed points only
    for k in range(obs.size):
        inside = np.all(np.abs(xo - xo[k]) <= h, axis=1)
        res[k] = yo[k] - np.median(yo[inside])
    return res


def residual_scale(data: Dataset, bw_sigma, mode: str = "global") -> ScaleEstimate:
    """MAD of local-median residuals (global) or windowed local MAD."""
    if mode not in ("global", "local"):
        raise MargintError("scale mode must be 'global' or 'local'")
    if mode == "global":
        res = _all_residuals(data, bw_sigma)
        sigma = mad(res, consistency=True)
        floor = 1e-12 * (float(np.nanmax(np.abs(data.y), initial=0.0)) + 1.0)
        if sigma < floor:
            raise DegenerateScaleError(
                f"residual scale {sigma} is degenerate (floor {floor})"
            )
        return ScaleEstimate.fixed(sigma)

    def local_scale(x):
        keep = _window_mask(data, x, bw_sigma)
        if not keep.any():
            raise WindowEmptyError(np.asarray(x, dtype=float))
        y = data.y[keep]
        s = mad(y, consistency=True)
        floor = 1e-12 * (float(np.nanmax(np.abs(data.y), initial=0.0)) + 1.0)
        if s < floor:
            raise DegenerateScaleError(f"local scale at {x} is degenerate")
        return s

    return ScaleEstimate.local(local_scale)

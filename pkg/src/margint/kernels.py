"""Compact-support kernels, product weights and kernel moment objects.

All families live on [-1, 1]. Moments of the polynomial kernels are computed
in exact rational arithmetic so the constants entering the asymptotic
bias/variance formulas are exact; a Gauss-Legendre quadrature cross-check is
exercised in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import MargintError

# Coefficients of K(u) = sum_k c_k u^(2k) on [-1, 1], exact rationals.
_COEFFS = {
    "epanechnikov": (Fraction(3, 4), Fraction(-3, 4)),
    # (15/32)(1 - u^2)(3 - 7u^2) = (15/32)(3 - 10u^2 + 7u^4)
    "fourth_order": (Fraction(45, 32), Fraction(-150, 32), Fraction(105, 32)),
    "uniform": (Fraction(1, 2),),
}

FAMILIES = tuple(_COEFFS)


@dataclass(frozen=True)
class KernelSpec:
    """One of the supported kernel families on [-1, 1]."""

    family: str

    def __post_init__(self):
        if self.family not in _COEFFS:
            raise MargintError(f"unknown kernel family {self.family!r}")

    @property
    def nonnegative(self) -> bool:
        return self.family != "fourth_order"

    @property
    def order(self) -> int:
        """Smallest p >= 1 with a nonvanishing p-th moment (kernel order)."""
        return 4 if self.family == "fourth_order" else 2

    def coefficients(self) -> tuple[Fraction, ...]:
        return _COEFFS[self.family]


@dataclass(frozen=True)
class BandwidthSpec:
    """Bandwidth h_alpha on the direction of interest, h_tilde elsewhere."""

    h_alpha: float
    h_tilde: float

    def __post_init__(self):
        for name, v in (("h_alpha", self.h_alpha), ("h_tilde", self.h_tilde)):
            if not (np.isfinite(v) and v > 0):
                raise MargintError(f"{name} must be positive and finite")

    def per_coordinate(self, d: int, alpha: int) -> np.ndarray:
        """Length-d bandwidth vector with h_alpha in slot alpha (1-based)."""
        h = np.full(d, self.h_tilde)
        h[alpha - 1] = self.h_alpha
        return h


def eval_kernel(spec: KernelSpec, u):
    """Evaluate the kernel at u (scalar or array); zero outside [-1, 1]."""
    u = np.asarray(u, dtype=float)
    u2 = u * u
    out = np.zeros_like(u2)
    for c in reversed(_COEFFS[spec.family]):
        out = out * u2 + float(c)
    return np.where(np.abs(u) <= 1.0, out, 0.0)


def _moment_fraction(spec: KernelSpec, p: int, squared: bool) -> Fraction:
    coeffs = _COEFFS[spec.family]
    if squared:
        # square the even polynomial: coefficients of u^(2k)
        sq = [Fraction(0)] * (2 * len(coeffs) - 1)
        for i, a in enumerate(coeffs):
            for j, b in enumerate(coeffs):
                sq[i + j] += a * b
        coeffs = sq
    if p % 2 == 1:
        return Fraction(0)
    # int_{-1}^{1} u^(p+2k) du = 2 / (p + 2k + 1)
    return sum((c * Fraction(2, p + 2 * k + 1) for k, c in enumerate(coeffs)),
               Fraction(0))


def kernel_moment(spec: KernelSpec, p: int, squared: bool = False) -> float:
    """Exact moment  int u^p K(u) du  (or with K^2 when squared)."""
    if p < 0 or p > 12:
        raise MargintError("moment order p must be in 0..12")
    return float(_moment_fraction(spec, p, squared))


def _moment_matrix(spec: KernelSpec, q: int, squared: bool) -> np.ndarray:
    if q < 0 or q > 5:
        raise MargintError("polynomial order q must be in 0..5")
    m = np.empty((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(q + 1):
            m[i, j] = kernel_moment(spec, i + j, squared=squared)
    return m


def moment_matrix_S(spec: KernelSpec, q: int) -> np.ndarray:
    """(q+1)x(q+1) matrix of kernel moments S[i,j] = int u^(i+j) K(u) du."""
    s = _moment_matrix(spec, q, squared=False)
    if np.linalg.cond(s) > 1e12:
        raise MargintError(
            f"moment matrix of {spec.family} is singular for q={q}"
        )
    return s


def variance_matrix_V(spec: KernelSpec, q: int) -> np.ndarray:
    """(q+1)x(q+1) matrix V[i,j] = int u^(i+j) K^2(u) du."""
    return _moment_matrix(spec, q, squared=True)


def vector_s_q(spec: KernelSpec, q: int) -> np.ndarray:
    """Vector with j-th component  int u^(q+j) K(u) du,  j = 1..q+1."""
    if q < 0 or q > 5:
        raise MargintError("polynomial order q must be in 0..5")
    return np.array([kernel_moment(spec, q + j) for j in range(1, q + 2)])


def product_weight(specs, bw: BandwidthSpec, alpha: int, dx) -> float:
    """Product kernel weight  prod_j K_j(dx_j / h_j) / h_j.

    Coordinate ``alpha`` (1-based) uses h_alpha and must carry a nonnegative
    kernel; the remaining coordinates use h_tilde.
    """
    dx = np.asarray(dx, dtype=float).ravel()
    d = dx.size
    if len(specs) != d:
        raise MargintError("one kernel spec per coordinate is required")
    if not (1 <= alpha <= d):
        raise MargintError(f"alpha must be in 1..{d}")
    if not specs[alpha - 1].nonnegative:
        raise MargintError("the kernel on the direction of interest must be nonnegative")
    h = bw.per_coordinate(d, alpha)
    w = 1.0
    for j in range(d):
        w *= float(eval_kernel(specs[j], dx[j] / h[j])) / h[j]
    return w

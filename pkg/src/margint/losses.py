"""Loss families rho, scores psi = rho', derivatives psi' and IRLS weights.

Every family follows the tuning rule rho_c(u) = c^2 rho_1(u/c).  The least
squares loss ignores c and is provided as the classical comparator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MargintError

FAMILIES = ("ls", "huber", "tukey")

DEFAULT_HUBER_C = 1.345
DEFAULT_TUKEY_C = 4.685


@dataclass(frozen=True)
class LossSpec:
    family: str
    c: float = DEFAULT_HUBER_C

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MargintError(f"unknown loss family {self.family!r}")
        if not (np.isfinite(self.c) and self.c > 0):
            raise MargintError("tuning constant c must be positive and finite")

    @property
    def convex(self) -> bool:
        return self.family in ("ls", "huber")


def rho(spec: LossSpec, u):
    """Loss value; even, rho(0) = 0, nondecreasing in |u|."""
    u = np.asarray(u, dtype=float)
    if spec.family == "ls":
        return u * u
    c = spec.c
    v = np.abs(u) / c
    if spec.family == "huber":
        out = np.where(v <= 1.0, 0.5 * v * v, v - 0.5)
    else:  # tukey
        v2 = v * v
        out = np.minimum(v2 * (3.0 + v2 * (-3.0 + v2)), 1.0)
    return c * c * out


def psi(spec: LossSpec, u):
    """Score psi = rho'; odd."""
    u = np.asarray(u, dtype=float)
    if spec.family == "ls":
        return 2.0 * u
    c = spec.c
    if spec.family == "huber":
        return np.clip(u, -c, c)
    v = u / c
    inside = np.abs(v) <= 1.0
    t = 1.0 - v * v
    return np.where(inside, 6.0 * u * t * t, 0.0)


def psi_prime(spec: LossSpec, u):
    """Derivative of the score; even.  Kinks take the inner-branch value."""
    u = np.asarray(u, dtype=float)
    if spec.family == "ls":
        return np.full_like(u, 2.0)
    c = spec.c
    if spec.family == "huber":
        return np.where(np.abs(u) <= c, 1.0, 0.0)
    v2 = (u / c) ** 2
    return np.where(v2 <= 1.0, 6.0 * (1.0 - v2) * (1.0 - 5.0 * v2), 0.0)


def weight(spec: LossSpec, u):
    """IRLS weight psi(u)/u with the removable singularity filled at 0."""
    u = np.asarray(u, dtype=float)
    if spec.family == "ls":
        return np.full_like(u, 2.0)
    c = spec.c
    if spec.family == "huber":
        au = np.abs(u)
        with np.errstate(divide="ignore"):
            return np.where(au <= c, 1.0, c / np.where(au > 0, au, 1.0))
    v2 = (u / c) ** 2
    t = 1.0 - v2
    return np.where(v2 <= 1.0, 6.0 * t * t, 0.0)

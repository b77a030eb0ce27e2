"""Closed-form asymptotic bias and variance of the component estimators.

The bias/variance expressions combine the kernel moment objects with the
score factor V(psi) = E psi^2(eps) / [E psi'(eps)]^2 evaluated under the
standard normal central model, and a design integral
int q_{-alpha}^2 / (f_X p) dx_{-alpha} supplied in closed form for
uniform-box designs or numerically for a user-provided missingness p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from . import losses
from .errors import MargintError
from .kernels import KernelSpec, moment_matrix_S, variance_matrix_V, vector_s_q
from .losses import LossSpec


def normal_expectations(loss: LossSpec) -> tuple[float, float]:
    """(E psi^2(eps), E psi'(eps)) under the standard normal."""
    if loss.family == "ls":
        return 4.0, 2.0
    c = loss.c
    pts = [-c, 0.0, c]
    lim = max(10.0, c + 10.0)

    def e(fn):
        val, _ = integrate.quad(
            lambda u: fn(u) * stats.norm.pdf(u), -lim, lim,
            points=pts, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    e_psi2 = e(lambda u: float(losses.psi(loss, u)) ** 2)
    e_psi_prime = e(lambda u: float(losses.psi_prime(loss, u)))
    return e_psi2, e_psi_prime


def v_psi(loss: LossSpec) -> float:
    """Score factor of the asymptotic variance under the normal model."""
    e_psi2, e_psi_prime = normal_expectations(loss)
    if e_psi_prime <= 0:
        raise MargintError("degenerate loss: E psi'(eps) <= 0")
    return e_psi2 / e_psi_prime**2


def uniform_box_design_integral(box, alpha: int, x_alpha: float | None = None,
                                p=None) -> float:
    """int q_{-alpha}^2 / (f_X p) dx_{-alpha} for Q = f_X = uniform on a box.

    With p constant the integral is 1/p.  With a callable p(x) it is computed
    by numerical quadrature (requires x_alpha).
    """
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    if p is None:
        return 1.0
    if np.isscalar(p):
        if p <= 0:
            raise MargintError("missingness probability must be positive")
        return 1.0 / float(p)
    if x_alpha is None:
        raise MargintError("x_alpha is required for a non-constant p")
    others = [j for j in range(d) if j != alpha - 1]
    if not others:
        x = np.zeros(1)
        x[0] = x_alpha
        return 1.0 / float(p(x))
    vol = float(np.prod(box[others, 1] - box[others, 0]))

    def integrand(*coords):
        x = np.empty(d)
        x[alpha - 1] = x_alpha
        for j, c in zip(others, coords):
            x[j] = c
        return 1.0 / float(p(x))

    ranges = [tuple(box[j]) for j in others]
    val, _ = integrate.nquad(integrand, ranges, opts={"epsabs": 1e-10})
    return val / vol


@dataclass(frozen=True)
class AsymptoticSpec:
    """Inputs to the bias/variance formulas for one component estimator."""

    q: int
    kernel_alpha: KernelSpec
    loss: LossSpec
    sigma: float
    beta_rate: float  # constant in h_alpha = beta_rate * n^(-1/(2q+3))
    design_integral: float = 1.0
    nu: int = 0

    def __post_init__(self):
        if not (0 <= self.nu <= self.q):
            raise MargintError("nu must be in 0..q")
        if not (self.design_integral > 0 and np.isfinite(self.design_integral)):
            raise MargintError("design integral must be finite and positive")
        if self.sigma <= 0 or self.beta_rate <= 0:
            raise MargintError("sigma and beta_rate must be positive")


def theoretical_bias(spec: AsymptoticSpec, g_deriv: float) -> float:
    """Asymptotic bias of sqrt(n h) (ghat^(nu) - g^(nu)), given g^(q+1)(x)."""
    s_mat = moment_matrix_S(spec.kernel_alpha, spec.q)
    s_vec = vector_s_q(spec.kernel_alpha, spec.q)
    e = np.zeros(spec.q + 1)
    e[spec.nu] = 1.0
    proj = float(e @ np.linalg.solve(s_mat, s_vec))
    return (math.factorial(spec.nu)
            * spec.beta_rate ** ((2 * spec.q + 3) / 2)
            * g_deriv / math.factorial(spec.q + 1) * proj)


def theoretical_variance(spec: AsymptoticSpec) -> float:
    """Asymptotic variance of sqrt(n h) (ghat^(nu) - g^(nu)).

    The finite-sample variance approximation is this value divided by
    n * h_alpha.
    """
    s_mat = moment_matrix_S(spec.kernel_alpha, spec.q)
    v_mat = variance_matrix_V(spec.kernel_alpha, spec.q)
    e = np.zeros(spec.q + 1)
    e[spec.nu] = 1.0
    s_inv_e = np.linalg.solve(s_mat, e)
    quad_form = float(s_inv_e @ v_mat @ s_inv_e)
    return (math.factorial(spec.nu) ** 2
            * spec.sigma**2 * v_psi(spec.loss)
            * spec.design_integral * quad_form)

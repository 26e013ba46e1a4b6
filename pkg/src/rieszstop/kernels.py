"""Closed-form resolvent (Green) kernels of geometric Brownian motion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .docsmap import anchored
from .model import GbmParams, speed_density_1d, transition_density
from .special import bessel_k0


class SingularKernelError(ValueError):
    """Kernel evaluated on its diagonal, where it is infinite."""


# ---------------------------------------------------------------------------
# one dimension, infinite horizon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel1D:
    """Green kernel of a 1D GBM with respect to its speed measure.

    ``G(x, y) = min(x,y)**beta * max(x,y)**(-gamma) / (beta + gamma)`` where
    ``x**beta`` and ``x**(-gamma)`` are the increasing and decreasing
    r-harmonic functions.  For ``mu = r``: ``beta = 1``, ``gamma = 2r/a^2``.
    """

    gamma: float
    a: float
    r: float
    beta: float = 1.0

    @classmethod
    def from_params(cls, params: GbmParams) -> "Kernel1D":
        if params.d != 1:
            raise ValueError("Kernel1D needs a one-dimensional model")
        a, mu, r = abs(float(params.a[0])), float(params.mu[0]), params.r
        # roots of a^2/2 th^2 + (mu - a^2/2) th - r = 0
        b = mu / a**2 - 0.5
        disc = math.sqrt(b * b + 2.0 * r / a**2)
        beta = disc - b
        gamma = disc + b
        if mu == r:
            beta, gamma = 1.0, 2.0 * r / a**2
        return cls(gamma=gamma, a=a, r=r, beta=beta)

    @property
    def mu(self) -> float:
        # product of the roots is -2r/a^2, sum is 1 - 2mu/a^2
        return 0.5 * self.a**2 * (1.0 - self.beta + self.gamma)

    @property
    def wronskian(self) -> float:
        return self.beta + self.gamma

    def speed_density(self, y):
        y = np.asarray(y, dtype=float)
        return (2.0 / self.a**2) * y ** (2.0 * self.mu / self.a**2 - 2.0)


@anchored("green-kernel-1d")
def green_1d(x, y, k: Kernel1D):
    """Symmetric Green kernel w.r.t. the speed measure (vectorised)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("arguments must be positive")
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    out = lo**k.beta * hi ** (-k.gamma) / k.wronskian
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# two dimensions, infinite horizon
# ---------------------------------------------------------------------------


@anchored("bessel-quadratic-form")
def b_form(x, y, rho: float):
    """Quadratic form ``x^2 - 2 rho x y + y^2`` (nonnegative for |rho| < 1)."""
    return x * x - 2.0 * rho * x * y + y * y


@anchored("bessel-drift-form")
def a_form(x, y, m1: float, m2: float, rho: float):
    """Linear drift form ``2 rho (m2 x + m1 y) - 2 (m1 x + m2 y)``."""
    return 2.0 * rho * (m2 * x + m1 * y) - 2.0 * (m1 * x + m2 * y)


@anchored("bessel-rescaled-rate")
@dataclass(frozen=True)
class Kernel2D:
    """Constants of the 2D resolvent density.

    Coordinates are rescaled log-prices ``w_i = log(y_i/x_i) / a_i`` of unit
    variance; ``m_i`` are their drifts and ``r_hat`` absorbs the drift into
    an effective rate.
    """

    rho: float
    a1: float
    a2: float
    m1: float
    m2: float
    r: float

    def __post_init__(self) -> None:
        if not abs(self.rho) < 1:
            raise ValueError("need |rho| < 1")

    @classmethod
    def from_params(cls, params: GbmParams) -> "Kernel2D":
        if params.d != 2:
            raise ValueError("Kernel2D needs a two-dimensional model")
        a = np.abs(params.a)
        # W -> -W flips the sign of the cross term when a_i < 0
        rho = float(params.corr[0, 1] * np.sign(params.a[0] * params.a[1]))
        m = params.log_drift / a
        return cls(rho, float(a[0]), float(a[1]), float(m[0]), float(m[1]), params.r)

    @property
    def one_minus_rho2(self) -> float:
        return 1.0 - self.rho * self.rho

    @property
    def r_hat(self) -> float:
        return self.r + b_form(self.m1, self.m2, self.rho) / (2.0 * self.one_minus_rho2)

    def in_w(self, w1, w2):
        """Kernel mass per ``dw1 dw2`` at rescaled log-offset ``(w1, w2)``."""
        c = self.one_minus_rho2
        bq = b_form(w1, w2, self.rho)
        arg = np.sqrt(self.r_hat * 2.0 * bq / c)
        return np.exp(-a_form(w1, w2, self.m1, self.m2, self.rho) / (2.0 * c)) * bessel_k0(arg) / (
            math.pi * math.sqrt(c)
        )

    def polar_rates(self, theta):
        """For the ray ``w = rad*(cos th, sin th)`` return ``(c, alpha)`` with
        kernel ``= exp(-alpha*rad) K0(c*rad) / (pi sqrt(1-rho^2))``."""
        ct, st = np.cos(theta), np.sin(theta)
        om = self.one_minus_rho2
        c = np.sqrt(2.0 * self.r_hat * b_form(ct, st, self.rho) / om)
        alpha = a_form(ct, st, self.m1, self.m2, self.rho) / (2.0 * om)
        return c, alpha


@anchored("resolvent-2d-bessel")
def resolvent_2d(start, point, k: Kernel2D):
    """Discounted occupation density at ``point`` (w.r.t. Lebesgue measure
    in ``(u, v)``) for the process started at ``start``.

    ``point`` may carry leading batch axes.  Raises
    :class:`SingularKernelError` on the diagonal.
    """
    x1, x2 = (float(s) for s in start)
    point = np.asarray(point, dtype=float)
    u, v = point[..., 0], point[..., 1]
    if x1 <= 0 or x2 <= 0 or np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("coordinates must be positive")
    w1 = np.log(u / x1) / k.a1
    w2 = np.log(v / x2) / k.a2
    if np.any((w1 == 0) & (w2 == 0)):
        raise SingularKernelError("resolvent_2d is infinite at the start point")
    out = k.in_w(w1, w2) / (k.a1 * k.a2 * u * v)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# space-time kernel
# ---------------------------------------------------------------------------


@anchored("spacetime-duality-measure")
@dataclass(frozen=True)
class SpaceTimeKernel:
    r: float
    a: float
    mu: float
    T: float

    @classmethod
    def from_params(cls, params: GbmParams, T: float) -> "SpaceTimeKernel":
        return cls(params.r, abs(float(params.a[0])), float(params.mu[0]), float(T))

    def _gbm(self) -> GbmParams:
        return GbmParams([self.mu], [self.a], [[1.0]], self.r, 1.0, require_subcritical=False)

    def speed_density(self, y):
        return speed_density_1d(y, self._gbm())


@anchored("spacetime-green-kernel")
def spacetime_kernel(s: float, x: float, t: float, y, k: SpaceTimeKernel):
    """Space-time resolvent density w.r.t. ``dt m(dy)``, ``m`` the speed measure.

    Returns ``math.inf`` on the diagonal ``t == s, x == y`` and 0 for
    ``t <= s`` elsewhere.
    """
    if not 0 <= s < k.T:
        raise ValueError("need 0 <= s < T")
    if t > k.T:
        raise ValueError("t beyond the horizon T")
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y must be positive")
    if t < s:
        out = np.zeros_like(y)
    elif t == s:
        out = np.where(y == x, np.inf, 0.0)
    else:
        gbm = k._gbm()
        out = math.exp(-k.r * (t - s)) * transition_density(t - s, x, y, gbm) / speed_density_1d(y, gbm)
    return out if np.ndim(out) else float(out)

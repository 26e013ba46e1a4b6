"""Special functions used by the resolvent kernels.

``bessel_k0`` is evaluated piecewise: the ascending series (with the
``I0`` logarithmic term) below ``SERIES_CUTOFF`` and the Hankel
asymptotic expansion above it.  Both branches are vectorised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .docsmap import anchored

EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class K0Evaluator:
    """Piecewise evaluator for the modified Bessel function K0.

    The series branch loses relative accuracy to cancellation as ``u``
    grows (``I0(u)`` is large while ``K0(u)`` is small), but the absolute
    error stays near ``I0(u) * eps``, which is < 1e-12 at the cutoff.
    """

    series_cutoff: float = 9.0
    series_terms: int = 40
    asymptotic_terms: int = 18
    tol: float = 1e-10

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0)):
            raise ValueError("K0 is only defined for u > 0 (logarithmic singularity at 0)")
        out = np.empty_like(u)
        small = u <= self.series_cutoff
        if np.any(small):
            out[small] = self._series(u[small])
        if np.any(~small):
            out[~small] = self._asymptotic(u[~small])
        return out if out.ndim else float(out)

    def _series(self, u: np.ndarray) -> np.ndarray:
        q = 0.25 * u * u
        term = np.ones_like(u)
        i0 = np.ones_like(u)
        tail = np.zeros_like(u)
        harmonic = 0.0
        for k in range(1, self.series_terms + 1):
            term = term * q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            tail += harmonic * term
        return -(np.log(0.5 * u) + EULER_GAMMA) * i0 + tail

    def _asymptotic(self, u: np.ndarray) -> np.ndarray:
        z = 8.0 * u
        term = np.ones_like(u)
        acc = np.ones_like(u)
        for k in range(1, self.asymptotic_terms + 1):
            term = -term * (2 * k - 1) ** 2 / (k * z)
            acc += term
        return np.sqrt(np.pi / (2.0 * u)) * np.exp(-u) * acc


_K0 = K0Evaluator()


@anchored("bessel-k0")
def bessel_k0(u):
    """Modified Bessel function of the second kind of order zero.

    Accepts scalars or arrays.  Raises ``ValueError`` for ``u <= 0``; the
    function is infinite at the origin and that case is never returned as
    a number.
    """
    return _K0(u)


def norm_cdf(z):
    """Standard normal CDF (vectorised, NaN-free in both tails)."""
    out = ndtr(np.asarray(z, dtype=float))
    return out if np.ndim(out) else float(out)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return out if out.ndim else float(out)

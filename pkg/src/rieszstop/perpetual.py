"""One-dimensional perpetual problem ``sup E[e^{-r tau} (K - X_tau)^+]``.

The threshold is computed twice: in closed form and by root-finding on the
value-matching defect of the Riesz candidate.  The two must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .docsmap import anchored
from .kernels import Kernel1D
from .model import GbmParams
from .riesz import candidate_value_1d


class ConsistencyError(RuntimeError):
    """Closed form and root-finder disagree."""


@anchored("perpetual-threshold")
@dataclass(frozen=True)
class PerpetualSolution:
    """Optimal threshold ``x_star = gamma K / (1 + gamma)``.

    ``gamma`` is the decay exponent of the decreasing r-harmonic function
    ``x**(-gamma)``; it equals ``2r/a^2`` when ``mu = r``.
    """

    x_star: float
    gamma: float
    K: float
    root_x_star: float | None = None

    def value(self, x):
        return perpetual_value(x, self)

    def reward(self, x):
        return np.maximum(self.K - np.asarray(x, dtype=float), 0.0)


def value_matching_defect(xbar: float, params: GbmParams, method: str = "closed") -> float:
    """``(K - xbar) - V_xbar(xbar)``: positive below ``x_star``, negative above."""
    return (params.K - xbar) - candidate_value_1d(xbar, xbar, params, method=method)


@anchored("perpetual-solver")
def solve_perpetual(params: GbmParams, tol: float = 1e-10, eps: float = 1e-6) -> PerpetualSolution:
    """Closed-form threshold cross-checked by bracketed root-finding."""
    if params.d != 1:
        raise ValueError("solve_perpetual needs a one-dimensional model")
    k = Kernel1D.from_params(params)
    K = params.K
    x_star = k.gamma * K / (1.0 + k.gamma)
    f = lambda xb: value_matching_defect(xb, params)  # noqa: E731
    lo, hi = eps * K, (1.0 - eps) * K
    if f(lo) * f(hi) > 0:
        raise ConsistencyError("value-matching defect does not change sign on (0, K)")
    root = brentq(f, lo, hi, xtol=1e-14 * K, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(root - x_star) > tol * K:
        raise ConsistencyError(f"root {root!r} disagrees with closed form {x_star!r}")
    return PerpetualSolution(x_star=x_star, gamma=k.gamma, K=K, root_x_star=root)


@anchored("perpetual-value")
def perpetual_value(x, sol: PerpetualSolution):
    """``K - x`` on ``(0, x_star]`` and ``(K - x_star)(x/x_star)^(-gamma)`` above."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    cont = (sol.K - sol.x_star) * (np.maximum(x, sol.x_star) / sol.x_star) ** (-sol.gamma)
    out = np.where(x <= sol.x_star, sol.K - x, cont)
    return out if out.ndim else float(out)


@anchored("smooth-fit")
def smooth_fit_slopes(xbar: float, params: GbmParams) -> tuple[float, float]:
    """One-sided slopes of the threshold candidate at ``xbar``.

    Below ``xbar`` the candidate is the reward (slope -1); above it decays as
    ``x**(-gamma)``.  The slopes coincide only at the optimal threshold.
    """
    if not 0 < xbar < params.K:
        raise ValueError("need 0 < xbar < K")
    k = Kernel1D.from_params(params)
    v = candidate_value_1d(xbar, xbar, params)
    return -1.0, -k.gamma * v / xbar

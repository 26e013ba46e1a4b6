"""Finite-horizon American put via the early-exercise-premium integral equation.

The exercise boundary solves, for every ``s`` in ``[0, T)``,

    K - b(s) = rK int_s^T e^{-r(t-s)} P_{s,b(s)}(X_t < b(t)) dt + P_E(s, b(s))

which is marched backward from ``b(T) = K`` on a time grid.  A
Cox-Ross-Rubinstein tree serves as the independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .docsmap import anchored
from .special import norm_cdf


class BoundarySolveError(RuntimeError):
    """Scalar boundary equation could not be bracketed or solved."""


@dataclass(frozen=True)
class AmericanPut:
    """Put on a GBM under the pricing measure (drift ``r``)."""

    K: float = 100.0
    r: float = 0.05
    vol: float = 0.2
    T: float = 1.0

    def __post_init__(self) -> None:
        if not (self.K > 0 and self.r > 0 and self.vol > 0 and self.T > 0):
            raise ValueError("K, r, vol and T must be positive")

    def to_dict(self) -> dict:
        return {"K": self.K, "r": self.r, "vol": self.vol, "T": self.T}


@anchored("exercise-boundary")
@dataclass(frozen=True)
class ExerciseBoundary:
    """Boundary values ``b`` on the time grid ``t`` (``t[-1] = T``, ``b[-1] = K``)."""

    t: np.ndarray
    b: np.ndarray

    def __call__(self, s):
        # b is monotone so piecewise-linear interpolation stays monotone
        return np.interp(s, self.t, self.b)

    def is_monotone(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.b) >= -tol))

    @anchored("boundary-convexity")
    def second_differences(self) -> np.ndarray:
        """Divided second differences on the (possibly non-uniform) grid."""
        t, b = self.t, self.b
        d1 = np.diff(b) / np.diff(t)
        return 2.0 * np.diff(d1) / (t[2:] - t[:-2])


@anchored("early-exercise-premium")
@dataclass(frozen=True)
class EepDecomposition:
    premium: float
    european: float

    @property
    def total(self) -> float:
        return self.premium + self.european


@anchored("european-put")
def european_put(s: float, x, put: AmericanPut):
    """Black-Scholes put value at time ``s`` and spot ``x``."""
    x = np.asarray(x, dtype=float)
    tau = put.T - s
    if tau < 0:
        raise ValueError("s beyond expiry")
    if tau == 0:
        out = np.maximum(put.K - x, 0.0)
    else:
        sd = put.vol * math.sqrt(tau)
        with np.errstate(divide="ignore"):
            d1 = (np.log(x / put.K) + (put.r + 0.5 * put.vol**2) * tau) / sd
        d2 = d1 - sd
        out = put.K * math.exp(-put.r * tau) * norm_cdf(-d2) - x * norm_cdf(-d1)
    return out if np.ndim(out) else float(out)


@anchored("crossing-probability")
def crossing_prob(s: float, x, t, level, put: AmericanPut):
    """``P(X_t < level | X_s = x)`` under the pricing measure."""
    dt = np.asarray(t, dtype=float) - s
    if np.any(dt <= 0):
        raise ValueError("need t > s")
    sd = put.vol * np.sqrt(dt)
    with np.errstate(divide="ignore"):
        z = (np.log(np.asarray(level, dtype=float) / x) - (put.r - 0.5 * put.vol**2) * dt) / sd
    return norm_cdf(z)


def time_grid(put: AmericanPut, n_steps: int, clustering: str = "uniform") -> np.ndarray:
    """``uniform`` or ``sqrt``: the latter spaces ``sqrt(T - t)`` evenly,
    concentrating nodes near expiry where the boundary is steepest."""
    u = np.linspace(0.0, 1.0, n_steps + 1)
    if clustering == "uniform":
        t = put.T * u
    elif clustering == "sqrt":
        t = put.T * (1.0 - (1.0 - u) ** 2)
    else:
        raise ValueError(f"unknown clustering {clustering!r}")
    t[-1] = put.T
    return t


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    h = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _premium_sum(s: float, x: float, t: np.ndarray, b: np.ndarray, put: AmericanPut) -> float:
    """Trapezoid premium integral from ``t[0] = s`` with the closed-form limit
    of the crossing probability at the first node."""
    w = _trapezoid_weights(t)
    if x == b[0]:
        first = 0.5
    else:
        first = 1.0 if x < b[0] else 0.0
    if t.size == 1:
        return 0.0
    probs = crossing_prob(s, x, t[1:], b[1:], put)
    disc = np.exp(-put.r * (t[1:] - s))
    return put.r * put.K * (w[0] * first + float(np.sum(w[1:] * disc * probs)))


def boundary_equation_residual(i: int, z: float, t: np.ndarray, b: np.ndarray, put: AmericanPut) -> float:
    """``K - z - premium - european`` at node ``i`` with ``b(t_i) = z``."""
    bb = b[i:].copy()
    bb[0] = z
    return put.K - z - _premium_sum(t[i], z, t[i:], bb, put) - european_put(t[i], z, put)


@anchored("boundary-integral-equation")
def solve_boundary(put: AmericanPut, n_steps: int = 200, clustering: str = "uniform", tol: float = 1e-10) -> ExerciseBoundary:
    """March the boundary equation backward from ``b(T) = K``."""
    if n_steps < 50:
        raise ValueError("need at least 50 time steps")
    t = time_grid(put, n_steps, clustering)
    b = np.empty_like(t)
    b[-1] = put.K
    lo = 1e-12 * put.K
    for i in range(n_steps - 1, -1, -1):
        f = lambda z: boundary_equation_residual(i, z, t, b, put)  # noqa: E731
        f_lo, f_hi = f(lo), f(put.K)
        if not (f_lo > 0 > f_hi):
            raise BoundarySolveError(
                f"no bracket at t={t[i]:.6g}: residual {f_lo:.3g} at 0, {f_hi:.3g} at K"
            )
        b[i] = brentq(f, lo, put.K, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    return ExerciseBoundary(t=t, b=b)


@anchored("eep-value")
def eep_value(s: float, x: float, boundary: ExerciseBoundary, put: AmericanPut) -> EepDecomposition:
    """Premium plus European value, integrating on the boundary's own grid."""
    t = boundary.t
    if not (t[0] <= s < t[-1]) or abs(t[-1] - put.T) > 1e-12 * put.T:
        raise ValueError("boundary grid does not cover [s, T]")
    after = t > s
    tt = np.concatenate([[s], t[after]])
    bb = np.concatenate([[boundary(s)], boundary.b[after]])
    if tt.size > 2 and tt[1] - tt[0] < 1e-12 * put.T:
        tt = np.delete(tt, 1)
        bb = np.delete(bb, 1)
    return EepDecomposition(float(_premium_sum(s, x, tt, bb, put)), float(european_put(s, x, put)))


@dataclass(frozen=True)
class BinomialResult:
    """CRR tree output: root value, boundary per layer and optional layers."""

    value: float
    european: float
    spot: float
    t: np.ndarray
    boundary: np.ndarray
    layers: list | None = None


@anchored("binomial-oracle")
def binomial_oracle(put: AmericanPut, steps: int = 5000, spot: float | None = None, keep_layers: bool = False) -> BinomialResult:
    """Cox-Ross-Rubinstein backward induction.

    The boundary at layer ``n`` is the highest node price at which exercise is
    optimal; ``nan`` where no node exercises.  ``keep_layers`` stores
    ``(prices, american, european)`` for every layer (small trees only).
    """
    if steps < 100:
        raise ValueError("need at least 100 steps")
    spot = put.K if spot is None else float(spot)
    dt = put.T / steps
    u = math.exp(put.vol * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-put.r * dt)
    p = (math.exp(put.r * dt) - d) / (u - d)
    pu, pd = disc * p, disc * (1.0 - p)

    j = np.arange(steps + 1)
    prices = spot * u ** (2 * j - steps)
    am = np.maximum(put.K - prices, 0.0)
    eu = am.copy()
    bnd = np.full(steps + 1, np.nan)
    ex = am > 0
    bnd[steps] = prices[ex].max() if ex.any() else np.nan
    layers = [(prices, am, eu)] if keep_layers else None
    for n in range(steps - 1, -1, -1):
        prices = spot * u ** (2 * np.arange(n + 1) - n)
        cont = pu * am[1 : n + 2] + pd * am[: n + 1]
        eu = pu * eu[1 : n + 2] + pd * eu[: n + 1]
        intrinsic = put.K - prices
        exercise = intrinsic > cont
        am = np.where(exercise, intrinsic, cont)
        bnd[n] = prices[exercise].max() if exercise.any() else np.nan
        if keep_layers:
            layers.append((prices, am, eu))
    if keep_layers:
        layers.reverse()
    return BinomialResult(
        value=float(am[0]),
        european=float(eu[0]),
        spot=spot,
        t=np.linspace(0.0, put.T, steps + 1),
        boundary=bnd,
        layers=layers,
    )

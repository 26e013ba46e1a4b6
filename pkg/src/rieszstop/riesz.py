"""Candidate value functions of Riesz-potential form.

For a proposed stopping set ``S`` the candidate value is the potential
``V_S(x) = int_S G_r(x, y) sigma(y) m(dy)`` of the representing density
``sigma = (r - generator) g`` of the reward ``g(x) = (K - sum x)^+``.
The harmonic part of the decomposition is zero for bounded rewards, so it
has no representation here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate

from .docsmap import anchored
from .kernels import Kernel1D, Kernel2D, green_1d
from .model import GbmParams
from .quadrature import QuadConfig, QuadResult, integrate_region


class CandidateError(ValueError):
    """Candidate set violates its structural requirements."""


# ---------------------------------------------------------------------------
# representing density
# ---------------------------------------------------------------------------


@anchored("representing-density")
def sigma_density(y, params: GbmParams):
    """``rK + sum_i (mu_i - r) y_i`` with coordinates on the last axis."""
    y = np.asarray(y, dtype=float)
    if params.d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        out = params.r * params.K + (params.mu[0] - params.r) * y
    else:
        out = params.r * params.K + y @ (params.mu - params.r)
    return out if np.ndim(out) else float(out)


@anchored("representing-measure")
@dataclass(frozen=True)
class RepresentingDensity:
    """Density of the representing measure relative to the duality measure.

    Space-time problems (``terminal=True``) add the mass ``(K - y)^+`` on the
    terminal slice ``{T} x (0, K)``; the interior part is then ``rK``.
    """

    params: GbmParams
    terminal: bool = False

    def __call__(self, y):
        return sigma_density(y, self.params)

    @anchored("terminal-mass")
    def terminal_mass(self, y):
        if not self.terminal:
            raise ValueError("no terminal mass for infinite-horizon problems")
        return np.maximum(self.params.K - np.asarray(y, dtype=float), 0.0)

    def scaled(self, c: float) -> "_ScaledDensity":
        return _ScaledDensity(self, c)

    def pair(self):
        p = self.params
        coef = p.mu - p.r
        rk = p.r * p.K
        return lambda y1, y2: rk + coef[0] * y1 + coef[1] * y2


@dataclass(frozen=True)
class _ScaledDensity:
    base: RepresentingDensity
    c: float

    def __call__(self, y):
        return self.c * self.base(y)

    def pair(self):
        f = self.base.pair()
        c = self.c
        return lambda y1, y2: c * f(y1, y2)


# ---------------------------------------------------------------------------
# candidate sets
# ---------------------------------------------------------------------------

KINDS = ("threshold-1d", "ellipsoid-2d", "curve-spacetime")


@dataclass(frozen=True)
class Ellipse:
    """South-west hull of the superellipse
    ``|(y1-cx)/rx|^q + |(y2-cy)/ry|^q = 1`` intersected with the open
    quadrant, optionally cut at ``y1 <= x1_max``.  ``q = 2`` is an ellipse;
    with the centre at the origin the intercepts are ``rx`` and ``ry``."""

    cx: float = 0.0
    cy: float = 0.0
    rx: float = 1.0
    ry: float = 1.0
    q: float = 2.0
    x1_max: float | None = None

    def __post_init__(self) -> None:
        if not (self.rx > 0 and self.ry > 0):
            raise CandidateError("radii must be positive")
        if not self.q >= 1:
            raise CandidateError("q >= 1 is required for convexity")

    @property
    def y1_end(self) -> float:
        end = self.cx + self.rx
        return end if self.x1_max is None else min(end, self.x1_max)

    def top(self, y1):
        """Upper edge ``y2 = top(y1)``; NaN where the region is empty."""
        y1 = np.asarray(y1, dtype=float)
        t = np.clip((y1 - self.cx) / self.rx, 0.0, None)
        with np.errstate(invalid="ignore"):
            inner = np.where(t <= 1.0, 1.0 - t**self.q, np.nan)
            out = self.cy + self.ry * inner ** (1.0 / self.q)
        out = np.where(out > 0, out, np.nan)
        if self.x1_max is not None:
            out = np.where(y1 <= self.x1_max, out, np.nan)
        return out

    def excess(self, s1, s2):
        """Concave log-space indicator: ``>= 0`` exactly on the region."""
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            y1 = np.exp(s1)
            t = np.clip((y1 - self.cx) / self.rx, 0.0, None)
            inner = 1.0 - t**self.q
            top = np.where(inner > 0, self.cy + self.ry * np.where(inner > 0, inner, 1.0) ** (1.0 / self.q), -1.0)
            out = np.where(top > 0, np.log(np.where(top > 0, top, 1.0)) - s2, -np.inf)
            if self.x1_max is not None:
                out = np.minimum(out, math.log(self.x1_max) - s1)
        return out

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return self.excess(np.log(y[..., 0]), np.log(y[..., 1])) >= 0

    def max_sum(self, n: int = 2001) -> float:
        """``max(y1 + y2)`` over the region (sampled along the upper edge)."""
        start = max(self.cx, 0.0)
        y1 = np.linspace(start, self.y1_end, n)
        top = self.top(y1)
        ok = np.isfinite(top)
        return float(np.max(y1[ok] + top[ok])) if ok.any() else 0.0

    def area(self) -> float:
        val, _ = integrate.quad(lambda u: float(np.nan_to_num(self.top(u))), 0.0, self.y1_end, limit=200)
        return val


@anchored("candidate-set")
@dataclass(frozen=True)
class CandidateSet:
    """A proposed stopping region.

    ``threshold-1d``: ``(0, threshold]``.  ``ellipsoid-2d``: an
    :class:`Ellipse` region.  ``curve-spacetime``: ``{(t, y): y <= b(t)}`` with
    ``b`` piecewise linear through ``(curve_t, curve_b)``.
    """

    kind: str
    threshold: float | None = None
    ellipse: Ellipse | None = None
    curve_t: np.ndarray | None = field(default=None, compare=False)
    curve_b: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise CandidateError(f"unknown candidate kind {self.kind!r}")
        if self.kind == "threshold-1d" and not (self.threshold is not None and self.threshold > 0):
            raise CandidateError("threshold must be positive")
        if self.kind == "ellipsoid-2d" and self.ellipse is None:
            raise CandidateError("ellipsoid candidate needs an ellipse payload")
        if self.kind == "curve-spacetime":
            if self.curve_t is None or self.curve_b is None:
                raise CandidateError("curve candidate needs t and b arrays")
            t = np.asarray(self.curve_t, dtype=float)
            b = np.asarray(self.curve_b, dtype=float)
            if t.shape != b.shape or t.size < 2 or np.any(np.diff(t) <= 0):
                raise CandidateError("curve needs matching, strictly increasing time nodes")
            object.__setattr__(self, "curve_t", t)
            object.__setattr__(self, "curve_b", b)

    @classmethod
    def threshold_1d(cls, xbar: float) -> "CandidateSet":
        return cls("threshold-1d", threshold=float(xbar))

    @classmethod
    def ellipsoid(cls, p1: float, p2: float, q: float = 2.0, x1_max: float | None = None) -> "CandidateSet":
        return cls("ellipsoid-2d", ellipse=Ellipse(0.0, 0.0, p1, p2, q, x1_max))

    @classmethod
    def curve(cls, t, b) -> "CandidateSet":
        return cls("curve-spacetime", curve_t=np.asarray(t, float), curve_b=np.asarray(b, float))

    @anchored("stopping-set-shape")
    def validate(self, K: float) -> None:
        """Check the structural requirements relative to strike ``K``."""
        if self.kind == "threshold-1d":
            if not 0 < self.threshold < K:
                raise CandidateError("1D threshold must lie in (0, K)")
        elif self.kind == "ellipsoid-2d":
            e = self.ellipse
            if e.max_sum() >= K:
                raise CandidateError("region must lie inside {x1 + x2 < K}")
        else:
            b = self.curve_b
            if np.any(b < 0) or np.any(b > K):
                raise CandidateError("curve values must lie in [0, K]")
            if abs(b[-1] - K) > 1e-12 * K:
                raise CandidateError("curve must end at K")

    def b_at(self, t):
        return np.interp(t, self.curve_t, self.curve_b)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "threshold-1d":
            out["threshold"] = self.threshold
        elif self.kind == "ellipsoid-2d":
            e = self.ellipse
            out["ellipse"] = {"cx": e.cx, "cy": e.cy, "rx": e.rx, "ry": e.ry, "q": e.q}
            if e.x1_max is not None:
                out["ellipse"]["x1_max"] = e.x1_max
        else:
            out["curve"] = {"t": self.curve_t.tolist(), "b": self.curve_b.tolist()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CandidateSet":
        kind = data["kind"]
        if kind == "threshold-1d":
            return cls.threshold_1d(data["threshold"])
        if kind == "ellipsoid-2d":
            e = data["ellipse"]
            return cls(
                kind,
                ellipse=Ellipse(e.get("cx", 0.0), e.get("cy", 0.0), e["rx"], e["ry"], e.get("q", 2.0), e.get("x1_max")),
            )
        if kind == "curve-spacetime":
            return cls.curve(data["curve"]["t"], data["curve"]["b"])
        raise CandidateError(f"unknown candidate kind {kind!r}")

    @classmethod
    def from_json(cls, text: str) -> "CandidateSet":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# candidate values
# ---------------------------------------------------------------------------


def _antiderivative_below(k: Kernel1D, params: GbmParams, z, x):
    """``x^(-gamma) (2/a^2) int_0^z y^(gamma-1) sigma(y) dy`` for ``z <= x``.

    Written in ``(z/x)^gamma`` so large ``gamma`` does not overflow.
    """
    r, K, mu = params.r, params.K, float(params.mu[0])
    g = k.gamma
    return (2.0 / k.a**2) * (z / x) ** g * (r * K / g + (mu - r) * z / (g + 1))


def _antiderivative_above(k: Kernel1D, params: GbmParams, lo, hi):
    """``(2/a^2) int_lo^hi y^(-beta-1) sigma(y) dy``."""
    r, K, mu = params.r, params.K, float(params.mu[0])
    b = k.beta
    out = r * K * (lo ** (-b) - hi ** (-b)) / b
    if mu != r:
        if abs(b - 1.0) < 1e-14:
            out = out + (mu - r) * np.log(hi / lo)
        else:
            out = out + (mu - r) * (hi ** (1 - b) - lo ** (1 - b)) / (1 - b)
    return (2.0 / k.a**2) * out


@anchored("one-dimensional-candidate")
def candidate_value_1d(xbar: float, x, params: GbmParams, method: str = "closed"):
    """Potential of ``sigma`` over ``(0, xbar]`` in one dimension.

    ``method="closed"`` integrates the two-piece kernel analytically;
    ``method="quad"`` integrates kernel x density x speed measure numerically.
    """
    if params.d != 1:
        raise ValueError("candidate_value_1d needs a one-dimensional model")
    if not 0 < xbar < params.K:
        raise CandidateError("threshold must lie in (0, K)")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    k = Kernel1D.from_params(params)
    if method == "quad":
        out = np.vectorize(lambda xx: _candidate_1d_quad(xbar, xx, params, k))(x)
        return out if np.ndim(out) else float(out)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    w = k.wronskian
    lower = np.minimum(x, xbar)
    out = _antiderivative_below(k, params, lower, x) / w
    above = x < xbar
    if np.any(above):
        xa = np.where(above, x, xbar)
        out = out + np.where(above, xa**k.beta / w * _antiderivative_above(k, params, xa, xbar), 0.0)
    return out if np.ndim(out) else float(out)


def _candidate_1d_quad(xbar: float, x: float, params: GbmParams, k: Kernel1D) -> float:
    def f(y):
        return green_1d(x, y, k) * sigma_density(y, params) * k.speed_density(y)

    pts = [x] if 0 < x < xbar else None
    val, _ = integrate.quad(f, 0.0, xbar, points=pts, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def _density_pair(params: GbmParams, density):
    if density is None:
        return RepresentingDensity(params).pair()
    if hasattr(density, "pair"):
        return density.pair()
    return density


@anchored("two-dimensional-candidate")
def candidate_value_2d(
    cset: CandidateSet,
    x,
    params: GbmParams,
    quad: QuadConfig = QuadConfig(),
    density=None,
) -> QuadResult:
    """Potential of ``sigma`` over an ellipsoid-type region, with error estimate.

    ``density`` overrides ``sigma``: a :class:`RepresentingDensity`-like
    object or a vectorised callable ``f(y1, y2)``.
    """
    if cset.kind != "ellipsoid-2d":
        raise CandidateError("candidate_value_2d needs an ellipsoid-2d candidate")
    if params.d != 2:
        raise ValueError("candidate_value_2d needs a two-dimensional model")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    k = Kernel2D.from_params(params)
    return integrate_region(k, x, cset.ellipse.excess, _density_pair(params, density), quad)


@anchored("spacetime-candidate")
def candidate_value_spacetime(cset: CandidateSet, s: float, x: float, put) -> float:
    """Space-time potential for the curve candidate ``{y <= b(t)}``.

    Interior density ``rK`` plus terminal mass ``(K - y)^+``, which reduces
    to ``rK int_s^T e^{-r(t-s)} P(X_t < b(t)) dt + European put``.
    """
    from .amput import crossing_prob, european_put

    if cset.kind != "curve-spacetime":
        raise CandidateError("candidate_value_spacetime needs a curve candidate")
    T = float(cset.curve_t[-1])
    if not 0 <= s < T:
        raise ValueError("need 0 <= s < T")
    span = T - s

    def premium_integrand(u):
        # t = s + span u^2 removes the square-root behaviour at t = s
        t = s + span * u * u
        level = float(cset.b_at(t))
        if level <= 0:
            return 0.0
        p = crossing_prob(s, x, t, level, put) if t > s else (0.5 if level == x else float(x < level))
        return math.exp(-put.r * (t - s)) * p * 2.0 * span * u

    knots = np.sqrt(np.clip((cset.curve_t - s) / span, 0.0, 1.0))
    knots = [float(v) for v in knots if 0.0 < v < 1.0]
    prem, _ = integrate.quad(premium_integrand, 0.0, 1.0, points=knots[:100] or None, limit=max(200, 4 * len(knots)), epsabs=1e-12, epsrel=1e-10)
    return put.r * put.K * prem + european_put(s, x, put)


@anchored("riesz-potential")
def potential(cset: CandidateSet, x, model, **kwargs):
    """Candidate value ``V_S(x)`` for any candidate kind.

    ``model`` is a :class:`GbmParams` for threshold and ellipsoid sets and an
    ``AmericanPut`` for curves, in which case ``x`` is ``(s, price)``.  The
    harmonic part is zero, so the value is the potential alone.
    """
    if cset.kind == "threshold-1d":
        return candidate_value_1d(cset.threshold, x, model, **kwargs)
    if cset.kind == "ellipsoid-2d":
        return candidate_value_2d(cset, x, model, **kwargs).value
    s, price = x
    return candidate_value_spacetime(cset, float(s), float(price), model)

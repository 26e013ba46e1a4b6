"""Two-factor investment boundary: fit a superellipse by value matching.

The stopping region is the part of the quadrant under the curve
``x2 = p2 * phi(x1 / p1)`` where ``phi`` is the unit superellipse of
exponent ``q`` centred at ``(-s, -s)`` and rescaled to pass through
``(0, 1)`` and ``(1, 0)``.  ``s = 0`` is the origin-centred superellipse
``(x1/p1)^q + (x2/p2)^q = 1``; ``s > 0`` lets the curve meet the axes at a
finite slope.  Parameters are fitted by least squares on the residual
``g(x) - V_S(x)`` at collocation points of the curve.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .docsmap import anchored
from .model import GbmParams
from .perpetual import solve_perpetual
from .quadrature import QuadConfig
from .riesz import CandidateSet, Ellipse, RepresentingDensity, candidate_value_2d


class FitConfigError(ValueError):
    """Fit requested with an inadmissible configuration."""


@anchored("investment-boundary-family")
@dataclass(frozen=True)
class EllipsoidBoundary:
    """Boundary curve with axis intercepts ``p1``, ``p2``, exponent ``q`` and
    centre offset ``shift`` (in units of the intercepts)."""

    p1: float
    p2: float
    q: float = 2.0
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not (self.p1 > 0 and self.p2 > 0):
            raise ValueError("intercepts must be positive")
        if not self.q >= 1:
            raise ValueError("q >= 1 is required for a convex region")
        if not self.shift >= 0:
            raise ValueError("shift must be nonnegative")

    @property
    def radius(self) -> float:
        """Radius of the unit shape, fixed by passing through (0,1) and (1,0)."""
        s, q = self.shift, self.q
        return ((1.0 + s) ** q + s**q) ** (1.0 / q)

    def ellipse(self, x1_max: float | None = None) -> Ellipse:
        rho = self.radius
        return Ellipse(-self.shift * self.p1, -self.shift * self.p2, rho * self.p1, rho * self.p2, self.q, x1_max)

    def candidate(self, x1_max: float | None = None) -> CandidateSet:
        return CandidateSet("ellipsoid-2d", ellipse=self.ellipse(x1_max))

    def scaled(self, c: float) -> "EllipsoidBoundary":
        return replace(self, p1=c * self.p1, p2=c * self.p2)

    def contained_below(self, K: float) -> bool:
        """Region lies inside ``{x1 + x2 < K}``."""
        return self.ellipse().max_sum() < K

    def to_dict(self) -> dict:
        return {"p1": self.p1, "p2": self.p2, "q": self.q, "shift": self.shift}


@anchored("boundary-curve")
def boundary_gamma(x1, b: EllipsoidBoundary):
    """``x2`` on the boundary above ``x1`` (decreasing from ``p2`` to 0)."""
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 < 0) or np.any(x1 > b.p1):
        raise ValueError("x1 must lie in [0, p1]")
    s, q, rho = b.shift, b.q, b.radius
    u = (x1 / b.p1 + s) / rho
    inner = np.clip(1.0 - u**q, 0.0, None)
    out = b.p2 * np.clip(-s + rho * inner ** (1.0 / q), 0.0, None)
    out = np.where(x1 == 0, b.p2, np.where(x1 == b.p1, 0.0, out))
    return out if out.ndim else float(out)


def _outer_cut(params: GbmParams, outer_limit: str) -> float | None:
    if outer_limit == "intercept":
        return None
    if outer_limit == "x1_star":
        return solve_perpetual(params.component(0)).x_star
    raise ValueError(f"unknown outer_limit {outer_limit!r}")


def _point_residual(x1, b, params, quad, outer_limit, density_scale):
    x2 = float(boundary_gamma(x1, b))
    cset = b.candidate(_outer_cut(params, outer_limit))
    g = params.K - x1 - x2
    if density_scale == 0.0:
        return x2, g, 0.0
    res = candidate_value_2d(cset, [x1, x2], params, quad, density=RepresentingDensity(params).scaled(density_scale))
    return x2, g - res.value, res.error


@anchored("value-matching-residual")
def residual_at(
    x1: float,
    b: EllipsoidBoundary,
    params: GbmParams,
    quad: QuadConfig = QuadConfig(),
    outer_limit: str = "intercept",
    density_scale: float = 1.0,
) -> float:
    """``g(x) - V_S(x)`` at the boundary point above ``x1``.

    ``outer_limit="x1_star"`` truncates the region at the one-dimensional
    threshold of the first factor instead of the fitted intercept.
    """
    if not 0 < x1 < b.p1:
        raise ValueError("x1 must lie in (0, p1)")
    return _point_residual(float(x1), b, params, quad, outer_limit, density_scale)[1]


@dataclass
class ResidualReport:
    """Residuals at collocation points; ``l2`` is the root mean square."""

    points: np.ndarray
    residuals: np.ndarray
    quad_errors: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))

    @property
    def max_quad_error(self) -> float:
        return float(np.max(self.quad_errors))

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "residuals": self.residuals.tolist(),
            "quad_errors": self.quad_errors.tolist(),
            "residual_sup": self.sup,
            "residual_l2": self.l2,
        }


def collocation_x1(p1: float, n: int) -> np.ndarray:
    """Chebyshev points of the first kind mapped to the open interval (0, p1)."""
    k = np.arange(n)
    return 0.5 * p1 * (1.0 - np.cos(np.pi * (k + 0.5) / n))


def _eval_one(task):
    return _point_residual(*task)


def residual_report(
    b: EllipsoidBoundary,
    params: GbmParams,
    n: int = 16,
    quad: QuadConfig = QuadConfig(),
    outer_limit: str = "intercept",
    workers: int | None = None,
) -> ResidualReport:
    x1 = collocation_x1(b.p1, n)
    tasks = [(float(v), b, params, quad, outer_limit, 1.0) for v in x1]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_eval_one, tasks))
    else:
        rows = [_eval_one(t) for t in tasks]
    x2 = np.array([r[0] for r in rows])
    return ResidualReport(
        points=np.column_stack([x1, x2]),
        residuals=np.array([r[1] for r in rows]),
        quad_errors=np.array([r[2] for r in rows]),
    )


@dataclass(frozen=True)
class FamilyConfig:
    """Which shape parameters are free and where they start.

    ``symmetric=None`` ties ``p1 = p2`` exactly when the two factors have
    equal drift and volatility (the problem is then exchange symmetric).
    """

    q0: float = 2.0
    shift0: float = 0.1
    fit_q: bool = True
    fit_shift: bool = True
    symmetric: bool | None = None
    outer_limit: str = "intercept"


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "least_squares"  # or "nelder-mead"
    max_evals: int = 200
    xtol: float = 1e-8
    ftol: float = 1e-12
    diff_step: float = 1e-4
    workers: int | None = None


@dataclass
class FitResult:
    boundary: EllipsoidBoundary
    report: ResidualReport
    converged: bool
    n_evals: int
    seconds: float
    seed: EllipsoidBoundary
    message: str = ""
    extra: dict = field(default_factory=dict)


def _is_symmetric(params: GbmParams) -> bool:
    return bool(params.mu[0] == params.mu[1] and abs(params.a[0]) == abs(params.a[1]))


@anchored("investment-boundary-fit")
def fit_boundary(
    params: GbmParams,
    n: int = 16,
    family: FamilyConfig = FamilyConfig(),
    optimizer: OptimizerConfig = OptimizerConfig(),
    quad: QuadConfig = QuadConfig(),
) -> FitResult:
    """Least-squares fit of the boundary family to the value-matching equation.

    Intercepts start at the one-dimensional thresholds of each factor.
    Non-convergence is reported through ``converged=False`` with the best
    iterate, never raised.
    """
    if params.d != 2:
        raise FitConfigError("fit_boundary needs a two-dimensional (reduced) model")
    if np.any(params.mu > params.r):
        raise FitConfigError("need mu_i <= r")
    symmetric = _is_symmetric(params) if family.symmetric is None else family.symmetric
    n_free = (1 if symmetric else 2) + int(family.fit_q) + int(family.fit_shift)
    if n < max(2, n_free):
        raise FitConfigError(f"{n} collocation points cannot determine {n_free} parameters")

    seeds = [solve_perpetual(params.component(i)).x_star for i in (0, 1)]
    if symmetric:
        seeds = [0.5 * (seeds[0] + seeds[1])] * 2
    seed = EllipsoidBoundary(seeds[0], seeds[1], family.q0, family.shift0)

    def unpack(z):
        z = list(z)
        p1 = z.pop(0)
        p2 = p1 if symmetric else z.pop(0)
        q = z.pop(0) if family.fit_q else family.q0
        s = z.pop(0) if family.fit_shift else family.shift0
        return EllipsoidBoundary(float(p1), float(p2), float(q), float(s))

    z0 = [seed.p1] + ([] if symmetric else [seed.p2])
    lo = [1e-6 * params.K] * len(z0)
    hi = [params.K] * len(z0)
    if family.fit_q:
        z0.append(family.q0)
        lo.append(1.0)
        hi.append(50.0)
    if family.fit_shift:
        z0.append(family.shift0)
        lo.append(0.0)
        hi.append(10.0)

    count = [0]
    best: dict = {}
    penalty = 10.0 * params.K

    def residuals(z):
        count[0] += 1
        try:
            b = unpack(z)
        except ValueError:
            return np.full(n, penalty)
        if not b.contained_below(params.K):
            return np.full(n, penalty)
        rep = residual_report(b, params, n, quad, family.outer_limit, optimizer.workers)
        if not best or rep.l2 < best["report"].l2:
            best.update(boundary=b, report=rep)
        return rep.residuals

    start = time.perf_counter()
    if optimizer.method == "least_squares":
        out = least_squares(
            residuals,
            z0,
            bounds=(lo, hi),
            method="trf",
            diff_step=optimizer.diff_step,
            xtol=optimizer.xtol,
            ftol=optimizer.ftol,
            max_nfev=optimizer.max_evals,
        )
        converged, message = bool(out.success), str(out.message)
    elif optimizer.method == "nelder-mead":
        out = minimize(
            lambda z: float(np.sqrt(np.mean(residuals(z) ** 2))),
            z0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"xatol": optimizer.xtol, "fatol": optimizer.ftol, "maxfev": optimizer.max_evals},
        )
        converged, message = bool(out.success), str(out.message)
    else:
        raise FitConfigError(f"unknown optimizer {optimizer.method!r}")
    elapsed = time.perf_counter() - start
    return FitResult(best["boundary"], best["report"], converged, count[0], elapsed, seed, message)


@dataclass
class GateReport:
    fitted_l2: float
    perturbed: dict[float, float]

    @property
    def passed(self) -> bool:
        return all(v > self.fitted_l2 for c, v in self.perturbed.items() if c != 1.0)

    def monotone_in(self, factors) -> bool:
        """Norms grow as the factors move away from 1 on each side."""
        ok = True
        for side in (lambda c: c < 1, lambda c: c > 1):
            cs = sorted((c for c in factors if side(c)), key=lambda c: abs(c - 1))
            vals = [self.perturbed[c] for c in cs]
            ok &= all(b >= a for a, b in zip(vals, vals[1:]))
        return ok

    def to_dict(self) -> dict:
        return {"fitted_l2": self.fitted_l2, "perturbed": {str(k): v for k, v in self.perturbed.items()}, "passed": self.passed}


@anchored("uniqueness-gate")
def uniqueness_gate(
    b: EllipsoidBoundary,
    factors,
    params: GbmParams,
    quad: QuadConfig = QuadConfig(),
    n: int = 16,
    outer_limit: str = "intercept",
    fitted_l2: float | None = None,
) -> GateReport:
    """Residual norms of the boundary scaled by each factor versus the fit."""
    base = residual_report(b, params, n, quad, outer_limit).l2 if fitted_l2 is None else fitted_l2
    out = {}
    for c in factors:
        c = float(c)
        if c == 1.0:
            out[c] = base
            continue
        sb = b.scaled(c)
        if not sb.contained_below(params.K):
            out[c] = math.inf
            continue
        out[c] = residual_report(sb, params, n, quad, outer_limit).l2
    return GateReport(base, out)

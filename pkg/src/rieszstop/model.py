"""Multi-dimensional geometric Brownian motion: parameters, problem
reduction, the duality measure, transition densities and exact sampling."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .docsmap import anchored

try:  # py3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ParameterError(ValueError):
    """Model parameters violate a structural invariant."""


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be a vector")
    return arr


@anchored("gbm-model")
@dataclass(frozen=True, eq=False)
class GbmParams:
    """Drifts ``mu``, volatilities ``a``, correlation matrix ``corr`` of the
    driving Brownian motions, discount rate ``r`` and strike ``K``.

    Component ``i`` evolves as ``x_i exp(a_i W_i(t) + (mu_i - a_i^2/2) t)``.
    """

    mu: np.ndarray
    a: np.ndarray
    corr: np.ndarray
    r: float
    K: float = 1.0
    require_subcritical: bool = field(default=True, repr=False)
    # a zero volatility is only meaningful for a constant revenue factor
    allow_degenerate: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        mu = _as_vector(self.mu, "mu")
        a = _as_vector(self.a, "a")
        d = mu.size
        corr = np.asarray(self.corr, dtype=float).reshape(-1, d) if d else np.zeros((0, 0))
        if a.size != d or corr.shape != (d, d):
            raise ParameterError(f"inconsistent dimensions: mu {mu.shape}, a {a.shape}, corr {corr.shape}")
        if np.any(a == 0) and not self.allow_degenerate:
            raise ParameterError("volatilities must be nonzero")
        if not np.allclose(corr, corr.T, atol=1e-14):
            raise ParameterError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-14):
            raise ParameterError("correlation matrix must have unit diagonal")
        try:
            np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("correlation matrix must be positive definite") from exc
        if not self.r > 0:
            raise ParameterError("discount rate r must be positive")
        if not self.K > 0:
            raise ParameterError("strike K must be positive")
        if self.require_subcritical and np.any(mu > self.r + 1e-15):
            raise ParameterError("drifts must satisfy mu_i <= r")
        for name, val in (("mu", mu), ("a", a), ("corr", corr)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "K", float(self.K))

    @property
    def d(self) -> int:
        return int(self.mu.size)

    @property
    def cov(self) -> np.ndarray:
        """Instantaneous covariance of the log-prices, ``a_i a_j corr_ij``."""
        return np.outer(self.a, self.a) * self.corr

    @property
    def log_drift(self) -> np.ndarray:
        return self.mu - 0.5 * self.a**2

    @property
    def mu_bar(self) -> np.ndarray:
        """Drift of the unit-variance driving motions, ``(mu_i - a_i^2/2)/a_i``."""
        return self.log_drift / self.a

    def component(self, i: int) -> "GbmParams":
        return GbmParams(self.mu[[i]], self.a[[i]], np.eye(1), self.r, self.K, self.require_subcritical)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mu": self.mu.tolist(),
            "a": self.a.tolist(),
            "corr": self.corr.tolist(),
            "r": self.r,
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, data: dict, *, require_subcritical: bool = True) -> "GbmParams":
        mu = _as_vector(data["mu"], "mu")
        d = int(data.get("d", mu.size))
        if d != mu.size:
            raise ParameterError(f"d={d} does not match len(mu)={mu.size}")
        corr = data.get("corr", np.eye(d).tolist())
        return cls(mu, data["a"], corr, data["r"], data.get("K", 1.0), require_subcritical)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GbmParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_dict(), sort_keys=True))


def load_config(path: str | Path) -> dict:
    """Read a JSON or TOML configuration file into a dict."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text.decode())
    return json.loads(text)


def load_params(path: str | Path) -> GbmParams:
    data = load_config(path)
    return GbmParams.from_dict(data.get("params", data))


# ---------------------------------------------------------------------------
# Problem reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedProblem:
    """d-factor problem obtained by using the revenue factor as numeraire.

    ``value_full(x) = scale(x) * V_reduced(start(x))`` where ``V_reduced``
    is the value of the reduced problem with strike ``base.K``.
    """

    base: GbmParams
    alpha: np.ndarray
    note: str = "numeraire change on revenue factor"

    def start(self, x_full: Sequence[float]) -> np.ndarray:
        x = np.asarray(x_full, dtype=float)
        return self.base.K * self.alpha * x[1:] / x[0]

    def scale(self, x_full: Sequence[float]) -> float:
        return float(x_full[0]) / self.base.K


@anchored("revenue-numeraire-reduction")
def reduce_problem(full: GbmParams, alpha: Sequence[float] | None = None) -> ReducedProblem:
    """Eliminate factor 0 of a ``d+1``-factor investment problem.

    Under the measure with density ``exp(-mu_0 t) X0_t / x0`` the ratios
    ``X_i / X_0`` are GBMs with drift ``mu_i - mu_0``; discounting drops to
    ``r - mu_0``.  Weights ``alpha`` only rescale the start point.
    """
    if full.d < 2:
        raise ParameterError("need at least two factors (revenue + one cost)")
    d = full.d - 1
    alpha = np.ones(d) if alpha is None else _as_vector(alpha, "alpha")
    if alpha.size != d:
        raise ParameterError(f"alpha must have length {d}")
    if np.any(alpha <= 0):
        raise ParameterError("weights alpha must be strictly positive")
    mu0, a0 = full.mu[0], full.a[0]
    if not full.r > mu0:
        raise ParameterError("need r > mu_0, otherwise the value may be infinite")

    c = full.cov
    # covariance of a_i W_i - a_0 W_0
    cov = c[1:, 1:] - c[1:, [0]] - c[[0], 1:] + c[0, 0]
    vol = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if np.any(vol == 0):
        raise ParameterError("a reduced factor has zero volatility")
    corr = cov / np.outer(vol, vol)
    np.fill_diagonal(corr, 1.0)
    corr = 0.5 * (corr + corr.T)
    # a0 == 0 leaves the factor signs intact
    sign = np.sign(full.a[1:]) if a0 == 0 else np.ones(d)
    base = GbmParams(
        full.mu[1:] - mu0,
        sign * vol,
        corr * np.outer(sign, sign),
        full.r - mu0,
        full.K,
        full.require_subcritical,
    )
    return ReducedProblem(base=base, alpha=alpha)


# ---------------------------------------------------------------------------
# Duality measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualDensity:
    """Lebesgue density of the measure that makes the resolvent self-dual.

    ``h(y) = prod_i y_i ** power_i`` with
    ``power = -1 + 2 * (mu - a^2/2) @ inv(cov)``.  In one dimension with
    ``mu = r`` this is ``y ** (gamma - 2)``, ``gamma = 2 r / a^2``.
    """

    params: GbmParams

    @property
    def powers(self) -> np.ndarray:
        p = self.params
        return -1.0 + 2.0 * np.linalg.solve(p.cov, p.log_drift)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise ValueError("dual density is defined on the open positive orthant only")
        out = np.exp(np.log(y) @ self.powers)
        return out if np.ndim(out) else float(out)

    def box_mass(self, lo: Sequence[float], hi: Sequence[float]) -> float:
        """``m(box)``; the density factorises, so this is a product."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        out = 1.0
        for p, l, h in zip(self.powers, lo, hi):
            out *= _power_integral(p, l, h)
        return out

    def sample_box(self, lo, hi, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points from ``m`` restricted to the box (inverse CDF)."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        u = rng.random((n, lo.size))
        out = np.empty_like(u)
        for i, (p, l, h) in enumerate(zip(self.powers, lo, hi)):
            if abs(p + 1.0) < 1e-12:
                out[:, i] = l * (h / l) ** u[:, i]
            else:
                e = p + 1.0
                out[:, i] = (l**e + u[:, i] * (h**e - l**e)) ** (1.0 / e)
        return out


def _power_integral(p: float, lo: float, hi: float) -> float:
    if abs(p + 1.0) < 1e-12:
        return float(np.log(hi / lo))
    return float((hi ** (p + 1) - lo ** (p + 1)) / (p + 1))


@anchored("self-dual-measure")
def dual_density(y, params: GbmParams):
    """Evaluate the self-duality density ``h`` at ``y`` (last axis = dims)."""
    return DualDensity(params)(y)


def speed_density_1d(y, params: GbmParams):
    """Speed-measure density ``(2/a^2) y^(2 mu/a^2 - 2)`` of a 1D GBM.

    Differs from the duality density by the constant factor ``2/a^2``.
    """
    a2 = float(params.a[0]) ** 2
    y = np.asarray(y, dtype=float)
    return (2.0 / a2) * y ** (2.0 * float(params.mu[0]) / a2 - 2.0)


# ---------------------------------------------------------------------------
# Transition densities
# ---------------------------------------------------------------------------


@anchored("lognormal-transition")
def transition_density(t: float, x, y, params: GbmParams):
    """Lebesgue transition density of ``X_t`` at ``y`` given ``X_0 = x``.

    Supports ``d = 1`` (lognormal) and ``d = 2`` (bivariate lognormal built
    from the drifted correlated Gaussian density).  ``y`` may carry leading
    batch axes; the last axis holds coordinates when ``d = 2``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("coordinates must be positive")
    d = params.d
    if d == 1:
        a = abs(float(params.a[0]))
        z = (np.log(y / x[0]) - params.log_drift[0] * t) / (a * np.sqrt(t))
        out = np.exp(-0.5 * z * z) / (y * a * np.sqrt(2 * np.pi * t))
        return out if np.ndim(out) else float(out)
    if d != 2:
        raise ValueError("transition_density supports d = 1 or d = 2")
    a = np.abs(params.a)
    rho = params.corr[0, 1] * np.sign(params.a[0] * params.a[1])
    m = params.log_drift / a
    uh = np.log(y[..., 0] / x[0]) / a[0] - m[0] * t
    vh = np.log(y[..., 1] / x[1]) / a[1] - m[1] * t
    one_m = 1.0 - rho * rho
    quad = (uh * uh - 2 * rho * uh * vh + vh * vh) / (2 * t * one_m)
    f_w = np.exp(-quad) / (2 * np.pi * t * np.sqrt(one_m))
    out = f_w / (a[0] * a[1] * y[..., 0] * y[..., 1])
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Random numbers and exact path sampling
# ---------------------------------------------------------------------------


def make_rng(seed: int | np.random.SeedSequence | None, stream: int | None = None) -> np.random.Generator:
    """Counter-based (Philox) generator; ``stream`` selects an independent
    child sequence of ``seed`` so workers never share state."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    if stream is not None:
        ss = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_paths(
    params: GbmParams,
    x0: Sequence[float],
    grid: Sequence[float],
    n: int,
    seed: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Exact GBM samples on ``grid``; returns shape ``(n, len(grid), d)``.

    ``grid`` must start at 0 and increase strictly.  An empty grid is
    treated as ``[0]`` (start point only).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        grid = np.zeros(1)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (params.d,))
    if np.any(x0 <= 0):
        raise ValueError("start point must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    chol = np.linalg.cholesky(params.corr)
    dt = np.diff(grid)
    z = rng.standard_normal((n, dt.size, params.d)) @ chol.T
    incr = params.a * np.sqrt(dt)[None, :, None] * z + params.log_drift * dt[None, :, None]
    logx = np.concatenate([np.zeros((n, 1, params.d)), np.cumsum(incr, axis=1)], axis=1)
    return x0 * np.exp(logx)


def write_paths_csv(path: str | Path, grid: Sequence[float], paths: np.ndarray) -> None:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        grid = np.zeros(1)
    d = paths.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t"] + [f"x_{i + 1}" for i in range(d)])
        for pid in range(paths.shape[0]):
            for k, t in enumerate(grid):
                w.writerow([pid, repr(float(t))] + [repr(float(v)) for v in paths[pid, k]])

"""Monte Carlo and quadrature checks of the structural identities.

Every check returns an :class:`IdentityReport` holding both sides, their
standard errors and the pass flag ``|lhs - rhs| <= k * combined SE``.
Random numbers come from counter-based generators keyed by the configured
seed, so identical configurations give bit-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .amput import AmericanPut, ExerciseBoundary, _premium_sum, european_put
from .docsmap import anchored
from .model import DualDensity, GbmParams, make_rng
from .quadrature import QuadConfig
from .riesz import CandidateSet, candidate_value_1d, candidate_value_2d, sigma_density


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.  ``horizon`` caps simulated time; ``None``
    picks a default per check (see each function)."""

    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    k: float = 3.0
    horizon: float | None = None
    batch: int = 50_000

    def __post_init__(self) -> None:
        if self.n_paths < 1 or not self.dt > 0 or not self.k > 0:
            raise ValueError("need n_paths >= 1, dt > 0 and k > 0")


@dataclass
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    k: float
    seed: int
    n_paths: int
    details: dict = field(default_factory=dict)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= self.k * self.combined_se

    def to_dict(self) -> dict:
        out = asdict(self)
        out["combined_se"] = self.combined_se
        out["passed"] = self.passed
        return out


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _box(box, d: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy() for v in box)
    if np.any(lo <= 0) or np.any(hi <= lo):
        raise ValueError("box must have positive volume inside the open orthant")
    return lo, hi


# ---------------------------------------------------------------------------
# self-duality of the resolvent
# ---------------------------------------------------------------------------


def _exp_time_hits(params: GbmParams, x: np.ndarray, lo, hi, tau, z) -> np.ndarray:
    """Indicator that ``X_tau`` lies in the box, sampled exactly."""
    chol = np.linalg.cholesky(params.corr)
    w = (z @ chol.T) * np.sqrt(tau)[:, None]
    xt = x * np.exp(params.a * w + params.log_drift * tau[:, None])
    return np.all((xt >= lo) & (xt <= hi), axis=1).astype(float)


@anchored("resolvent-self-duality")
def check_duality(params: GbmParams, box_a, box_b, mc: McConfig = McConfig()) -> IdentityReport:
    """``int_A G_r 1_B dm`` versus ``int_B G_r 1_A dm``.

    Uses ``G_r f(x) = E_x f(X_tau) / r`` with ``tau ~ Exp(r)`` independent
    of the path, so each side is a box mass times a hit frequency.  Points
    are drawn from ``m`` restricted to the source box by inverse CDF.  Both
    sides share their uniforms, which makes ``A = B`` agree exactly.
    """
    d = params.d
    a_lo, a_hi = _box(box_a, d)
    b_lo, b_hi = _box(box_b, d)
    dual = DualDensity(params)
    rng = make_rng(mc.seed)
    u = rng.random((mc.n_paths, d))
    tau = rng.exponential(1.0 / params.r, mc.n_paths)
    z = rng.standard_normal((mc.n_paths, d))

    def side(src_lo, src_hi, dst_lo, dst_hi):
        x = _inverse_cdf(dual, src_lo, src_hi, u)
        hits = _exp_time_hits(params, x, dst_lo, dst_hi, tau, z)
        scale = dual.box_mass(src_lo, src_hi) / params.r
        mean, se = _mean_se(hits)
        return scale * mean, scale * se

    lhs, lhs_se = side(a_lo, a_hi, b_lo, b_hi)
    rhs, rhs_se = side(b_lo, b_hi, a_lo, a_hi)
    return IdentityReport(
        "duality", lhs, rhs, lhs_se, rhs_se, mc.k, mc.seed, mc.n_paths,
        {"box_a": [a_lo.tolist(), a_hi.tolist()], "box_b": [b_lo.tolist(), b_hi.tolist()]},
    )


def _inverse_cdf(dual: DualDensity, lo, hi, u) -> np.ndarray:
    out = np.empty_like(u)
    for i, (p, l, h) in enumerate(zip(dual.powers, lo, hi)):
        e = p + 1.0
        if abs(e) < 1e-12:
            out[:, i] = l * (h / l) ** u[:, i]
        else:
            out[:, i] = (l**e + u[:, i] * (h**e - l**e)) ** (1.0 / e)
    return out


# ---------------------------------------------------------------------------
# path stepping
# ---------------------------------------------------------------------------


class _Stepper:
    """Exact GBM steps of size ``dt`` for a batch of paths."""

    def __init__(self, params: GbmParams, dt: float, rng: np.random.Generator):
        self.chol = np.linalg.cholesky(params.corr)
        self.scale = params.a * math.sqrt(dt)
        self.drift = params.log_drift * dt
        self.rng = rng
        self.d = params.d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = self.rng.standard_normal((x.shape[0], self.d)) @ self.chol.T
        return x * np.exp(self.scale * z + self.drift)


def _candidate_function(cset: CandidateSet, params: GbmParams, quad: QuadConfig):
    if cset.kind == "threshold-1d":
        return lambda x: np.asarray(candidate_value_1d(cset.threshold, x[:, 0], params))
    if cset.kind == "ellipsoid-2d":

        def w(x):
            return np.array([candidate_value_2d(cset, p, params, quad).value for p in x])

        return w
    raise ValueError("stationary checks need a threshold-1d or ellipsoid-2d candidate")


def _in_set(cset: CandidateSet, x: np.ndarray) -> np.ndarray:
    if cset.kind == "threshold-1d":
        return x[:, 0] <= cset.threshold
    return cset.ellipse.contains(x)


def _spline_table(w, lo, hi, pad: np.ndarray, n: int):
    """Cubic interpolant of ``w`` on the padded box (2D exit values)."""
    g1 = np.linspace(lo[0] - pad[0], hi[0] + pad[0], n)
    g2 = np.linspace(lo[1] - pad[1], hi[1] + pad[1], n)
    pts = np.array([[a, b] for a in g1 for b in g2])
    vals = w(pts).reshape(n, n)
    spl = RectBivariateSpline(g1, g2, vals, kx=3, ky=3)
    return lambda x: spl.ev(x[:, 0], x[:, 1])


# ---------------------------------------------------------------------------
# Dynkin representation
# ---------------------------------------------------------------------------


@anchored("dynkin-representation")
def check_dynkin(
    cset: CandidateSet,
    x,
    box,
    params: GbmParams,
    mc: McConfig = McConfig(),
    quad: QuadConfig = QuadConfig(),
    density_scale: float = 1.0,
    table_size: int = 25,
) -> IdentityReport:
    """``w(x)`` versus ``E[e^{-r tau} w(X_tau)] + E int_0^tau e^{-rt} sigma 1_S(X_t) dt``.

    ``w`` is the candidate value of ``cset``; ``tau`` is the first grid time
    outside ``box`` (capped at ``mc.horizon``, default 50).  The identity
    holds for any stopping time, so discrete exit detection adds no bias
    beyond the trapezoid rule for the running integral.  In 2D, ``w`` at
    exit points comes from a cubic table over a padded box.
    ``density_scale`` multiplies ``sigma`` (and so ``w``).
    """
    d = params.d
    x = np.broadcast_to(np.asarray(x, dtype=float), (d,)).copy()
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy() for v in box)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("box must contain the start point")
    c = float(density_scale)
    w_exact = _candidate_function(cset, params, quad)
    if c == 0.0:
        w_exact = lambda pts: np.zeros(pts.shape[0])  # noqa: E731

    lhs_err = 0.0
    if d == 2 and c != 0.0:
        res = candidate_value_2d(cset, x, params, quad)
        lhs, lhs_err = c * res.value, c * res.error
    else:
        lhs = c * float(w_exact(x[None, :])[0])

    horizon = 50.0 if mc.horizon is None else mc.horizon
    if np.all(lo == hi):
        return IdentityReport("dynkin", lhs, lhs, lhs_err, 0.0, mc.k, mc.seed, mc.n_paths, {"tau": 0.0})

    if d == 2 and c != 0.0:
        pad = 0.1 * (hi - lo) + 8.0 * np.abs(params.a) * math.sqrt(mc.dt) * hi
        w_exit = _spline_table(w_exact, lo, hi, pad, table_size)
    else:
        w_exit = w_exact

    rng = make_rng(mc.seed)
    step = _Stepper(params, mc.dt, rng)
    n_steps = int(math.ceil(horizon / mc.dt))
    totals = np.empty(mc.n_paths)
    exit_pts = np.empty((mc.n_paths, d))
    exit_disc = np.empty(mc.n_paths)
    mean_tau = 0.0

    def running(pts):
        return c * sigma_density(pts, params) * _in_set(cset, pts)

    xs = np.tile(x, (mc.n_paths, 1))
    idx = np.arange(mc.n_paths)
    integral = np.zeros(mc.n_paths)
    f_prev = running(xs)
    for n in range(1, n_steps + 1):
        xs = step(xs)
        f_now = running(xs)
        t0, t1 = (n - 1) * mc.dt, n * mc.dt
        integral[idx] += 0.5 * mc.dt * (math.exp(-params.r * t0) * f_prev + math.exp(-params.r * t1) * f_now)
        out = np.any((xs < lo) | (xs > hi), axis=1) | (n == n_steps)
        if out.any():
            exit_pts[idx[out]] = xs[out]
            exit_disc[idx[out]] = math.exp(-params.r * t1)
            mean_tau += t1 * out.sum()
            keep = ~out
            xs, idx, f_now = xs[keep], idx[keep], f_now[keep]
        f_prev = f_now
        if idx.size == 0:
            break
    w_vals = c * np.asarray(w_exit(exit_pts), dtype=float)
    totals = exit_disc * w_vals + integral
    rhs, rhs_se = _mean_se(totals)
    return IdentityReport(
        "dynkin", lhs, rhs, lhs_err, rhs_se, mc.k, mc.seed, mc.n_paths,
        {"box": [lo.tolist(), hi.tolist()], "start": x.tolist(), "mean_tau": float(mean_tau / mc.n_paths), "dt": mc.dt},
    )


def _premium_many(s: float, xs: np.ndarray, boundary: ExerciseBoundary, put: AmericanPut) -> np.ndarray:
    """Total candidate value ``premium + European`` at time ``s`` for many spots."""
    if s >= put.T:
        return np.maximum(put.K - xs, 0.0)
    t = boundary.t
    after = t > s
    tt = np.concatenate([[s], t[after]])
    bb = np.concatenate([[boundary(s)], boundary.b[after]])
    out = np.array([_premium_sum(s, float(v), tt, bb, put) for v in xs])
    return out + european_put(s, xs, put)


@anchored("spacetime-dynkin")
def check_dynkin_spacetime(
    boundary: ExerciseBoundary,
    put: AmericanPut,
    s: float,
    x: float,
    level: float,
    mc: McConfig = McConfig(),
) -> IdentityReport:
    """``w(s, x)`` versus ``E[e^{-r(tau-s)} w(tau, X_tau)] + rK E int_s^tau e^{-r(t-s)} 1{X_t < b(t)} dt``.

    ``w`` is the premium-plus-European candidate of ``boundary``; ``tau`` is
    the first time on the boundary grid at which ``X >= level``, capped at
    ``T``.  The running integral uses the same grid and trapezoid rule as
    the premium itself.
    """
    if not x < level:
        raise ValueError("start below the level")
    t = boundary.t[boundary.t >= s]
    if t[0] > s:
        t = np.concatenate([[s], t])
    lhs = float(_premium_many(s, np.array([x]), boundary, put)[0])
    gbm = GbmParams([put.r], [put.vol], [[1.0]], put.r, put.K)
    rng = make_rng(mc.seed)
    xs = np.full(mc.n_paths, float(x))
    idx = np.arange(mc.n_paths)
    integral = np.zeros(mc.n_paths)
    exit_step = np.full(mc.n_paths, t.size - 1)
    exit_x = np.empty(mc.n_paths)
    rk = put.r * put.K

    def running(v, k):
        bk = boundary(t[k])
        ind = np.where(v == bk, 0.5, (v < bk).astype(float)) if k == 0 else (v < bk).astype(float)
        return rk * math.exp(-put.r * (t[k] - s)) * ind

    f_prev = running(xs, 0)
    for k in range(1, t.size):
        h = t[k] - t[k - 1]
        z = rng.standard_normal(xs.size)
        xs = xs * np.exp(put.vol * math.sqrt(h) * z + (put.r - 0.5 * put.vol**2) * h)
        f_now = running(xs, k)
        integral[idx] += 0.5 * h * (f_prev + f_now)
        out = (xs >= level) | (k == t.size - 1)
        if out.any():
            exit_step[idx[out]] = k
            exit_x[idx[out]] = xs[out]
            keep = ~out
            xs, idx, f_now = xs[keep], idx[keep], f_now[keep]
        f_prev = f_now
        if idx.size == 0:
            break
    w_exit = np.empty(mc.n_paths)
    for k in np.unique(exit_step):
        sel = exit_step == k
        w_exit[sel] = math.exp(-put.r * (t[k] - s)) * _premium_many(float(t[k]), exit_x[sel], boundary, put)
    rhs, rhs_se = _mean_se(w_exit + integral)
    return IdentityReport(
        "dynkin-spacetime", lhs, rhs, 0.0, rhs_se, mc.k, mc.seed, mc.n_paths,
        {"s": s, "x": x, "level": level, "steps": int(t.size - 1)},
    )


# ---------------------------------------------------------------------------
# policy values and supermartingales
# ---------------------------------------------------------------------------


def truncation_horizon(K: float, r: float, target_se: float) -> float:
    """Smallest ``T`` with ``e^{-rT} K < 0.1 target_se``."""
    return math.log(K / (0.1 * target_se)) / r


@anchored("first-entry-policy-value")
def policy_value_mc(
    rule,
    start,
    params: GbmParams | AmericanPut,
    mc: McConfig = McConfig(),
    target_se: float | None = None,
) -> IdentityReport:
    """Expected discounted reward of the first-entry rule, with SE.

    ``rule`` is a :class:`CandidateSet` (stationary problems, ``params`` a
    :class:`GbmParams`) or an :class:`ExerciseBoundary` (``params`` an
    :class:`AmericanPut`, ``start = (s, x)``).  Entry is detected on the
    time grid.  Stationary runs stop at ``mc.horizon`` or, by default, at
    :func:`truncation_horizon` for ``target_se`` (default ``1e-3 K``); the
    neglected tail is below ``e^{-r T_max} K``.  The report's ``lhs`` is the
    estimate and ``rhs`` repeats it so the pass flag is trivially true.
    """
    if isinstance(rule, ExerciseBoundary):
        return _put_policy(rule, start, params, mc)
    cset: CandidateSet = rule
    d = params.d
    x0 = np.broadcast_to(np.asarray(start, dtype=float), (d,)).copy()
    K, r = params.K, params.r

    def reward(pts):
        return np.maximum(K - pts.sum(axis=1), 0.0)

    if _in_set(cset, x0[None, :])[0]:
        g = float(reward(x0[None, :])[0])
        return IdentityReport("policy", g, g, 0.0, 0.0, mc.k, mc.seed, mc.n_paths, {"tau": 0.0})
    target = 1e-3 * K if target_se is None else target_se
    horizon = mc.horizon if mc.horizon is not None else truncation_horizon(K, r, target)
    n_steps = int(math.ceil(horizon / mc.dt))
    rng = make_rng(mc.seed)
    step = _Stepper(params, mc.dt, rng)
    payoff = np.zeros(mc.n_paths)
    xs = np.tile(x0, (mc.n_paths, 1))
    idx = np.arange(mc.n_paths)
    for n in range(1, n_steps + 1):
        xs = step(xs)
        hit = _in_set(cset, xs)
        if hit.any():
            payoff[idx[hit]] = math.exp(-r * n * mc.dt) * reward(xs[hit])
            xs, idx = xs[~hit], idx[~hit]
        if idx.size == 0:
            break
    est, se = _mean_se(payoff)
    return IdentityReport(
        "policy", est, est, se, 0.0, mc.k, mc.seed, mc.n_paths,
        {"horizon": horizon, "truncation_bound": math.exp(-r * horizon) * K, "dt": mc.dt},
    )


def _put_policy(boundary: ExerciseBoundary, start, put: AmericanPut, mc: McConfig) -> IdentityReport:
    s, x = (float(v) for v in start)
    n_steps = int(math.ceil((put.T - s) / mc.dt))
    times = np.linspace(s, put.T, n_steps + 1)
    h = (put.T - s) / n_steps
    if x <= boundary(s):
        g = max(put.K - x, 0.0)
        return IdentityReport("policy", g, g, 0.0, 0.0, mc.k, mc.seed, mc.n_paths, {"tau": 0.0})
    rng = make_rng(mc.seed)
    payoff = np.zeros(mc.n_paths)
    xs = np.full(mc.n_paths, x)
    idx = np.arange(mc.n_paths)
    for k in range(1, n_steps + 1):
        z = rng.standard_normal(xs.size)
        xs = xs * np.exp(put.vol * math.sqrt(h) * z + (put.r - 0.5 * put.vol**2) * h)
        stop = (xs <= boundary(times[k])) | (k == n_steps)
        if stop.any():
            payoff[idx[stop]] = math.exp(-put.r * (times[k] - s)) * np.maximum(put.K - xs[stop], 0.0)
            xs, idx = xs[~stop], idx[~stop]
        if idx.size == 0:
            break
    est, se = _mean_se(payoff)
    return IdentityReport("policy", est, est, se, 0.0, mc.k, mc.seed, mc.n_paths, {"dt": h})


@anchored("discounted-supermartingale")
def supermartingale_check(
    value: Callable[[np.ndarray], np.ndarray],
    x0,
    params: GbmParams,
    times,
    mc: McConfig = McConfig(),
) -> list[IdentityReport]:
    """``V(x0)`` versus ``E[e^{-rt} V(X_t)]`` at each time; ``passed`` here
    means the mean does not exceed the start value by more than ``k`` SE."""
    from .model import sample_paths

    d = params.d
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()
    grid = np.concatenate([[0.0], np.asarray(times, dtype=float)])
    paths = sample_paths(params, x0, grid, mc.n_paths, make_rng(mc.seed))
    v0 = float(np.asarray(value(x0[None, :])).ravel()[0])
    out = []
    for j, t in enumerate(grid[1:], start=1):
        disc = math.exp(-params.r * t) * np.asarray(value(paths[:, j, :]), dtype=float)
        mean, se = _mean_se(disc)
        rep = _SupermartingaleReport(f"supermartingale@{t:g}", v0, mean, 0.0, se, mc.k, mc.seed, mc.n_paths, {"t": float(t)})
        out.append(rep)
    return out


class _SupermartingaleReport(IdentityReport):
    @property
    def passed(self) -> bool:
        return self.rhs <= self.lhs + self.k * self.combined_se

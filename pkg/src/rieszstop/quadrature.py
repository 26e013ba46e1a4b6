"""Singularity-aware quadrature of the 2D resolvent over convex regions.

Integration runs in rescaled log coordinates ``w_i = log(y_i/x_i)/a_i``
centred at the evaluation point ``x``.  In polar form ``w = rad*(cos, sin)``
the kernel is ``exp(-alpha rad) K0(c rad)`` and the Jacobian ``rad`` removes
the logarithmic singularity.  Regions are supplied through a concave
"excess" function on log-price space (``>= 0`` inside), so every ray meets
the region in a single interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import Kernel2D
from .special import bessel_k0

# Gauss-Kronrod 7/15 (QUADPACK qk15), nodes on [-1, 1]
_XGK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ]
)
_WGK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights laid out on the Kronrod nodes (zero on Kronrod-only nodes)
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 13, 11, 9]] = np.concatenate([_WG[:3], _WG[:3]])
GAUSS_WEIGHTS[7] = _WG[3]


BOUNDARY_BAND = 1e-7
HIT_MARGIN = 1e-12


class QuadratureError(RuntimeError):
    def __init__(self, msg: str, value: float, error: float):
        super().__init__(f"{msg} (value={value:.6g}, error estimate={error:.3g})")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadConfig:
    theta_panels: int = 12
    radial_ratio: float = 4.0
    radial_levels: int = 14
    decay: float = 42.0  # e-folds of kernel decay before the radial cutoff
    scan: int = 256
    bisect_iter: int = 64
    rel_tol: float = 1e-7
    abs_tol: float = 1e-13
    max_rounds: int = 40
    max_panels: int = 3000
    strict: bool = False


def _panel_nodes(lo: np.ndarray, hi: np.ndarray):
    """Kronrod nodes/weights on panels [lo, hi] (broadcast, trailing axis 15)."""
    half = 0.5 * (hi - lo)[..., None]
    mid = 0.5 * (hi + lo)[..., None]
    return mid + half * KRONROD_NODES, half * KRONROD_WEIGHTS, half * GAUSS_WEIGHTS


def _cos_map(a: float, b: float):
    """``theta = a + (b-a)(1-cos(pi u))/2`` on ``u`` in [0, 1] and its Jacobian.

    The map flattens square-root behaviour of the angular integrand at
    both ends (tangent rays of a region seen from its edge or outside).
    """

    def f(u):
        theta = a + (b - a) * 0.5 * (1.0 - np.cos(math.pi * u))
        return theta, (b - a) * 0.5 * math.pi * np.sin(math.pi * u)

    return f


def _circle_map(u):
    return 2 * math.pi * u, np.full_like(u, 2 * math.pi)


class _Ray:
    """Concave excess restricted to rays from ``s0`` along directions ``ds``."""

    def __init__(self, excess, s0, ds):
        self.excess = excess
        self.s0 = s0
        self.ds = ds

    def __call__(self, rad):
        s1 = self.s0[0] + rad * self.ds[0]
        s2 = self.s0[1] + rad * self.ds[1]
        return self.excess(s1, s2)


def _bisect(f, lo, hi, want_inside_at_lo: bool, iters: int):
    """Vectorised bisection for the sign change of ``f`` on [lo, hi]."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = f(mid) >= 0
        move_lo = inside if want_inside_at_lo else ~inside
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    return 0.5 * (lo + hi)


def _golden_max(f, lo, hi, iters: int):
    """Vectorised golden-section search for the maximum of a concave ``f``."""
    g = 0.5 * (math.sqrt(5.0) - 1.0)
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = f(c) >= f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    peak = 0.5 * (a + b)
    # the concave maximum may sit at the left end
    f_peak, f_lo = f(peak), f(lo)
    return np.where(f_lo >= f_peak, lo, peak), np.maximum(f_lo, f_peak)


def _intervals(excess, s0, k: Kernel2D, theta, rmax, cfg: QuadConfig, interior: bool):
    ds = np.array([k.a1 * np.cos(theta), k.a2 * np.sin(theta)])
    ray = _Ray(excess, s0, ds)
    zero = np.zeros_like(theta)
    if interior:
        r_in = zero
        peak = zero
        hit = np.ones(theta.shape, dtype=bool)
    else:
        peak, fpeak = _golden_max(ray, zero, rmax, cfg.bisect_iter)
        hit = fpeak > 0
        r_in = np.where(peak > 0, _bisect(ray, zero, peak, False, cfg.bisect_iter), 0.0)
        r_in = np.where(ray(zero) >= 0, 0.0, r_in)
    inside_at_max = ray(rmax) >= 0
    r_out = np.where(inside_at_max, rmax, _bisect(ray, peak, rmax, True, cfg.bisect_iter))
    r_out = np.where(hit, r_out, 0.0)
    r_in = np.where(hit, np.minimum(r_in, r_out), 0.0)
    return r_in, r_out


def _radial_integrals(k, s0, theta, r_in, r_out, rmax, density, cfg: QuadConfig):
    """Kronrod radial integral for each angle."""
    c, alpha = k.polar_rates(theta)
    lev = np.arange(cfg.radial_levels, -1, -1, dtype=float)
    edges = rmax[:, None] * cfg.radial_ratio ** (-lev[None, :])
    edges = np.concatenate([np.zeros((theta.size, 1)), edges], axis=1)
    lo = np.clip(edges[:, :-1], r_in[:, None], r_out[:, None])
    hi = np.clip(edges[:, 1:], r_in[:, None], r_out[:, None])
    rad, wk, _ = _panel_nodes(lo, hi)  # (n_theta, n_panels, 15)
    active = (hi > lo)[..., None] & np.ones_like(rad, dtype=bool)
    rad_safe = np.where(active, rad, 1.0)
    cr = c[:, None, None] * rad_safe
    kern = np.exp(-alpha[:, None, None] * rad_safe) * bessel_k0(cr)
    y1 = np.exp(s0[0] + rad_safe * k.a1 * np.cos(theta)[:, None, None])
    y2 = np.exp(s0[1] + rad_safe * k.a2 * np.sin(theta)[:, None, None])
    f = np.where(active, rad_safe * kern * density(y1, y2), 0.0)
    norm = 1.0 / (math.pi * math.sqrt(k.one_minus_rho2))
    ik = norm * np.sum(f * wk, axis=(1, 2))
    return ik


def _hit_arc(excess, s0, k, cfg: QuadConfig, f0: float):
    """Angular arc of rays along which the excess rises above ``max(f0, 0)``,
    or None.  From a boundary point this drops the outward rays exactly."""
    # margin absorbs rounding differences between scalar and vector evaluation
    level = max(f0, 0.0) + HIT_MARGIN
    theta = np.linspace(0.0, 2 * math.pi, cfg.scan, endpoint=False)
    rmax = _rmax(k, theta, cfg)
    ds = np.array([k.a1 * np.cos(theta), k.a2 * np.sin(theta)])
    ray = _Ray(excess, s0, ds)
    _, fpeak = _golden_max(ray, np.zeros_like(theta), rmax, cfg.bisect_iter)
    hit = fpeak > level
    if not hit.any():
        return None
    if hit.all():
        return 0.0, 2 * math.pi
    # rotate so the arc is contiguous
    start = int(np.argmax(hit & ~np.roll(hit, 1)))
    stop = int(np.argmax(~hit & np.roll(hit, 1)))  # first miss after the arc
    step = 2 * math.pi / cfg.scan
    a_in, a_out = theta[start] - step, theta[start]
    b_in, b_out = theta[stop] - step, theta[stop]
    if b_in < a_out:
        b_in += 2 * math.pi
        b_out += 2 * math.pi

    def hits(th):
        r = _Ray(excess, s0, np.array([k.a1 * np.cos(th), k.a2 * np.sin(th)]))
        _, fp = _golden_max(r, np.zeros_like(th), _rmax(k, th, cfg), cfg.bisect_iter)
        return fp > level

    # refine both ends together, 16 probes per bracket per round
    frac = np.arange(1, 17) / 17.0
    for _ in range(8):
        probes = np.concatenate([a_in + (a_out - a_in) * frac, b_in + (b_out - b_in) * frac])
        h = hits(probes)
        ha, hb = h[:16], h[16:]
        ia = int(np.argmax(ha)) if ha.any() else 16
        a_in, a_out = (a_in if ia == 0 else probes[ia - 1]), (probes[ia] if ia < 16 else a_out)
        ib = int(np.argmax(~hb)) if (~hb).any() else 16
        b_in, b_out = (b_in if ib == 0 else probes[16 + ib - 1]), (probes[16 + ib] if ib < 16 else b_out)
    return 0.5 * (a_in + a_out), 0.5 * (b_in + b_out)


def _rmax(k: Kernel2D, theta, cfg: QuadConfig):
    c, alpha = k.polar_rates(theta)
    lam = c + alpha
    return cfg.decay / np.maximum(lam, 1e-300)


@dataclass
class QuadResult:
    value: float
    error: float


def _panel_sums(k, s0, excess, density, cfg, interior, tmap, lo, hi):
    """Kronrod and Gauss estimates of each angular panel ``[lo, hi]`` in ``u``."""
    u, wk, wg = _panel_nodes(lo, hi)
    theta, jac = tmap(u.ravel())
    rmax = _rmax(k, theta, cfg)
    r_in, r_out = _intervals(excess, s0, k, theta, rmax, cfg, interior)
    ik = _radial_integrals(k, s0, theta, r_in, r_out, rmax, density, cfg)
    shape = u.shape
    f = (jac * ik).reshape(shape)
    vk = np.sum(wk * f, axis=1)
    # angular error only: the radial panels are geometric and far more
    # accurate than the Gauss radial comparison suggests
    vg = np.sum(wg * f, axis=1)
    return vk, np.abs(vk - vg)


def integrate_region(
    k: Kernel2D,
    x,
    excess: Callable,
    density: Callable,
    cfg: QuadConfig = QuadConfig(),
) -> QuadResult:
    """``int_region resolvent_2d(x, y) density(y) dy`` over a log-convex region.

    ``excess(s1, s2)`` is concave in log-prices and nonnegative exactly on
    the region.  ``density(y1, y2)`` is vectorised.  Angular panels are
    bisected where the Kronrod/Gauss difference is largest until the summed
    difference meets the tolerance.
    """
    s0 = np.log(np.asarray(x, dtype=float))
    f0 = float(excess(s0[0], s0[1]))
    # points within BOUNDARY_BAND of the edge are treated as boundary points
    interior = f0 > BOUNDARY_BAND
    n0 = cfg.theta_panels
    if interior:
        tmap, n0 = _circle_map, 2 * n0
    else:
        arc = _hit_arc(excess, s0, k, cfg, f0)
        if arc is None:
            return QuadResult(0.0, 0.0)
        if arc == (0.0, 2 * math.pi):
            tmap, n0 = _circle_map, 2 * n0
        else:
            tmap = _cos_map(*arc)
    edges = np.linspace(0.0, 1.0, n0 + 1)
    lo, hi = edges[:-1], edges[1:]
    vals, errs = _panel_sums(k, s0, excess, density, cfg, interior, tmap, lo, hi)
    for _ in range(cfg.max_rounds):
        total, err = float(np.sum(vals)), float(np.sum(errs))
        target = max(cfg.abs_tol, cfg.rel_tol * abs(total))
        if err <= target or lo.size >= cfg.max_panels:
            break
        split = errs > 0.5 * target / lo.size
        split |= errs >= np.max(errs)
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _panel_sums(k, s0, excess, density, cfg, interior, tmap, new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
    value, err = float(np.sum(vals)), float(np.sum(errs))
    if cfg.strict and err > max(cfg.abs_tol, cfg.rel_tol * abs(value)):
        raise QuadratureError("2D quadrature did not reach tolerance", value, err)
    return QuadResult(value, err)

"""
Independent reference computations used by the tests.

None of these touch shapely or the package's polygon code: visibility is
sampled by ray casting against raw building edges, the corridor profile is
integrated slice by slice in closed form, and survival probabilities come
from sampling first-event times of a piecewise-constant hazard.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull


# ----------------------------------------------------------------------------- scenes


def random_convex(rng, center, size):
    """Random convex polygon (CCW, qhull) of 3..8 vertices within ``size`` of ``center``."""
    while True:
        n = int(rng.integers(3, 9))
        ang = rng.uniform(0.0, 2 * np.pi, n)
        rad = size * rng.uniform(0.4, 1.0, n)
        pts = np.asarray(center) + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        hull = ConvexHull(pts)
        if hull.volume > 0.05 * size * size:
            return pts[hull.vertices]


def random_scene(rng, r=50.0, max_buildings=10):
    """Up to ``max_buildings`` convex footprints around a sensor at the origin, some crossing the range."""
    out = []
    for _ in range(int(rng.integers(1, max_buildings + 1))):
        size = rng.uniform(1.5, 12.0)
        while True:
            c = rng.uniform(-r - 5, r + 5, 2)
            if np.hypot(*c) > size + 0.5:
                break
        out.append(random_convex(rng, c, size))
    return out


# ----------------------------------------------------------------------------- ray oracle


def ngon_radius(theta, r, sides=128):
    """Polar radius of the regular ``sides``-gon inscribed in radius ``r`` (vertex on +x)."""
    step = 2 * np.pi / sides
    phi = np.mod(theta, step) - step / 2
    return r * math.cos(step / 2) / np.cos(phi)


def ray_hits(origin, theta, polygons):
    """Distance to the first edge hit for every ray angle (inf where nothing is hit)."""
    o = np.asarray(origin, dtype=float)
    d = np.column_stack([np.cos(theta), np.sin(theta)])
    best = np.full(len(theta), np.inf)
    for poly in polygons:
        a = np.asarray(poly, dtype=float) - o
        b = np.roll(a, -1, axis=0)
        e = b - a
        # solve t*d = a + u*e for every (ray, edge)
        den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (a[None, :, 0] * e[None, :, 1] - a[None, :, 1] * e[None, :, 0]) / den
            u = (a[None, :, 0] * d[:, None, 1] - a[None, :, 1] * d[:, None, 0]) / den
        ok = (np.abs(den) > 1e-15) & (t > 0) & (u >= 0) & (u <= 1)
        best = np.minimum(best, np.where(ok, t, np.inf).min(axis=1))
    return best


def ray_visible_area(polygons, r=50.0, n_rays=100_000, seed=0, sides=128, origin=(0.0, 0.0)):
    """Monte-Carlo visible area: mean of rho^2 / 2 over uniformly random ray angles times 2 pi."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi, n_rays)
    rho = np.minimum(ngon_radius(theta, r, sides), ray_hits(origin, theta, polygons))
    return float(np.pi * np.mean(rho * rho))


# ----------------------------------------------------------------------------- corridor


def _hidden_interval(ex, ey, y, rect):
    """x-range of points at height ``y`` whose sight line from (ex, ey) crosses ``rect``."""
    x0, y0, x1, y1 = rect
    lo_h, hi_h = max(y0, min(ey, y)), min(y1, max(ey, y))
    if lo_h > hi_h:
        return None

    def k(h):
        dh = h - ey
        return math.inf if dh == 0 else (y - ey) / dh

    bounds = []
    for h in (lo_h, hi_h):
        kk = k(h)
        bounds.append(ex + (x0 - ex) * kk)
        bounds.append(ex + (x1 - ex) * kk)
    return min(bounds), max(bounds)


def _subtract(intervals, cut):
    out = []
    c0, c1 = cut
    for a, b in intervals:
        if c1 <= a or c0 >= b:
            out.append((a, b))
            continue
        if a < c0:
            out.append((a, c0))
        if c1 < b:
            out.append((c1, b))
    return out


def _measure(intervals):
    return sum(b - a for a, b in intervals)


def corridor_ratio(ey, ex=1.5, r=50.0, block=4.5, depth=60.0, half=3.0, step=0.01):
    """
    Visible share of the corridor road in the sensor disc for an ego at (ex, ey).

    Road: the southbound lane x in [-3, 0] plus the cross street y in [-3, 3],
    minus the ego's own lane x in [0, 3]. Integrated over horizontal slices;
    each slice's hidden set is exact.
    """
    far = block + depth
    rects = [(block, block, far, far), (-far, block, -block, far), (-far, -far, -block, -block), (block, -far, far, -block)]
    total = seen = 0.0
    for y in np.arange(ey - r + step / 2, ey + r, step):
        w2 = r * r - (y - ey) ** 2
        if w2 <= 0:
            continue
        w = math.sqrt(w2)
        chord = (ex - w, ex + w)
        if -half <= y <= half:
            road = [chord]
        else:
            road = [(max(chord[0], -half), min(chord[1], 0.0))]
        road = [(a, b) for a, b in road if b > a]
        road = _subtract(road, (0.0, half))
        tot = _measure(road)
        if tot == 0:
            continue
        vis = road
        for rc in rects:
            iv = _hidden_interval(ex, ey, float(y), rc)
            if iv is not None:
                vis = _subtract(vis, iv)
        total += tot * step
        seen += _measure(vis) * step
    return seen / total


# ----------------------------------------------------------------------------- survival


def first_event_sampling(rates, tau0, dt, n_trials=100_000, seed=0):
    """
    Sample first-event times of the piecewise-constant hazard ``tau0 + rates[k]`` on [k dt, (k+1) dt).

    Returns the per-step frequency of the first event being a collision
    (the ``rates`` channel) and the empirical survival at each step start.
    """
    rng = np.random.default_rng(seed)
    h = tau0 + np.asarray(rates, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(h * dt)])
    e = rng.exponential(1.0, n_trials)
    k = np.searchsorted(cum, e, side="right") - 1  # step in which the event falls
    inside = k < len(h)
    kk = k[inside]
    # competing risks: collision with probability rate / total hazard
    is_coll = rng.uniform(size=len(kk)) < np.asarray(rates)[kk] / h[kk]
    freq = np.bincount(kk[is_coll], minlength=len(h)) / n_trials
    surv = np.array([(k >= j).mean() for j in range(len(h))])
    return freq, surv

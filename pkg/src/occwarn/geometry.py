"""
Planar geometry kernel.

Coordinates are meters in a local metric frame, angles are radians measured
counter-clockwise from +x. Outer rings are CCW, holes CW.

Boolean operations are delegated to shapely/GEOS with fixed-grid snapping at
``EPS_SNAP``; everything else (hulls, silhouettes, clipping of polylines,
crossings, arc-length bookkeeping) is plain numpy.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import shapely
from shapely import geometry as sg
from shapely.validation import explain_validity

EPS_SNAP = 1e-7
DISC_SIDES = 128


class GeometryError(ValueError):
    """Invalid or unsupported geometric input."""


class DegenerateGeometryError(GeometryError):
    """Input collapses to a lower dimension (collinear hull, zero-length junction...)."""


class SensorInsideError(GeometryError):
    """The viewpoint lies inside (or on) an occluder."""


class OffsetError(GeometryError):
    """Lateral offset of a polyline folds over itself."""

    def __init__(self, message: str, vertex: int):
        super().__init__(message)
        self.vertex = vertex


class Point2(NamedTuple):
    x: float
    y: float


class Crossing(NamedTuple):
    s_a: float
    s_b: float
    point: Point2


def as_points(points, *, min_count: int = 1) -> np.ndarray:
    pts = np.array(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"expected an (N, 2) array of points, got shape {pts.shape}")
    if len(pts) < min_count:
        raise GeometryError(f"need at least {min_count} points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("non-finite coordinate")
    return pts


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Polyline:
    """Open polyline with cumulative arc-length per vertex."""

    __slots__ = ("points", "s")

    def __init__(self, points):
        pts = as_points(points, min_count=2)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 1e-12):
            i = int(np.argmax(seg <= 1e-12))
            raise GeometryError(f"zero-length segment between vertices {i} and {i + 1}")
        self.points = _frozen(pts)
        self.s = _frozen(np.concatenate([[0.0], np.cumsum(seg)]))

    @classmethod
    def concat(cls, parts: Iterable["Polyline"], tol: float = 1e-6) -> "Polyline":
        """Join polylines end to start; coincident joints are merged, gaps bridged by a straight segment."""
        chunks = []
        for part in parts:
            pts = part.points
            if chunks and np.hypot(*(chunks[-1][-1] - pts[0])) <= tol:
                pts = pts[1:]
            chunks.append(pts)
        return cls(np.vstack(chunks))

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"Polyline(n={len(self.points)}, length={self.length:.3f})"

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        return s, i

    def point_at(self, s) -> np.ndarray:
        """Point at arc-length ``s``; beyond either end the end segments are extrapolated."""
        s, i = self._locate(s)
        p0 = self.points[i]
        d = self.points[i + 1] - p0
        seglen = self.s[i + 1] - self.s[i]
        t = (s - self.s[i]) / seglen
        return p0 + d * t[..., None]

    def tangent_at(self, s) -> np.ndarray:
        s, i = self._locate(s)
        d = self.points[i + 1] - self.points[i]
        return d / np.hypot(d[..., 0], d[..., 1])[..., None]

    def heading_at(self, s):
        t = self.tangent_at(s)
        return np.arctan2(t[..., 1], t[..., 0])

    def project(self, p) -> tuple[float, float, np.ndarray]:
        """Closest point on the polyline: (arc-length, distance, foot point)."""
        p = np.asarray(p, dtype=float)
        a = self.points[:-1]
        d = np.diff(self.points, axis=0)
        seg2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / seg2, 0.0, 1.0)
        foot = a + d * t[:, None]
        dist = np.hypot(*(foot - p).T)
        i = int(np.argmin(dist))
        return float(self.s[i] + t[i] * np.sqrt(seg2[i])), float(dist[i]), foot[i]

    def distance(self, p) -> float:
        return self.project(p)[1]

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1])

    def sub(self, s0: float, s1: float) -> "Polyline":
        """Piece between arc-lengths ``s0 < s1`` (clamped to the line)."""
        s0 = max(0.0, s0)
        s1 = min(self.length, s1)
        if s1 - s0 <= 1e-9:
            raise GeometryError(f"empty sub-polyline [{s0}, {s1}]")
        inner = (self.s > s0 + 1e-9) & (self.s < s1 - 1e-9)
        pts = np.vstack([self.point_at(s0), self.points[inner], self.point_at(s1)])
        return Polyline(pts)

    def resample(self, step: float) -> "Polyline":
        n = max(1, int(np.ceil(self.length / step - 1e-9)))
        return Polyline(self.point_at(np.linspace(0.0, self.length, n + 1)))

    def offset(self, d: float) -> "Polyline":
        """Lateral offset, positive to the left of the direction of travel (miter joins)."""
        pts = self.points
        seg = np.diff(pts, axis=0)
        seg /= np.hypot(*seg.T)[:, None]
        normal = np.column_stack([-seg[:, 1], seg[:, 0]])
        out = np.empty_like(pts)
        out[0] = pts[0] + d * normal[0]
        out[-1] = pts[-1] + d * normal[-1]
        for i in range(1, len(pts) - 1):
            m = normal[i - 1] + normal[i]
            norm = np.hypot(*m)
            if norm < 0.2:
                raise OffsetError(f"turn too sharp to offset at vertex {i}", i)
            m /= norm
            out[i] = pts[i] + m * d / float(m @ normal[i])
        new_seg = np.diff(out, axis=0)
        flipped = np.einsum("ij,ij->i", new_seg, seg) <= 0
        if np.any(flipped):
            i = int(np.argmax(flipped))
            raise OffsetError(f"offset by {d} m folds over near vertex {i + 1}", i + 1)
        if d != 0 and not sg.LineString(out).is_simple:
            j = _first_self_intersection(out)
            raise OffsetError(f"offset by {d} m self-intersects near vertex {j}", j)
        return Polyline(out)


def _first_self_intersection(pts: np.ndarray) -> int:
    n = len(pts) - 1
    for i in range(n):
        for j in range(i + 2, n):
            if _segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]):
                return i + 1
    return 0


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


class Polygon:
    """Simple polygon; the ring is stored counter-clockwise without the closing vertex."""

    __slots__ = ("ring",)

    def __init__(self, ring, *, validate: bool = True):
        pts = as_points(ring, min_count=3)
        if len(pts) > 3 and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        a = signed_area(pts)
        if abs(a) <= 1e-12:
            raise DegenerateGeometryError("polygon has zero area")
        if a < 0:
            pts = pts[::-1].copy()
        if validate and len(pts) > 3 and not sg.Polygon(pts).is_valid:
            raise GeometryError(f"polygon is not simple: {explain_validity(sg.Polygon(pts))}")
        self.ring = _frozen(pts)

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.ring, other.ring)

    def __hash__(self):
        return hash(self.ring.tobytes())

    def __repr__(self):
        return f"Polygon(n={len(self.ring)}, area={self.area:.3f})"

    @property
    def area(self) -> float:
        return signed_area(self.ring)

    @property
    def centroid(self) -> np.ndarray:
        x, y = self.ring.T
        xn, yn = _succ(x), _succ(y)
        c = x * yn - xn * y
        a = c.sum() / 2.0
        return np.array([((x + xn) * c).sum(), ((y + yn) * c).sum()]) / (6.0 * a)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.ring.min(axis=0)
        hi = self.ring.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ring, _succ(self.ring)

    def contains(self, points) -> np.ndarray:
        """Even-odd point-in-polygon test; boundary behaviour is unspecified."""
        return points_in_ring(as_points(points), self.ring)

    def boundary_distance(self, p) -> float:
        a, b = self.edges()
        return float(point_segment_distance(np.asarray(p, dtype=float), a, b).min())

    def to_shapely(self) -> sg.Polygon:
        return sg.Polygon(self.ring)


def _succ(a: np.ndarray) -> np.ndarray:
    # cyclic successor along axis 0; np.roll is several times slower on short rings
    return np.concatenate((a[1:], a[:1]))


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return float(0.5 * (np.dot(x, _succ(y)) - np.dot(_succ(x), y)))


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    ax, ay = ring[:, 0][None, :], ring[:, 1][None, :]
    nxt = _succ(ring)
    bx, by = nxt[:, 0][None, :], nxt[:, 1][None, :]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (y - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x < xint)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    seg2 = np.einsum("ij,ij->i", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(seg2 > 0, np.einsum("ij,ij->i", p - a, d) / seg2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    foot = a + d * t[:, None]
    return np.hypot(*(foot - p).T)


def regular_polygon(center, radius: float, sides: int = DISC_SIDES) -> Polygon:
    """Regular ``sides``-gon inscribed in the circle; first vertex on the +x ray."""
    c = np.asarray(center, dtype=float)
    ang = 2.0 * np.pi * np.arange(sides) / sides
    return Polygon(c + radius * np.column_stack([np.cos(ang), np.sin(ang)]), validate=False)


def convex_hull(points) -> Polygon:
    """Andrew's monotone chain; collinear points on hull edges are dropped."""
    pts = as_points(points, min_count=1)
    pts = np.unique(pts, axis=0)  # lexicographic sort
    if len(pts) < 3:
        raise DegenerateGeometryError(f"convex hull of {len(pts)} distinct point(s)")
    # exact sign test: a tolerance here can pop a true vertex when a nearly
    # collinear point sorts ahead of it
    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateGeometryError("all points are collinear")
    return Polygon(hull, validate=False)


def is_convex(poly: Polygon, tol: float = 1e-12) -> bool:
    r = poly.ring
    r1 = _succ(r)
    c = _cross(r, r1, _succ(r1))
    return bool(np.all(c >= -tol))


def visible_vertices(hull: Polygon, origin) -> np.ndarray:
    """
    Hull vertices facing ``origin``: the chain between the two tangent vertices.

    Vertices are converted to polar angles around ``origin`` (relative to the
    direction of the hull centroid, so no wrap-around occurs for an exterior
    viewpoint). Walking the CCW ring from the max-angle tangent to the
    min-angle tangent traverses the near side. Returned in that order.
    """
    o = np.asarray(origin, dtype=float)
    ring = hull.ring
    if hull.contains(o[None, :])[0] or hull.boundary_distance(o) <= EPS_SNAP:
        raise SensorInsideError("viewpoint lies inside the occluder hull")
    rel = ring - o
    ref = np.arctan2(*(hull.centroid - o)[::-1])
    ang = np.angle(np.exp(1j * (np.arctan2(rel[:, 1], rel[:, 0]) - ref)))
    rad = np.hypot(*rel.T)
    # ties in angle: prefer the nearer vertex as tangent point
    i_max = int(np.lexsort((rad, -ang))[0])
    i_min = int(np.lexsort((rad, ang))[0])
    n = len(ring)
    idx = [i_max]
    while idx[-1] != i_min:
        idx.append((idx[-1] + 1) % n)
    return ring[idx].copy()


# --------------------------------------------------------------------------
# polygon sets and boolean operations


class PolygonSet:
    """Disjoint polygons with holes; a thin wrapper over a shapely (multi)polygon."""

    __slots__ = ("geom",)

    def __init__(self, geom=None):
        if geom is None:
            geom = sg.MultiPolygon()
        elif isinstance(geom, Polygon):
            geom = geom.to_shapely()
        self.geom = _polygonal(geom)
        shapely.prepare(self.geom)

    @classmethod
    def from_polygons(cls, polys: Sequence[Polygon]) -> "PolygonSet":
        if not polys:
            return cls()
        g = shapely.union_all([p.to_shapely() for p in polys], grid_size=EPS_SNAP)
        return _checked(g)

    @property
    def is_empty(self) -> bool:
        return self.geom.is_empty

    @property
    def area(self) -> float:
        return float(self.geom.area)

    @property
    def parts(self) -> list[tuple[Polygon, list[Polygon]]]:
        out = []
        for g in getattr(self.geom, "geoms", [self.geom]):
            if g.is_empty:
                continue
            outer = Polygon(np.asarray(g.exterior.coords), validate=False)
            holes = [Polygon(np.asarray(h.coords), validate=False) for h in g.interiors]
            out.append((outer, holes))
        return out

    def rings(self) -> list[np.ndarray]:
        """All boundary rings (closing vertex repeated)."""
        out = []
        for g in getattr(self.geom, "geoms", [self.geom]):
            if g.is_empty:
                continue
            out.append(np.asarray(g.exterior.coords))
            out.extend(np.asarray(h.coords) for h in g.interiors)
        return out

    def contains(self, points) -> np.ndarray:
        """Closed containment (boundary counts as inside)."""
        pts = as_points(points)
        if self.is_empty:
            return np.zeros(len(pts), dtype=bool)
        return shapely.intersects_xy(self.geom, pts[:, 0], pts[:, 1])

    def __repr__(self):
        return f"PolygonSet(parts={len(self.parts)}, area={self.area:.3f})"


def _polygonal(g):
    if g.is_empty:
        return sg.MultiPolygon()
    if isinstance(g, sg.Polygon):
        return sg.MultiPolygon([g])
    if isinstance(g, sg.MultiPolygon):
        return g
    if isinstance(g, sg.GeometryCollection):
        polys = []
        for part in g.geoms:
            if isinstance(part, sg.Polygon) and not part.is_empty:
                polys.append(part)
            elif isinstance(part, sg.MultiPolygon):
                polys.extend(part.geoms)
        return sg.MultiPolygon(polys)
    # lines/points collapsed by snapping carry no area
    return sg.MultiPolygon()


def _checked(g) -> PolygonSet:
    g = _polygonal(g)
    if not g.is_valid:
        raise GeometryError(f"invalid topology after snapping: {explain_validity(g)}")
    return PolygonSet(g)


def _as_set(x) -> PolygonSet:
    if isinstance(x, PolygonSet):
        return x
    if isinstance(x, Polygon):
        return PolygonSet(x)
    if isinstance(x, (list, tuple)):
        return PolygonSet.from_polygons(list(x))
    raise TypeError(f"expected PolygonSet or Polygon, got {type(x).__name__}")


def polygon_union(a, b) -> PolygonSet:
    return _checked(shapely.union(_as_set(a).geom, _as_set(b).geom, grid_size=EPS_SNAP))


def polygon_difference(a, b) -> PolygonSet:
    return _checked(shapely.difference(_as_set(a).geom, _as_set(b).geom, grid_size=EPS_SNAP))


def polygon_intersection(a, b) -> PolygonSet:
    return _checked(shapely.intersection(_as_set(a).geom, _as_set(b).geom, grid_size=EPS_SNAP))


def buffer_polyline(line: Polyline, half_width: float) -> PolygonSet:
    """Lateral buffer with flat caps (the lane area of a centerline)."""
    g = sg.LineString(line.points).buffer(half_width, cap_style="flat", join_style="mitre", mitre_limit=3.0)
    return _checked(g)


# --------------------------------------------------------------------------
# polylines against regions and against each other


def clip_polyline(line: Polyline, region) -> list[tuple[float, float]]:
    """Maximal arc-length intervals of ``line`` lying inside ``region``, ascending."""
    region = _as_set(region)
    if region.is_empty:
        return []
    rings = region.rings()
    ea = np.vstack([r[:-1] for r in rings])
    eb = np.vstack([r[1:] for r in rings])

    p = line.points[:-1]
    d = np.diff(line.points, axis=0)
    e = eb - ea
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    w = ea[None, :, :] - p[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / denom
        u = (w[..., 0] * d[:, None, 1] - w[..., 1] * d[:, None, 0]) / denom
    ok = (np.abs(denom) > 1e-15) & (t > 0) & (t < 1) & (u >= -1e-12) & (u <= 1 + 1e-12)
    seglen = np.diff(line.s)
    cuts = (line.s[:-1, None] + t * seglen[:, None])[ok]
    s = np.unique(np.concatenate([line.s, cuts]))
    if len(s) < 2:
        return []
    mids = 0.5 * (s[:-1] + s[1:])
    inside = region.contains(line.point_at(mids))

    intervals: list[tuple[float, float]] = []
    for a, b, flag in zip(s[:-1], s[1:], inside):
        if not flag:
            continue
        if intervals and a - intervals[-1][1] <= EPS_SNAP:
            intervals[-1] = (intervals[-1][0], float(b))
        else:
            intervals.append((float(a), float(b)))
    return [(a, b) for a, b in intervals if b - a > EPS_SNAP]


def complement_intervals(intervals, lo: float, hi: float) -> list[tuple[float, float]]:
    """Gaps of sorted disjoint ``intervals`` within ``[lo, hi]``."""
    out = []
    cur = lo
    for a, b in intervals:
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            continue
        if a - cur > EPS_SNAP:
            out.append((cur, a))
        cur = max(cur, b)
    if hi - cur > EPS_SNAP:
        out.append((cur, hi))
    return out


def polyline_crossings(a: Polyline, b: Polyline) -> list[Crossing]:
    """Every segment-segment intersection, ascending in ``s_a`` then ``s_b``."""
    pa, da = a.points[:-1], np.diff(a.points, axis=0)
    pb, db = b.points[:-1], np.diff(b.points, axis=0)
    denom = da[:, None, 0] * db[None, :, 1] - da[:, None, 1] * db[None, :, 0]
    w = pb[None, :, :] - pa[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[..., 0] * db[None, :, 1] - w[..., 1] * db[None, :, 0]) / denom
        u = (w[..., 0] * da[:, None, 1] - w[..., 1] * da[:, None, 0]) / denom
    lo, hi = -1e-12, 1 + 1e-12
    ok = (np.abs(denom) > 1e-15) & (t >= lo) & (t <= hi) & (u >= lo) & (u <= hi)
    i, j = np.nonzero(ok)
    if len(i) == 0:
        return []
    tt = np.clip(t[i, j], 0.0, 1.0)
    uu = np.clip(u[i, j], 0.0, 1.0)
    sa = a.s[i] + tt * np.diff(a.s)[i]
    sb = b.s[j] + uu * np.diff(b.s)[j]
    pts = pa[i] + da[i] * tt[:, None]
    order = np.lexsort((sb, sa))
    out = []
    for k in order:
        c = Crossing(float(sa[k]), float(sb[k]), Point2(float(pts[k, 0]), float(pts[k, 1])))
        # a crossing exactly at a shared vertex is reported by both adjacent segments
        if out and abs(out[-1].s_a - c.s_a) <= 1e-9 and abs(out[-1].s_b - c.s_b) <= 1e-9:
            continue
        out.append(c)
    return out


def polyline_crossing(a: Polyline, b: Polyline) -> Optional[Crossing]:
    """First crossing of ``a`` with ``b`` in ascending ``s_a``; ``None`` if they never meet."""
    hits = polyline_crossings(a, b)
    return hits[0] if hits else None

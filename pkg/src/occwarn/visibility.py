"""
Sensor visibility at intersections.

Every building is reduced to its convex hull. A hull in sensor range casts a
shadow bounded by its silhouette (the vertices facing the sensor), the two
tangent rays through the outermost silhouette vertices and the far arc; the
visible area is the sensor disc minus the union of all shadows.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import shapely

from .geometry import (
    DISC_SIDES,
    EPS_SNAP,
    GeometryError,
    Polygon,
    Polyline,
    PolygonSet,
    SensorInsideError,
    buffer_polyline,
    clip_polyline,
    convex_hull,
    is_convex,
    point_segment_distance,
    polygon_difference,
    polygon_intersection,
    regular_polygon,
    visible_vertices,
)

# distance bins toward the intersection, (far, near]; the last bin is closed at 0
DISTANCE_BINS = ((80.0, 60.0), (60.0, 40.0), (40.0, 20.0), (20.0, 5.0), (5.0, 0.0))
QUARTILE_Z = 0.6745


class UndefinedRatioError(GeometryError):
    """No road area inside the sensor disc."""


@dataclass(frozen=True)
class SensorModel:
    position: tuple[float, float]
    r: float = 50.0
    sides: int = DISC_SIDES

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("sensor range must be positive")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def disc(self) -> Polygon:
        return regular_polygon(self.position, self.r, self.sides)


@dataclass
class VisibilityResult:
    sensor: SensorModel
    disc: Polygon
    visible: PolygonSet
    occluded: PolygonSet
    boundary: list[Polyline]
    hulls: list[Polygon] = field(default_factory=list)
    wedges: list = field(default_factory=list, repr=False)

    @property
    def visible_area(self) -> float:
        return self.visible.area

    @property
    def shadows(self) -> list[PolygonSet]:
        """Per-occluder occlusion polygons, in ``hulls`` order."""
        return [polygon_intersection(PolygonSet(w), self.disc) for w in self.wedges]


def _far_wedge(origin: np.ndarray, chain: np.ndarray, reach: float) -> np.ndarray:
    a_first = math.atan2(*(chain[0] - origin)[::-1])
    a_last = math.atan2(*(chain[-1] - origin)[::-1])
    span = (a_first - a_last) % (2 * math.pi)
    # arc from the last tangent back to the first, chords kept outside the disc
    n = max(2, int(math.ceil(span / (math.pi / 32))) + 1)
    ang = a_last + np.linspace(0.0, span, n)
    arc = origin + reach * np.column_stack([np.cos(ang), np.sin(ang)])
    return np.vstack([chain, arc])


def shadow_wedge(hull: Polygon, sensor: SensorModel):
    """
    Unbounded-looking shadow of a convex hull: silhouette chain closed by a far arc.

    The arc radius exceeds both the sensor range and the silhouette, so the
    wedge intersected with the disc is the exact in-range shadow. Clipping
    the hull to the disc first would not change that intersection: a sight
    line to a point in the disc never leaves the disc.
    """
    o = np.asarray(sensor.position, dtype=float)
    chain = visible_vertices(hull, o)
    far = float(np.hypot(*(chain - o).T).max())
    reach = max(2.0 * sensor.r + 1.0, 2.0 * far)
    return shapely.Polygon(_far_wedge(o, chain, reach))


def _in_range(hull: Polygon, sensor: SensorModel) -> bool:
    o = np.asarray(sensor.position, dtype=float)
    x0, y0, x1, y1 = hull.bounds
    if x0 > o[0] + sensor.r or x1 < o[0] - sensor.r or y0 > o[1] + sensor.r or y1 < o[1] - sensor.r:
        return False
    if hull.contains(o[None, :])[0]:
        raise SensorInsideError("sensor lies inside an occluder")
    a, b = hull.edges()
    return float(point_segment_distance(o[None, :], a, b).min()) < sensor.r


def occlusion_polygon(hull: Polygon, sensor: SensorModel) -> PolygonSet:
    """Part of the sensor disc shadowed by a convex ``hull`` (empty if out of range)."""
    if not _in_range(hull, sensor):
        return PolygonSet()
    return polygon_intersection(PolygonSet(shadow_wedge(hull, sensor)), sensor.disc)


def _disc_edge_mask(a: np.ndarray, b: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """True for edges lying on the disc boundary."""
    o = np.asarray(sensor.position)
    n = sensor.sides
    apothem = sensor.r * math.cos(math.pi / n)
    tol = 1e-6 * max(1.0, sensor.r)

    def on_boundary(p):
        rel = p - o
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        # distance to the nearest polygon side along its normal
        k = np.floor(ang / (2 * math.pi / n))
        mid = (k + 0.5) * 2 * math.pi / n
        proj = rel[:, 0] * np.cos(mid) + rel[:, 1] * np.sin(mid)
        return np.abs(proj - apothem) <= tol

    return on_boundary(a) & on_boundary(b) & on_boundary(0.5 * (a + b))


def _boundary_lines(visible: PolygonSet, sensor: SensorModel) -> list[Polyline]:
    lines = []
    for ring in visible.rings():
        a, b = ring[:-1], ring[1:]
        on_disc = _disc_edge_mask(a, b, sensor)
        if on_disc.all():
            continue
        # rotate so the walk starts right after a disc edge, then split runs
        start = int(np.argmax(on_disc)) + 1 if on_disc.any() else 0
        order = [(start + i) % len(a) for i in range(len(a))]
        run: list[int] = []
        for i in order + [None]:
            if i is not None and not on_disc[i]:
                run.append(i)
                continue
            if run:
                pts = np.vstack([a[run], b[run[-1]][None, :]])
                try:
                    lines.append(Polyline(pts))
                except GeometryError:
                    pass
                run = []
    return lines


def building_hulls(buildings: Iterable) -> list[Polygon]:
    out = []
    for b in buildings:
        poly = b if isinstance(b, Polygon) else Polygon(np.asarray(b, dtype=float), validate=False)
        out.append(poly if is_convex(poly) else convex_hull(poly.ring))
    return out


def visible_area(buildings: Sequence, sensor: SensorModel) -> VisibilityResult:
    """Visibility polygon of the sensor disc against the convex hulls of ``buildings``."""
    disc = sensor.disc
    hulls, wedges = [], []
    for hull in building_hulls(buildings):
        if _in_range(hull, sensor):
            hulls.append(hull)
            wedges.append(shadow_wedge(hull, sensor))
    if wedges:
        union = shapely.union_all(wedges, grid_size=EPS_SNAP)
        occluded = polygon_intersection(PolygonSet(union), disc)
        visible = polygon_difference(disc, PolygonSet(union))
    else:
        occluded = PolygonSet()
        visible = PolygonSet(disc)
    return VisibilityResult(sensor, disc, visible, occluded, _boundary_lines(visible, sensor), hulls, wedges)


# ----------------------------------------------------------------------------- road statistics

_lane_areas: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def lane_area(graph, lane_id: str, lane_width: float) -> PolygonSet:
    cache = _lane_areas.setdefault(graph, {})
    key = (lane_id, lane_width)
    if key not in cache:
        cache[key] = buffer_polyline(graph.nodes[lane_id].shape, lane_width / 2.0)
    return cache[key]


def _union_geom(sets: Sequence[PolygonSet]):
    if not sets:
        return shapely.MultiPolygon()
    return shapely.union_all([s.geom for s in sets], grid_size=EPS_SNAP)


def road_visibility_ratio(
    vis: VisibilityResult,
    graph,
    intersection_id: Optional[str],
    ego_lane: Union[str, Sequence[str]],
    lane_width: float = 3.0,
) -> float:
    """
    Visible fraction of the road area in the sensor disc, the ego's own lane excluded.

    The road is the lane area (centerlines buffered by half the lane width)
    of every segment and junction attached to the intersection, or of every
    drivable element if no intersection is given.
    """
    ego = [ego_lane] if isinstance(ego_lane, str) else list(ego_lane)
    if intersection_id is None:
        c = vis.sensor.position
        ids = graph.query_radius(c, vis.sensor.r + lane_width, ("Segment", "Junction"))
    else:
        ids = graph.attached_lanes(intersection_id)
    others = [lane_area(graph, i, lane_width) for i in sorted(ids) if i not in ego]
    road = _union_geom(others)
    if ego:
        road = shapely.difference(road, _union_geom([lane_area(graph, i, lane_width) for i in ego]), grid_size=EPS_SNAP)
    road = shapely.intersection(road, vis.disc.to_shapely(), grid_size=EPS_SNAP)
    total = float(road.area)
    if total <= EPS_SNAP:
        raise UndefinedRatioError("no road area inside the sensor disc")
    seen = float(shapely.intersection(road, vis.visible.geom, grid_size=EPS_SNAP).area)
    return min(1.0, max(0.0, seen / total))


def conflict_lane_visibility(vis: VisibilityResult, line: Polyline) -> float:
    """Visible fraction of the in-disc part of a centerline (1.0 if it never enters the disc)."""
    inside = sum(b - a for a, b in clip_polyline(line, vis.disc))
    if inside <= EPS_SNAP:
        return 1.0
    seen = sum(b - a for a, b in clip_polyline(line, vis.visible))
    return min(1.0, seen / inside)


@dataclass
class RoadVisibilityStat:
    bin: tuple[float, float]  # (far, near) meters
    samples: list[float]
    mean: Optional[float]
    q1: Optional[float]
    q3: Optional[float]
    min: Optional[float]
    max: Optional[float]

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def label(self) -> str:
        return f"{self.bin[0]:g}-{self.bin[1]:g}"


def distance_bin(d: float) -> Optional[tuple[float, float]]:
    """Bin containing distance ``d``; bins are (near, far] except the closed last one."""
    for far, near in DISTANCE_BINS:
        if near < d <= far or (near == 0.0 and 0.0 <= d <= far):
            return (far, near)
    return None


def summarize(samples: Sequence[float], bin: tuple[float, float]) -> RoadVisibilityStat:
    x = np.asarray(samples, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("visibility ratios must lie in [0, 1]")
    if len(x) == 0:
        return RoadVisibilityStat(bin, [], None, None, None, None, None)
    mu, sd = float(x.mean()), float(x.std())
    return RoadVisibilityStat(
        bin, x.tolist(), mu, mu - QUARTILE_Z * sd, mu + QUARTILE_Z * sd, float(x.min()), float(x.max())
    )


def visibility_profile(frames: Iterable) -> list[RoadVisibilityStat]:
    """
    Bucket (distance to intersection, ratio) samples into the distance bins.

    ``frames`` yields pairs or objects with ``distance`` and ``ratio``
    attributes; samples beyond the outermost bin are ignored.
    """
    buckets = {b: [] for b in DISTANCE_BINS}
    for fr in frames:
        d, r = (fr.distance, fr.ratio) if hasattr(fr, "ratio") else fr
        if d is None or r is None:
            continue
        b = distance_bin(float(d))
        if b is not None:
            buckets[b].append(float(r))
    return [summarize(buckets[b], b) for b in DISTANCE_BINS]


def profile_csv(stats: Sequence[RoadVisibilityStat]) -> str:
    def fmt(v):
        return "" if v is None else repr(round(v, 12))

    rows = ["bin,mean,q1,q3,min,max,n"]
    for s in stats:
        rows.append(",".join([s.label, fmt(s.mean), fmt(s.q1), fmt(s.q3), fmt(s.min), fmt(s.max), str(s.n)]))
    return "\n".join(rows) + "\n"

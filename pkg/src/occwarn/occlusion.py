"""
Occluded priority lanes, virtual cars and trajectory prediction.

A virtual car is a hypothetical vehicle hidden in the occluded part of a
priority lane, placed at the occluded position closest to the intersection.
It drives at constant urban speed and stops abruptly where its path crosses
the ego path (or at the intersection center when the paths never meet).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Point2, Polyline, clip_polyline, complement_intervals, polyline_crossings
from .rldm import LdmGraph, MapError

VIRTUAL_SPEED = 40.0 / 3.6
DEFAULT_MASS = 1500.0
DT = 0.1
HORIZON = 6.0


@dataclass(frozen=True)
class EntityState:
    id: str
    kind: str  # "ego" | "real" | "virtual"
    position: Point2
    heading: float
    speed: float
    lane: Optional[str] = None
    s: Optional[float] = None
    mass: float = DEFAULT_MASS

    def __post_init__(self):
        if self.kind not in ("ego", "real", "virtual"):
            raise ValueError(f"unknown entity kind {self.kind!r}")
        if not self.speed >= 0:
            raise ValueError("speed must be >= 0")
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class VirtualCar:
    lane: str
    s_spawn: float
    speed: float
    position: Point2
    heading: float
    mass: float = DEFAULT_MASS

    @property
    def id(self) -> str:
        return f"virtual:{self.lane}"

    @property
    def state(self) -> EntityState:
        return EntityState(self.id, "virtual", self.position, self.heading, self.speed, self.lane, self.s_spawn, self.mass)


@dataclass
class PredictedTrajectory:
    owner: str
    dt: float
    positions: np.ndarray  # (N+1, 2)
    velocities: np.ndarray  # (N+1, 2)
    s: np.ndarray  # (N+1,) arc-length along path
    path: Polyline
    mass: float = DEFAULT_MASS

    @property
    def n_steps(self) -> int:
        return len(self.s) - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def speeds(self) -> np.ndarray:
        return np.hypot(self.velocities[:, 0], self.velocities[:, 1])

    @property
    def samples(self) -> list[tuple[Point2, np.ndarray, float]]:
        return [(Point2(*p), v, float(s)) for p, v, s in zip(self.positions, self.velocities, self.s)]


def _steps(horizon: float, dt: float) -> int:
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    return n


def _trajectory(owner, path, s, v, dt, mass) -> PredictedTrajectory:
    pos = path.point_at(s)
    vel = path.tangent_at(np.clip(s, 0.0, path.length - 1e-9)) * v[:, None]
    return PredictedTrajectory(owner, dt, pos, vel, s, path, mass)


# ----------------------------------------------------------------------------- routes


def straight_route(graph: LdmGraph, start: str, depth: float, max_elements: Optional[int] = None) -> list[str]:
    """Follow NEXT from ``start``, taking the junction with the smallest turn angle, until ``depth`` m."""
    route = [start]
    total = graph.nodes[start].shape.length
    while total < depth and (max_elements is None or len(route) < max_elements):
        nxt = graph.successors(route[-1], "NEXT")
        if not nxt:
            break
        if graph.nodes[route[-1]].label == "Segment":
            nxt = sorted(nxt, key=lambda j: (abs(graph.nodes[j].properties["angle"]), j))
        el = nxt[0]
        if el in route:
            break
        route.append(el)
        total += graph.nodes[el].shape.length
    return route


def route_line(graph: LdmGraph, route: Sequence[str]) -> Polyline:
    return Polyline.concat([graph.nodes[e].shape for e in route])


def route_offset(graph: LdmGraph, route: Sequence[str], element: str) -> float:
    """Arc-length of the start of ``element`` along the concatenated route."""
    acc = 0.0
    for e in route:
        if e == element:
            return acc
        acc += graph.nodes[e].shape.length
    raise MapError(f"{element!r} is not on the route")


def _junction_centroid(graph: LdmGraph, isec_id: str) -> np.ndarray:
    pts = np.vstack([graph.nodes[j].shape.points for j in graph.intersection_junctions(isec_id)])
    return pts.mean(axis=0)


# ----------------------------------------------------------------------------- virtual cars


def occluded_priority_intervals(vis, graph: LdmGraph, intersection_id: str, ego_lane: str):
    """
    Occluded arc-length intervals of every priority lane, restricted to the sensor disc.

    Returns ``[(lane id, [(s0, s1), ...]), ...]`` in priority-lane order; a
    fully visible lane comes with an empty list.
    """
    out = []
    for lane in graph.priority_lanes(intersection_id, ego_lane):
        line = graph.nodes[lane].shape
        in_disc = clip_polyline(line, vis.disc)
        seen = clip_polyline(line, vis.visible)
        hidden = []
        for a, b in in_disc:
            hidden.extend(complement_intervals(seen, a, b))
        out.append((lane, hidden))
    return out


def spawn_virtual_cars(
    intervals, graph: LdmGraph, intersection_id: Optional[str] = None, speed: float = VIRTUAL_SPEED, mass: float = DEFAULT_MASS
) -> list[VirtualCar]:
    """One car per lane at the occluded boundary nearest the intersection entry (the lane end)."""
    cars = []
    for lane, ivs in intervals:
        if not ivs:
            continue
        line = graph.nodes[lane].shape
        s = max(b for _, b in ivs)
        p = line.point_at(s)
        h = float(line.heading_at(min(s, line.length - 1e-9)))
        cars.append(VirtualCar(lane, float(s), float(speed), Point2(float(p[0]), float(p[1])), h, mass))
    return cars


def stop_arclength(graph: LdmGraph, path: Polyline, s0: float, intersection_id: Optional[str], ego_path: Optional[Polyline]) -> float:
    """Where a virtual car on ``path`` comes to its sudden stop."""
    if ego_path is not None:
        for c in polyline_crossings(path, ego_path):
            if c.s_a >= s0 - 1e-9:
                return c.s_a
    if intersection_id is None:
        return math.inf
    s, _, _ = path.project(_junction_centroid(graph, intersection_id))
    return s


def virtual_path(graph: LdmGraph, lane: str) -> list[str]:
    return straight_route(graph, lane, math.inf, max_elements=3)


def predict_virtual(
    car: VirtualCar,
    graph: LdmGraph,
    horizon: float = HORIZON,
    dt: float = DT,
    intersection_id: Optional[str] = None,
    ego_path: Optional[Polyline] = None,
) -> PredictedTrajectory:
    """Constant speed along the lane until the stop point, then frozen."""
    n = _steps(horizon, dt)
    route = virtual_path(graph, car.lane)
    path = route_line(graph, route)
    if intersection_id is None and len(route) > 1:
        intersection_id = graph.parent_intersection(route[1])
    s_stop = max(car.s_spawn, stop_arclength(graph, path, car.s_spawn, intersection_id, ego_path))
    t = np.arange(n + 1) * dt
    free = car.s_spawn + car.speed * t
    moving = free < s_stop - 1e-9
    s = np.where(moving, free, s_stop)
    v = np.where(moving, car.speed, 0.0)
    return _trajectory(car.id, path, s, v, dt, car.mass)


def predict_ego(
    ego: EntityState,
    path: Polyline,
    accel: float = 0.0,
    horizon: float = HORIZON,
    dt: float = DT,
    v_limit: Optional[float] = None,
) -> PredictedTrajectory:
    """
    Constant acceleration along ``path`` from arc-length ``ego.s`` (default 0).

    Speed is clamped at 0 (no reversing) and, when given, at ``v_limit``
    once reached.
    """
    n = _steps(horizon, dt)
    t = np.arange(n + 1) * dt
    s0 = 0.0 if ego.s is None else float(ego.s)
    v0 = float(ego.speed)
    a = float(accel)
    if a < 0:
        t_end = -v0 / a
        te = np.minimum(t, t_end)
        s = s0 + v0 * te + 0.5 * a * te**2
        v = np.maximum(v0 + a * t, 0.0)
        if t_end <= t[-1]:
            # land exactly on the closed-form resting point once stopped
            s = np.where(t >= t_end, s0 + v0 * v0 / (-2.0 * a), s)
    elif a > 0 and v_limit is not None and v_limit > v0:
        t_c = (v_limit - v0) / a
        te = np.minimum(t, t_c)
        s = s0 + v0 * te + 0.5 * a * te**2 + v_limit * np.maximum(t - t_c, 0.0)
        v = np.minimum(v0 + a * t, v_limit)
    else:
        s = s0 + v0 * t + 0.5 * a * t**2
        v = v0 + a * t
    return _trajectory(ego.id, path, s, v, dt, ego.mass)


def predict_real(state: EntityState, graph: LdmGraph, horizon: float = HORIZON, dt: float = DT) -> PredictedTrajectory:
    """Constant velocity along the straight-most lane path, or along the heading when off-map."""
    depth = state.speed * horizon + 10.0
    if state.lane is not None:
        route = straight_route(graph, state.lane, (state.s or 0.0) + depth)
        path = route_line(graph, route)
        s = state.s or 0.0
    else:
        p = np.asarray(state.position)
        d = np.array([math.cos(state.heading), math.sin(state.heading)])
        path = Polyline([p, p + d * max(depth, 1.0)])
        s = 0.0
    ego_like = EntityState(state.id, state.kind, state.position, state.heading, state.speed, state.lane, s, state.mass)
    return predict_ego(ego_like, path, 0.0, horizon, dt)


def crossing_distance(ego_path: Polyline, s_ego: float, other: PredictedTrajectory) -> Optional[float]:
    """Distance along the ego path to the first crossing with ``other``'s path ahead of the ego."""
    ahead = [c.s_a - s_ego for c in polyline_crossings(ego_path, other.path) if c.s_a > s_ego]
    return min(ahead) if ahead else None

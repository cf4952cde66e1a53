"""
Scenario replay.

A scenario names an R-LDM map, a timestamped ego log and optional logs of
other (real) vehicles. Every ego sample is pushed through visibility,
occlusion, prediction, risk map and advisor; the results are written as one
CSV row per frame plus a JSON summary.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from .advisor import AdvisorParams, InterventionBands, decide, evaluate_alternatives
from .geometry import Point2
from .occlusion import (
    DEFAULT_MASS,
    VIRTUAL_SPEED,
    EntityState,
    crossing_distance,
    occluded_priority_intervals,
    predict_real,
    predict_virtual,
    route_line,
    route_offset,
    spawn_virtual_cars,
    straight_route,
)
from .rldm import LdmGraph, LocalizationError, MapError, load_graph
from .risk import RiskParams, build_risk_map, target_pass_velocity
from .visibility import (
    SensorModel,
    UndefinedRatioError,
    conflict_lane_visibility,
    road_visibility_ratio,
    visibility_profile,
    visible_area,
)

SCENARIO_SCHEMA_ID = "occwarn.scenario/1"
SUMMARY_SCHEMA_ID = "occwarn.summary/1"

_SAMPLE = {
    "type": "object",
    "required": ["t", "heading", "speed"],
    "properties": {
        "t": {"type": "number"},
        "x": {"type": "number"},
        "y": {"type": "number"},
        "lat": {"type": "number", "minimum": -90, "maximum": 90},
        "lon": {"type": "number", "minimum": -180, "maximum": 180},
        "heading": {"type": "number"},
        "speed": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
    "oneOf": [{"required": ["x", "y"]}, {"required": ["lat", "lon"]}],
}
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        "dt": _POS,
        "horizon": _POS,
        "sensor_range": _POS,
        "n_v": {"type": "integer", "minimum": 2},
        "v_max": _POS,
        "virtual_speed": _POS,
        "virtual_mass": _POS,
        "lane_width": {"type": "number", "minimum": 2.25, "maximum": 4.0},
        "speed_cap": _POS,
        "emergency_dwell": {"type": ["number", "null"], "minimum": 0},
        "risk": {
            "type": "object",
            "properties": {f.name: _NUM for f in fields(RiskParams)},
            "additionalProperties": False,
        },
        "bands": {
            "type": "object",
            "properties": {f.name: _NUM for f in fields(InterventionBands)},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}
SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "map", "ego"],
    "properties": {
        "schema": {"const": SCENARIO_SCHEMA_ID},
        "name": {"type": "string"},
        "map": {"type": "string"},
        "ego": {
            "type": "object",
            "required": ["log"],
            "properties": {
                "mass": _POS,
                "route": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "log": {"type": "array", "minItems": 2, "items": _SAMPLE},
            },
            "additionalProperties": False,
        },
        "vehicles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "log"],
                "properties": {
                    "id": {"type": "string"},
                    "mass": _POS,
                    "log": {"type": "array", "minItems": 1, "items": _SAMPLE},
                },
                "additionalProperties": False,
            },
        },
        "params": PARAMS_SCHEMA,
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    """Scenario input that cannot be used (schema, timestamps, map)."""


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.1
    horizon: float = 6.0
    sensor_range: float = 50.0
    n_v: int = 41
    v_max: float = 20.0
    virtual_speed: float = VIRTUAL_SPEED
    virtual_mass: float = DEFAULT_MASS
    lane_width: float = 3.0
    speed_cap: float = 50.0 / 3.6
    emergency_dwell: Optional[float] = None
    risk: RiskParams = field(default_factory=RiskParams)
    bands: InterventionBands = field(default_factory=InterventionBands)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SimParams":
        d = dict(d or {})
        risk = RiskParams(**d.pop("risk", {}))
        bands = InterventionBands(**d.pop("bands", {}))
        return cls(risk=risk, bands=bands, **d)

    @property
    def advisor(self) -> AdvisorParams:
        return AdvisorParams(self.bands, self.speed_cap, self.risk.risk_threshold)


@dataclass(frozen=True)
class LogSample:
    t: float
    x: float
    y: float
    heading: float
    speed: float


@dataclass
class VehicleLog:
    id: str
    samples: list[LogSample]
    mass: float = DEFAULT_MASS

    def at(self, t: float) -> Optional[LogSample]:
        """Linear interpolation inside the log's time span; None outside it."""
        ts = [s.t for s in self.samples]
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            return None
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 1))
        a = self.samples[i]
        if i == len(ts) - 1 or abs(t - a.t) <= 1e-12:
            return a
        b = self.samples[i + 1]
        w = (t - a.t) / (b.t - a.t)
        lerp = lambda u, v: u + w * (v - u)  # noqa: E731
        return LogSample(t, lerp(a.x, b.x), lerp(a.y, b.y), a.heading if w < 0.5 else b.heading, lerp(a.speed, b.speed))


@dataclass
class Scenario:
    graph: LdmGraph
    ego: list[LogSample]
    vehicles: list[VehicleLog] = field(default_factory=list)
    params: SimParams = field(default_factory=SimParams)
    ego_mass: float = DEFAULT_MASS
    route: Optional[list[str]] = None
    name: str = ""
    document: Optional[dict] = None


@dataclass
class FrameRecord:
    t: float
    valid: bool
    d: float
    x: float
    y: float
    speed: float
    lane: Optional[str] = None
    intersection: Optional[str] = None
    d_sl: Optional[float] = None
    d_cp: Optional[float] = None
    d_center: Optional[float] = None
    visibility: Optional[float] = None
    conflict_visibility: Optional[float] = None
    virtual_cars: list = field(default_factory=list)
    n_real: int = 0
    a_const: Optional[float] = None
    level_const: str = ""
    adm_const: Optional[bool] = None
    risk_const: Optional[float] = None
    a_stop: Optional[float] = None
    level_stop: str = ""
    adm_stop: Optional[bool] = None
    risk_stop: Optional[float] = None
    a_acc: Optional[float] = None
    level_acc: str = ""
    adm_acc: Optional[bool] = None
    risk_acc: Optional[float] = None
    v_trg: Optional[float] = None
    warning: bool = False
    emergency_candidate: bool = False
    emergency_brake: bool = False
    recommended: str = ""
    error: str = ""

    @property
    def approaching(self) -> bool:
        return self.d_sl is not None and self.d_sl > 0

    @property
    def time_to_conflict(self) -> Optional[float]:
        if self.d_cp is None or not self.speed > 0:
            return None
        return self.d_cp / self.speed


FRAME_COLUMNS = [f.name for f in fields(FrameRecord)]


# ----------------------------------------------------------------------------- loading


def _samples(log: list[dict], graph: LdmGraph, where: str) -> list[LogSample]:
    out = []
    for i, s in enumerate(log):
        if "x" in s:
            x, y = float(s["x"]), float(s["y"])
        else:
            x, y = (float(v) for v in graph.frame.to_local([s["lat"], s["lon"]]))
        out.append(LogSample(float(s["t"]), x, y, float(s["heading"]), float(s["speed"])))
        if i and out[-1].t <= out[-2].t:
            raise ScenarioError(f"{where}[{i}].t: timestamps must be strictly increasing ({out[-2].t} then {out[-1].t})")
    return out


def _validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path).lstrip(".")
        raise ScenarioError(f"{where or '<root>'}: {e.message}")


def scenario_from_dict(doc: dict, graph: LdmGraph, params_override: Optional[dict] = None) -> Scenario:
    _validate(doc)
    params = dict(doc.get("params", {}))
    for k, v in (params_override or {}).items():
        if isinstance(v, dict) and isinstance(params.get(k), dict):
            params[k] = {**params[k], **v}
        else:
            params[k] = v
    try:
        jsonschema.validate(params, PARAMS_SCHEMA)
        sim = SimParams.from_dict(params)
    except (jsonschema.ValidationError, TypeError, ValueError) as exc:
        raise ScenarioError(f"params: {getattr(exc, 'message', exc)}") from exc
    ego = doc["ego"]
    vehicles = [
        VehicleLog(v["id"], _samples(v["log"], graph, f"vehicles[{i}].log"), float(v.get("mass", DEFAULT_MASS)))
        for i, v in enumerate(doc.get("vehicles", []))
    ]
    route = ego.get("route")
    if route:
        for e in route:
            if e not in graph.nodes:
                raise ScenarioError(f"ego.route: unknown element {e!r}")
    return Scenario(
        graph,
        _samples(ego["log"], graph, "ego.log"),
        vehicles,
        sim,
        float(ego.get("mass", DEFAULT_MASS)),
        list(route) if route else None,
        doc.get("name", ""),
        doc,
    )


def load_scenario(path, params_override: Optional[dict] = None) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("<root>: scenario must be a JSON object")
    _validate(doc)
    map_path = (path.parent / doc["map"]).resolve()
    try:
        graph = load_graph(map_path)
    except (OSError, MapError) as exc:
        raise ScenarioError(f"map: cannot load {doc['map']}: {exc}") from exc
    return scenario_from_dict(doc, graph, params_override)


def dumps_scenario(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_scenario(scenario_or_doc, path) -> None:
    doc = scenario_or_doc.document if isinstance(scenario_or_doc, Scenario) else scenario_or_doc
    Path(path).write_text(dumps_scenario(doc))


# ----------------------------------------------------------------------------- pipeline


@dataclass
class World:
    graph: LdmGraph
    params: SimParams = field(default_factory=SimParams)
    route: Optional[list[str]] = None

    def route_from(self, element: str, s: float) -> list[str]:
        if self.route and element in self.route:
            return self.route[self.route.index(element) :]
        p = self.params
        return straight_route(self.graph, element, s + p.v_max * p.horizon + 50.0)


def _next_intersection(graph: LdmGraph, route: list[str]):
    """(intersection, entry junction index in route) of the first junction ahead."""
    for i, e in enumerate(route):
        if graph.nodes[e].label == "Junction":
            isec = graph.parent_intersection(e)
            if isec is not None:
                return isec, i
    return None, None


@dataclass
class _Context:
    lane: str
    s: float
    route: list[str]
    path: Any
    isec: Optional[str] = None
    d_sl: Optional[float] = None
    approach: Optional[str] = None
    ego_lanes: list[str] = field(default_factory=list)
    before_center: bool = False


def _context(world: World, pos: np.ndarray, heading: float) -> _Context:
    g = world.graph
    lane, s = g.closest_lane(pos, heading)
    route = world.route_from(lane, s)
    ctx = _Context(lane, s, route, route_line(g, route), ego_lanes=[lane])
    isec, k = _next_intersection(g, route)
    if isec is None:
        return ctx
    ctx.isec = isec
    if k == 0:
        # already inside the intersection
        ctx.d_sl = -s
        preds = g.predecessors(lane, "NEXT")
        ctx.approach = preds[0] if preds else None
    else:
        ctx.d_sl = route_offset(g, route, route[k]) - s
        ctx.approach = route[k - 1]
    ctx.ego_lanes = ([ctx.approach] if ctx.approach else []) + list(route[k : k + 2])
    if lane not in ctx.ego_lanes:
        ctx.ego_lanes.insert(0, lane)
    sc, _, _ = ctx.path.project(g.intersection_center(isec))
    ctx.before_center = sc > s
    return ctx


def step(ego: EntityState, world: World, t: float = 0.0, vehicles: Sequence[EntityState] = (), d: float = 0.0):
    """Run the full pipeline for one ego sample; returns (FrameRecord, RiskMap or None)."""
    g, p = world.graph, world.params
    pos = np.array(ego.position, dtype=float)
    rec = FrameRecord(t, True, d, float(pos[0]), float(pos[1]), float(ego.speed))
    try:
        ctx = _context(world, pos, ego.heading)
    except LocalizationError as exc:
        rec.valid = False
        rec.error = str(exc)
        return rec, None
    lane, s, path, isec, approach, ego_lanes = ctx.lane, ctx.s, ctx.path, ctx.isec, ctx.approach, ctx.ego_lanes
    rec.lane = lane
    if isec is not None:
        rec.d_sl = float(ctx.d_sl)
        rec.intersection = isec
        rec.d_center = float(np.hypot(*(g.intersection_center(isec) - pos)))

    sensor = SensorModel((pos[0], pos[1]), p.sensor_range)
    buildings = [g.nodes[b].shape for b in sorted(g.query_radius(pos, p.sensor_range, "Building"))]
    vis = visible_area(buildings, sensor)
    try:
        rec.visibility = road_visibility_ratio(vis, g, isec, ego_lanes, p.lane_width)
    except UndefinedRatioError:
        rec.visibility = None

    others = []
    if isec is not None and approach is not None:
        priority = g.priority_lanes(isec, approach)
        intervals = occluded_priority_intervals(vis, g, isec, approach)
        rec.conflict_visibility = min(
            (conflict_lane_visibility(vis, g.nodes[l].shape) for l in priority), default=1.0
        )
        seen_lanes = set()
        for v in vehicles:
            if not vis.visible.contains(np.asarray(v.position, dtype=float)[None, :])[0]:
                continue
            try:
                vl, vs = g.closest_lane(v.position, v.heading)
            except LocalizationError:
                vl, vs = None, None
            state = replace(v, lane=vl, s=vs)
            others.append(predict_real(state, g, p.horizon, p.dt))
            rec.n_real += 1
            if vl is not None:
                seen_lanes.add(vl)
        cars = [c for c in spawn_virtual_cars(intervals, g, isec, p.virtual_speed, p.virtual_mass) if c.lane not in seen_lanes]
        rec.virtual_cars = [(c.lane, round(c.s_spawn, 6), round(c.speed, 6)) for c in cars]
        for c in cars:
            others.append(predict_virtual(c, g, p.horizon, p.dt, isec, path))

    ego_state = replace(ego, lane=lane, s=s)
    rmap = build_risk_map(ego_state, path, others, p.risk, p.n_v, p.v_max, p.horizon, p.dt)

    d_cp = None
    if isec is not None:
        hits = [h for h in (crossing_distance(path, s, o) for o in others) if h is not None]
        if hits:
            d_cp = min(hits)
        else:
            sc, _, _ = path.project(g.intersection_center(isec))
            d_cp = sc - s if sc > s else None
    rec.d_cp = None if d_cp is None else float(d_cp)
    v_trg = target_pass_velocity(rmap, d_cp, p.risk.risk_threshold) if d_cp else None
    rec.v_trg = v_trg

    alts = evaluate_alternatives(float(ego.speed), rmap, rec.d_sl, d_cp, v_trg, p.advisor)
    out = decide(alts, p.bands)
    for a in out.alternatives:
        setattr(rec, f"a_{a.kind}", a.accel)
        setattr(rec, f"level_{a.kind}", a.level)
        setattr(rec, f"adm_{a.kind}", a.admissible)
        setattr(rec, f"risk_{a.kind}", a.risk)
    rec.warning = out.warning
    rec.emergency_candidate = out.emergency_candidate
    rec.recommended = out.recommended
    return rec, rmap


def _vehicle_states(scn: Scenario, t: float) -> list[EntityState]:
    out = []
    for v in scn.vehicles:
        s = v.at(t)
        if s is not None:
            out.append(EntityState(v.id, "real", Point2(s.x, s.y), s.heading, s.speed, mass=v.mass))
    return out


def iter_frames(scn: Scenario, with_maps: bool = False):
    world = World(scn.graph, scn.params, scn.route)
    traveled = 0.0
    prev = None
    dwell = 0.0
    for i, smp in enumerate(scn.ego):
        if prev is not None:
            traveled += math.hypot(smp.x - prev.x, smp.y - prev.y)
        ego = EntityState("ego", "ego", Point2(smp.x, smp.y), smp.heading, smp.speed, mass=scn.ego_mass)
        rec, rmap = step(ego, world, smp.t, _vehicle_states(scn, smp.t), traveled)
        if scn.params.emergency_dwell is not None:
            dt = smp.t - prev.t if prev is not None else 0.0
            dwell = dwell + dt if rec.emergency_candidate else 0.0
            rec.emergency_brake = rec.emergency_candidate and dwell >= scn.params.emergency_dwell
        prev = smp
        yield i, rec, (rmap if with_maps else None)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, list):
        return ";".join(f"{l}@{s!r}:{sp!r}" for l, s, sp in v)
    return str(v)


def frame_row(rec: FrameRecord) -> list[str]:
    return [_cell(getattr(rec, c)) for c in FRAME_COLUMNS]


def summarize_frames(frames: Sequence[FrameRecord]) -> dict:
    warn = [f for f in frames if f.warning]
    first = warn[0] if warn else None
    vis = [f.visibility for f in frames if f.visibility is not None]
    return {
        "schema": SUMMARY_SCHEMA_ID,
        "frames": len(frames),
        "valid_frames": sum(f.valid for f in frames),
        "warning_frames": len(warn),
        "first_warning_t": None if first is None else first.t,
        "first_warning_d_sl": None if first is None else first.d_sl,
        "warning_lead_time": None if first is None else first.time_to_conflict,
        "emergency_candidate_frames": sum(f.emergency_candidate for f in frames),
        "min_visibility": min(vis) if vis else None,
    }


def run(scn: Scenario, out_dir, dump_riskmaps: bool = False) -> dict:
    """Replay ``scn`` into ``out_dir``: frames.csv, summary.json and optional risk-map dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames: list[FrameRecord] = []
    error = None
    with open(out / "frames.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        try:
            for i, rec, rmap in iter_frames(scn, with_maps=dump_riskmaps):
                frames.append(rec)
                w.writerow(frame_row(rec))
                if rmap is not None:
                    (out / f"riskmap_{i}.csv").write_text(rmap.to_csv())
                    (out / f"riskmap_{i}.pgm").write_bytes(rmap.to_pgm())
        except Exception as exc:  # flush what we have, then report
            error = exc
    summary = summarize_frames(frames)
    if error is not None:
        summary["error"] = f"{type(error).__name__}: {error}"
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if error is not None:
        raise PipelineError(summary["error"]) from error
    return summary


def run_frames(scn: Scenario) -> list[FrameRecord]:
    return [rec for _, rec, _ in iter_frames(scn)]


def visibility_stats(scn: Scenario):
    """Per-bin road visibility of the frames before the intersection center (Euclidean distance)."""
    world = World(scn.graph, scn.params, scn.route)
    g, p = world.graph, world.params
    samples = []
    for smp in scn.ego:
        pos = np.array([smp.x, smp.y])
        try:
            ctx = _context(world, pos, smp.heading)
        except LocalizationError:
            continue
        if ctx.isec is None or not ctx.before_center:
            continue
        buildings = [g.nodes[b].shape for b in sorted(g.query_radius(pos, p.sensor_range, "Building"))]
        vis = visible_area(buildings, SensorModel((pos[0], pos[1]), p.sensor_range))
        try:
            ratio = road_visibility_ratio(vis, g, ctx.isec, ctx.ego_lanes, p.lane_width)
        except UndefinedRatioError:
            continue
        samples.append((float(np.hypot(*(g.intersection_center(ctx.isec) - pos))), ratio))
    return visibility_profile(samples)

"""
Synthetic scenario fixtures.

* ``corridor``: a hand-built four-arm crossing with straight lane connections
  only and a building block in every corner. Road visibility can be derived
  in closed form, which makes it the reference for the statistics pipeline.
* ``safe`` and ``critical``: OSM crossings run through the full enhancement.
  Way 2 (east-west) has priority over way 1 (north-south); the ego drives
  north on way 1 with a single building block in the south-east corner.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Point2, Polygon, Polyline
from .mapingest import EnhanceConfig, enhance, parse_osm
from .rldm import LdmGraph, LocalFrame, save_graph
from .sim import SCENARIO_SCHEMA_ID, LogSample, Scenario, SimParams, dumps_scenario, scenario_from_dict

ORIGIN = LocalFrame(48.137, 11.575)
LANE_WIDTH = 3.0
NORTH = math.pi / 2

# south-east blocks (x0, y0, x1, y1); the north-west corner faces the crossing
CRITICAL_BLOCK = (5.0, -45.0, 45.0, -7.0)
SAFE_BLOCK = (10.0, -50.0, 50.0, -16.0)
RULES = {"version": 1, "rules": [{"intersection": "100", "yielding": "1", "priority": "2"}]}


def _rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


# ----------------------------------------------------------------------------- corridor


def corridor_graph(block: float = 4.5, arm: float = 150.0, radius: float = 6.0, depth: float = 60.0) -> LdmGraph:
    """Straight crossing at the origin; lanes 3 m wide, right-hand traffic, blocks at ±``block``."""
    g = LdmGraph(ORIGIN)
    h = LANE_WIDTH / 2
    # direction name -> (unit vector, lateral offset vector of its lane)
    dirs = {
        "n": (np.array([0.0, 1.0]), np.array([h, 0.0])),
        "s": (np.array([0.0, -1.0]), np.array([-h, 0.0])),
        "e": (np.array([1.0, 0.0]), np.array([0.0, -h])),
        "w": (np.array([-1.0, 0.0]), np.array([0.0, h])),
    }
    g.add_node("isec:c", "Intersection", center=Point2(0.0, 0.0))
    for name, (u, off) in dirs.items():
        road = "road:" + ("ns" if name in "ns" else "ew")
        if road not in g.nodes:
            g.add_node(road, "Road", shape=Polyline([-arm * np.abs(u), arm * np.abs(u)]))
        hr = f"hr:{name}"
        g.add_node(hr, "HalfRoad", shape=Polyline([off - arm * u, off + arm * u]))
        g.relate(hr, "PART_OF", road)
        lane = f"lane:{name}"
        g.add_node(lane, "Lane", shape=Polyline([off - arm * u, off + arm * u]))
        g.relate(lane, "PART_OF", hr)
        inc, out = f"seg:{name}:in", f"seg:{name}:out"
        g.add_node(inc, "Segment", shape=Polyline([off - arm * u, off - radius * u]))
        g.add_node(out, "Segment", shape=Polyline([off + radius * u, off + arm * u]))
        g.relate(inc, "PART_OF", lane)
        g.relate(out, "PART_OF", lane)
        j = f"jct:{name}"
        g.add_node(j, "Junction", shape=Polyline([off - radius * u, off + radius * u]), angle=0.0)
        g.relate(inc, "NEXT", j)
        g.relate(j, "NEXT", out)
        g.relate(j, "PART_OF", "isec:c")
    b, far = block, block + depth
    for name, (x0, y0, x1, y1) in {
        "ne": (b, b, far, far),
        "nw": (-far, b, -b, far),
        "sw": (-far, -far, -b, -b),
        "se": (b, -far, far, -b),
    }.items():
        g.add_node(f"bld:{name}", "Building", shape=Polygon(_rect(x0, y0, x1, y1)))
    g.validate()
    return g


def ego_line_log(y0: float, y1: float, speed: float, dt: float = 0.1, x: float = LANE_WIDTH / 2) -> list[LogSample]:
    n = int(round((y1 - y0) / (speed * dt)))
    return [LogSample(round(k * dt, 10), x, y0 + speed * dt * k, NORTH, speed) for k in range(n + 1)]


def corridor_scenario(start: float = -85.0, stop: float = -0.5, speed: float = 5.0) -> Scenario:
    g = corridor_graph()
    route = ["seg:n:in", "jct:n", "seg:n:out"]
    return Scenario(g, ego_line_log(start, stop, speed), params=SimParams(), route=route, name="corridor")


# ----------------------------------------------------------------------------- OSM crossing


def crossing_osm(blocks: Sequence[tuple] = (), arm: float = 300.0, frame: LocalFrame = ORIGIN) -> str:
    """OSM XML of two two-way residential ways crossing at node 100, plus building ways."""
    root = ET.Element("osm", version="0.6", generator="occwarn-twins")
    nodes = {
        "100": (0.0, 0.0),
        "101": (0.0, -arm),
        "102": (0.0, arm),
        "201": (-arm, 0.0),
        "202": (arm, 0.0),
    }
    ways = [("1", ["101", "100", "102"], {"highway": "residential"}), ("2", ["201", "100", "202"], {"highway": "residential"})]
    nid = 1000
    for k, b in enumerate(blocks):
        ring = []
        for p in _rect(*b):
            nodes[str(nid)] = tuple(p)
            ring.append(str(nid))
            nid += 1
        ways.append((str(900 + k), ring + ring[:1], {"building": "yes"}))
    for i, (x, y) in nodes.items():
        lat, lon = frame.to_geo([x, y])
        ET.SubElement(root, "node", id=i, lat=repr(float(lat)), lon=repr(float(lon)))
    for wid, refs, tags in ways:
        w = ET.SubElement(root, "way", id=wid)
        for r in refs:
            ET.SubElement(w, "nd", ref=r)
        for k, v in tags.items():
            ET.SubElement(w, "tag", k=k, v=v)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def crossing_graph(blocks: Sequence[tuple]) -> LdmGraph:
    return enhance(parse_osm(crossing_osm(blocks)), EnhanceConfig(lane_width=LANE_WIDTH), RULES["rules"], frame=ORIGIN)


def _profile_log(segments: Sequence[tuple[float, float]], v0: float, y0: float, dt: float = 0.1) -> list[LogSample]:
    """Piecewise-constant acceleration log: ``segments`` = [(duration, accel), ...]."""
    out = []
    t, y, v = 0.0, y0, v0
    k = 0
    for dur, a in segments:
        n = int(round(dur / dt))
        for _ in range(n):
            out.append(LogSample(round(k * dt, 10), LANE_WIDTH / 2, y, NORTH, max(v, 0.0)))
            y += v * dt + 0.5 * a * dt * dt
            v += a * dt
            k += 1
    out.append(LogSample(round(k * dt, 10), LANE_WIDTH / 2, y, NORTH, max(v, 0.0)))
    return out


def critical_log() -> list[LogSample]:
    """Constant 14 m/s from 100 m south of the stop line until well past the crossing."""
    return ego_line_log(-106.0, 30.0, 14.0)


def safe_log() -> list[LogSample]:
    """30 s at 10 Hz: brake from 10 to 3 m/s, creep up to the stop line, then accelerate back to 10 m/s."""
    return _profile_log([(5.0, -1.4), (2.5, 0.0), (5.0, 1.4), (17.5, 0.0)], 10.0, -46.0)


def _doc(name: str, log: Sequence[LogSample], map_ref: str) -> dict:
    return {
        "schema": SCENARIO_SCHEMA_ID,
        "name": name,
        "map": map_ref,
        "ego": {
            "mass": 1500.0,
            "log": [{"t": s.t, "x": s.x, "y": s.y, "heading": s.heading, "speed": s.speed} for s in log],
        },
        "vehicles": [],
        "params": {},
    }


def twin(name: str) -> Scenario:
    if name == "corridor":
        return corridor_scenario()
    if name == "critical":
        g, log = crossing_graph([CRITICAL_BLOCK]), critical_log()
    elif name == "safe":
        g, log = crossing_graph([SAFE_BLOCK]), safe_log()
    else:
        raise ValueError(f"unknown twin {name!r}")
    return scenario_from_dict(_doc(name, log, "map.json"), g)


def write_twin(name: str, out_dir) -> Path:
    """Write map.json and scenario.json (plus OSM and rule inputs for the OSM twins); returns the scenario path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scn = twin(name)
    save_graph(scn.graph, out / "map.json")
    if name in ("safe", "critical"):
        block = SAFE_BLOCK if name == "safe" else CRITICAL_BLOCK
        (out / "crossing.osm").write_text(crossing_osm([block]))
        (out / "rules.json").write_text(json.dumps(RULES, indent=2) + "\n")
    doc = scn.document or _doc(name, scn.ego, "map.json")
    if scn.route:
        doc["ego"]["route"] = list(scn.route)
    (out / "scenario.json").write_text(dumps_scenario(doc))
    return out / "scenario.json"

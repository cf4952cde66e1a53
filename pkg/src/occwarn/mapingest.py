"""
OSM subset parsing and lane-level enhancement.

Road ways become lane segment centerlines (lateral offsets of the way line),
segments meeting at a shared OSM node are connected by B-spline junctions,
and buildings become polygon nodes attached to their nearest half-road.
Priority relations come from a separate rule file, never from OSM tags.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import BSpline

from .geometry import DegenerateGeometryError, GeometryError, Point2, Polygon, Polyline, convex_hull
from .rldm import LdmGraph, LocalFrame, MapError

TRUE_VALUES = {"yes", "true", "1"}


class OsmParseError(MapError):
    pass


@dataclass
class OsmWay:
    id: str
    node_ids: list[str]
    points: np.ndarray  # (N, 2) lat, lon
    tags: dict[str, str] = field(default_factory=dict)

    @property
    def is_road(self) -> bool:
        return "highway" in self.tags

    @property
    def is_building(self) -> bool:
        return "building" in self.tags


@dataclass
class EnhanceConfig:
    lane_width: float = 3.0
    bspline_degree: int = 3
    sample_step: float = 1.0
    max_connection_angle: float = math.radians(135.0)
    junction_radius: float = 6.0

    def __post_init__(self):
        if not 2.25 <= self.lane_width <= 4.0:
            raise ValueError(f"lane_width {self.lane_width} outside [2.25, 4.0] m")
        if self.bspline_degree not in (1, 2, 3):
            raise ValueError("bspline_degree must be 1, 2 or 3 (four control points)")
        if self.sample_step <= 0 or self.junction_radius <= 0:
            raise ValueError("sample_step and junction_radius must be positive")


class LaneSpec(NamedTuple):
    index: int
    direction: str  # "f" along the way, "b" against it
    offset: float  # left of the way direction


class LaneEnd(NamedTuple):
    """A lane segment as seen from a junction location."""

    id: str
    line: Polyline
    arm: str
    incoming: bool


# ----------------------------------------------------------------------------- parsing


def parse_osm(document: Union[str, bytes, Path]) -> list[OsmWay]:
    """Road (``highway``) and building ways of an OSM XML document; other ways are skipped."""
    try:
        if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("<")):
            root = ET.parse(document).getroot()
        else:
            root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise OsmParseError(f"malformed OSM XML: {exc}") from exc

    coords = {}
    for nd in root.iter("node"):
        try:
            coords[nd.attrib["id"]] = (float(nd.attrib["lat"]), float(nd.attrib["lon"]))
        except (KeyError, ValueError) as exc:
            raise OsmParseError(f"node element without valid id/lat/lon: {nd.attrib}") from exc

    ways = []
    for w in root.iter("way"):
        wid = w.attrib.get("id")
        tags = {t.attrib["k"]: t.attrib.get("v", "") for t in w.iter("tag")}
        if "highway" not in tags and "building" not in tags:
            continue
        refs = [nd.attrib["ref"] for nd in w.iter("nd")]
        missing = [r for r in refs if r not in coords]
        if missing:
            raise OsmParseError(f"way {wid} references missing node {missing[0]}")
        if "building" in tags and "highway" not in tags:
            if len(refs) < 4 or refs[0] != refs[-1]:
                raise OsmParseError(f"building way {wid} is not a closed ring")
        elif len(refs) < 2:
            raise OsmParseError(f"road way {wid} has fewer than 2 nodes")
        pts = np.array([coords[r] for r in refs], dtype=float)
        ways.append(OsmWay(wid, refs, pts, tags))
    return ways


def load_rules(path) -> list[dict]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        if doc.get("version", 1) != 1:
            raise MapError(f"unsupported rule file version {doc.get('version')!r}")
        doc = doc.get("rules", [])
    if not isinstance(doc, list):
        raise MapError("rule file must contain a list of rules")
    return doc


# ----------------------------------------------------------------------------- lanes


def lane_layout(tags: dict, lane_width: float) -> list[LaneSpec]:
    """Lateral lane offsets, rightmost first; right-hand traffic."""
    oneway = tags.get("oneway", "no").lower()
    try:
        n = int(tags["lanes"]) if "lanes" in tags else (1 if oneway in TRUE_VALUES | {"-1"} else 2)
    except ValueError as exc:
        raise MapError(f"bad lanes tag {tags['lanes']!r}") from exc
    if n < 1:
        raise MapError("lanes tag must be >= 1")
    if oneway in TRUE_VALUES:
        n_f, n_b = n, 0
    elif oneway == "-1":
        n_f, n_b = 0, n
    else:
        n_b = int(tags.get("lanes:backward", n // 2))
        n_f = int(tags.get("lanes:forward", n - n_b))
        if n_f + n_b != n:
            raise MapError(f"lanes:forward + lanes:backward != lanes ({n_f} + {n_b} != {n})")
    out = []
    for k in range(n):
        off = (k + 0.5 - n / 2.0) * lane_width
        if k < n_f:
            out.append(LaneSpec(k, "f", off))
        else:
            out.append(LaneSpec(k, "b", off))
    # order within the backward group: its own rightmost lane (largest offset) first
    fwd = [l for l in out if l.direction == "f"]
    bwd = sorted((l for l in out if l.direction == "b"), key=lambda l: -l.offset)
    return [LaneSpec(i, l.direction, l.offset) for i, l in enumerate(fwd)] + [
        LaneSpec(i, l.direction, l.offset) for i, l in enumerate(bwd)
    ]


def _lane_line(base: Polyline, spec: LaneSpec) -> Polyline:
    line = base.offset(spec.offset)
    return line if spec.direction == "f" else line.reversed()


def derive_lane_centerlines(way: Union[OsmWay, Polyline], cfg: EnhanceConfig, tags=None, frame=None) -> list[Polyline]:
    """
    Lane centerlines of a road way, each oriented in its driving direction.

    ``way`` is either an OsmWay (projected with ``frame``, default anchored at
    its first point) or an already projected Polyline together with ``tags``.
    """
    if isinstance(way, OsmWay):
        tags = way.tags
        frame = frame or LocalFrame(*way.points[0])
        base = Polyline(frame.to_local(way.points))
    else:
        base = way
        tags = tags or {}
    return [_lane_line(base, spec) for spec in lane_layout(tags, cfg.lane_width)]


def build_delimiters(centerline: Polyline, lane_width: float) -> tuple[Polyline, Polyline]:
    return centerline.offset(lane_width / 2.0), centerline.offset(-lane_width / 2.0)


# ----------------------------------------------------------------------------- junctions


def _end_heading(line: Polyline, at_end: bool) -> float:
    d = line.points[-1] - line.points[-2] if at_end else line.points[1] - line.points[0]
    return math.atan2(d[1], d[0])


def turn_angle(seg_in: Polyline, seg_out: Polyline) -> float:
    """Signed angle (left positive) between the last vector before and the first after a junction."""
    return math.remainder(_end_heading(seg_out, False) - _end_heading(seg_in, True), 2 * math.pi)


def infer_connections(ends: Sequence[LaneEnd], max_angle: float = math.radians(135.0)) -> list[tuple[str, str]]:
    """Admissible (incoming, outgoing) pairs at one junction location: no U-turns, bounded turn angle."""
    ins = [e for e in ends if e.incoming]
    outs = [e for e in ends if not e.incoming]
    pairs = []
    for a in ins:
        for b in outs:
            if a.arm == b.arm:
                continue
            if abs(turn_angle(a.line, b.line)) <= max_angle + 1e-12:
                pairs.append((a.id, b.id))
    return pairs


def junction_spline(seg_in: Polyline, seg_out: Polyline, degree: int = 3) -> BSpline:
    """
    Clamped B-spline from the end of ``seg_in`` to the start of ``seg_out``.

    Control polygon: P0, P0 + t_in d/3, P3 - t_out d/3, P3 with d = |P3 - P0|,
    so positions and tangent directions match both segments at the ends.
    """
    p0, p3 = seg_in.end, seg_out.start
    d = float(np.hypot(*(p3 - p0)))
    if d < 1e-6:
        raise DegenerateGeometryError("junction endpoints coincide")
    t_in = seg_in.tangent_at(seg_in.length)
    t_out = seg_out.tangent_at(0.0)
    ctrl = np.array([p0, p0 + t_in * d / 3.0, p3 - t_out * d / 3.0, p3])
    n_inner = 4 - degree - 1
    knots = np.concatenate([np.zeros(degree + 1), np.linspace(0, 1, n_inner + 2)[1:-1], np.ones(degree + 1)])
    return BSpline(knots, ctrl, degree)


def interpolate_junction(seg_in: Polyline, seg_out: Polyline, cfg: EnhanceConfig) -> Polyline:
    spline = junction_spline(seg_in, seg_out, cfg.bspline_degree)
    u = np.linspace(0.0, 1.0, 257)
    dense = spline(u)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(dense, axis=0).T))])
    n = max(1, int(math.ceil(s[-1] / cfg.sample_step - 1e-9)))
    target = np.linspace(0.0, s[-1], n + 1)
    pts = spline(np.interp(target, s, u))
    pts[0], pts[-1] = seg_in.end, seg_out.start
    return Polyline(pts)


# ----------------------------------------------------------------------------- enhancement


def _bbox_frame(ways: Sequence[OsmWay]) -> LocalFrame:
    pts = np.vstack([w.points for w in ways])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return LocalFrame(float((lo[0] + hi[0]) / 2), float((lo[1] + hi[1]) / 2))


def _canonical(frame: LocalFrame, pts: np.ndarray) -> np.ndarray:
    # geometry is kept consistent with its WGS-84 encoding so save/load is exact
    return frame.to_local(frame.to_geo(pts))


def enhance(
    ways: Sequence[OsmWay],
    cfg: Optional[EnhanceConfig] = None,
    rules: Optional[Sequence[dict]] = None,
    frame: Optional[LocalFrame] = None,
) -> LdmGraph:
    cfg = cfg or EnhanceConfig()
    if not ways:
        raise MapError("no ways to enhance")
    frame = frame or _bbox_frame(ways)
    g = LdmGraph(frame)
    roads = [w for w in ways if w.is_road]
    buildings = [w for w in ways if w.is_building and not w.is_road]

    refs = defaultdict(int)
    node_xy = {}
    for w in roads:
        xy = frame.to_local(w.points)
        for nid, p in zip(w.node_ids, xy):
            refs[nid] += 1
            node_xy[nid] = p
    junction_nodes = {nid for nid, c in refs.items() if c >= 2}

    ends_at = defaultdict(list)  # osm node -> [LaneEnd]
    piece_arms = defaultdict(set)
    half_roads = []  # (id, shape)
    for w in roads:
        base_full = Polyline(frame.to_local(w.points))
        layout = lane_layout(w.tags, cfg.lane_width)
        g.add_node(f"road:{w.id}", "Road", shape=_line(frame, base_full.points), osm_id=w.id, highway=w.tags["highway"])
        for d in ("f", "b"):
            group = [s for s in layout if s.direction == d]
            if not group:
                continue
            mean = LaneSpec(0, d, float(np.mean([s.offset for s in group])))
            hr = f"hr:{w.id}:{d}"
            shape = _line(frame, _lane_line(base_full, mean).points)
            g.add_node(hr, "HalfRoad", shape=shape, lanes=len(group))
            g.relate(hr, "PART_OF", f"road:{w.id}")
            half_roads.append((hr, shape))
            for spec in group:
                lid = f"lane:{w.id}:{d}{spec.index}"
                g.add_node(lid, "Lane", shape=_line(frame, _lane_line(base_full, spec).points), offset=spec.offset)
                g.relate(lid, "PART_OF", hr)

        # split at junction locations
        cuts = [0] + [i for i in range(1, len(w.node_ids) - 1) if w.node_ids[i] in junction_nodes] + [len(w.node_ids) - 1]
        for part, (a, b) in enumerate(zip(cuts[:-1], cuts[1:])):
            piece = Polyline(frame.to_local(w.points[a : b + 1]))
            n0, n1 = w.node_ids[a], w.node_ids[b]
            s0 = cfg.junction_radius if n0 in junction_nodes else 0.0
            s1 = piece.length - (cfg.junction_radius if n1 in junction_nodes else 0.0)
            if s1 - s0 < 1.0:
                raise MapError(f"way {w.id} piece {part} too short for junction radius {cfg.junction_radius} m")
            trimmed = piece.sub(s0, s1)
            for spec in layout:
                sid = f"seg:{w.id}:{part}:{spec.direction}{spec.index}"
                line = Polyline(_canonical(frame, _lane_line(trimmed, spec).points))
                g.add_node(sid, "Segment", shape=line, lane_index=spec.index, way=w.id, part=part)
                g.relate(sid, "PART_OF", f"lane:{w.id}:{spec.direction}{spec.index}")
                fwd = spec.direction == "f"
                # forward lanes leave the start node and reach the end node
                if n1 in junction_nodes:
                    ends_at[n1].append(LaneEnd(sid, g.nodes[sid].shape, f"{w.id}:{part}:end", incoming=fwd))
                    piece_arms[n1].add(f"{w.id}:{part}:end")
                if n0 in junction_nodes:
                    ends_at[n0].append(LaneEnd(sid, g.nodes[sid].shape, f"{w.id}:{part}:start", incoming=not fwd))
                    piece_arms[n0].add(f"{w.id}:{part}:start")

    for nid in sorted(ends_at):
        stubs = ends_at[nid]
        lookup = {e.id: e for e in stubs}
        pairs = infer_connections(stubs, cfg.max_connection_angle)
        isec = None
        if len(piece_arms[nid]) >= 3:
            isec = f"isec:{nid}"
            c = _canonical(frame, node_xy[nid][None, :])[0]
            g.add_node(isec, "Intersection", center=Point2(float(c[0]), float(c[1])), osm_node=nid)
        pts = []
        for a, b in pairs:
            seg_in, seg_out = lookup[a].line, lookup[b].line
            line = Polyline(_canonical(frame, interpolate_junction(seg_in, seg_out, cfg).points))
            jid = f"jct:{a}>{b}"
            g.add_node(jid, "Junction", shape=line, angle=turn_angle(seg_in, seg_out))
            g.relate(a, "NEXT", jid)
            g.relate(jid, "NEXT", b)
            if isec is not None:
                g.relate(jid, "PART_OF", isec)
            pts.append(line.points)
        if isec is not None and pts:
            try:
                g.nodes[isec].properties["shape"] = convex_hull(np.vstack(pts))
                g.rtree.insert(isec, g.nodes[isec].properties["shape"].bounds)
            except DegenerateGeometryError:
                pass

    for w in buildings:
        ring = frame.to_local(w.points[:-1])
        try:
            convex_hull(ring)
            poly = Polygon(_canonical(frame, ring))
        except GeometryError as exc:
            raise MapError(f"building {w.id}: {exc}") from exc
        props = {"shape": poly, "osm_id": w.id}
        for k in ("height", "building:levels"):
            if k in w.tags:
                props[k.replace("building:", "")] = w.tags[k]
        bid = f"bld:{w.id}"
        g.add_node(bid, "Building", **props)
        if half_roads:
            c = poly.centroid
            nearest = min(half_roads, key=lambda hr: (hr[1].distance(c), hr[0]))
            g.relate(bid, "ADJACENT_TO", nearest[0])

    if rules:
        apply_priority_rules(g, rules)
    g.validate()
    return g


def _line(frame: LocalFrame, pts: np.ndarray) -> Polyline:
    return Polyline(_canonical(frame, pts))


def _locate_intersection(g: LdmGraph, loc) -> str:
    if isinstance(loc, dict):
        p = g.frame.to_local([float(loc["lat"]), float(loc["lon"])])
        isecs = g.by_label("Intersection")
        if not isecs:
            raise MapError("rule refers to an intersection but the map has none")
        return min(isecs, key=lambda i: (float(np.hypot(*(g.intersection_center(i) - p))), i))
    iid = str(loc)
    if not iid.startswith("isec:"):
        iid = f"isec:{iid}"
    if iid not in g.nodes:
        raise MapError(f"rule refers to unknown intersection {loc!r}")
    return iid


def _rule_lanes(g: LdmGraph, isec: str, loc) -> list[str]:
    incoming = g.incoming_segments(isec)
    loc = str(loc)
    if loc.startswith("seg:"):
        if loc not in incoming:
            raise MapError(f"segment {loc} does not enter {isec}")
        return [loc]
    way = loc.removeprefix("way:")
    found = [s for s in incoming if g.nodes[s].properties.get("way") == way]
    if not found:
        raise MapError(f"way {way} has no lane entering {isec}")
    return found


def apply_priority_rules(g: LdmGraph, rules: Sequence[dict]) -> None:
    """Add PRIORITY_OVER relations: each rule names an intersection, a yielding and a priority side."""
    for i, rule in enumerate(rules):
        try:
            isec = _locate_intersection(g, rule["intersection"])
            yielding = _rule_lanes(g, isec, rule["yielding"])
            priority = _rule_lanes(g, isec, rule["priority"])
        except KeyError as exc:
            raise MapError(f"rules[{i}]: missing field {exc}") from exc
        for p in priority:
            for y in yielding:
                if p != y and (p, "PRIORITY_OVER", y) not in g.relations:
                    g.relate(p, "PRIORITY_OVER", y)


def enhance_file(osm_path, rules_path=None, lane_width: float = 3.0, **cfg_kw) -> LdmGraph:
    ways = parse_osm(Path(osm_path))
    rules = load_rules(rules_path) if rules_path else None
    return enhance(ways, EnhanceConfig(lane_width=lane_width, **cfg_kw), rules)

"""
Relational local dynamic map: a labelled property graph over four data layers.

Layer 1 holds static road topology (roads, half-roads, lanes, lane segments,
junctions, intersections), layer 2 quasi-static entities (buildings, traffic
rules), layer 3 transient conditions and layer 4 dynamic entities (vehicles).

Lane-level queries (closest lane, path horizon, priority lanes) work on the
drivable elements: ``Segment`` nodes (lane pieces between junctions) and
``Junction`` nodes (lane connections through an intersection). A Segment is
``PART_OF`` a Lane, a Lane ``PART_OF`` a HalfRoad, a HalfRoad ``PART_OF`` a Road.

Node geometry lives in a local metric frame; the JSON document stores WGS-84.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .geometry import Point2, Polygon, Polyline
from .spatial import RTree

FORMAT = "occwarn.rldm"
FORMAT_VERSION = 1
EARTH_RADIUS = 6378137.0

LAYER_OF = {
    "Road": 1,
    "HalfRoad": 1,
    "Lane": 1,
    "Segment": 1,
    "Junction": 1,
    "Intersection": 1,
    "Building": 2,
    "TrafficRule": 2,
    "TransientCondition": 3,
    "Vehicle": 4,
}
REQUIRED_SHAPE = {"Segment": Polyline, "Junction": Polyline, "Lane": Polyline, "Building": Polygon}
DRIVABLE = ("Segment", "Junction")

RELATION_KINDS = {
    "NEXT": {("Segment", "Junction"), ("Junction", "Segment")},
    "PART_OF": {("Segment", "Lane"), ("Lane", "HalfRoad"), ("HalfRoad", "Road"), ("Junction", "Intersection")},
    "PRIORITY_OVER": {("Segment", "Segment")},
    "ADJACENT_TO": {("Building", "HalfRoad")},
    "ON": {("Vehicle", "Segment"), ("Vehicle", "Junction")},
}


class MapError(ValueError):
    pass


class LocalizationError(MapError):
    """No lane near the query position agrees with the direction of travel."""


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent plane anchored at (lat0, lon0)."""

    lat0: float = 0.0
    lon0: float = 0.0

    def to_local(self, latlon) -> np.ndarray:
        ll = np.asarray(latlon, dtype=float)
        k = math.pi / 180.0
        x = EARTH_RADIUS * (ll[..., 1] - self.lon0) * k * math.cos(self.lat0 * k)
        y = EARTH_RADIUS * (ll[..., 0] - self.lat0) * k
        return np.stack([x, y], axis=-1)

    def to_geo(self, xy) -> np.ndarray:
        p = np.asarray(xy, dtype=float)
        k = math.pi / 180.0
        lat = self.lat0 + p[..., 1] / (EARTH_RADIUS * k)
        lon = self.lon0 + p[..., 0] / (EARTH_RADIUS * k * math.cos(self.lat0 * k))
        return np.stack([lat, lon], axis=-1)


@dataclass
class LdmNode:
    id: str
    label: str
    layer: int
    properties: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self):
        return self.properties.get("shape")


@dataclass(frozen=True)
class LdmRelation:
    src: str
    kind: str
    dst: str


@dataclass
class HorizonNode:
    id: str
    start: float  # cumulative arc-length at element start (root: measured from the query position)
    end: float
    children: list["HorizonNode"] = field(default_factory=list)


@dataclass
class PathHorizon:
    root_lane: str
    root_s: float
    depth: float
    tree: HorizonNode

    def paths(self) -> list[tuple[str, ...]]:
        """Element-id sequences from the root to every leaf."""
        out = []
        stack = [(self.tree, (self.tree.id,))]
        while stack:
            node, path = stack.pop()
            if not node.children:
                out.append(path)
            for child in reversed(node.children):
                stack.append((child, path + (child.id,)))
        return out

    def nodes(self) -> Iterable[HorizonNode]:
        stack = [self.tree]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(n.children)


def _bbox(shape) -> tuple[float, float, float, float]:
    if isinstance(shape, Polyline):
        pts = shape.points
    elif isinstance(shape, Polygon):
        pts = shape.ring
    else:
        pts = np.asarray(shape, dtype=float).reshape(1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def _shape_distance(shape, p: np.ndarray) -> float:
    if isinstance(shape, Polyline):
        return shape.distance(p)
    if isinstance(shape, Polygon):
        if shape.contains(p[None, :])[0]:
            return 0.0
        return shape.boundary_distance(p)
    return float(np.hypot(*(np.asarray(shape, dtype=float) - p)))


class LdmGraph:
    """In-memory labelled property graph with an embedded R-tree over shaped nodes."""

    def __init__(self, frame: Optional[LocalFrame] = None):
        self.frame = frame or LocalFrame()
        self.nodes: dict[str, LdmNode] = {}
        self.relations: dict[tuple[str, str, str], LdmRelation] = {}
        self._out: dict[str, list[LdmRelation]] = {}
        self._in: dict[str, list[LdmRelation]] = {}
        self.rtree = RTree()
        # WGS-84 coordinates read from a document, keyed (node, property); reused on save
        self._geo: dict[tuple[str, str], tuple[Any, list]] = {}

    # ------------------------------------------------------------------ mutation

    def insert(self, element) -> Any:
        if isinstance(element, LdmNode):
            return self._insert_node(element)
        if isinstance(element, LdmRelation):
            return self._insert_relation(element)
        raise TypeError(f"cannot insert {type(element).__name__}")

    def add_node(self, id: str, label: str, **properties) -> str:
        if label not in LAYER_OF:
            raise MapError(f"unknown label {label!r}")
        return self._insert_node(LdmNode(id, label, LAYER_OF[label], dict(properties)))

    def relate(self, src: str, kind: str, dst: str):
        return self._insert_relation(LdmRelation(src, kind, dst))

    def _insert_node(self, node: LdmNode) -> str:
        if node.id in self.nodes:
            raise MapError(f"duplicate node id {node.id!r}")
        if node.label not in LAYER_OF:
            raise MapError(f"unknown label {node.label!r}")
        if node.layer != LAYER_OF[node.label]:
            raise MapError(f"{node.label} belongs to layer {LAYER_OF[node.label]}, not {node.layer}")
        shape = node.properties.get("shape")
        want = REQUIRED_SHAPE.get(node.label)
        if want is not None and not isinstance(shape, want):
            raise MapError(f"{node.label} {node.id!r} needs a {want.__name__} shape property")
        if shape is not None and not isinstance(shape, (Polyline, Polygon, Point2)):
            raise MapError(f"unsupported shape type {type(shape).__name__} on {node.id!r}")
        self.nodes[node.id] = node
        self._out[node.id] = []
        self._in[node.id] = []
        if shape is not None:
            self.rtree.insert(node.id, _bbox(shape))
        return node.id

    def _insert_relation(self, rel: LdmRelation):
        if rel.kind not in RELATION_KINDS:
            raise MapError(f"unknown relation kind {rel.kind!r}")
        for end in (rel.src, rel.dst):
            if end not in self.nodes:
                raise MapError(f"relation endpoint {end!r} does not exist")
        pair = (self.nodes[rel.src].label, self.nodes[rel.dst].label)
        if pair not in RELATION_KINDS[rel.kind]:
            raise MapError(f"{rel.kind} cannot connect {pair[0]} -> {pair[1]}")
        key = (rel.src, rel.kind, rel.dst)
        if key in self.relations:
            raise MapError(f"duplicate relation {key}")
        self.relations[key] = rel
        self._out[rel.src].append(rel)
        self._in[rel.dst].append(rel)
        return key

    def remove_node(self, id: str) -> None:
        node = self.nodes.pop(id)
        for rel in self._out.pop(id) + self._in.pop(id):
            key = (rel.src, rel.kind, rel.dst)
            if key in self.relations:
                del self.relations[key]
                other = rel.dst if rel.src == id else rel.src
                if other in self._out:
                    self._out[other] = [r for r in self._out[other] if r != rel]
                    self._in[other] = [r for r in self._in[other] if r != rel]
        if node.shape is not None:
            self.rtree.remove(id)
        for k in [k for k in self._geo if k[0] == id]:
            del self._geo[k]

    # ------------------------------------------------------------------ traversal

    def node(self, id: str) -> LdmNode:
        try:
            return self.nodes[id]
        except KeyError:
            raise MapError(f"unknown node {id!r}") from None

    def successors(self, id: str, kind: str) -> list[str]:
        return [r.dst for r in self._out[id] if r.kind == kind]

    def predecessors(self, id: str, kind: str) -> list[str]:
        return [r.src for r in self._in[id] if r.kind == kind]

    def by_label(self, label: str) -> list[str]:
        return [n.id for n in self.nodes.values() if n.label == label]

    def parent_intersection(self, junction_id: str) -> Optional[str]:
        up = self.successors(junction_id, "PART_OF")
        return up[0] if up else None

    def intersection_junctions(self, isec_id: str) -> list[str]:
        return self.predecessors(isec_id, "PART_OF")

    def incoming_segments(self, isec_id: str) -> list[str]:
        out = []
        for j in self.intersection_junctions(isec_id):
            for seg in self.predecessors(j, "NEXT"):
                if seg not in out:
                    out.append(seg)
        return out

    def attached_lanes(self, isec_id: str) -> list[str]:
        """Junctions of an intersection plus every segment entering or leaving it."""
        out = []
        for j in self.intersection_junctions(isec_id):
            for e in [j] + self.predecessors(j, "NEXT") + self.successors(j, "NEXT"):
                if e not in out:
                    out.append(e)
        return out

    def intersection_center(self, isec_id: str) -> np.ndarray:
        node = self.node(isec_id)
        if node.label != "Intersection":
            raise MapError(f"{isec_id!r} is not an intersection")
        c = node.properties.get("center")
        if c is not None:
            return np.asarray(c, dtype=float)
        pts = np.vstack([self.nodes[j].shape.points for j in self.intersection_junctions(isec_id)])
        return pts.mean(axis=0)

    # ------------------------------------------------------------------ spatial queries

    def query_radius(self, center, radius: float, labels=None) -> list[str]:
        if radius <= 0:
            raise ValueError("radius must be positive")
        c = np.asarray(center, dtype=float)
        if isinstance(labels, str):
            labels = (labels,)
        box = (c[0] - radius, c[1] - radius, c[0] + radius, c[1] + radius)
        out = []
        for nid in self.rtree.search(box):
            node = self.nodes[nid]
            if labels is not None and node.label not in labels:
                continue
            if _shape_distance(node.shape, c) <= radius:
                out.append(nid)
        return out

    def closest_lane(
        self,
        position,
        heading: float,
        *,
        max_distance: float = 10.0,
        max_heading_error: float = math.pi / 2,
        labels=DRIVABLE,
    ) -> tuple[str, float]:
        """
        Closest drivable element whose direction agrees with ``heading``.

        Candidates within ``max_distance`` are ranked by perpendicular distance;
        those whose tangent at the foot point deviates from ``heading`` by
        ``max_heading_error`` or more are dropped (GNSS consistency check).
        """
        p = np.asarray(position, dtype=float)
        best = None
        for nid in self.query_radius(p, max_distance, labels):
            line = self.nodes[nid].shape
            s, dist, _ = line.project(p)
            tan = line.tangent_at(min(s, line.length - 1e-9))
            err = abs(math.remainder(math.atan2(tan[1], tan[0]) - heading, 2 * math.pi))
            if err >= max_heading_error:
                continue
            key = (dist, err, nid)
            if best is None or key < best[0]:
                best = (key, nid, s)
        if best is None:
            raise LocalizationError(
                f"no direction-consistent lane within {max_distance} m of ({p[0]:.2f}, {p[1]:.2f})"
            )
        return best[1], best[2]

    def buildings_near(self, isec_id: str, radius: float) -> list[Polygon]:
        c = self.intersection_center(isec_id)
        return [self.nodes[b].shape for b in sorted(self.query_radius(c, radius, "Building"))]

    def priority_lanes(self, isec_id: str, ego_lane: str) -> list[str]:
        if isec_id not in self.nodes or self.nodes[isec_id].label != "Intersection":
            raise MapError(f"unknown intersection {isec_id!r}")
        incoming = self.incoming_segments(isec_id)
        ranked = set(self.predecessors(ego_lane, "PRIORITY_OVER"))
        return [seg for seg in incoming if seg in ranked and seg != ego_lane]

    def path_horizon(self, lane_id: str, s: float, depth: float) -> PathHorizon:
        """Breadth-first expansion along NEXT until ``depth`` meters are covered on each branch."""
        root_shape = self.node(lane_id).shape
        root = HorizonNode(lane_id, -s, root_shape.length - s)
        queue = deque([root])
        while queue:
            n = queue.popleft()
            if n.end >= depth:
                continue
            for nxt in sorted(self.successors(n.id, "NEXT")):
                length = self.nodes[nxt].shape.length
                child = HorizonNode(nxt, n.end, n.end + length)
                n.children.append(child)
                queue.append(child)
        return PathHorizon(lane_id, s, depth, root)

    # ------------------------------------------------------------------ validation

    def validate(self) -> None:
        problems = []
        for key, rel in self.relations.items():
            if rel.src not in self.nodes or rel.dst not in self.nodes:
                problems.append(f"dangling relation {key}")
        shaped = {n.id for n in self.nodes.values() if n.shape is not None}
        if shaped != set(self.rtree.keys()):
            problems.append("spatial index out of sync with shaped nodes")
        for n in self.nodes.values():
            if n.label == "Junction":
                ins = self.predecessors(n.id, "NEXT")
                outs = self.successors(n.id, "NEXT")
                if len(ins) != 1 or len(outs) != 1:
                    problems.append(f"junction {n.id} must join exactly one segment to one segment")
                if len(self.successors(n.id, "PART_OF")) > 1:
                    problems.append(f"junction {n.id} belongs to several intersections")
                if "angle" not in n.properties:
                    problems.append(f"junction {n.id} lacks its angle property")
            elif n.label == "Segment":
                for nxt in self.successors(n.id, "NEXT"):
                    if self.nodes[nxt].label != "Junction":
                        problems.append(f"segment {n.id} followed by {self.nodes[nxt].label}")
                if len(self.successors(n.id, "PART_OF")) > 1:
                    problems.append(f"segment {n.id} belongs to several lanes")
            elif n.label in ("Lane", "HalfRoad"):
                if len(self.successors(n.id, "PART_OF")) != 1:
                    problems.append(f"{n.label} {n.id} must be part of exactly one parent")
        if problems:
            raise MapError("invalid graph: " + "; ".join(problems[:10]))

    # ------------------------------------------------------------------ serialization

    def to_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            props = {k: self._encode(nid, k, v) for k, v in sorted(n.properties.items())}
            nodes.append({"id": n.id, "label": n.label, "layer": n.layer, "properties": props})
        rels = [{"from": r.src, "to": r.dst, "kind": r.kind} for _, r in sorted(self.relations.items())]
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "origin": {"lat": self.frame.lat0, "lon": self.frame.lon0},
            "nodes": nodes,
            "relations": rels,
        }

    def _encode(self, nid: str, key: str, value):
        if isinstance(value, (Polyline, Polygon, Point2)):
            cached = self._geo.get((nid, key))
            if cached is not None and cached[0] is value:
                coords = cached[1]
            else:
                pts = value.points if isinstance(value, Polyline) else value.ring if isinstance(value, Polygon) else np.asarray(value)
                coords = self.frame.to_geo(pts).tolist()
            kind = {Polyline: "polyline", Polygon: "polygon", Point2: "point"}[type(value)]
            return {"type": kind, "latlon": coords}
        return value

    @classmethod
    def from_dict(cls, doc: dict) -> "LdmGraph":
        if doc.get("format") != FORMAT:
            raise MapError(f"not an {FORMAT} document")
        if doc.get("version") != FORMAT_VERSION:
            raise MapError(f"unsupported map version {doc.get('version')!r}")
        o = doc["origin"]
        g = cls(LocalFrame(float(o["lat"]), float(o["lon"])))
        for i, nd in enumerate(doc["nodes"]):
            try:
                props = {}
                decoded = {}
                for k, v in nd.get("properties", {}).items():
                    if isinstance(v, dict) and v.get("type") in ("polyline", "polygon", "point"):
                        local = g.frame.to_local(v["latlon"])
                        if v["type"] == "polyline":
                            obj = Polyline(local)
                        elif v["type"] == "polygon":
                            obj = Polygon(local, validate=False)
                        else:
                            obj = Point2(float(local[0]), float(local[1]))
                        props[k] = obj
                        decoded[k] = (obj, v["latlon"])
                    else:
                        props[k] = v
                g.insert(LdmNode(nd["id"], nd["label"], int(nd["layer"]), props))
                for k, pair in decoded.items():
                    g._geo[(nd["id"], k)] = pair
            except (KeyError, TypeError, ValueError) as exc:
                raise MapError(f"nodes[{i}]: {exc}") from exc
        for i, rd in enumerate(doc["relations"]):
            try:
                g.relate(rd["from"], rd["kind"], rd["to"])
            except (KeyError, MapError) as exc:
                raise MapError(f"relations[{i}]: {exc}") from exc
        return g

    def __eq__(self, other):
        if not isinstance(other, LdmGraph):
            return NotImplemented
        return self.frame == other.frame and self.nodes == other.nodes and set(self.relations) == set(other.relations)

    __hash__ = object.__hash__


def save_graph(graph: LdmGraph, path) -> None:
    Path(path).write_text(dumps_graph(graph))


def dumps_graph(graph: LdmGraph) -> str:
    return json.dumps(graph.to_dict(), indent=1, sort_keys=True) + "\n"


def load_graph(path) -> LdmGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MapError(f"{path}: {exc}") from exc
    return LdmGraph.from_dict(doc)

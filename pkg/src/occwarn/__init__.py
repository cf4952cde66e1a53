"""Intersection warning for occlusion risk: map, visibility, virtual cars, risk maps and advice."""

from .geometry import Point2, Polygon, PolygonSet, Polyline
from .rldm import LdmGraph, load_graph, save_graph
from .visibility import SensorModel, visible_area
from .risk import RiskParams
from .sim import Scenario, load_scenario, run

__all__ = [
    "LdmGraph",
    "Point2",
    "Polygon",
    "PolygonSet",
    "Polyline",
    "RiskParams",
    "Scenario",
    "SensorModel",
    "load_graph",
    "load_scenario",
    "run",
    "save_graph",
    "visible_area",
]

__version__ = "0.1.0"

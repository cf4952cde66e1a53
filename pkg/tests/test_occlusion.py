import math

import numpy as np
import pytest

from occwarn.geometry import Point2, Polyline
from occwarn.occlusion import (
    VIRTUAL_SPEED,
    EntityState,
    VirtualCar,
    crossing_distance,
    occluded_priority_intervals,
    predict_ego,
    predict_real,
    predict_virtual,
    route_line,
    spawn_virtual_cars,
    straight_route,
)
from occwarn.twins import CRITICAL_BLOCK, crossing_graph
from occwarn.visibility import SensorModel, visible_area


@pytest.fixture(scope="module")
def graph():
    return crossing_graph([CRITICAL_BLOCK])


def _northbound(g):
    return next(s for s in g.incoming_segments("isec:100") if g.nodes[s].properties["way"] == "1" and g.nodes[s].shape.end[1] < 0)


def _vis(g, y):
    pos = np.array([1.5, y])
    b = [g.nodes[i].shape for i in g.query_radius(pos, 50.0, "Building")]
    return visible_area(b, SensorModel((1.5, y)))


def test_entity_validation():
    with pytest.raises(ValueError):
        EntityState("x", "bike", Point2(0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        EntityState("x", "ego", Point2(0, 0), 0.0, -1.0)


def test_straight_route_picks_smallest_turn(graph):
    ego = _northbound(graph)
    route = straight_route(graph, ego, 400.0)
    assert route[0] == ego and graph.nodes[route[1]].label == "Junction"
    assert abs(graph.nodes[route[1]].properties["angle"]) < 1e-6
    line = route_line(graph, route)
    assert line.end[1] > 0  # continues north


def test_occluded_intervals_and_spawn(graph):
    ego = _northbound(graph)
    intervals = dict(occluded_priority_intervals(_vis(graph, -25.0), graph, "isec:100", ego))
    assert set(intervals) == set(graph.priority_lanes("isec:100", ego))
    hidden = {k: v for k, v in intervals.items() if v}
    assert len(hidden) == 1  # the block hides the eastern approach only
    (lane, ivs), = hidden.items()
    cars = spawn_virtual_cars(intervals.items(), graph)
    assert [c.lane for c in cars] == [lane]
    car = cars[0]
    assert car.s_spawn == pytest.approx(max(b for _, b in ivs))
    assert car.speed == pytest.approx(40 / 3.6) and car.id == f"virtual:{lane}"
    # the spawn point is on the lane, heading west toward the crossing
    s, dist, _ = graph.nodes[lane].shape.project(car.position)
    assert dist < 1e-6
    assert abs(math.remainder(car.heading - math.pi, 2 * math.pi)) < 1e-6


def test_no_cars_when_visible(graph):
    ego = _northbound(graph)
    intervals = occluded_priority_intervals(_vis(graph, -2.0), graph, "isec:100", ego)
    assert spawn_virtual_cars(intervals, graph) == []


def test_virtual_car_stops_at_ego_path(graph):
    ego = _northbound(graph)
    ego_path = route_line(graph, straight_route(graph, ego, 400.0))
    east = next(l for l in graph.priority_lanes("isec:100", ego) if graph.nodes[l].shape.start[0] > 0)
    line = graph.nodes[east].shape
    car = VirtualCar(east, line.length - 30.0, VIRTUAL_SPEED, Point2(*line.point_at(line.length - 30.0)), math.pi)
    tr = predict_virtual(car, graph, 6.0, 0.1, "isec:100", ego_path)
    assert tr.n_steps == 60
    stopped = np.flatnonzero(tr.speeds == 0)
    assert stopped.size and np.all(np.diff(tr.s[stopped[0]:]) == 0)
    # stops on the ego path
    assert ego_path.distance(tr.positions[-1]) < 1e-6
    moving = tr.speeds > 0
    np.testing.assert_allclose(np.diff(tr.s[: stopped[0]]), VIRTUAL_SPEED * 0.1)
    assert moving[0]


def test_predict_ego_profiles():
    path = Polyline([[0, 0], [300, 0]])
    ego = EntityState("e", "ego", Point2(0, 0), 0.0, 10.0, s=5.0)
    const = predict_ego(ego, path)
    np.testing.assert_allclose(const.s, 5.0 + 10.0 * np.arange(61) * 0.1)
    brake = predict_ego(ego, path, -2.0)
    assert brake.s[-1] == pytest.approx(5.0 + 25.0) and brake.speeds.min() == 0.0
    fast = predict_ego(ego, path, 3.0, v_limit=12.0)
    assert fast.speeds.max() == pytest.approx(12.0)
    with pytest.raises(ValueError):
        predict_ego(ego, path, horizon=0.25, dt=0.1)


def test_predict_real_off_map():
    st = EntityState("r", "real", Point2(0, 0), math.pi / 2, 5.0)
    tr = predict_real(st, None, 2.0, 0.1)
    np.testing.assert_allclose(tr.positions[-1], [0, 10.0], atol=1e-9)


def test_crossing_distance():
    ego = Polyline([[0, -20], [0, 20]])
    other = predict_real(EntityState("r", "real", Point2(-10, 0), 0.0, 5.0), None, 6.0, 0.1)
    assert crossing_distance(ego, 5.0, other) == pytest.approx(15.0)
    assert crossing_distance(ego, 25.0, other) is None

import copy
import csv
import json

import pytest

from occwarn import sim
from occwarn.sim import (
    FRAME_COLUMNS,
    FrameRecord,
    LogSample,
    PipelineError,
    ScenarioError,
    VehicleLog,
    load_scenario,
    run,
    run_frames,
    scenario_from_dict,
)
from occwarn.twins import CRITICAL_BLOCK, crossing_graph, twin, write_twin


@pytest.fixture(scope="module")
def graph():
    return crossing_graph([CRITICAL_BLOCK])


def _doc(log=None, **extra):
    log = log or [
        {"t": 0.0, "x": 1.5, "y": -40.0, "heading": 1.5707963, "speed": 10.0},
        {"t": 0.1, "x": 1.5, "y": -39.0, "heading": 1.5707963, "speed": 10.0},
    ]
    doc = {"schema": "occwarn.scenario/1", "map": "map.json", "ego": {"log": log}}
    doc.update(extra)
    return doc


def test_minimal_document(graph):
    scn = scenario_from_dict(_doc(), graph)
    assert len(scn.ego) == 2 and scn.params.dt == 0.1 and scn.vehicles == []


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda d: d.pop("ego"), "<root>"),
        (lambda d: d.update(schema="other/1"), "schema"),
        (lambda d: d["ego"]["log"][1].update(speed=-1.0), "ego.log[1].speed"),
        (lambda d: d["ego"]["log"][0].pop("y"), "ego.log[0]"),
        (lambda d: d.update(params={"dt": 0}), "params.dt"),
        (lambda d: d.update(params={"lane_width": 5.0}), "params.lane_width"),
        (lambda d: d.update(params={"risk": {"beta_growth": "x"}}), "params.risk.beta_growth"),
        (lambda d: d.update(extra=1), "<root>"),
    ],
)
def test_schema_errors_name_the_field(graph, mutate, where):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc, graph)
    assert str(exc.value).startswith(where)


def test_timestamps_strictly_increasing(graph):
    doc = _doc()
    doc["ego"]["log"][1]["t"] = 0.0
    with pytest.raises(ScenarioError, match=r"ego.log\[1\].t"):
        scenario_from_dict(doc, graph)


def test_unknown_route_element(graph):
    doc = _doc()
    doc["ego"]["route"] = ["nope"]
    with pytest.raises(ScenarioError, match="nope"):
        scenario_from_dict(doc, graph)


def test_invalid_param_values_rejected(graph):
    with pytest.raises(ScenarioError):
        scenario_from_dict(_doc(params={"risk": {"beta0": -1.0}}), graph)


def test_params_override_merges(graph):
    scn = scenario_from_dict(_doc(params={"risk": {"beta_growth": 0.2}}), graph, {"risk": {"w_c": 2e-5}, "dt": 0.05})
    assert scn.params.risk.beta_growth == 0.2 and scn.params.risk.w_c == 2e-5 and scn.params.dt == 0.05


def test_geo_samples(graph):
    lat, lon = graph.frame.to_geo([1.5, -40.0])
    log = [
        {"t": 0.0, "lat": float(lat), "lon": float(lon), "heading": 1.57, "speed": 1.0},
        {"t": 1.0, "x": 1.5, "y": -39.0, "heading": 1.57, "speed": 1.0},
    ]
    scn = scenario_from_dict(_doc(log), graph)
    assert scn.ego[0].x == pytest.approx(1.5, abs=1e-6) and scn.ego[0].y == pytest.approx(-40.0, abs=1e-6)


def test_vehicle_log_interpolation():
    v = VehicleLog("a", [LogSample(0.0, 0.0, 0.0, 0.0, 2.0), LogSample(1.0, 2.0, 0.0, 0.0, 4.0)])
    s = v.at(0.25)
    assert (s.x, s.speed) == pytest.approx((0.5, 2.5))
    assert v.at(-0.5) is None and v.at(1.5) is None
    assert v.at(1.0).x == 2.0


def test_load_errors(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)
    p.write_text(json.dumps(_doc()))
    with pytest.raises(ScenarioError, match="map"):
        load_scenario(p)


def test_written_twin_round_trips(tmp_path):
    path = write_twin("critical", tmp_path)
    scn = load_scenario(path)
    ref = twin("critical")
    assert scn.ego == ref.ego
    assert sorted(scn.graph.nodes) == sorted(ref.graph.nodes)


def _short_critical(n=5):
    scn = twin("critical")
    scn.ego = scn.ego[50 : 50 + n]
    return scn


def test_run_outputs(tmp_path):
    scn = _short_critical()
    summary = run(scn, tmp_path, dump_riskmaps=True)
    rows = list(csv.reader(open(tmp_path / "frames.csv")))
    assert rows[0] == FRAME_COLUMNS and len(rows) == 6
    assert summary["frames"] == 5 and summary["valid_frames"] == 5
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert (tmp_path / "riskmap_0.csv").exists() and (tmp_path / "riskmap_4.pgm").read_bytes().startswith(b"P5\n61 41\n")


def test_frames_are_localized():
    frames = run_frames(_short_critical(3))
    for f in frames:
        assert f.valid and f.lane and f.intersection == "isec:100"
        assert f.d_sl is not None and f.d_cp > f.d_sl
        assert 0.0 <= f.visibility <= 1.0


def test_off_map_frame_is_invalid_not_fatal():
    scn = _short_critical(2)
    scn.ego = [LogSample(0.0, 500.0, 500.0, 0.0, 5.0), scn.ego[0]]
    scn.ego[1] = LogSample(0.1, *[getattr(scn.ego[1], k) for k in ("x", "y", "heading", "speed")])
    frames = run_frames(scn)
    assert not frames[0].valid and frames[0].error and frames[1].valid


def test_pipeline_error_flushes_frames(tmp_path, monkeypatch):
    real = sim.step
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("boom")
        return real(*a, **k)

    monkeypatch.setattr(sim, "step", flaky)
    with pytest.raises(PipelineError, match="boom"):
        run(_short_critical(), tmp_path)
    rows = list(csv.reader(open(tmp_path / "frames.csv")))
    assert len(rows) == 3  # header + two completed frames
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["frames"] == 2 and "boom" in summary["error"]


def test_emergency_dwell(monkeypatch):
    flags = [True, True, True, False, True]
    it = iter(flags)

    def fake(ego, world, t=0.0, vehicles=(), d=0.0):
        return FrameRecord(t, True, d, ego.position.x, ego.position.y, ego.speed, emergency_candidate=next(it)), None

    monkeypatch.setattr(sim, "step", fake)
    scn = copy.copy(_short_critical())
    scn.params = sim.SimParams(emergency_dwell=0.15)
    frames = run_frames(scn)
    assert [f.emergency_brake for f in frames] == [False, False, True, False, False]


def test_detected_vehicle_replaces_virtual_car_on_its_lane():
    import math

    from occwarn.geometry import Point2
    from occwarn.occlusion import EntityState

    scn = twin("critical")
    world = sim.World(scn.graph, scn.params)
    ego = EntityState("ego", "ego", Point2(1.5, -25.0), math.pi / 2, 14.0)
    alone, _ = sim.step(ego, world)
    assert len(alone.virtual_cars) == 1 and alone.n_real == 0
    seen = EntityState("car", "real", Point2(6.0, 1.5), math.pi, 10.0)
    rec, _ = sim.step(ego, world, vehicles=[seen])
    assert rec.n_real == 1 and rec.virtual_cars == []
    # a car behind the block is not detected, the virtual car stays
    hidden = EntityState("car", "real", Point2(20.0, 1.5), math.pi, 10.0)
    rec, _ = sim.step(ego, world, vehicles=[hidden])
    assert rec.n_real == 0 and rec.virtual_cars == alone.virtual_cars

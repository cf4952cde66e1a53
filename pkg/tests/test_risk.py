import dataclasses
import math

import numpy as np
import pytest

from _oracles import first_event_sampling
from occwarn.geometry import Point2, Polyline
from occwarn.occlusion import EntityState, PredictedTrajectory, predict_ego, predict_real
from occwarn.risk import (
    RiskMap,
    RiskParams,
    build_risk_map,
    collision_damage,
    event_probability,
    event_rate_distance,
    survival,
    target_pass_velocity,
    total_event_rate,
    trajectory_risk,
    velocity_grid,
)

P = RiskParams()


def test_params_validation():
    with pytest.raises(ValueError):
        RiskParams(tau0_inv=-1)
    with pytest.raises(ValueError):
        RiskParams(beta0=0)


def test_event_rate():
    assert event_rate_distance(3.0, 0.0, P) == pytest.approx(1.0)  # inside d_min
    assert event_rate_distance(5.0, 0.0, P) == pytest.approx(math.exp(-1.0))
    # beta shrinks with prediction time: 2.0 s -> beta 0.5
    assert event_rate_distance(6.0, 2.0, P) == pytest.approx(math.exp(-1.0))
    assert event_rate_distance(100.0, 0.0, P) < event_rate_distance(10.0, 0.0, P)
    assert event_rate_distance(1e4, 0.0, P) == 0.0
    np.testing.assert_allclose(event_rate_distance(np.array([3.0, 5.0]), 0.0, P), [1.0, math.exp(-1)])
    assert total_event_rate([0.1, 0.2]) == pytest.approx(0.3)


def test_survival_definition():
    s = survival([0.5, 1.0, 2.0], 0.1, 0.1)
    np.testing.assert_allclose(s, [1.0, math.exp(-0.06), math.exp(-0.06 - 0.11)])
    with pytest.raises(ValueError):
        survival([-1.0], 0.0, 0.1)


def test_event_probability_clipped():
    assert event_probability(50.0, 1.0, 0.1) == 1.0
    assert event_probability(0.5, 0.8, 0.1) == pytest.approx(0.04)


def test_damage():
    # equal masses: reduced mass m/2; head-on at 10 m/s each -> dv 20
    d = collision_damage([10.0, 0.0], [-10.0, 0.0], 1500.0, 1500.0, 1.0)
    assert d == pytest.approx(0.5 * 750.0 * 400.0)
    assert collision_damage([5.0, 5.0], [5.0, 5.0], 1.0, 1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        collision_damage([0, 0], [0, 0], 0.0, 1.0, 1.0)


def test_survival_sampling_agreement_small_fixture():
    rates = np.repeat([0.2, 0.05], 30)
    S = survival(rates, 0.01, 0.1)
    freq, est = first_event_sampling(rates, 0.01, 0.1, n_trials=100_000, seed=9)
    assert np.abs(S[:60] - est).max() < 0.01
    assert event_probability(rates, S, 0.1).sum() == pytest.approx(freq.sum(), rel=0.02)


def _pair(dt=0.1):
    ego = predict_ego(EntityState("e", "ego", Point2(0, -40), math.pi / 2, 8.0, s=0.0), Polyline([[0, -40], [0, 60]]), dt=dt)
    other = predict_real(EntityState("o", "real", Point2(-60, 0), 0.0, 10.0), None, 6.0, dt)
    return ego, other


def test_trajectory_risk_hand_computed():
    ego, other = _pair()
    prof = trajectory_risk(ego, [other], P)
    d = np.hypot(*(ego.positions - other.positions).T)
    t = np.arange(61) * 0.1
    rate = np.exp(-np.maximum(d - 4.0, 0.0) / (1 + 0.5 * t))
    rate[((d - 4.0).clip(0) / (1 + 0.5 * t)) > 40] = 0.0
    S = np.exp(-np.concatenate([[0.0], np.cumsum((0.01 + rate[:-1]) * 0.1)]))
    dv = ego.velocities - other.velocities
    dmg = 1e-5 * 0.5 * 750.0 * (dv**2).sum(axis=1)
    np.testing.assert_allclose(prof.risk, dmg * rate * S, rtol=1e-12, atol=1e-300)
    assert prof.peak == pytest.approx((dmg * rate * S).max())
    assert prof.integral == pytest.approx((dmg * rate * S).sum() * 0.1)


def test_trajectory_risk_no_others():
    ego, _ = _pair()
    prof = trajectory_risk(ego, [], P)
    assert prof.peak == 0.0 and prof.survival[-1] == pytest.approx(math.exp(-0.01 * 6.0))


def test_sampling_mismatch_rejected():
    ego, _ = _pair()
    _, other = _pair(dt=0.05)
    with pytest.raises(ValueError):
        trajectory_risk(ego, [other], P)


def test_risk_map_column_equals_trajectory_risk():
    ego_traj, other = _pair()
    ego = EntityState("e", "ego", Point2(0, -40), math.pi / 2, 8.0, s=0.0)
    path = Polyline([[0, -40], [0, 60]])
    m = build_risk_map(ego, path, [other], P)
    assert m.shape == (61, 41)
    j = int(np.argmin(np.abs(m.velocities - 8.0)))
    np.testing.assert_allclose(m.cells[:, j], trajectory_risk(ego_traj, [other], P).risk, rtol=1e-12)


def test_trace_interpolates():
    cells = np.tile(np.arange(3, dtype=float), (4, 1))
    m = RiskMap(0.1, np.arange(4) * 0.1, np.array([0.0, 1.0, 2.0]), cells)
    np.testing.assert_allclose(m.trace([0.5, 1.0, 1.75, 9.0]), [0.5, 1.0, 1.75, 2.0])


def test_exports():
    cells = np.array([[0.0, 0.5], [1.0, 0.25]])
    m = RiskMap(0.1, np.array([0.0, 0.1]), np.array([0.0, 10.0]), cells)
    lines = m.to_csv().splitlines()
    assert lines[0] == "t\\v,0.0,10.0" and lines[2] == "0.1,1.0,0.25"
    pgm = m.to_pgm()
    head, _, body = pgm.partition(b"255\n")
    assert head == b"P5\n2 2\n" and len(body) == 4
    # top row is the fastest velocity column
    assert list(body) == [128, 64, 0, 255]


def test_velocity_grid():
    np.testing.assert_allclose(velocity_grid(41, 20.0)[:3], [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        velocity_grid(1, 20.0)


def test_target_pass_velocity():
    t = np.arange(61) * 0.1
    v = np.linspace(0, 20, 41)
    cells = np.zeros((61, 41))
    assert target_pass_velocity(RiskMap(0.1, t, v, cells), 30.0, 0.02) == 0.5
    # risky for every hypothesis below 10 m/s, everywhere in time
    cells[:, v < 10] = 0.05
    assert target_pass_velocity(RiskMap(0.1, t, v, cells), 30.0, 0.02) == 10.0
    cells[:, :] = 0.05
    assert target_pass_velocity(RiskMap(0.1, t, v, cells), 30.0, 0.02) is None
    with pytest.raises(ValueError):
        target_pass_velocity(RiskMap(0.1, t, v, cells), 0.0, 0.02)


def test_wc_linear():
    _, other = _pair()
    ego = EntityState("e", "ego", Point2(0, -40), math.pi / 2, 8.0, s=0.0)
    path = Polyline([[0, -40], [0, 60]])
    a = build_risk_map(ego, path, [other], P)
    b = build_risk_map(ego, path, [other], dataclasses.replace(P, w_c=3e-5))
    np.testing.assert_allclose(b.cells, 3 * a.cells, rtol=1e-12)

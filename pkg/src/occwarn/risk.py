"""
Survival-analysis collision risk.

Per prediction step the pairwise center distance drives an event rate that
decays exponentially beyond a minimal overlap distance; the survival function
integrates all rates (plus a constant escape rate) and weights each step's
expected collision damage. A risk map repeats this for a grid of
constant-velocity ego hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Polyline
from .occlusion import EntityState, PredictedTrajectory

# exp(-40) is below any meaningful risk contribution
RATE_CUTOFF = 40.0


@dataclass(frozen=True)
class RiskParams:
    tau0_inv: float = 0.01
    tau_d0_inv: float = 1.0
    beta0: float = 1.0
    beta_growth: float = 0.5
    d_min: float = 4.0
    w_c: float = 1e-5
    risk_threshold: float = 0.02

    def __post_init__(self):
        if self.tau0_inv < 0 or self.tau_d0_inv < 0:
            raise ValueError("rates must be >= 0")
        if self.d_min < 0:
            raise ValueError("d_min must be >= 0")
        if not self.beta0 > 0 or self.beta_growth < 0:
            raise ValueError("beta0 must be > 0 and beta_growth >= 0")

    def beta(self, s):
        return self.beta0 / (1.0 + self.beta_growth * np.asarray(s, dtype=float))


def event_rate_distance(d_hat, s, p: RiskParams):
    """Distance-based car-to-car event rate at prediction time ``s``."""
    x = p.beta(s) * np.maximum(np.asarray(d_hat, dtype=float) - p.d_min, 0.0)
    rate = np.where(x > RATE_CUTOFF, 0.0, p.tau_d0_inv * np.exp(-np.minimum(x, RATE_CUTOFF)))
    return rate if np.ndim(rate) else float(rate)


def total_event_rate(rates) -> float:
    return float(sum(rates))


def survival(rates, tau0_inv: float, dt: float) -> np.ndarray:
    """S_k = exp(-sum_{j<k} (tau0_inv + rate_j) dt), S_0 = 1."""
    r = np.asarray(rates, dtype=float)
    if np.any(r < 0):
        raise ValueError("rates must be >= 0")
    steps = (tau0_inv + r[:-1]) * dt
    return np.exp(-np.concatenate([[0.0], np.cumsum(steps)]))


def event_probability(rate, s_value, dt: float):
    return np.clip(np.asarray(rate) * np.asarray(s_value) * dt, 0.0, 1.0)


def collision_damage(v0, vi, m0: float, mi: float, w_c: float):
    """Weighted kinetic energy lost in a perfectly inelastic two-body collision."""
    if not (m0 > 0 and mi > 0):
        raise ValueError("masses must be positive")
    dv = np.asarray(v0, dtype=float) - np.asarray(vi, dtype=float)
    return w_c * 0.5 * (m0 * mi / (m0 + mi)) * np.sum(dv * dv, axis=-1)


@dataclass
class RiskProfile:
    dt: float
    rate: np.ndarray  # total event rate per step
    survival: np.ndarray
    probability: np.ndarray
    damage: np.ndarray  # (pairs, steps)
    risk: np.ndarray

    @property
    def peak(self) -> float:
        return float(self.risk.max()) if len(self.risk) else 0.0

    @property
    def integral(self) -> float:
        return float(self.risk.sum() * self.dt)


def _check_sampling(ego: PredictedTrajectory, others: Sequence[PredictedTrajectory]) -> None:
    for o in others:
        if abs(o.dt - ego.dt) > 1e-12 or len(o.s) != len(ego.s):
            raise ValueError(f"trajectory {o.owner!r} sampled differently from the ego")


def _density(ego_pos, ego_vel, ego_mass, oth_pos, oth_vel, oth_mass, t, p: RiskParams, dt: float):
    """
    Risk terms broadcast over leading ego axes.

    ego_pos (..., N, 2), oth_pos (M, N, 2) -> rates (..., M, N), S (..., N),
    damage (..., M, N), risk (..., N).
    """
    diff = ego_pos[..., None, :, :] - oth_pos
    d = np.hypot(diff[..., 0], diff[..., 1])
    rate = event_rate_distance(d, t, p)
    total = rate.sum(axis=-2)
    steps = (p.tau0_inv + total[..., :-1]) * dt
    zeros = np.zeros(total.shape[:-1] + (1,))
    S = np.exp(-np.concatenate([zeros, np.cumsum(steps, axis=-1)], axis=-1))
    dv = ego_vel[..., None, :, :] - oth_vel
    mu = ego_mass * oth_mass / (ego_mass + oth_mass)
    damage = p.w_c * 0.5 * mu[:, None] * (dv[..., 0] ** 2 + dv[..., 1] ** 2)
    risk = (damage * rate).sum(axis=-2) * S
    return rate, total, S, damage, risk


def trajectory_risk(ego: PredictedTrajectory, others: Sequence[PredictedTrajectory], p: RiskParams) -> RiskProfile:
    _check_sampling(ego, others)
    n = len(ego.s)
    dt = ego.dt
    if not others:
        S = survival(np.zeros(n), p.tau0_inv, dt)
        z = np.zeros(n)
        return RiskProfile(dt, z, S, z.copy(), np.zeros((0, n)), z.copy())
    t = np.arange(n) * dt
    oth_pos = np.stack([o.positions for o in others])
    oth_vel = np.stack([o.velocities for o in others])
    masses = np.array([o.mass for o in others], dtype=float)
    _, total, S, damage, risk = _density(ego.positions, ego.velocities, ego.mass, oth_pos, oth_vel, masses, t, p, dt)
    return RiskProfile(dt, total, S, event_probability(total, S, dt), damage, risk)


@dataclass
class RiskMap:
    dt: float
    times: np.ndarray  # (N+1,)
    velocities: np.ndarray  # (N_v,)
    cells: np.ndarray  # (N+1, N_v)
    overlays: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.cells.shape

    def column(self, v: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.velocities - v)))
        return self.cells[:, j]

    def trace(self, speeds) -> np.ndarray:
        """Risk along a velocity profile, linearly interpolated between velocity columns."""
        v = np.clip(np.asarray(speeds, dtype=float), self.velocities[0], self.velocities[-1])
        j = np.clip(np.searchsorted(self.velocities, v, side="right") - 1, 0, len(self.velocities) - 2)
        v0, v1 = self.velocities[j], self.velocities[j + 1]
        w = (v - v0) / (v1 - v0)
        k = np.arange(len(v))
        return (1 - w) * self.cells[k, j] + w * self.cells[k, j + 1]

    def to_csv(self) -> str:
        head = "t\\v," + ",".join(repr(float(v)) for v in self.velocities)
        rows = [head]
        for t, row in zip(self.times, self.cells):
            rows.append(repr(round(float(t), 12)) + "," + ",".join(repr(float(c)) for c in row))
        return "\n".join(rows) + "\n"

    def to_pgm(self, scale: Optional[float] = None) -> bytes:
        """Binary portable graymap: rows are velocities (fastest on top), columns prediction time."""
        m = float(self.cells.max()) if scale is None else scale
        img = np.zeros(self.cells.T.shape) if m <= 0 else np.clip(self.cells.T / m, 0.0, 1.0)
        pix = np.round(255 * img[::-1]).astype(np.uint8)
        h, w = pix.shape
        return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def velocity_grid(n_v: int, v_max: float) -> np.ndarray:
    if n_v < 2:
        raise ValueError("N_v must be >= 2")
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    return np.linspace(0.0, v_max, n_v)


def build_risk_map(
    ego: EntityState,
    path: Polyline,
    others: Sequence[PredictedTrajectory],
    p: RiskParams,
    n_v: int = 41,
    v_max: float = 20.0,
    horizon: float = 6.0,
    dt: float = 0.1,
) -> RiskMap:
    """Risk density over (prediction time, constant ego velocity hypothesis)."""
    vs = velocity_grid(n_v, v_max)
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    if not others:
        return RiskMap(dt, t, vs, np.zeros((n + 1, n_v)))
    for o in others:
        if abs(o.dt - dt) > 1e-12 or len(o.s) != n + 1:
            raise ValueError(f"trajectory {o.owner!r} does not match the map sampling")
    s0 = 0.0 if ego.s is None else float(ego.s)
    s = s0 + vs[:, None] * t[None, :]
    pos = path.point_at(s)
    tan = path.tangent_at(np.clip(s, 0.0, path.length - 1e-9))
    vel = tan * vs[:, None, None]
    oth_pos = np.stack([o.positions for o in others])
    oth_vel = np.stack([o.velocities for o in others])
    masses = np.array([o.mass for o in others], dtype=float)
    *_, risk = _density(pos, vel, ego.mass, oth_pos, oth_vel, masses, t, p, dt)
    return RiskMap(dt, t, vs, np.ascontiguousarray(risk.T))


def target_pass_velocity(rmap: RiskMap, d_cp: float, risk_threshold: float) -> Optional[float]:
    """
    Smallest grid velocity that reaches the crossing, within the horizon, with
    risk below ``risk_threshold`` at every step up to the crossing step.
    """
    if not d_cp > 0:
        raise ValueError("d_cp must be positive")
    positive = rmap.velocities[rmap.velocities > 0]
    if len(positive) == 0:
        return None
    if float(rmap.cells.max()) < risk_threshold:
        return float(positive[0])
    horizon = rmap.times[-1]
    for j, v in enumerate(rmap.velocities):
        if v <= 0:
            continue
        t_cross = d_cp / v
        if t_cross > horizon + 1e-12:
            continue
        k = int(math.ceil(t_cross / rmap.dt - 1e-9))
        if np.all(rmap.cells[: k + 1, j] < risk_threshold):
            return float(v)
    return None

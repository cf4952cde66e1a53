"""
Behavior alternatives, intervention levels and the warning decision.

Three alternatives are weighed at every frame: keep the current speed, brake
to a standstill at the stop line, or accelerate to a target velocity that
passes the crossing point ahead of the risk. Each one's velocity profile is
traced through the risk map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .risk import RiskMap

LEVELS = ("comfortable", "heavy", "emergency", "nonreachable")
PREFERENCE = {"const": 0, "stop": 1, "acc": 2}
SPEED_CAP = 50.0 / 3.6


class PastStopLineError(ValueError):
    pass


@dataclass(frozen=True)
class InterventionBands:
    comfortable_decel: float = -3.0
    emergency_decel: float = -6.0
    max_decel: float = -10.0
    comfortable_accel: float = 3.0
    max_accel: float = 6.0


@dataclass(frozen=True)
class AdvisorParams:
    bands: InterventionBands = field(default_factory=InterventionBands)
    speed_cap: float = SPEED_CAP
    risk_threshold: float = 0.02


@dataclass(frozen=True)
class BehaviorAlternative:
    kind: str
    accel: float
    risk: float
    level: str
    admissible: bool


@dataclass(frozen=True)
class AdvisorOutput:
    alternatives: tuple[BehaviorAlternative, ...]
    warning: bool
    emergency_candidate: bool
    recommended: str

    def get(self, kind: str) -> BehaviorAlternative:
        return next(a for a in self.alternatives if a.kind == kind)


def compute_stop_deceleration(v0: float, d_sl: float) -> float:
    """Constant deceleration that stops exactly at the stop line."""
    if not d_sl > 0:
        raise PastStopLineError(f"stop line is behind the vehicle (d_sl = {d_sl})")
    if v0 < 0:
        raise ValueError("v0 must be >= 0")
    return -(v0 * v0) / (2.0 * d_sl)


def compute_pass_acceleration(v_trg: float, v0: float, d_cp: float) -> float:
    """Constant acceleration reaching ``v_trg`` at the crossing point."""
    if not d_cp > 0:
        raise ValueError(f"crossing point must be ahead (d_cp = {d_cp})")
    return (v_trg * v_trg - v0 * v0) / (2.0 * d_cp)


def classify(accel: float, bands: InterventionBands = InterventionBands()) -> str:
    if math.isnan(accel):
        raise ValueError("acceleration is NaN")
    if accel <= 0:
        if accel > bands.comfortable_decel:
            return "comfortable"
        if accel > bands.emergency_decel:
            return "heavy"
        if accel >= bands.max_decel:
            return "emergency"
        return "nonreachable"
    if accel < bands.comfortable_accel:
        return "comfortable"
    if accel <= bands.max_accel:
        return "heavy"
    return "nonreachable"


def _profile(kind: str, v0: float, a: float, t: np.ndarray, v_trg: Optional[float]) -> np.ndarray:
    if kind == "const":
        return np.full_like(t, v0)
    if kind == "stop":
        return np.maximum(v0 + a * t, 0.0)
    v = v0 + a * t
    return np.minimum(v, v_trg) if a >= 0 else np.maximum(v, v_trg)


def evaluate_alternatives(
    v0: float,
    rmap: RiskMap,
    d_sl: Optional[float],
    d_cp: Optional[float],
    v_trg: Optional[float],
    params: AdvisorParams = AdvisorParams(),
) -> list[BehaviorAlternative]:
    """Acceleration, traced peak risk, level and admissibility of const, stop and acc."""
    thr = params.risk_threshold
    out = []

    def add(kind, a, extra_ok=True, v_target=None):
        level = classify(a, params.bands)
        if math.isfinite(a):
            risk = float(rmap.trace(_profile(kind, v0, a, rmap.times, v_target)).max())
        else:
            risk = math.inf
        ok = extra_ok and level != "nonreachable" and risk <= thr
        out.append(BehaviorAlternative(kind, float(a), risk, level, bool(ok)))

    add("const", 0.0)
    if d_sl is not None and d_sl > 0:
        add("stop", compute_stop_deceleration(v0, d_sl))
    else:
        add("stop", -math.inf)
    if v_trg is None or d_cp is None or d_cp <= 0:
        add("acc", math.inf)
    else:
        add("acc", compute_pass_acceleration(v_trg, v0, d_cp), v_trg <= params.speed_cap, v_trg)
    return out


def decide(alternatives: Sequence[BehaviorAlternative], bands: InterventionBands = InterventionBands()) -> AdvisorOutput:
    alts = {a.kind: a for a in alternatives}
    const, stop, acc = alts["const"], alts["stop"], alts["acc"]
    admissible = [a for a in alternatives if a.admissible]
    if not admissible:
        return AdvisorOutput(tuple(alternatives), True, False, "stop")
    warning = (
        not const.admissible
        and stop.accel <= bands.comfortable_decel
        and (acc.accel >= bands.comfortable_accel or not acc.admissible)
    )
    best = min(admissible, key=lambda a: (LEVELS.index(a.level), PREFERENCE[a.kind]))
    emergency = best.kind == "stop" and bands.max_decel <= stop.accel <= bands.emergency_decel
    return AdvisorOutput(tuple(alternatives), bool(warning), bool(emergency), best.kind)

"""Simplex decision module with dwell-time hysteresis.

Every control period the complex controller's proposal is verified with the
anytime reach loop.  An unsafe verdict hands control to the safety
controller at once; control returns only after ``dwell_periods`` consecutive
safe verdicts on the complex controller's proposals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .geom import HyperRect
from .model import ControlAction, UncertainParams, VehicleState
from .reach import (AnytimeResult, DEFAULT_T_REACH, DEFAULT_T_RUNTIME, ReachQuery, TerminationReason,
                    anytime_reach)

DWELL_PERIODS = 30
CONTROL_HZ = 20.0
# localization uncertainty as initial-set half-widths on (x, y, v, theta)
LOCALIZATION_RADII = (0.05, 0.05, 0.0, 0.05)


class Active(str, enum.Enum):
    COMPLEX = "complex"
    SAFETY = "safety"


@dataclass(frozen=True)
class SimplexConfig:
    params: UncertainParams
    dwell_periods: int = DWELL_PERIODS
    control_hz: float = CONTROL_HZ
    t_reach: float = DEFAULT_T_REACH
    t_runtime: float = DEFAULT_T_RUNTIME
    localization_radii: tuple = LOCALIZATION_RADII

    def __post_init__(self):
        if self.dwell_periods < 1:
            raise ValueError("dwell_periods must be at least 1")
        if not self.control_hz > 0:
            raise ValueError("control_hz must be positive")
        if len(self.localization_radii) != 4 or min(self.localization_radii) < 0:
            raise ValueError("localization_radii needs 4 non-negative entries")


@dataclass(frozen=True)
class SimplexState:
    config: SimplexConfig
    active: Active = Active.COMPLEX
    consecutive_safe_periods: int = 0
    switches: int = 0


@dataclass(frozen=True)
class StepRecord:
    proposed: ControlAction
    emitted: ControlAction
    emitted_by: Active
    verdict: AnytimeResult


def initial_set(s: VehicleState, radii=LOCALIZATION_RADII) -> HyperRect:
    c = s.as_tuple()
    return HyperRect.from_bounds([c[i] - radii[i] for i in range(4)],
                                 [c[i] + radii[i] for i in range(4)])


def simplex_step(ss: SimplexState, s: VehicleState, scan, lam, complex_ctrl, safe_ctrl,
                 t: float = 0.0, clock=None) -> tuple[ControlAction, AnytimeResult, SimplexState, StepRecord]:
    cfg = ss.config
    proposed = complex_ctrl.act(s, scan, t)
    q = ReachQuery(initial_set(s, cfg.localization_radii), proposed, cfg.params, cfg.t_reach, cfg.t_runtime)
    try:
        verdict = anytime_reach(q, lam, clock=clock)
    except Exception:  # pragma: no cover - anytime_reach already downgrades instability
        verdict = AnytimeResult(False, None, 1, 0.0, False, TerminationReason.UNSAFE_CONFIRMED, unstable=True)
    if verdict.safe:
        counter = ss.consecutive_safe_periods + 1
    else:
        counter = 0
    active = ss.active
    switches = ss.switches
    if active is Active.COMPLEX and not verdict.safe:
        active = Active.SAFETY
        switches += 1
    elif active is Active.SAFETY and counter >= cfg.dwell_periods:
        active = Active.COMPLEX
        switches += 1
    if active is Active.COMPLEX:
        emitted = proposed
    else:
        emitted = safe_ctrl.act(s, scan, t)
    ns = replace(ss, active=active, consecutive_safe_periods=counter, switches=switches)
    return emitted, verdict, ns, StepRecord(proposed, emitted, active, verdict)


def dwell_violations(verdicts, actives, dwell: int = DWELL_PERIODS) -> list[int]:
    """Periods where control went back to the complex controller too early.

    ``verdicts`` are per-period safe flags and ``actives`` the controller that
    emitted each period's action.  The count of consecutive safe verdicts
    includes the switching period itself.
    """
    bad = []
    run = 0
    prev = None
    for i, (ok, act) in enumerate(zip(verdicts, actives)):
        run = run + 1 if ok else 0
        if prev == Active.SAFETY.value and act == Active.COMPLEX.value and run < dwell:
            bad.append(i)
        if act == Active.COMPLEX.value and not ok:
            bad.append(i)
        prev = act
    return bad

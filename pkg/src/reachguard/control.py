"""Controllers: pure pursuit, disparity extender, the conservative safety
controller, and a replay controller for recorded action logs.

Steering laws are plain functions returning a `SteerCommand`.  Throttle is
decoupled from steering: controller objects pair a steering law with a
`SpeedGovernor` that tracks a fixed speed setpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .model import BicycleParams, ControlAction, VehicleState, clamp_steer

# defaults for the desk-scale track
LOOKAHEAD = 1.0
WHEELBASE = 0.45
DISPARITY_THRESHOLD = 0.3
CLEARANCE = 1.5
CAR_HALF_WIDTH = 0.25  # half the car width plus a margin
FORWARD_SECTOR = math.pi / 2  # full width of the stop-check sector
SAFETY_MAX_SPEED = 0.3
SAFETY_STOP_DISTANCE = 0.5
GOVERNOR_GAIN = 1.5

LIDAR_BEAMS = 1081
LIDAR_FOV = math.radians(270.0)
LIDAR_MAX_RANGE = 10.0
_MIN_RANGE = 1e-6


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    angle_min: float = -LIDAR_FOV / 2
    angle_max: float = LIDAR_FOV / 2
    max_range: float = LIDAR_MAX_RANGE

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("a scan needs at least 2 beams")
        if not self.angle_max > self.angle_min:
            raise ValueError("angle_max must exceed angle_min")
        r = np.where(np.isfinite(r), r, self.max_range)
        object.__setattr__(self, "ranges", np.clip(r, _MIN_RANGE, self.max_range))

    @property
    def beam_count(self) -> int:
        return self.ranges.size

    @property
    def increment(self) -> float:
        return (self.angle_max - self.angle_min) / (self.beam_count - 1)

    @property
    def angles(self) -> np.ndarray:
        return np.linspace(self.angle_min, self.angle_max, self.beam_count)

    @classmethod
    def uniform(cls, r: float, n: int = LIDAR_BEAMS, **kw) -> LidarScan:
        return cls(np.full(n, float(r)), **kw)


class Path:
    """Ordered waypoints with cumulative arc length."""

    def __init__(self, waypoints, closed: bool = True):
        w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        if len(w) < 2:
            raise ValueError("a path needs at least 2 waypoints")
        seg = np.diff(np.vstack([w, w[:1]]) if closed else w, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lens <= 0):
            raise ValueError("consecutive waypoints must be distinct")
        self.waypoints = w
        self.closed = bool(closed)
        self._seg = seg
        self._len = lens
        self._cum = np.concatenate([[0.0], np.cumsum(lens)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def __len__(self):
        return len(self.waypoints)

    def nearest_index(self, x: float, y: float) -> int:
        d = (self.waypoints[:, 0] - x) ** 2 + (self.waypoints[:, 1] - y) ** 2
        return int(np.argmin(d))

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length ``s`` from the first waypoint."""
        if self.closed:
            s = s % self.length
        else:
            s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._len) - 1)
        f = (s - self._cum[i]) / self._len[i]
        p = self.waypoints[i] + f * self._seg[i]
        return float(p[0]), float(p[1])

    def arc_at(self, i: int) -> float:
        return float(self._cum[i])


@dataclass(frozen=True)
class SteerCommand:
    """A steering decision; ``stop`` asks the governor for zero speed."""

    delta: float
    stop: bool = False


def pure_pursuit(s: VehicleState, path: Path, lookahead: float = LOOKAHEAD,
                 wheelbase: float = WHEELBASE) -> SteerCommand:
    if not lookahead > 0:
        raise ValueError("lookahead must be positive")
    i = path.nearest_index(s.x, s.y)
    gx, gy = path.point_at(path.arc_at(i) + lookahead)
    dx, dy = gx - s.x, gy - s.y
    c, sn = math.cos(s.theta), math.sin(s.theta)
    y_g = -sn * dx + c * dy
    return SteerCommand(clamp_steer(math.atan(wheelbase * 2.0 * y_g / lookahead ** 2)))


def extend_disparities(scan: LidarScan, car_half_width: float = CAR_HALF_WIDTH,
                       disparity_threshold: float = DISPARITY_THRESHOLD) -> np.ndarray:
    """Copy of the ranges with every disparity pushed out by the car half-width.

    At each jump larger than the threshold the beams on the far side are
    clipped to the near range for as many beams as the half-width subtends
    (by arc length) at the near distance.
    """
    r = scan.ranges
    out = r.copy()
    inc = scan.increment
    n = r.size
    jumps = np.nonzero(np.abs(np.diff(r)) > disparity_threshold)[0]
    for i in jumps.tolist():
        a, b = r[i], r[i + 1]
        near = min(a, b)
        m = int(math.ceil((car_half_width / near) / inc))
        if a < b:
            j0, j1 = i + 1, min(n, i + 1 + m)
        else:
            j0, j1 = max(0, i + 1 - m), i + 1
        np.minimum(out[j0:j1], near, out=out[j0:j1])
    return out


def disparity_extender(scan: LidarScan, car_half_width: float = CAR_HALF_WIDTH,
                       disparity_threshold: float = DISPARITY_THRESHOLD,
                       clearance: float = CLEARANCE) -> SteerCommand:
    """Steer toward the centre of the widest clear gap ahead.

    Only beams within +-90 degrees of the heading are candidates.  If none
    clears ``clearance`` the command is a full stop.
    """
    ext = extend_disparities(scan, car_half_width, disparity_threshold)
    ang = scan.angles
    front = np.abs(ang) <= math.pi / 2 + 1e-12
    ok = (ext > clearance) & front
    if not ok.any():
        return SteerCommand(0.0, stop=True)
    # contiguous runs of clear beams; first widest wins ties
    padded = np.concatenate([[False], ok, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]
    k = int(np.argmax(ends - starts))
    centre = (starts[k] + ends[k] - 1) / 2.0
    target = scan.angle_min + centre * scan.increment
    return SteerCommand(clamp_steer(target))


def forward_min(scan: LidarScan, sector: float = FORWARD_SECTOR) -> float:
    m = np.abs(scan.angles) <= sector / 2 + 1e-12
    return float(scan.ranges[m].min()) if m.any() else scan.max_range


@dataclass(frozen=True)
class SpeedGovernor:
    """Proportional speed tracking through the throttle input.

    ``u = u_eq(v_set) + K (v_set - v) / c_m`` makes the nominal speed error
    decay at rate ``c_a (1 + K)``.
    """

    params: BicycleParams
    gain: float = GOVERNOR_GAIN

    def throttle(self, v: float, v_set: float) -> float:
        p = self.params
        return p.equilibrium_input(v_set) + self.gain * (v_set - v) / p.c_m


def safety_controller(scan: LidarScan, min_stop_distance: float = SAFETY_STOP_DISTANCE,
                      sector: float = FORWARD_SECTOR, **kw) -> SteerCommand:
    """Disparity-extender steering that stops when anything ahead is too close."""
    cmd = disparity_extender(scan, **kw)
    if forward_min(scan, sector) < min_stop_distance:
        return SteerCommand(cmd.delta, stop=True)
    return cmd


class Controller(Protocol):
    name: str

    def act(self, state: VehicleState, scan: Optional[LidarScan], t: float) -> ControlAction: ...


@dataclass
class PurePursuitController:
    path: Path
    governor: SpeedGovernor
    speed: float
    lookahead: float = LOOKAHEAD
    wheelbase: float = WHEELBASE
    name: str = "pure_pursuit"

    def act(self, state, scan, t) -> ControlAction:
        cmd = pure_pursuit(state, self.path, self.lookahead, self.wheelbase)
        return ControlAction(self.governor.throttle(state.v, self.speed), cmd.delta)


@dataclass
class DisparityExtenderController:
    governor: SpeedGovernor
    speed: float
    car_half_width: float = CAR_HALF_WIDTH
    disparity_threshold: float = DISPARITY_THRESHOLD
    clearance: float = CLEARANCE
    stop_distance: float = 0.0  # >0 makes the driver brake for close objects ahead
    name: str = "disparity_extender"

    def act(self, state, scan, t) -> ControlAction:
        cmd = disparity_extender(scan, self.car_half_width, self.disparity_threshold, self.clearance)
        stop = cmd.stop or (self.stop_distance > 0 and forward_min(scan) < self.stop_distance)
        v_set = 0.0 if stop else self.speed
        return ControlAction(self.governor.throttle(state.v, v_set), cmd.delta)


@dataclass
class SafetyController:
    """Slow gap follower: commanded speed never exceeds ``max_speed``."""

    governor: SpeedGovernor
    max_speed: float = SAFETY_MAX_SPEED
    stop_distance: float = SAFETY_STOP_DISTANCE
    sector: float = FORWARD_SECTOR
    car_half_width: float = CAR_HALF_WIDTH
    disparity_threshold: float = DISPARITY_THRESHOLD
    clearance: float = CLEARANCE
    name: str = "safety"

    def act(self, state, scan, t) -> ControlAction:
        cmd = safety_controller(scan, self.stop_distance, self.sector, car_half_width=self.car_half_width,
                                disparity_threshold=self.disparity_threshold, clearance=self.clearance)
        v_set = 0.0 if cmd.stop else self.max_speed
        u = self.governor.throttle(state.v, v_set)
        # cap the commanded (equilibrium) speed
        u = min(u, self.governor.params.equilibrium_input(v_set))
        return ControlAction(u, cmd.delta)


class ReplayController:
    """Emits recorded actions in order and holds the last one afterwards."""

    name = "replay"

    def __init__(self, records: Sequence):
        recs = [r if isinstance(r, ControlAction) else ControlAction(float(r["u_v"]), float(r["delta"]))
                for r in records]
        if not recs:
            raise ValueError("replay log is empty")
        self.records = recs
        self.cursor = 0

    @classmethod
    def from_jsonl(cls, path) -> ReplayController:
        with open(path) as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        return cls(recs)

    def act(self, state=None, scan=None, t=0.0) -> ControlAction:
        a = self.records[min(self.cursor, len(self.records) - 1)]
        self.cursor += 1
        return a


def write_replay_log(path, actions: Sequence[tuple[float, ControlAction]]):
    with open(path, "w") as fh:
        for t, a in actions:
            fh.write(json.dumps({"t": t, "u_v": a.u_v, "delta": a.delta}) + "\n")

"""World state, vehicle physics and collision bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..control import DisparityExtenderController, LidarScan
from ..model import BicycleParams, ControlAction, OpponentState, VehicleState, bicycle_rhs
from .collision import EGO_LENGTH, EGO_WIDTH, footprint, rect_hits_boxes, rect_hits_segments
from .lidar import box_segments, cast_rays
from .track import Track

OPPONENT_HALF_EXTENT = 0.25
PHYSICS_HZ = 100.0


def rk4_step(state: np.ndarray, a: ControlAction, p: BicycleParams, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with the action held constant."""
    args = (a.u_v, a.delta, p.c_a, p.c_m, p.c_h, p.wheelbase)
    k1 = bicycle_rhs(state, *args)
    k2 = bicycle_rhs(state + 0.5 * dt * k1, *args)
    k3 = bicycle_rhs(state + 0.5 * dt * k2, *args)
    k4 = bicycle_rhs(state + dt * k3, *args)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance(state: np.ndarray, a: ControlAction, p: BicycleParams, dt: float) -> np.ndarray:
    out = rk4_step(state, a, p, dt)
    if out[2] < 0.0:
        out[2] = 0.0
    return out


@dataclass
class Agent:
    """An opponent: a full vehicle with its own driver and a square body."""

    state: np.ndarray
    driver: DisparityExtenderController
    half_extent: float = OPPONENT_HALF_EXTENT
    action: ControlAction = field(default_factory=lambda: ControlAction(0.0, 0.0))
    crashed: bool = False

    @property
    def box(self) -> tuple[float, float, float, float]:
        x, y = self.state[0], self.state[1]
        he = self.half_extent
        return (x - he, x + he, y - he, y + he)

    def observed(self) -> OpponentState:
        x, y, v, th = self.state
        if self.crashed:
            v = 0.0
        return OpponentState(float(x), float(y), float(v * math.cos(th)), float(v * math.sin(th)),
                             self.half_extent)


@dataclass
class WorldState:
    t: float
    ego: np.ndarray
    opponents: list
    obstacles: list
    track: Optional[Track]
    params: BicycleParams
    rng_seed: int = 0
    extra_segments: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    @property
    def ego_state(self) -> VehicleState:
        return VehicleState.from_seq(self.ego)

    @property
    def wall_segments(self) -> np.ndarray:
        base = self.track.segments if self.track is not None else np.empty((0, 4))
        if len(self.extra_segments):
            return np.vstack([base, self.extra_segments])
        return base

    @property
    def obstacle_boxes(self) -> np.ndarray:
        return np.array([o.box for o in self.obstacles], dtype=float).reshape(-1, 4)


def step_physics(w: WorldState, ego_action: ControlAction, dt: float = 1.0 / PHYSICS_HZ) -> WorldState:
    """Advance every vehicle by one fixed step; crashed opponents stay put."""
    ego = advance(w.ego, ego_action, w.params, dt)
    opps = []
    for ag in w.opponents:
        if ag.crashed:
            opps.append(ag)
        else:
            opps.append(replace(ag, state=advance(ag.state, ag.action, w.params, dt)))
    return replace(w, t=w.t + dt, ego=ego, opponents=opps)


def _near(segments: np.ndarray, x: float, y: float, r: float) -> np.ndarray:
    """Segments whose bounding box comes within ``r`` of ``(x, y)``."""
    if len(segments) == 0:
        return segments
    m = ((np.minimum(segments[:, 0], segments[:, 2]) <= x + r)
         & (np.maximum(segments[:, 0], segments[:, 2]) >= x - r)
         & (np.minimum(segments[:, 1], segments[:, 3]) <= y + r)
         & (np.maximum(segments[:, 1], segments[:, 3]) >= y - r))
    return segments[m]


def _ordered_hit(mask: np.ndarray, idx_all: Optional[np.ndarray] = None) -> Optional[int]:
    hits = np.flatnonzero(mask)
    if hits.size == 0:
        return None
    return int(hits[0] if idx_all is None else idx_all[hits[0]])


def detect_collision(w: WorldState) -> tuple[bool, Optional[tuple[str, int]]]:
    """Does the ego footprint touch a wall, obstacle or opponent body?"""
    x, y, _, th = w.ego
    segs = w.wall_segments
    reach = math.hypot(EGO_LENGTH, EGO_WIDTH) / 2 + 1e-9
    if len(segs):
        m = ((np.minimum(segs[:, 0], segs[:, 2]) <= x + reach)
             & (np.maximum(segs[:, 0], segs[:, 2]) >= x - reach)
             & (np.minimum(segs[:, 1], segs[:, 3]) <= y + reach)
             & (np.maximum(segs[:, 1], segs[:, 3]) >= y - reach))
        idx = np.flatnonzero(m)
        if idx.size:
            i = _ordered_hit(rect_hits_segments(x, y, th, segs[idx]), idx)
            if i is not None:
                return True, ("wall", i)
    if w.obstacles:
        i = _ordered_hit(rect_hits_boxes(x, y, th, w.obstacle_boxes))
        if i is not None:
            return True, ("obstacle", i)
    if w.opponents:
        boxes = np.array([ag.box for ag in w.opponents]).reshape(-1, 4)
        i = _ordered_hit(rect_hits_boxes(x, y, th, boxes))
        if i is not None:
            return True, ("opponent", i)
    return False, None


def opponent_collides(w: WorldState, j: int) -> bool:
    ag = w.opponents[j]
    b = ag.box
    cx, cy = (b[0] + b[1]) / 2, (b[2] + b[3]) / 2
    side = 2 * ag.half_extent
    segs = _near(w.wall_segments, cx, cy, ag.half_extent * 1.5)
    if len(segs) and rect_hits_segments(cx, cy, 0.0, segs, side, side).any():
        return True
    if w.obstacles and rect_hits_boxes(cx, cy, 0.0, w.obstacle_boxes, side, side).any():
        return True
    others = [o.box for k, o in enumerate(w.opponents) if k != j]
    if others and rect_hits_boxes(cx, cy, 0.0, np.array(others), side, side).any():
        return True
    x, y, _, th = w.ego
    return bool(rect_hits_boxes(x, y, th, np.array([b])).any())


def mark_opponent_crashes(w: WorldState) -> WorldState:
    changed = False
    opps = list(w.opponents)
    for j, ag in enumerate(opps):
        if not ag.crashed and opponent_collides(w, j):
            st = ag.state.copy()
            st[2] = 0.0
            opps[j] = replace(ag, state=st, crashed=True)
            changed = True
    return replace(w, opponents=opps) if changed else w


def scene_segments(w: WorldState, exclude_opponent: Optional[int] = None, include_ego: bool = False) -> np.ndarray:
    parts = [w.wall_segments]
    if w.obstacles:
        parts.append(box_segments(w.obstacle_boxes))
    boxes = [ag.box for k, ag in enumerate(w.opponents) if k != exclude_opponent]
    if boxes:
        parts.append(box_segments(np.array(boxes)))
    if include_ego:
        fp = footprint(w.ego[0], w.ego[1], w.ego[3])
        parts.append(np.column_stack([fp, np.roll(fp, -1, axis=0)]))
    return np.vstack(parts) if parts else np.empty((0, 4))


def cast_lidar(w: WorldState, pose, **kw) -> LidarScan:
    """Scan from an ego pose against walls, obstacles and opponent bodies."""
    return cast_rays(scene_segments(w), pose, **kw)


def opponent_scan(w: WorldState, j: int) -> LidarScan:
    ag = w.opponents[j]
    return cast_rays(scene_segments(w, exclude_opponent=j, include_ego=True),
                     (ag.state[0], ag.state[1], ag.state[3]))


def drive_opponents(w: WorldState) -> WorldState:
    """Let every running opponent choose its action for the coming period."""
    opps = []
    for j, ag in enumerate(w.opponents):
        if ag.crashed:
            opps.append(ag)
            continue
        scan = opponent_scan(w, j)
        act = ag.driver.act(VehicleState.from_seq(ag.state), scan, w.t)
        opps.append(replace(ag, action=act))
    return replace(w, opponents=opps)

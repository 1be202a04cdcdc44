"""Fixed-rate episode loop: sense, decide, actuate, record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import ExperimentConfig
from ..control import (DisparityExtenderController, PurePursuitController, ReplayController, SafetyController,
                       SpeedGovernor)
from ..geom import Interval
from ..model import UncertainParams, VehicleState, preset
from ..reach import ReachQuery, anytime_reach, make_clock
from ..safety import build_unsafe_set, opponent_pipe
from ..simplex import Active, SimplexConfig, SimplexState, initial_set, simplex_step
from .track import Track, load_track
from .world import (Agent, WorldState, cast_lidar, detect_collision, drive_opponents, mark_opponent_crashes,
                    step_physics)

START_JITTER = (0.05, 0.02)  # lateral offset (m), heading (rad)
OPPONENT_START_JITTER = 0.2  # arc length (m)
NOISE_FRACTION = 0.5  # localization noise as a fraction of the inflation radii

RECORD_KEYS = ("t", "state", "proposed_action", "emitted_action", "verdict", "iterations", "elapsed_ms",
               "deadline_missed", "active_controller", "flowpipe_area", "collision")


@dataclass
class EpisodeLog:
    seed: int
    records: list = field(default_factory=list)
    collided: bool = False
    collision_with: Optional[tuple] = None
    config: Optional[dict] = None

    def __len__(self):
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path, seed: int = 0) -> EpisodeLog:
        with open(path) as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        return cls(seed=seed, records=recs, collided=any(r["collision"] for r in recs))

    def emitted_actions(self):
        return [(r["t"], r["emitted_action"]) for r in self.records]


def uncertain_params(cfg: ExperimentConfig) -> UncertainParams:
    d1, d2 = cfg.disturbance
    return UncertainParams.from_percent(preset(cfg.preset), cfg.param_uncertainty_pct, d1=d1, d2=d2)


def make_world(cfg: ExperimentConfig, seed: int, track: Optional[Track] = None) -> WorldState:
    track = track if track is not None else load_track(cfg.track)
    params = preset(cfg.preset)
    rng = np.random.default_rng(seed)
    lat = rng.uniform(-START_JITTER[0], START_JITTER[0])
    dth = rng.uniform(-START_JITTER[1], START_JITTER[1])
    x, y, th = track.pose_at(0.0, lat)
    ego = np.array([x, y, 0.0, th + dth])
    gov = SpeedGovernor(params)
    opps = []
    L = track.lap_length
    for j in range(cfg.opponents):
        s = (j + 1) * L / (cfg.opponents + 1) + rng.uniform(-OPPONENT_START_JITTER, OPPONENT_START_JITTER)
        ox, oy, oth = track.pose_at(s)
        drv = DisparityExtenderController(gov, cfg.opponent_speed, stop_distance=0.5)
        opps.append(Agent(np.array([ox, oy, 0.0, oth]), drv))
    return WorldState(0.0, ego, opps, track.obstacles(cfg.obstacles), track, params, rng_seed=seed)


def make_complex_controller(cfg: ExperimentConfig, track: Track, params):
    gov = SpeedGovernor(params)
    if cfg.controller == "pure_pursuit":
        return PurePursuitController(track.centerline, gov, cfg.speed_setpoint)
    if cfg.controller == "disparity_extender":
        return DisparityExtenderController(gov, cfg.speed_setpoint)
    if cfg.replay_log is None:
        raise ValueError("replay controller needs replay_log")
    return ReplayController.from_jsonl(cfg.replay_log)


def _opponent_pipes(w: WorldState, cfg: ExperimentConfig):
    pos_r, vel_r = cfg.opponent_uncertainty
    pipes = []
    for ag in w.opponents:
        ob = ag.observed()
        vel = (Interval(ob.v_x - vel_r, ob.v_x + vel_r), Interval(ob.v_y - vel_r, ob.v_y + vel_r))
        pipes.append(opponent_pipe(ob, vel, cfg.t_reach, pos_radius=pos_r))
    return pipes


def _r(x: float) -> float:
    return float(x)


def _area(a: float):
    return None if a != a else float(a)


def run_episode(cfg: ExperimentConfig, seed: Optional[int] = None, track: Optional[Track] = None,
                complex_ctrl=None) -> EpisodeLog:
    seed = cfg.seed if seed is None else seed
    track = track if track is not None else load_track(cfg.track)
    w = make_world(cfg, seed, track)
    params = w.params
    up = uncertain_params(cfg)
    complex_ctrl = complex_ctrl if complex_ctrl is not None else make_complex_controller(cfg, track, params)
    safe_ctrl = SafetyController(SpeedGovernor(params))
    base = build_unsafe_set(track, w.obstacles, (), cfg.t_reach,
                            time_aligned=cfg.dynamic_check_mode == "time_aligned")
    scfg = SimplexConfig(up, cfg.dwell_periods, cfg.control_hz, cfg.t_reach, cfg.t_runtime,
                         cfg.localization_inflation)
    ss = SimplexState(scfg)
    clock = make_clock(cfg.clock)
    noise_rng = np.random.default_rng([seed, 1])
    radii = cfg.localization_inflation
    dt = 1.0 / cfg.physics_hz
    log = EpisodeLog(seed=seed, config=cfg.to_dict())
    for k in range(cfg.periods):
        t = k / cfg.control_hz
        truth = w.ego.copy()
        est = truth.copy()
        if cfg.localization_noise:
            for i in (0, 1, 3):
                r = NOISE_FRACTION * radii[i]
                est[i] += noise_rng.uniform(-r, r)
        s_est = VehicleState.from_seq(est)
        scan = cast_lidar(w, (est[0], est[1], est[3]))
        lam = base.with_pipes(_opponent_pipes(w, cfg)) if w.opponents else base
        if cfg.simplex:
            emitted, verdict, ss, rec = simplex_step(ss, s_est, scan, lam, complex_ctrl, safe_ctrl, t, clock)
            proposed = rec.proposed
            active = rec.emitted_by.value
        else:
            proposed = complex_ctrl.act(s_est, scan, t)
            q = ReachQuery(initial_set(s_est, radii), proposed, up, cfg.t_reach, cfg.t_runtime)
            verdict = anytime_reach(q, lam, clock=clock)
            emitted = proposed
            active = Active.COMPLEX.value
        w = drive_opponents(w)
        collided = False
        for _ in range(cfg.substeps):
            w = step_physics(w, emitted, dt)
            hit, what = detect_collision(w)
            if hit:
                collided = True
                if not log.collided:
                    log.collided = True
                    log.collision_with = what
                if cfg.stop_on_collision:
                    break
            if w.opponents:
                w = mark_opponent_crashes(w)
        log.records.append({
            "t": t,
            "state": [_r(v) for v in truth],
            "proposed_action": [proposed.u_v, proposed.delta],
            "emitted_action": [emitted.u_v, emitted.delta],
            "verdict": "safe" if verdict.safe else "unsafe",
            "iterations": verdict.iterations,
            "elapsed_ms": verdict.elapsed * 1e3,
            "deadline_missed": verdict.deadline_missed,
            "active_controller": active,
            "flowpipe_area": _area(verdict.reference_area),
            "collision": collided,
        })
        if collided and cfg.stop_on_collision:
            break
    return log

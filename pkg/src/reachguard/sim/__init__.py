"""Deterministic racetrack simulator."""

from .track import Obstacle, Track, load_track, make_oval, make_sim_track
from .world import WorldState, cast_lidar, detect_collision, rk4_step, step_physics
from .episode import EpisodeLog, make_world, run_episode

__all__ = ["Obstacle", "Track", "load_track", "make_oval", "make_sim_track", "WorldState", "cast_lidar",
           "detect_collision", "rk4_step", "step_physics", "EpisodeLog", "make_world", "run_episode"]

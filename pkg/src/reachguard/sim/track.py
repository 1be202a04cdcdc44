"""Racetracks: closed wall polylines, a centerline path and start poses.

Built-in tracks are rounded rectangles driven counter-clockwise.  The walls
are exact offsets of the centerline, resampled so neighbouring points are at
most ``MAX_SPACING`` apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from ..control import Path

MAX_SPACING = 0.1
DEFAULT_OBSTACLE_HALF_EXTENT = 0.15


@dataclass(frozen=True)
class Obstacle:
    """A static, axis-aligned square obstacle."""

    x: float
    y: float
    half_extent: float = DEFAULT_OBSTACLE_HALF_EXTENT

    def __post_init__(self):
        if not self.half_extent > 0:
            raise ValueError("obstacle half_extent must be positive")

    @property
    def box(self) -> tuple[float, float, float, float]:
        he = self.half_extent
        return (self.x - he, self.x + he, self.y - he, self.y + he)


def _rounded_rect_primitives(a: float, b: float, r: float):
    """Counter-clockwise loop starting mid-way along the bottom side."""
    hx, hy = a / 2.0, b / 2.0
    if r <= 0 or r > min(hx, hy) + 1e-12:
        raise ValueError("corner radius must be positive and fit the rectangle")
    prims = [
        ("line", (0.0, -hy), (hx - r, -hy)),
        ("arc", (hx - r, -hy + r), r, -math.pi / 2, 0.0),
        ("line", (hx, -hy + r), (hx, hy - r)),
        ("arc", (hx - r, hy - r), r, 0.0, math.pi / 2),
        ("line", (hx - r, hy), (-hx + r, hy)),
        ("arc", (-hx + r, hy - r), r, math.pi / 2, math.pi),
        ("line", (-hx, hy - r), (-hx, -hy + r)),
        ("arc", (-hx + r, -hy + r), r, math.pi, 1.5 * math.pi),
        ("line", (-hx + r, -hy), (0.0, -hy)),
    ]
    out = []
    for p in prims:
        if p[0] == "line":
            L = math.dist(p[1], p[2])
        else:
            L = p[2] * (p[4] - p[3])
        if L > 1e-12:
            out.append((p, L))
    return out


def rounded_rect(a: float, b: float, r: float, spacing: float = MAX_SPACING) -> np.ndarray:
    """Points along a rounded rectangle at equal arc spacing <= ``spacing``."""
    prims = _rounded_rect_primitives(a, b, r)
    total = sum(L for _, L in prims)
    n = int(math.ceil(total / spacing - 1e-9))
    s_all = np.arange(n) * (total / n)
    pts = np.empty((n, 2))
    start = 0.0
    for p, L in prims:
        m = (s_all >= start - 1e-12) & (s_all < start + L - 1e-12)
        f = (s_all[m] - start) / L
        if p[0] == "line":
            (x0, y0), (x1, y1) = p[1], p[2]
            pts[m, 0] = x0 + f * (x1 - x0)
            pts[m, 1] = y0 + f * (y1 - y0)
        else:
            (cx, cy), rr, t0, t1 = p[1], p[2], p[3], p[4]
            ang = t0 + f * (t1 - t0)
            pts[m, 0] = cx + rr * np.cos(ang)
            pts[m, 1] = cy + rr * np.sin(ang)
        start += L
    return pts


def loop_segments(points: np.ndarray) -> np.ndarray:
    """Closed polyline as ``(n, 4)`` rows ``[x1, y1, x2, y2]``."""
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    return np.column_stack([p, q])


def max_spacing(points: np.ndarray) -> float:
    seg = loop_segments(points)
    return float(np.hypot(seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1]).max())


@dataclass
class Track:
    name: str
    inner_wall: np.ndarray
    outer_wall: np.ndarray
    centerline: Path
    start_poses: list
    obstacle_layouts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inner_wall = np.asarray(self.inner_wall, dtype=float).reshape(-1, 2)
        self.outer_wall = np.asarray(self.outer_wall, dtype=float).reshape(-1, 2)
        if len(self.inner_wall) < 3 or len(self.outer_wall) < 3:
            raise ValueError("each wall needs at least 3 points")
        if not self.start_poses:
            raise ValueError("a track needs at least one start pose")
        self.segments = np.vstack([loop_segments(self.inner_wall), loop_segments(self.outer_wall)])

    @property
    def lap_length(self) -> float:
        return self.centerline.length

    def pose_at(self, s: float, lateral: float = 0.0) -> tuple[float, float, float]:
        """Pose at arc length ``s`` on the centerline, ``lateral`` m to the left."""
        ds = 1e-3
        x0, y0 = self.centerline.point_at(s - ds)
        x1, y1 = self.centerline.point_at(s + ds)
        th = math.atan2(y1 - y0, x1 - x0)
        x, y = self.centerline.point_at(s)
        return (x - lateral * math.sin(th), y + lateral * math.cos(th), th)

    def obstacles(self, layout: Optional[str]) -> list[Obstacle]:
        if layout in (None, "none"):
            return []
        try:
            spec = self.obstacle_layouts[layout]
        except KeyError:
            raise ValueError(f"track {self.name!r} has no obstacle layout {layout!r}; "
                             f"choose from {sorted(self.obstacle_layouts)}") from None
        out = []
        for frac, lateral, *rest in spec:
            x, y, _ = self.pose_at(frac * self.lap_length, lateral)
            out.append(Obstacle(x, y, rest[0] if rest else DEFAULT_OBSTACLE_HALF_EXTENT))
        return out

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "inner": self.inner_wall.tolist(),
            "outer": self.outer_wall.tolist(),
            "centerline": self.centerline.waypoints.tolist(),
            "start_poses": [list(p) for p in self.start_poses],
            "obstacle_layouts": {k: [list(e) for e in v] for k, v in self.obstacle_layouts.items()},
        }

    @classmethod
    def from_json(cls, d: dict) -> Track:
        for key in ("inner", "outer", "centerline", "start_poses"):
            if key not in d:
                raise ValueError(f"track file is missing {key!r}")
        return cls(
            name=d.get("name", "custom"),
            inner_wall=np.asarray(d["inner"], dtype=float),
            outer_wall=np.asarray(d["outer"], dtype=float),
            centerline=Path(d["centerline"], closed=True),
            start_poses=[tuple(float(c) for c in p) for p in d["start_poses"]],
            obstacle_layouts={k: [tuple(e) for e in v] for k, v in d.get("obstacle_layouts", {}).items()},
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def make_rounded_track(name: str, a: float, b: float, r: float, width: float = 2.0,
                       n_starts: int = 4, layouts: Optional[dict] = None) -> Track:
    """Track whose centerline is an ``a`` x ``b`` rounded rectangle of corner radius ``r``."""
    w = width / 2.0
    if r <= w:
        raise ValueError("corner radius must exceed half the track width")
    centre = rounded_rect(a, b, r)
    inner = rounded_rect(a - width, b - width, r - w)
    outer = rounded_rect(a + width, b + width, r + w)
    path = Path(centre, closed=True)
    t = Track(name, inner, outer, path, [(0.0, 0.0, 0.0)], layouts or {})
    t.start_poses = [t.pose_at(k * path.length / n_starts) for k in range(n_starts)]
    return t


def make_oval() -> Track:
    # straights sized so a centerline lap is ~13.08 m
    r = 1.5
    straight = (13.08 - 2 * math.pi * r) / 2
    return make_rounded_track("oval", straight + 2 * r, 2 * r, r, width=2.0,
                              layouts={"default": [(0.5, 0.2), (0.875, -0.2)],
                                       "single": [(0.5, 0.2)]})


def make_sim_track() -> Track:
    return make_rounded_track("sim", 12.0, 7.0, 2.0, width=2.0, n_starts=6,
                              layouts={"default": [(0.13, 0.2), (0.42, -0.25), (0.62, 0.2), (0.9, -0.2)],
                                       "single": [(0.42, 0.2)]})


BUILTIN = {"oval": make_oval, "sim": make_sim_track}


def load_track(name_or_path: str) -> Track:
    """A built-in track by name, a shipped JSON file, or a JSON path."""
    if name_or_path in BUILTIN:
        res = resources.files("reachguard.data.tracks").joinpath(f"{name_or_path}.json")
        if res.is_file():
            with res.open() as fh:
                return Track.from_json(json.load(fh))
        return BUILTIN[name_or_path]()
    p = FsPath(name_or_path)
    if not p.is_file():
        raise ValueError(f"unknown track {name_or_path!r}")
    with open(p) as fh:
        return Track.from_json(json.load(fh))

"""The unsafe set: static obstacles, track walls and opponent flowpipes.

All checks happen in the x-y plane.  Ego boxes are bloated by the vehicle
footprint radii before intersection, and closed-set semantics apply
throughout (touching means unsafe).

Static and wall boxes are bucketed into a uniform grid so a query only
touches boxes near it; opponent pipes are short and are scanned linearly.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geom import HyperRect, Interval, GeometryError
from .model import OpponentState
from .reach import Flowpipe, opponent_flowpipe, DEFAULT_T_REACH

WALL_BOX_SIDE = 0.2
EGO_RADII = (0.25, 0.25)
GRID_CELL = 0.5


@dataclass(frozen=True)
class Violation:
    time: float
    kind: str  # "static", "wall" or "opponent"
    index: int

    def as_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "index": self.index}


def _rows(boxes) -> np.ndarray:
    """Normalise boxes to an ``(m, 4)`` array of ``[xlo, xhi, ylo, yhi]``."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=float).reshape(-1, 4)
    else:
        out = []
        for b in boxes:
            if isinstance(b, HyperRect):
                if b.ndim != 2:
                    raise GeometryError("unsafe-set boxes must be 2D")
                out.append((b.dims[0].lo, b.dims[0].hi, b.dims[1].lo, b.dims[1].hi))
            else:
                out.append(tuple(float(c) for c in b))
        arr = np.asarray(out, dtype=float).reshape(-1, 4)
    if arr.size and not (np.all(np.isfinite(arr)) and np.all(arr[:, 0] <= arr[:, 1])
                         and np.all(arr[:, 2] <= arr[:, 3])):
        raise GeometryError("invalid box in unsafe set")
    return arr


class UnsafeSet:
    """Immutable union of boxes plus opponent pipes, queried box by box.

    ``time_aligned=False`` (the default) treats every opponent box as
    occupied for the whole horizon; with ``True`` an ego box only meets
    opponent boxes whose time span overlaps its own.
    """

    def __init__(self, static_boxes=(), wall_boxes=(), opponent_pipes: Sequence[Flowpipe] = (),
                 time_aligned: bool = False, ego_radii=EGO_RADII, cell: float = GRID_CELL):
        self.static_boxes = _rows(static_boxes)
        self.wall_boxes = _rows(wall_boxes)
        self.opponent_pipes = list(opponent_pipes)
        for p in self.opponent_pipes:
            if p.ndim != 2:
                raise GeometryError("opponent pipes must be 2D")
        self.time_aligned = bool(time_aligned)
        self.ego_radii = (float(ego_radii[0]), float(ego_radii[1]))
        if min(self.ego_radii) < 0:
            raise GeometryError("ego radii must be non-negative")
        self.cell = float(cell)
        self._grid: dict[tuple[int, int], list] = {}
        for kind, arr in (("static", self.static_boxes), ("wall", self.wall_boxes)):
            for idx, (xlo, xhi, ylo, yhi) in enumerate(arr.tolist()):
                entry = (xlo, xhi, ylo, yhi, kind, idx)
                for key in self._cells(xlo, xhi, ylo, yhi):
                    self._grid.setdefault(key, []).append(entry)
        # static entries first within a cell so reports prefer obstacles
        for lst in self._grid.values():
            lst.sort(key=lambda e: (e[4] != "static", e[5]))
        self._opp = []
        for j, p in enumerate(self.opponent_pipes):
            for i, row in enumerate(p.bounds.tolist()):
                self._opp.append((row[0][0], row[0][1], row[1][0], row[1][1],
                                  i * p.h, (i + 1) * p.h, j))

    def _cells(self, xlo, xhi, ylo, yhi):
        c = self.cell
        for ix in range(math.floor(xlo / c), math.floor(xhi / c) + 1):
            for iy in range(math.floor(ylo / c), math.floor(yhi / c) + 1):
                yield (ix, iy)

    def __len__(self):
        return len(self.static_boxes) + len(self.wall_boxes) + len(self._opp)

    def check_box(self, xlo, xhi, ylo, yhi, t0: float = 0.0, t1: float = math.inf) -> Optional[Violation]:
        """First member hit by the ego x-y box (bloated here), or None."""
        rx, ry = self.ego_radii
        xlo -= rx
        xhi += rx
        ylo -= ry
        yhi += ry
        if rx or ry:
            xlo = math.nextafter(xlo, -math.inf)
            xhi = math.nextafter(xhi, math.inf)
            ylo = math.nextafter(ylo, -math.inf)
            yhi = math.nextafter(yhi, math.inf)
        grid = self._grid
        if grid:
            c = self.cell
            ix0, ix1 = math.floor(xlo / c), math.floor(xhi / c)
            iy0, iy1 = math.floor(ylo / c), math.floor(yhi / c)
            if (ix1 - ix0 + 1) * (iy1 - iy0 + 1) > 4 * len(grid):
                # huge box: cheaper to scan everything
                cells = grid.values()
            else:
                cells = [grid[k] for k in ((ix, iy) for ix in range(ix0, ix1 + 1)
                                           for iy in range(iy0, iy1 + 1)) if k in grid]
            hit = None
            for lst in cells:
                for bxlo, bxhi, bylo, byhi, kind, idx in lst:
                    if bxlo <= xhi and xlo <= bxhi and bylo <= yhi and ylo <= byhi:
                        if hit is None or (kind, idx) < (hit[0], hit[1]):
                            hit = (kind, idx)
                        break
            if hit is not None:
                return Violation(t0, hit[0], hit[1])
        aligned = self.time_aligned
        for bxlo, bxhi, bylo, byhi, s0, s1, j in self._opp:
            if aligned and (s1 < t0 or t1 < s0):
                continue
            if bxlo <= xhi and xlo <= bxhi and bylo <= yhi and ylo <= byhi:
                return Violation(t0, "opponent", j)
        return None

    def with_pipes(self, pipes: Iterable[Flowpipe]) -> UnsafeSet:
        """A copy with extra opponent pipes; never removes members.

        The static grid is shared with the original, so this is cheap enough
        to call every control period.
        """
        out = copy.copy(self)
        out.opponent_pipes = self.opponent_pipes + list(pipes)
        out._opp = list(self._opp)
        base = len(self.opponent_pipes)
        for j, p in enumerate(out.opponent_pipes[base:], start=base):
            if p.ndim != 2:
                raise GeometryError("opponent pipes must be 2D")
            for i, row in enumerate(p.bounds.tolist()):
                out._opp.append((row[0][0], row[0][1], row[1][0], row[1][1],
                                 i * p.h, (i + 1) * p.h, j))
        return out


def wall_boxes_from_points(points, side: float = WALL_BOX_SIDE) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r = side / 2.0
    return np.column_stack([pts[:, 0] - r, pts[:, 0] + r, pts[:, 1] - r, pts[:, 1] + r])


def obstacle_box(ob) -> tuple[float, float, float, float]:
    he = ob.half_extent
    return (ob.x - he, ob.x + he, ob.y - he, ob.y + he)


def opponent_pipe(op: OpponentState, vel: Optional[tuple[Interval, Interval]] = None,
                  t_reach: float = DEFAULT_T_REACH, pos_radius: float = 0.0,
                  h: Optional[float] = None) -> Flowpipe:
    """Constant-velocity pipe of an opponent, bloated by its half extent."""
    if vel is None:
        vel = (Interval.point(op.v_x), Interval.point(op.v_y))
    init = HyperRect.from_bounds([op.x - pos_radius, op.y - pos_radius],
                                 [op.x + pos_radius, op.y + pos_radius])
    fp = opponent_flowpipe(init, vel, t_reach, h)
    he = op.half_extent
    fp.bounds[:, :, 0] -= he
    fp.bounds[:, :, 1] += he
    fp.final[:, 0] -= he
    fp.final[:, 1] += he
    return fp


def build_unsafe_set(track, obstacles=(), opponents=(), t_reach: float = DEFAULT_T_REACH, *,
                     time_aligned: bool = False, ego_radii=EGO_RADII,
                     wall_box_side: float = WALL_BOX_SIDE, opponent_pos_radius: float = 0.0) -> UnsafeSet:
    """Assemble the unsafe set.

    ``track`` needs ``inner_wall`` and ``outer_wall`` point lists (``None``
    for an open world without walls).  ``opponents`` holds either
    ``OpponentState`` values (point velocity) or ``(OpponentState, (Vx, Vy))``
    pairs with interval velocities.
    """
    walls = np.empty((0, 4))
    if track is not None:
        parts = []
        for name in ("inner_wall", "outer_wall"):
            pts = getattr(track, name, None)
            if pts is None:
                continue
            pts = np.asarray(pts, dtype=float).reshape(-1, 2)
            if len(pts) < 3:
                raise GeometryError(f"track {name} needs at least 3 points")
            parts.append(wall_boxes_from_points(pts, wall_box_side))
        if not parts:
            raise GeometryError("empty track")
        walls = np.vstack(parts)
    static = [obstacle_box(o) for o in obstacles]
    pipes = []
    for entry in opponents:
        if isinstance(entry, OpponentState):
            op, vel = entry, None
        else:
            op, vel = entry
        pipes.append(opponent_pipe(op, vel, t_reach, pos_radius=opponent_pos_radius))
    return UnsafeSet(static, walls, pipes, time_aligned=time_aligned, ego_radii=ego_radii)


def check_flowpipe_safety(ego: Flowpipe, lam: UnsafeSet) -> tuple[bool, Optional[Violation]]:
    if ego.ndim != 4:
        raise GeometryError("ego flowpipes are 4D")
    h = ego.h
    for i, row in enumerate(ego.bounds.tolist()):
        v = lam.check_box(row[0][0], row[0][1], row[1][0], row[1][1], i * h, (i + 1) * h)
        if v is not None:
            return False, v
    return True, None

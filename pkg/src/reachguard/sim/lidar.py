"""Planar LiDAR by exact ray/segment intersection.

Each segment only meets the beams inside the angular span it subtends from
the sensor, so beam/segment pairs are generated per segment rather than for
the full cross product.
"""

from __future__ import annotations

import math

import numpy as np

from ..control import LIDAR_BEAMS, LIDAR_FOV, LIDAR_MAX_RANGE, LidarScan

_TWO_PI = 2.0 * math.pi


def box_segments(boxes) -> np.ndarray:
    """Edges of axis-aligned boxes ``[xlo, xhi, ylo, yhi]`` as segment rows."""
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if b.size == 0:
        return np.empty((0, 4))
    xlo, xhi, ylo, yhi = b.T
    return np.concatenate([
        np.column_stack([xlo, ylo, xhi, ylo]),
        np.column_stack([xhi, ylo, xhi, yhi]),
        np.column_stack([xhi, yhi, xlo, yhi]),
        np.column_stack([xlo, yhi, xlo, ylo]),
    ])


def cast_rays(segments: np.ndarray, pose, n_beams: int = LIDAR_BEAMS, fov: float = LIDAR_FOV,
              max_range: float = LIDAR_MAX_RANGE) -> LidarScan:
    px, py, th = pose
    amin = -fov / 2.0
    inc = fov / (n_beams - 1)
    ranges = np.full(n_beams, max_range)
    seg = np.asarray(segments, dtype=float).reshape(-1, 4)
    if len(seg):
        ax, ay = seg[:, 0] - px, seg[:, 1] - py
        bx, by = seg[:, 2] - px, seg[:, 3] - py
        # skip segments entirely out of range
        ex, ey = bx - ax, by - ay
        L2 = ex * ex + ey * ey
        tt = np.clip(-(ax * ex + ay * ey) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        near = np.hypot(ax + tt * ex, ay + tt * ey)
        keep = near <= max_range
        ax, ay, bx, by, ex, ey, near = ax[keep], ay[keep], bx[keep], by[keep], ex[keep], ey[keep], near[keep]
        if ax.size:
            a1 = np.arctan2(ay, ax) - th
            a1 = (a1 + math.pi) % _TWO_PI - math.pi
            d = np.arctan2(ax * by - ay * bx, ax * bx + ay * by)  # signed sweep a -> b
            lo = a1 + np.minimum(d, 0.0)
            span = np.abs(d)
            # a segment through the sensor subtends everything
            span = np.where(near < 1e-12, _TWO_PI, span)
            lo = np.where(near < 1e-12, -math.pi, lo)
            idx_seg = []
            idx_beam = []
            for shift in (-_TWO_PI, 0.0, _TWO_PI):
                j0 = np.ceil((lo + shift - amin) / inc - 1e-9).astype(np.int64) - 1
                j1 = np.floor((lo + shift + span - amin) / inc + 1e-9).astype(np.int64) + 1
                j0 = np.maximum(j0, 0)
                j1 = np.minimum(j1, n_beams - 1)
                cnt = np.maximum(j1 - j0 + 1, 0)
                if cnt.sum() == 0:
                    continue
                s_idx = np.repeat(np.arange(ax.size), cnt)
                starts = np.repeat(j0, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                idx_seg.append(s_idx)
                idx_beam.append(starts + offs)
            if idx_seg:
                si = np.concatenate(idx_seg)
                bi = np.concatenate(idx_beam)
                ang = th + amin + bi * inc
                ux, uy = np.cos(ang), np.sin(ang)
                sax, say, sex, sey = ax[si], ay[si], ex[si], ey[si]
                den = ux * sey - uy * sex
                ok = np.abs(den) > 1e-15
                den = np.where(ok, den, 1.0)
                t = (sax * sey - say * sex) / den
                s = (sax * uy - say * ux) / den
                ok &= (t >= 0.0) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
                if ok.any():
                    np.minimum.at(ranges, bi[ok], t[ok])
    return LidarScan(np.minimum(ranges, max_range), amin, -amin, max_range)

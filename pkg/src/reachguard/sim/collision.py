"""Footprint collision tests by the separating-axis theorem.

Closed sets throughout: shapes that merely touch are colliding.
"""

from __future__ import annotations

import math

import numpy as np

EGO_LENGTH = 0.5
EGO_WIDTH = 0.3
_EPS = 1e-12


def footprint(x: float, y: float, theta: float, length: float = EGO_LENGTH,
              width: float = EGO_WIDTH) -> np.ndarray:
    """Corners of an oriented rectangle centred on ``(x, y)``, counter-clockwise."""
    c, s = math.cos(theta), math.sin(theta)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def rect_hits_segments(x, y, theta, segments: np.ndarray, length=EGO_LENGTH, width=EGO_WIDTH) -> np.ndarray:
    """Boolean mask of segments touching the oriented rectangle."""
    seg = np.asarray(segments, dtype=float).reshape(-1, 4)
    if seg.size == 0:
        return np.zeros(0, dtype=bool)
    c, s = math.cos(theta), math.sin(theta)
    hl, hw = length / 2.0, width / 2.0
    # segment endpoints in the body frame
    p1x, p1y = seg[:, 0] - x, seg[:, 1] - y
    p2x, p2y = seg[:, 2] - x, seg[:, 3] - y
    a1 = c * p1x + s * p1y
    b1 = -s * p1x + c * p1y
    a2 = c * p2x + s * p2y
    b2 = -s * p2x + c * p2y
    hit = (np.minimum(a1, a2) <= hl + _EPS) & (np.maximum(a1, a2) >= -hl - _EPS)
    hit &= (np.minimum(b1, b2) <= hw + _EPS) & (np.maximum(b1, b2) >= -hw - _EPS)
    # third axis: the segment normal
    nx, ny = -(b2 - b1), (a2 - a1)
    d = nx * a1 + ny * b1
    r = hl * np.abs(nx) + hw * np.abs(ny)
    hit &= np.abs(d) <= r + _EPS * (1.0 + np.abs(d))
    return hit


def rect_hits_boxes(x, y, theta, boxes: np.ndarray, length=EGO_LENGTH, width=EGO_WIDTH) -> np.ndarray:
    """Boolean mask of axis-aligned boxes ``[xlo, xhi, ylo, yhi]`` touching the rectangle."""
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if b.size == 0:
        return np.zeros(0, dtype=bool)
    c, s = math.cos(theta), math.sin(theta)
    hl, hw = length / 2.0, width / 2.0
    ex = hl * abs(c) + hw * abs(s)
    ey = hl * abs(s) + hw * abs(c)
    hit = (b[:, 0] <= x + ex + _EPS) & (b[:, 1] >= x - ex - _EPS)
    hit &= (b[:, 2] <= y + ey + _EPS) & (b[:, 3] >= y - ey - _EPS)
    # rectangle axes
    cx, cy = (b[:, 0] + b[:, 1]) / 2 - x, (b[:, 2] + b[:, 3]) / 2 - y
    hx, hy = (b[:, 1] - b[:, 0]) / 2, (b[:, 3] - b[:, 2]) / 2
    for ux, uy, half in ((c, s, hl), (-s, c, hw)):
        proj = np.abs(cx * ux + cy * uy)
        rad = hx * abs(ux) + hy * abs(uy) + half
        hit &= proj <= rad + _EPS
    return hit


def boxes_touch(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1] and a[2] <= b[3] and b[2] <= a[3]

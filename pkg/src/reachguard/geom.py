"""Interval arithmetic and axis-aligned box geometry.

Every operation evaluates endpoints with round-to-nearest and then widens the
result outward by one ulp per endpoint (two for transcendental functions).
That keeps enclosures sound without switching the FPU rounding mode.

The underscored ``i*`` helpers work on raw ``(lo, hi)`` float pairs.  They are
the hot path of the reachability kernel; :class:`Interval` wraps them for
everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_NINF = -math.inf
_PINF = math.inf
_nextafter = math.nextafter

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# absolute slack used when locating trig critical points near an endpoint
_CRIT_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid interval/box construction or incompatible dimensions."""


class DomainError(ArithmeticError):
    """Function evaluated over an interval outside its domain (e.g. a tan pole)."""


def _down(x: float) -> float:
    return _nextafter(x, _NINF)


def _up(x: float) -> float:
    return _nextafter(x, _PINF)


# ---------------------------------------------------------------------------
# raw (lo, hi) kernels
# ---------------------------------------------------------------------------

def iadd(alo, ahi, blo, bhi):
    return _nextafter(alo + blo, _NINF), _nextafter(ahi + bhi, _PINF)


def isub(alo, ahi, blo, bhi):
    return _nextafter(alo - bhi, _NINF), _nextafter(ahi - blo, _PINF)


def imul(alo, ahi, blo, bhi):
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = p1 if p1 < p2 else p2
    if p3 < lo:
        lo = p3
    if p4 < lo:
        lo = p4
    hi = p1 if p1 > p2 else p2
    if p3 > hi:
        hi = p3
    if p4 > hi:
        hi = p4
    return _nextafter(lo, _NINF), _nextafter(hi, _PINF)


def iscale(alo, ahi, k):
    """Multiply an interval by a point scalar."""
    if k >= 0.0:
        return _nextafter(alo * k, _NINF), _nextafter(ahi * k, _PINF)
    return _nextafter(ahi * k, _NINF), _nextafter(alo * k, _PINF)


def _contains_point_mod(lo, hi, phase):
    """True if some ``phase + 2*pi*k`` lies in ``[lo, hi]`` (with slack)."""
    k = math.ceil((lo - phase) / TWO_PI - _CRIT_TOL)
    return phase + TWO_PI * k <= hi + _CRIT_TOL * (1.0 + abs(hi))


def isin(lo, hi):
    if hi - lo >= TWO_PI:
        return -1.0, 1.0
    a = math.sin(lo)
    b = math.sin(hi)
    rlo = a if a < b else b
    rhi = a if a > b else b
    rlo = _down(_down(rlo))
    rhi = _up(_up(rhi))
    if _contains_point_mod(lo, hi, HALF_PI):
        rhi = 1.0
    if _contains_point_mod(lo, hi, -HALF_PI):
        rlo = -1.0
    return max(rlo, -1.0), min(rhi, 1.0)


def icos(lo, hi):
    if hi - lo >= TWO_PI:
        return -1.0, 1.0
    a = math.cos(lo)
    b = math.cos(hi)
    rlo = a if a < b else b
    rhi = a if a > b else b
    rlo = _down(_down(rlo))
    rhi = _up(_up(rhi))
    if _contains_point_mod(lo, hi, 0.0):
        rhi = 1.0
    if _contains_point_mod(lo, hi, math.pi):
        rlo = -1.0
    return max(rlo, -1.0), min(rhi, 1.0)


def itan(lo, hi):
    # a pole at pi/2 + k*pi inside [lo, hi] makes the range unbounded
    k = math.ceil((lo - HALF_PI) / math.pi - _CRIT_TOL)
    if HALF_PI + math.pi * k <= hi + _CRIT_TOL * (1.0 + abs(hi)):
        raise DomainError(f"tan undefined over [{lo}, {hi}]: interval contains a pole")
    return _down(_down(math.tan(lo))), _up(_up(math.tan(hi)))


def iatan(lo, hi):
    return (max(_down(_down(math.atan(lo))), -HALF_PI),
            min(_up(_up(math.atan(hi))), HALF_PI))


# ---------------------------------------------------------------------------
# Interval
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Interval:
    """Closed real interval ``[lo, hi]`` with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise GeometryError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise GeometryError(f"interval lower bound exceeds upper bound: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @classmethod
    def around(cls, center: float, radius: float) -> Interval:
        if radius < 0:
            raise GeometryError("radius must be non-negative")
        return cls(center - radius, center + radius)

    @classmethod
    def relative(cls, nominal: float, fraction: float) -> Interval:
        """``nominal * [1 - fraction, 1 + fraction]`` (endpoints ordered)."""
        if fraction < 0:
            raise GeometryError("fraction must be non-negative")
        a, b = nominal * (1.0 - fraction), nominal * (1.0 + fraction)
        return cls(min(a, b), max(a, b))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def issubset(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def hull(self, other: Interval) -> Interval:
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def pair(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __add__(self, other):
        other = _as_interval(other)
        return Interval(*iadd(self.lo, self.hi, other.lo, other.hi))

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_interval(other)
        return Interval(*isub(self.lo, self.hi, other.lo, other.hi))

    def __rsub__(self, other):
        return _as_interval(other) - self

    def __mul__(self, other):
        other = _as_interval(other)
        return Interval(*imul(self.lo, self.hi, other.lo, other.hi))

    __rmul__ = __mul__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def _as_interval(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval(x, x)


def interval_add(a: Interval, b: Interval) -> Interval:
    return a + b


def interval_mul(a: Interval, b: Interval) -> Interval:
    return a * b


def interval_neg(a: Interval) -> Interval:
    return -a


def interval_sin(a: Interval) -> Interval:
    return Interval(*isin(a.lo, a.hi))


def interval_cos(a: Interval) -> Interval:
    return Interval(*icos(a.lo, a.hi))


def interval_tan(a: Interval) -> Interval:
    return Interval(*itan(a.lo, a.hi))


def interval_atan(a: Interval) -> Interval:
    return Interval(*iatan(a.lo, a.hi))


# ---------------------------------------------------------------------------
# HyperRect
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class HyperRect:
    """Cartesian product of closed intervals."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        dims = tuple(self.dims)
        if not dims:
            raise GeometryError("a box needs at least one dimension")
        for d in dims:
            if not isinstance(d, Interval):
                raise GeometryError(f"box dimensions must be Interval, got {type(d).__name__}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> HyperRect:
        if len(lo) != len(hi):
            raise GeometryError("lower and upper bound vectors differ in length")
        return cls(tuple(Interval(a, b) for a, b in zip(lo, hi)))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> HyperRect:
        return cls(tuple(Interval(p[0], p[1]) for p in pairs))

    @classmethod
    def point(cls, x: Sequence[float]) -> HyperRect:
        return cls(tuple(Interval(v, v) for v in x))

    @classmethod
    def from_array(cls, arr) -> HyperRect:
        """Build from an ``(n, 2)`` array of ``[lo, hi]`` rows."""
        arr = np.asarray(arr, dtype=float)
        return cls(tuple(Interval(float(r[0]), float(r[1])) for r in arr))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def lo(self) -> list[float]:
        return [d.lo for d in self.dims]

    @property
    def hi(self) -> list[float]:
        return [d.hi for d in self.dims]

    def widths(self) -> list[float]:
        return [d.width for d in self.dims]

    def to_array(self) -> np.ndarray:
        return np.array([[d.lo, d.hi] for d in self.dims], dtype=float)

    def __getitem__(self, i):
        return self.dims[i]

    def __len__(self):
        return len(self.dims)

    def project(self, idx: Sequence[int]) -> HyperRect:
        return HyperRect(tuple(self.dims[i] for i in idx))

    def contains_point(self, x: Sequence[float]) -> bool:
        if len(x) != self.ndim:
            raise GeometryError("point dimension does not match box")
        return all(d.lo <= v <= d.hi for d, v in zip(self.dims, x))

    def issubset(self, other: HyperRect) -> bool:
        _check_dims(self, other)
        return all(a.issubset(b) for a, b in zip(self.dims, other.dims))

    def hull(self, other: HyperRect) -> HyperRect:
        _check_dims(self, other)
        return HyperRect(tuple(a.hull(b) for a, b in zip(self.dims, other.dims)))


def _check_dims(a: HyperRect, b: HyperRect):
    if a.ndim != b.ndim:
        raise GeometryError(f"dimension mismatch: {a.ndim} vs {b.ndim}")


def boxes_intersect(a: HyperRect, b: HyperRect) -> bool:
    """Closed-set overlap test; boxes sharing only a face still intersect."""
    _check_dims(a, b)
    return all(p.lo <= q.hi and q.lo <= p.hi for p, q in zip(a.dims, b.dims))


def bloat(b: HyperRect, radii: Sequence[float]) -> HyperRect:
    """Widen dimension ``i`` by ``radii[i]`` on both sides.

    ``radii`` may be shorter than the box; trailing dimensions are left as-is.
    """
    if len(radii) > b.ndim:
        raise GeometryError("more bloat radii than box dimensions")
    out = list(b.dims)
    for i, r in enumerate(radii):
        if r < 0:
            raise GeometryError(f"bloat radius must be non-negative, got {r}")
        d = out[i]
        out[i] = Interval(_down(d.lo - r), _up(d.hi + r)) if r > 0 else d
    return HyperRect(tuple(out))


def _xy_widths(boxes) -> np.ndarray:
    """Return an ``(k, 2)`` array of x/y widths for any supported box sequence."""
    if hasattr(boxes, "bounds") and isinstance(getattr(boxes, "bounds"), np.ndarray):
        arr = boxes.bounds
    elif isinstance(boxes, np.ndarray):
        arr = boxes
    else:
        boxes = list(boxes)
        if not boxes:
            raise GeometryError("flowpipe is empty")
        if any(b.ndim < 2 for b in boxes):
            raise GeometryError("flowpipe boxes need x and y dimensions")
        return np.array([[b.dims[0].width, b.dims[1].width] for b in boxes], dtype=float)
    if arr.ndim != 3 or arr.shape[1] < 2:
        raise GeometryError("flowpipe array must be shaped (k, n>=2, 2)")
    if arr.shape[0] == 0:
        raise GeometryError("flowpipe is empty")
    return arr[:, :2, 1] - arr[:, :2, 0]


def flowpipe_area(boxes) -> float:
    """Total x-y area of a flowpipe: the sum of ``w([x]) * w([y])`` per box.

    Overlapping boxes are counted once each, so this is an over-estimate of the
    swept area.  Pass boxes that have already been bloated by the vehicle
    footprint when the vehicle's physical extent should be included.
    """
    w = _xy_widths(boxes)
    return math.fsum((w[:, 0] * w[:, 1]).tolist())

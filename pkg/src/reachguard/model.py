"""Vehicle and opponent dynamics.

The ego car is a kinematic bicycle with zero slip angle driven by a throttle
setpoint ``u_v`` and steering angle ``delta``::

    x'     = v cos(theta)
    y'     = v sin(theta)
    v'     = -c_a v + c_a c_m (u_v - c_h)            (+ d1)
    theta' = v tan(delta) / (l_f + l_r)              (+ d2)

Opponents are constant-velocity points with a square bounding box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Interval, HyperRect, GeometryError, iadd, icos, imul, iscale, isin, isub, itan

DELTA_MAX = 0.4189  # rad, ~24 deg servo limit

X, Y, V, THETA = range(4)


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    v: float
    theta: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.v, self.theta)

    @classmethod
    def from_seq(cls, s) -> VehicleState:
        return cls(float(s[0]), float(s[1]), float(s[2]), float(s[3]))


@dataclass(frozen=True, slots=True)
class ControlAction:
    u_v: float
    delta: float

    def __post_init__(self):
        if not math.isfinite(self.u_v) or not math.isfinite(self.delta):
            raise ValueError("control action must be finite")
        if abs(self.delta) > DELTA_MAX + 1e-12:
            raise ValueError(f"|delta| = {abs(self.delta)} exceeds DELTA_MAX = {DELTA_MAX}")


def clamp_steer(delta: float) -> float:
    return max(-DELTA_MAX, min(DELTA_MAX, delta))


@dataclass(frozen=True, slots=True)
class BicycleParams:
    c_a: float
    c_m: float
    c_h: float
    l_f: float = 0.225
    l_r: float = 0.225

    def __post_init__(self):
        if self.l_f + self.l_r <= 0:
            raise ValueError("wheelbase l_f + l_r must be positive")
        if self.c_a <= 0:
            raise ValueError("c_a must be positive")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def equilibrium_input(self, v: float) -> float:
        """Throttle at which ``v`` is a fixed point of the speed dynamics."""
        return v / self.c_m + self.c_h

    def equilibrium_speed(self, u_v: float) -> float:
        return self.c_m * (u_v - self.c_h)


PRESETS = {
    "sim": BicycleParams(c_a=1.9569, c_m=0.0342, c_h=-37.1967, l_f=0.225, l_r=0.225),
    "hardware": BicycleParams(c_a=2.9820, c_m=0.0037, c_h=-222.1874, l_f=0.225, l_r=0.225),
}


def preset(name: str) -> BicycleParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown parameter preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True, slots=True)
class UncertainParams:
    """Interval-valued model constants plus additive disturbances.

    ``d1`` perturbs the speed derivative (m/s^2) and ``d2`` the heading rate
    (rad/s).  The slip angle is fixed at zero.
    """

    c_a: Interval
    c_m: Interval
    c_h: Interval
    d1: Interval = field(default_factory=lambda: Interval(0.0, 0.0))
    d2: Interval = field(default_factory=lambda: Interval(0.0, 0.0))
    l_f: float = 0.225
    l_r: float = 0.225

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @classmethod
    def exact(cls, p: BicycleParams) -> UncertainParams:
        return cls.from_percent(p, 0.0)

    @classmethod
    def from_percent(cls, p: BicycleParams, pct: float, d1: float | Interval = 0.0,
                     d2: float | Interval = 0.0) -> UncertainParams:
        """Inflate each constant to ``nominal * [1 - pct/100, 1 + pct/100]``.

        Scalar ``d1``/``d2`` are read as symmetric half-widths.
        """
        if pct < 0:
            raise ValueError("uncertainty percentage must be non-negative")
        f = pct / 100.0
        return cls(
            c_a=Interval.relative(p.c_a, f),
            c_m=Interval.relative(p.c_m, f),
            c_h=Interval.relative(p.c_h, f),
            d1=d1 if isinstance(d1, Interval) else Interval(-abs(d1), abs(d1)),
            d2=d2 if isinstance(d2, Interval) else Interval(-abs(d2), abs(d2)),
            l_f=p.l_f,
            l_r=p.l_r,
        )

    def nominal(self) -> BicycleParams:
        return BicycleParams(self.c_a.mid, self.c_m.mid, self.c_h.mid, self.l_f, self.l_r)

    def contains(self, p: BicycleParams) -> bool:
        return self.c_a.contains(p.c_a) and self.c_m.contains(p.c_m) and self.c_h.contains(p.c_h)

    def widened(self, **kw) -> UncertainParams:
        return replace(self, **kw)


@dataclass(frozen=True, slots=True)
class OpponentState:
    x: float
    y: float
    v_x: float
    v_y: float
    half_extent: float = 0.25

    def __post_init__(self):
        if not self.half_extent > 0:
            raise ValueError("opponent half_extent must be positive")
        if not all(math.isfinite(c) for c in (self.x, self.y, self.v_x, self.v_y)):
            raise ValueError("opponent state must be finite")


def slip_angle(delta: float, l_f: float, l_r: float) -> float:
    """Kinematic slip angle ``atan(l_r tan(delta) / (l_f + l_r))``.

    Not used by the dynamics, which assume zero slip.
    """
    return math.atan(l_r * math.tan(delta) / (l_f + l_r))


def bicycle_deriv(s: VehicleState, a: ControlAction, p: BicycleParams,
                  d1: float = 0.0, d2: float = 0.0) -> tuple[float, float, float, float]:
    v, th = s.v, s.theta
    return (
        v * math.cos(th),
        v * math.sin(th),
        -p.c_a * v + p.c_a * p.c_m * (a.u_v - p.c_h) + d1,
        v / (p.l_f + p.l_r) * math.tan(a.delta) + d2,
    )


def bicycle_rhs(state: np.ndarray, u_v, delta, c_a, c_m, c_h, wheelbase, d1=0.0, d2=0.0) -> np.ndarray:
    """Vectorised derivative for ``(..., 4)`` state arrays.

    Every parameter broadcasts against ``state[..., 0]``, so batches of
    trajectories can each carry their own constants and disturbances.
    """
    v = state[..., V]
    th = state[..., THETA]
    out = np.empty_like(state)
    out[..., X] = v * np.cos(th)
    out[..., Y] = v * np.sin(th)
    out[..., V] = -c_a * v + c_a * c_m * (u_v - c_h) + d1
    out[..., THETA] = v / wheelbase * np.tan(delta) + d2
    return out


def make_bicycle_bounds(a: ControlAction, up: UncertainParams):
    """Return a closure ``f(lo, hi) -> (dlo, dhi)`` over raw 4D bound lists.

    Terms independent of the state are pre-computed once per query.  The speed
    component is evaluated in the factored form ``C_a (C_m (u - C_h) - V) + D1``
    so that ``C_a`` appears once, which is both valid and tighter than the
    expanded natural extension.
    """
    klo, khi = iscale(*itan(a.delta, a.delta), 1.0 / up.wheelbase)
    u_minus_ch = isub(a.u_v, a.u_v, up.c_h.lo, up.c_h.hi)
    drive = imul(up.c_m.lo, up.c_m.hi, *u_minus_ch)
    calo, cahi = up.c_a.lo, up.c_a.hi
    d1lo, d1hi = up.d1.lo, up.d1.hi
    d2lo, d2hi = up.d2.lo, up.d2.hi
    dlo_, dhi_ = drive

    def bounds(lo, hi):
        vlo, vhi = lo[2], hi[2]
        c = icos(lo[3], hi[3])
        s = isin(lo[3], hi[3])
        xd = imul(vlo, vhi, c[0], c[1])
        yd = imul(vlo, vhi, s[0], s[1])
        vd = iadd(*imul(calo, cahi, *isub(dlo_, dhi_, vlo, vhi)), d1lo, d1hi)
        td = iadd(*imul(vlo, vhi, klo, khi), d2lo, d2hi)
        return [xd[0], yd[0], vd[0], td[0]], [xd[1], yd[1], vd[1], td[1]]

    bounds.self_dependent = (V,)
    return bounds


def bicycle_deriv_bounds(box: HyperRect, a: ControlAction, up: UncertainParams) -> tuple[Interval, ...]:
    if box.ndim != 4:
        raise GeometryError(f"ego state box must be 4D, got {box.ndim}D")
    dlo, dhi = make_bicycle_bounds(a, up)(box.lo, box.hi)
    return tuple(Interval(l, h) for l, h in zip(dlo, dhi))


def opponent_deriv_bounds(ob: HyperRect, vel: tuple[Interval, Interval]) -> tuple[Interval, Interval]:
    """Constant-velocity inclusion: the derivative does not depend on position."""
    if ob.ndim != 2:
        raise GeometryError(f"opponent box must be 2D, got {ob.ndim}D")
    return vel[0], vel[1]


def make_constant_bounds(vel: tuple[Interval, ...]):
    dlo = [v.lo for v in vel]
    dhi = [v.hi for v in vel]

    def bounds(lo, hi):
        return dlo, dhi

    return bounds

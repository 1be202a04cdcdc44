"""Box-based flowpipe construction and the anytime refinement loop.

A flowpipe over ``[0, T_reach]`` is built from ``k = T_reach / h`` face-lifting
steps.  Each step first finds an a-priori enclosure ``E`` of every trajectory
over the step (``B + [0, h] F(E) ⊆ E``), then moves each lower face by
``h * min F(E)`` and each upper face by ``h * max F(E)``.  The stored segment
box for ``[t, t + h]`` is the hull of the start and end boxes and so contains
every state visited during the step.

For a dimension whose derivative depends on that same coordinate (the speed
of the bicycle model) each face is additionally lifted using the derivative
over the thin slab of ``E`` lying beyond that face.  A trajectory can only
cross the face from inside that slab, so the tighter bound is still sound, and
it keeps a contracting coordinate from inflating exponentially.

The anytime loop repeats the whole construction with the step halved each
pass while the wall-clock budget allows; the verdict issued is always that of
the last pass that ran to completion.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geom import HyperRect, Interval, GeometryError, flowpipe_area
from .model import ControlAction, UncertainParams, make_bicycle_bounds, make_constant_bounds

_nextafter = math.nextafter
_NINF = -math.inf
_PINF = math.inf

# a-priori enclosure search: ordinary passes, then a bounded fallback with
# doubling inflation before giving up
_REFINE_PASSES = 3
_FALLBACK_PASSES = 9
_INFLATE = 0.1

ESTIMATE_BLOAT = 1.2
DEFAULT_T_REACH = 1.0
DEFAULT_T_RUNTIME = 0.025

DerivBounds = Callable[[list, list], tuple]


class NumericalInstabilityError(ArithmeticError):
    """Face lifting could not produce a finite, self-consistent enclosure."""


class TerminationReason(str, enum.Enum):
    BUDGET_EXHAUSTED = "budget_exhausted"
    H_MIN_REACHED = "h_min_reached"
    UNSAFE_CONFIRMED = "unsafe_confirmed"


@dataclass(frozen=True)
class ReachQuery:
    init_set: HyperRect
    action: ControlAction
    params: UncertainParams
    t_reach: float = DEFAULT_T_REACH
    t_runtime: float = DEFAULT_T_RUNTIME
    h0: Optional[float] = None
    h_min: Optional[float] = None

    def __post_init__(self):
        if self.init_set.ndim != 4:
            raise GeometryError("ego reach queries need a 4D initial set")
        if not self.t_reach > 0:
            raise ValueError("t_reach must be positive")
        if not self.t_runtime > 0:
            raise ValueError("t_runtime must be positive")
        if self.h0 is None:
            object.__setattr__(self, "h0", self.t_reach / 10.0)
        if self.h_min is None:
            object.__setattr__(self, "h_min", self.t_reach / 2 ** 14)
        if not (0 < self.h_min <= self.h0 <= self.t_reach):
            raise ValueError(f"need 0 < h_min <= h0 <= t_reach, got h_min={self.h_min}, "
                             f"h0={self.h0}, t_reach={self.t_reach}")


@dataclass
class Flowpipe:
    """Time-ordered boxes; ``bounds[i]`` covers ``[i*h, (i+1)*h]``.

    ``final`` encloses the state at the end of the last constructed step.
    ``complete`` is False when construction stopped early at an unsafe box.
    """

    h: float
    t_reach: float
    bounds: np.ndarray
    final: np.ndarray
    complete: bool = True
    violation: Optional[object] = None

    def __len__(self):
        return self.bounds.shape[0]

    @property
    def ndim(self) -> int:
        return self.bounds.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.h

    def box(self, i: int) -> HyperRect:
        return HyperRect.from_array(self.bounds[i])

    @property
    def boxes(self) -> list[tuple[float, HyperRect]]:
        return [(i * self.h, self.box(i)) for i in range(len(self))]

    def final_box(self) -> HyperRect:
        return HyperRect.from_array(self.final)

    def xy_bloated(self, radii=(0.0, 0.0)) -> np.ndarray:
        b = self.bounds[:, :2, :].copy()
        b[:, 0, 0] -= radii[0]
        b[:, 0, 1] += radii[0]
        b[:, 1, 0] -= radii[1]
        b[:, 1, 1] += radii[1]
        return b

    def area(self, radii=(0.0, 0.0)) -> float:
        return flowpipe_area(self.xy_bloated(radii))

    def mean_box_area(self, radii=(0.0, 0.0)) -> float:
        """Area per box; comparable across passes with different step sizes."""
        return self.area(radii) / len(self)


def _lift(lo, hi, deriv: DerivBounds, h: float):
    """One face-lifting step from the box ``[lo, hi]``.

    Returns ``(seg_lo, seg_hi, end_lo, end_hi)`` where the segment box covers
    the whole step and the end box covers the state at ``t + h``.
    """
    n = len(lo)
    dlo, dhi = deriv(lo, hi)
    alpha = _INFLATE
    for attempt in range(_REFINE_PASSES + _FALLBACK_PASSES):
        # candidate enclosure: lift faces outward only, inflating the motion
        elo = [0.0] * n
        ehi = [0.0] * n
        for i in range(n):
            span = h * (dhi[i] - dlo[i])
            pad = alpha * span + 1e-15 * (1.0 + abs(lo[i]) + abs(hi[i]))
            mlo = h * dlo[i]
            mhi = h * dhi[i]
            elo[i] = lo[i] + (1.0 + alpha) * mlo - pad if mlo < 0.0 else lo[i] - pad
            ehi[i] = hi[i] + (1.0 + alpha) * mhi + pad if mhi > 0.0 else hi[i] + pad
        flo, fhi = deriv(elo, ehi)
        ok = True
        for i in range(n):
            if not (math.isfinite(flo[i]) and math.isfinite(fhi[i])):
                raise NumericalInstabilityError("non-finite derivative bound during face lifting")
            if flo[i] < 0.0 and _nextafter(lo[i] + _nextafter(h * flo[i], _NINF), _NINF) < elo[i]:
                ok = False
                break
            if fhi[i] > 0.0 and _nextafter(hi[i] + _nextafter(h * fhi[i], _PINF), _PINF) > ehi[i]:
                ok = False
                break
        if ok:
            break
        dlo, dhi = flo, fhi
        if attempt >= _REFINE_PASSES - 1:
            alpha *= 2.0
    else:
        raise NumericalInstabilityError("a-priori enclosure did not converge")

    end_lo = [0.0] * n
    end_hi = [0.0] * n
    seg_lo = [0.0] * n
    seg_hi = [0.0] * n
    for i in range(n):
        # round the increment outward first: the sum may cancel
        a = h * flo[i]
        b = h * fhi[i]
        el = lo[i] if a == 0.0 else _nextafter(lo[i] + _nextafter(a, _NINF), _NINF)
        eh = hi[i] if b == 0.0 else _nextafter(hi[i] + _nextafter(b, _PINF), _PINF)
        if not (math.isfinite(el) and math.isfinite(eh)):
            raise NumericalInstabilityError("non-finite box after face lifting")
        end_lo[i] = el
        end_hi[i] = eh
    # dimensions whose derivative depends on themselves: bound each face's
    # motion by the derivative over the slab the face can sweep into
    for i in getattr(deriv, "self_dependent", ()):
        rlo = list(elo)
        rhi = list(ehi)
        rhi[i] = lo[i]
        m = deriv(rlo, rhi)[0][i]
        if m >= 0.0:
            cand = lo[i]
        else:
            cand = _nextafter(lo[i] + _nextafter(h * m, _NINF), _NINF)
        if cand > end_lo[i]:
            end_lo[i] = cand
        rhi[i] = ehi[i]
        rlo[i] = hi[i]
        m = deriv(rlo, rhi)[1][i]
        if m <= 0.0:
            cand = hi[i]
        else:
            cand = _nextafter(hi[i] + _nextafter(h * m, _PINF), _PINF)
        if cand < end_hi[i]:
            end_hi[i] = cand
    for i in range(n):
        seg_lo[i] = end_lo[i] if end_lo[i] < lo[i] else lo[i]
        seg_hi[i] = end_hi[i] if end_hi[i] > hi[i] else hi[i]
    return seg_lo, seg_hi, end_lo, end_hi


def face_lift_step(box: HyperRect, a: ControlAction, p: UncertainParams, h_step: float) -> HyperRect:
    """Enclosure of the states reached exactly ``h_step`` after starting in ``box``."""
    if not h_step > 0:
        raise ValueError("h_step must be positive")
    if box.ndim != 4:
        raise GeometryError("ego boxes are 4D")
    _, _, end_lo, end_hi = _lift(box.lo, box.hi, make_bicycle_bounds(a, p), h_step)
    return HyperRect.from_bounds(end_lo, end_hi)


def segment_step(box: HyperRect, a: ControlAction, p: UncertainParams, h_step: float) -> HyperRect:
    """Enclosure of every state visited during ``[0, h_step]`` from ``box``."""
    seg_lo, seg_hi, _, _ = _lift(box.lo, box.hi, make_bicycle_bounds(a, p), h_step)
    return HyperRect.from_bounds(seg_lo, seg_hi)


def snap_step(t_reach: float, h: float) -> tuple[float, int]:
    """Round ``h`` to the nearest exact divisor of ``t_reach``."""
    k = max(1, int(round(t_reach / h)))
    return t_reach / k, k


def build_flowpipe(init_lo, init_hi, deriv: DerivBounds, t_reach: float, h: float,
                   unsafe=None, stop_on_unsafe: bool = True):
    """Generic construction over any dynamics given as a bounds closure.

    Returns ``(flowpipe, safe, steps_done)``.  ``unsafe`` must offer
    ``check_box(xlo, xhi, ylo, yhi, t0, t1)`` returning a violation or None.
    """
    h, k = snap_step(t_reach, h)
    n = len(init_lo)
    out = np.empty((k, n, 2))
    lo = list(init_lo)
    hi = list(init_hi)
    safe = True
    violation = None
    done = 0
    check = unsafe.check_box if unsafe is not None else None
    for i in range(k):
        seg_lo, seg_hi, lo, hi = _lift(lo, hi, deriv, h)
        row = out[i]
        row[:, 0] = seg_lo
        row[:, 1] = seg_hi
        done = i + 1
        if check is not None and violation is None:
            v = check(seg_lo[0], seg_hi[0], seg_lo[1], seg_hi[1], i * h, (i + 1) * h)
            if v is not None:
                safe = False
                violation = v
                if stop_on_unsafe:
                    break
    fp = Flowpipe(h=h, t_reach=t_reach, bounds=out[:done].copy() if done < k else out,
                  final=np.column_stack([lo, hi]), complete=(done == k), violation=violation)
    return fp, safe, done


def construct_flowpipe(q: ReachQuery, h: float, unsafe=None, stop_on_unsafe: bool = True):
    """Build the ego flowpipe at step ``h``; returns ``(Flowpipe, safe)``."""
    deriv = make_bicycle_bounds(q.action, q.params)
    fp, safe, _ = build_flowpipe(q.init_set.lo, q.init_set.hi, deriv, q.t_reach, h,
                                 unsafe=unsafe, stop_on_unsafe=stop_on_unsafe)
    return fp, safe


def opponent_flowpipe(init_box: HyperRect, vel: tuple[Interval, Interval], t_reach: float,
                      h: Optional[float] = None) -> Flowpipe:
    """Constant-velocity 2D flowpipe of a moving obstacle."""
    if init_box.ndim != 2:
        raise GeometryError("opponent boxes are 2D")
    fp, _, _ = build_flowpipe(init_box.lo, init_box.hi, make_constant_bounds(vel), t_reach,
                              h if h is not None else t_reach / 10.0)
    return fp


# ---------------------------------------------------------------------------
# clocks
# ---------------------------------------------------------------------------

class WallClock:
    """Monotonic wall-clock timing of the reach computation itself."""

    def start(self):
        self._t0 = time.perf_counter()

    def charge(self, steps: int):
        pass

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0


class VirtualClock:
    """Deterministic cost model: a fixed charge per face-lifting step and per pass.

    Used wherever results must be bit-reproducible; anytime decisions then
    depend only on the work done, never on machine load.
    """

    def __init__(self, per_step: float = 60e-6, per_pass: float = 50e-6):
        self.per_step = per_step
        self.per_pass = per_pass
        self._t = 0.0

    def start(self):
        self._t = 0.0

    def charge(self, steps: int):
        self._t += self.per_pass + steps * self.per_step

    def elapsed(self) -> float:
        return self._t


def make_clock(kind: str):
    if kind == "wall":
        return WallClock()
    if kind == "virtual":
        return VirtualClock()
    raise ValueError(f"unknown clock {kind!r}")


# ---------------------------------------------------------------------------
# anytime loop
# ---------------------------------------------------------------------------

@dataclass
class PassRecord:
    h: float
    steps: int
    safe: bool
    complete: bool
    duration: float
    mean_area: float
    unstable: bool = False


@dataclass
class AnytimeResult:
    safe: bool
    final_flowpipe: Optional[Flowpipe]
    iterations: int
    elapsed: float
    deadline_missed: bool
    terminated_reason: TerminationReason
    passes: list[PassRecord] = field(default_factory=list)
    reference_area: float = float("nan")
    unstable: bool = False


def anytime_reach(q: ReachQuery, unsafe, clock=None, ego_radii=None,
                  full_first_pass: bool = True) -> AnytimeResult:
    """Refine the flowpipe by halving the step until the budget runs out.

    After each completed pass the next pass is estimated to cost twice the
    last one, bloated by ``ESTIMATE_BLOAT``; the loop stops if that would
    overrun ``q.t_runtime`` or if the halved step would drop below
    ``q.h_min``.  The first pass always runs, so a result is always issued.

    With ``full_first_pass`` the first (coarsest) pass is carried to the
    horizon even after a violation; its bloated area is reported as
    ``reference_area``, a per-period size measure independent of timing.
    """
    clock = clock if clock is not None else WallClock()
    radii = ego_radii if ego_radii is not None else getattr(unsafe, "ego_radii", (0.0, 0.0))
    deriv = make_bicycle_bounds(q.action, q.params)
    lo, hi = q.init_set.lo, q.init_set.hi
    h = q.h0
    passes: list[PassRecord] = []
    final_fp = None
    safe = False
    unstable_any = False
    reference_area = float("nan")
    reason = TerminationReason.BUDGET_EXHAUSTED
    confirmed_checked = False
    clock.start()
    prev = 0.0
    while True:
        first = not passes
        unstable = False
        try:
            fp, pass_safe, steps = build_flowpipe(
                lo, hi, deriv, q.t_reach, h, unsafe=unsafe,
                stop_on_unsafe=not (first and full_first_pass))
        except NumericalInstabilityError:
            fp, pass_safe, steps, unstable = None, False, 0, True
            unstable_any = True
        clock.charge(steps)
        now = clock.elapsed()
        duration = now - prev
        prev = now
        if fp is not None:
            final_fp = fp
            if first:
                reference_area = fp.area(radii)
        safe = pass_safe
        passes.append(PassRecord(h=h if fp is None else fp.h, steps=steps, safe=pass_safe,
                                 complete=fp is not None and fp.complete, duration=duration,
                                 mean_area=fp.mean_box_area(radii) if fp is not None else float("nan"),
                                 unstable=unstable))
        if not pass_safe and not unstable and not confirmed_checked and unsafe is not None:
            # a violation by the initial set itself cannot be refined away
            confirmed_checked = True
            if unsafe.check_box(lo[0], hi[0], lo[1], hi[1], 0.0, 0.0) is not None:
                reason = TerminationReason.UNSAFE_CONFIRMED
                break
        remaining = q.t_runtime - now - 2.0 * duration * ESTIMATE_BLOAT
        if remaining <= 0.0:
            reason = TerminationReason.BUDGET_EXHAUSTED
            break
        if h / 2.0 < q.h_min:
            reason = TerminationReason.H_MIN_REACHED
            break
        h = h / 2.0
    elapsed = clock.elapsed()
    return AnytimeResult(safe=safe, final_flowpipe=final_fp, iterations=len(passes), elapsed=elapsed,
                         deadline_missed=elapsed > q.t_runtime, terminated_reason=reason,
                         passes=passes, reference_area=reference_area, unstable=unstable_any)

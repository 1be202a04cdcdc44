"""Empirical soundness check of the reach engine against sampled trajectories.

Random queries are flowpiped; from each, trajectories with random initial
states, parameters and piecewise-constant disturbances are integrated with
RK4 and every sample is tested against the box whose time span brackets it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..geom import HyperRect, Interval
from ..model import DELTA_MAX, ControlAction, UncertainParams, bicycle_rhs, preset
from ..reach import ReachQuery, VirtualClock, anytime_reach, construct_flowpipe

# absorbs the oracle's own integration error (RK4 at 1e-3 s is ~1e-12 accurate)
ORACLE_SLACK = 1e-9
DISTURBANCE_HOLD = 0.05  # s between disturbance redraws


@dataclass
class SoundnessReport:
    queries: int
    samples: int
    violations: int
    elapsed: float
    worst_excess: float = 0.0
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def random_query(rng: np.random.Generator, max_pct: float = 30.0, t_reach: float = 1.0,
                 param_preset: str = "sim") -> ReachQuery:
    p = preset(param_preset)
    c = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.0, 2.0), rng.uniform(-math.pi, math.pi)])
    w = np.array([rng.uniform(0, 0.2), rng.uniform(0, 0.2), rng.uniform(0, 0.3), rng.uniform(0, 0.2)])
    # some queries start from an exact point
    if rng.random() < 0.1:
        w[:] = 0.0
    lo, hi = c - w / 2, c + w / 2
    lo[2] = max(lo[2], 0.0)
    hi[2] = max(hi[2], lo[2])
    delta = rng.uniform(-DELTA_MAX, DELTA_MAX)
    u = p.equilibrium_input(rng.uniform(0.0, 2.5))
    pct = rng.uniform(0.0, max_pct)
    d1 = rng.uniform(0, 0.3) if rng.random() < 0.5 else 0.0
    d2 = rng.uniform(0, 0.1) if rng.random() < 0.5 else 0.0
    up = UncertainParams.from_percent(p, pct, d1=d1, d2=d2)
    return ReachQuery(HyperRect.from_bounds(lo, hi), ControlAction(u, delta), up, t_reach=t_reach)


def _sample_inside(rng, iv: Interval, n: int) -> np.ndarray:
    s = rng.uniform(iv.lo, iv.hi, n)
    # endpoints are where violations would show first
    s[: n // 8] = iv.lo
    s[n // 8: n // 4] = iv.hi
    rng.shuffle(s)
    return s


def simulate(queries, n_traj: int, dt: float, rng: np.random.Generator, t_reach: float):
    """RK4 trajectories for a batch of queries; yields ``(step, time, states)``.

    ``states`` has shape ``(len(queries), n_traj, 4)``.
    """
    Q = len(queries)
    x = np.empty((Q, n_traj, 4))
    pa = np.empty((Q, n_traj, 5))  # c_a, c_m, c_h, u_v, tan(delta)/L
    dlo = np.empty((Q, 2))
    dhi = np.empty((Q, 2))
    for i, q in enumerate(queries):
        box = q.init_set
        corners = min(16, n_traj)
        for d in range(4):
            x[i, :, d] = rng.uniform(box.dims[d].lo, box.dims[d].hi, n_traj)
        # start a few trajectories at box vertices
        for k in range(corners):
            for d in range(4):
                x[i, k, d] = box.dims[d].hi if (k >> d) & 1 else box.dims[d].lo
        up = q.params
        pa[i, :, 0] = _sample_inside(rng, up.c_a, n_traj)
        pa[i, :, 1] = _sample_inside(rng, up.c_m, n_traj)
        pa[i, :, 2] = _sample_inside(rng, up.c_h, n_traj)
        pa[i, :, 3] = q.action.u_v
        pa[i, :, 4] = q.action.delta
        dlo[i] = (up.d1.lo, up.d2.lo)
        dhi[i] = (up.d1.hi, up.d2.hi)
    wb = queries[0].params.wheelbase
    c_a, c_m, c_h, u_v, delta = (pa[..., j] for j in range(5))
    steps = int(round(t_reach / dt))
    hold = max(1, int(round(DISTURBANCE_HOLD / dt)))
    yield 0, 0.0, x
    for k in range(steps):
        if k % hold == 0:
            d1 = rng.uniform(dlo[:, None, 0], dhi[:, None, 0], (Q, n_traj))
            d2 = rng.uniform(dlo[:, None, 1], dhi[:, None, 1], (Q, n_traj))
        args = (u_v, delta, c_a, c_m, c_h, wb, d1, d2)
        k1 = bicycle_rhs(x, *args)
        k2 = bicycle_rhs(x + 0.5 * dt * k1, *args)
        k3 = bicycle_rhs(x + 0.5 * dt * k2, *args)
        k4 = bicycle_rhs(x + dt * k3, *args)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        yield k + 1, (k + 1) * dt, x


def pipe_stack(pipes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad flowpipes to a common length: bounds ``(Q, K, 4, 2)``, steps and counts."""
    kmax = max(len(p) for p in pipes)
    B = np.empty((len(pipes), kmax, 4, 2))
    for i, p in enumerate(pipes):
        B[i, :len(p)] = p.bounds
        B[i, len(p):] = p.bounds[-1]
    return B, np.array([p.h for p in pipes]), np.array([len(p) for p in pipes])


def _contained(x, B, hs, ks, t, slack):
    """Mask ``(Q, n)`` of samples inside the bracketing box (either one at a boundary)."""
    Q = x.shape[0]
    idx = np.minimum(np.floor(t / hs + 1e-9).astype(int), ks - 1)
    prev = np.clip(np.ceil(t / hs - 1e-9).astype(int) - 1, 0, ks - 1)
    ok = np.zeros(x.shape[:2], dtype=bool)
    for ii in (idx, prev):
        b = B[np.arange(Q), ii]  # (Q, 4, 2)
        lo = b[:, None, :, 0] - slack
        hi = b[:, None, :, 1] + slack
        inside = np.all((x[..., :3] >= lo[..., :3]) & (x[..., :3] <= hi[..., :3]), axis=-1)
        # heading modulo 2 pi: shift the sample into the box's window when possible
        th = x[..., 3]
        tlo, thi = lo[..., 3], hi[..., 3]
        k = np.floor((thi - th) / (2 * math.pi))
        th2 = th + 2 * math.pi * k
        inside &= (th2 >= tlo) | (thi - tlo >= 2 * math.pi)
        ok |= inside
    return ok


def check_pipes(queries, pipes, n_traj: int = 100, dt: float = 1e-3, seed: int = 0,
                slack: float = ORACLE_SLACK):
    """Count samples escaping their flowpipes; returns ``(samples, violations, worst, examples)``."""
    rng = np.random.default_rng(seed)
    B, hs, ks = pipe_stack(pipes)
    t_reach = queries[0].t_reach
    n_samples = 0
    bad = 0
    worst = 0.0
    examples = []
    for k, t, x in simulate(queries, n_traj, dt, rng, t_reach):
        ok = _contained(x, B, hs, ks, t, slack)
        n_samples += ok.size
        if not ok.all():
            qi, ti = np.nonzero(~ok)
            bad += qi.size
            for a, b in zip(qi[:5].tolist(), ti[:5].tolist()):
                i = min(int(t / hs[a]), ks[a] - 1)
                box = B[a, i]
                ex = float(np.max(np.maximum(box[:, 0] - x[a, b], x[a, b] - box[:, 1])))
                worst = max(worst, ex)
                if len(examples) < 10:
                    examples.append({"query": a, "t": t, "state": x[a, b].tolist(), "box": box.tolist()})
    return n_samples, bad, worst, examples


def run_soundness(n_queries: int = 1000, n_traj: int = 100, dt: float = 1e-3, seed: int = 0,
                  max_pct: float = 30.0, batch: int = 100, passes: str = "both") -> SoundnessReport:
    """Soundness corpus over random queries.

    ``passes`` selects which flowpipes are tested: the coarsest (``"first"``),
    the anytime result under a deterministic clock (``"final"``) or both.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    total = bad = 0
    worst = 0.0
    examples = []
    done = 0
    while done < n_queries:
        m = min(batch, n_queries - done)
        qs = [random_query(rng, max_pct) for _ in range(m)]
        groups = []
        if passes in ("first", "both"):
            groups.append([construct_flowpipe(q, q.h0)[0] for q in qs])
        if passes in ("final", "both"):
            groups.append([anytime_reach(q, None, clock=VirtualClock()).final_flowpipe for q in qs])
        for g, pipes in enumerate(groups):
            s, b, w, ex = check_pipes(qs, pipes, n_traj, dt, seed=seed * 1000 + done + g)
            total += s
            bad += b
            worst = max(worst, w)
            for e in ex:
                e["query"] += done
            examples.extend(ex[: max(0, 10 - len(examples))])
        done += m
    return SoundnessReport(n_queries, total, bad, time.perf_counter() - t0, worst, examples)

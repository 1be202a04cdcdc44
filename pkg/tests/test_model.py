import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reachguard.geom import GeometryError, HyperRect, Interval
from reachguard.model import (DELTA_MAX, PRESETS, BicycleParams, ControlAction, OpponentState, UncertainParams,
                              VehicleState, bicycle_deriv, bicycle_deriv_bounds, bicycle_rhs, clamp_steer,
                              opponent_deriv_bounds, preset)

SIM = preset("sim")

# independent evaluation in exact rationals of the speed equation at v=1, u=0
VDOT_ORACLE = float(-Fraction("1.9569") + Fraction("1.9569") * Fraction("0.0342") * Fraction("37.1967"))
VDOT_FROZEN = 0.5325256002660002


def test_presets_match_identified_values():
    assert (SIM.c_a, SIM.c_m, SIM.c_h, SIM.l_f, SIM.l_r) == (1.9569, 0.0342, -37.1967, 0.225, 0.225)
    hw = PRESETS["hardware"]
    assert (hw.c_a, hw.c_m, hw.c_h, hw.l_f, hw.l_r) == (2.9820, 0.0037, -222.1874, 0.225, 0.225)
    with pytest.raises(ValueError):
        preset("nope")


def test_deriv_examples():
    d = bicycle_deriv(VehicleState(0, 0, 1, 0), ControlAction(0.0, 0.0), SIM)
    assert d[0] == 1.0 and d[1] == 0.0 and d[3] == 0.0
    assert VDOT_ORACLE == pytest.approx(VDOT_FROZEN, rel=1e-15)
    assert d[2] == pytest.approx(VDOT_FROZEN, rel=1e-14)
    d = bicycle_deriv(VehicleState(0, 0, 0, 1.3), ControlAction(10.0, 0.3), SIM)
    assert d[0] == 0 and d[1] == 0 and d[3] == 0


def test_equilibrium_input_roundtrip():
    for v in (0.0, 0.3, 0.5, 1.5):
        u = SIM.equilibrium_input(v)
        assert SIM.equilibrium_speed(u) == pytest.approx(v, abs=1e-12)
        d = bicycle_deriv(VehicleState(0, 0, v, 0), ControlAction(u, 0.0), SIM)
        assert d[2] == pytest.approx(0.0, abs=1e-12)


def test_control_action_limits():
    with pytest.raises(ValueError):
        ControlAction(0.0, DELTA_MAX + 0.01)
    with pytest.raises(ValueError):
        ControlAction(math.nan, 0.0)
    assert clamp_steer(1.0) == DELTA_MAX and clamp_steer(-1.0) == -DELTA_MAX


def test_from_percent_is_relative():
    up = UncertainParams.from_percent(SIM, 10)
    assert up.c_a.lo == pytest.approx(1.9569 * 0.9) and up.c_a.hi == pytest.approx(1.9569 * 1.1)
    assert up.c_h.lo == pytest.approx(-37.1967 * 1.1) and up.c_h.hi == pytest.approx(-37.1967 * 0.9)
    assert up.contains(SIM)
    assert UncertainParams.exact(SIM).c_m.width == 0
    with pytest.raises(ValueError):
        UncertainParams.from_percent(SIM, -1)


def test_deriv_bounds_point_collapse():
    box = HyperRect.point([0, 0, 1, 0])
    b = bicycle_deriv_bounds(box, ControlAction(0.0, 0.0), UncertainParams.exact(SIM))
    d = bicycle_deriv(VehicleState(0, 0, 1, 0), ControlAction(0.0, 0.0), SIM)
    for iv, x in zip(b, d):
        assert iv.contains(x) and iv.width < 1e-12


def test_deriv_bounds_speed_dimension():
    box = HyperRect.from_bounds([0, 0, 0.9, 0], [0, 0, 1.1, 0])
    b = bicycle_deriv_bounds(box, ControlAction(0.0, 0.0), UncertainParams.exact(SIM))
    assert b[0].lo <= 0.9 and b[0].hi >= 1.1 and b[0].width - 0.2 < 1e-12
    with pytest.raises(GeometryError):
        bicycle_deriv_bounds(HyperRect.point([0, 0]), ControlAction(0, 0), UncertainParams.exact(SIM))


def test_widened_ca_strictly_contains_point_result():
    up = UncertainParams.from_percent(SIM, 0).widened(c_a=Interval.relative(SIM.c_a, 0.1))
    box = HyperRect.point([0, 0, 1, 0])
    vd = bicycle_deriv_bounds(box, ControlAction(0.0, 0.0), up)[2]
    point = bicycle_deriv(VehicleState(0, 0, 1, 0), ControlAction(0.0, 0.0), SIM)[2]
    assert vd.lo < point < vd.hi


def test_deriv_bounds_contain_brute_force_samples():
    rng = np.random.default_rng(3)
    up = UncertainParams.from_percent(SIM, 20, d1=0.2, d2=0.05)
    lo = np.array([-1.0, 2.0, 0.3, -2.5])
    hi = np.array([-0.5, 2.4, 1.4, -1.9])
    a = ControlAction(SIM.equilibrium_input(1.0), 0.25)
    b = bicycle_deriv_bounds(HyperRect.from_bounds(lo, hi), a, up)
    n = 10_000
    x = rng.uniform(lo, hi, (n, 4))
    arr = lambda iv: rng.uniform(iv.lo, iv.hi, n)
    d = bicycle_rhs(x, a.u_v, a.delta, arr(up.c_a), arr(up.c_m), arr(up.c_h), up.wheelbase, arr(up.d1), arr(up.d2))
    for i in range(4):
        assert np.all(d[:, i] >= b[i].lo) and np.all(d[:, i] <= b[i].hi)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 3), st.floats(-4, 4), st.floats(-20, 80),
       st.floats(-DELTA_MAX, DELTA_MAX))
def test_rhs_matches_scalar(x, y, v, th, u, delta):
    s = VehicleState(x, y, v, th)
    a = ControlAction(u, delta)
    d = bicycle_rhs(np.array(s.as_tuple()), u, delta, SIM.c_a, SIM.c_m, SIM.c_h, SIM.wheelbase)
    assert np.allclose(d, bicycle_deriv(s, a, SIM), rtol=1e-13, atol=1e-13)


def test_opponent_deriv_bounds_identity():
    ob = HyperRect.from_bounds([0, 0], [1, 1])
    v = (Interval(1, 1), Interval(0, 0))
    assert opponent_deriv_bounds(ob, v) == v
    v = (Interval(0.4, 0.6), Interval(-0.1, 0.1))
    assert opponent_deriv_bounds(ob, v) == v
    with pytest.raises(GeometryError):
        opponent_deriv_bounds(HyperRect.point([0, 0, 0]), v)


def test_opponent_state_validation():
    with pytest.raises(ValueError):
        OpponentState(0, 0, 0, 0, half_extent=0)
    with pytest.raises(ValueError):
        BicycleParams(c_a=-1, c_m=1, c_h=0)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reachguard.control import (DisparityExtenderController, LidarScan, Path, PurePursuitController,
                                ReplayController, SafetyController, SpeedGovernor, disparity_extender,
                                extend_disparities, forward_min, pure_pursuit, safety_controller, write_replay_log)
from reachguard.model import DELTA_MAX, ControlAction, VehicleState, bicycle_deriv, preset

SIM = preset("sim")
STRAIGHT = Path([(x, 0.0) for x in np.arange(0, 20, 0.5)], closed=False)


def scan_with(fn, n=1081):
    s = LidarScan.uniform(10.0, n)
    r = np.array([fn(a) for a in s.angles])
    return LidarScan(r)


def test_scan_validation_and_clipping():
    s = LidarScan(np.array([np.inf, -1.0, 3.0, 20.0]))
    assert s.ranges[0] == 10.0 and 0 < s.ranges[1] < 1e-3 and s.ranges[3] == 10.0
    with pytest.raises(ValueError):
        LidarScan(np.array([1.0]))


def test_path_validation():
    with pytest.raises(ValueError):
        Path([(0, 0)])
    with pytest.raises(ValueError):
        Path([(0, 0), (0, 0), (1, 0)], closed=False)
    p = Path([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert p.length == pytest.approx(4.0)
    assert p.point_at(4.5) == pytest.approx((0.5, 0.0))


def test_pure_pursuit_dead_ahead():
    assert pure_pursuit(VehicleState(2, 0, 1, 0), STRAIGHT).delta == 0.0


def test_pure_pursuit_lateral_goal_clamps():
    # a one-segment path whose lookahead point lies purely to the left
    path = Path([(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)], closed=False)
    cmd = pure_pursuit(VehicleState(0, 0, 1, 0), path, lookahead=1.0, wheelbase=0.45)
    assert math.atan(0.45 * 2 / 1) == pytest.approx(0.7328, abs=1e-4)
    assert cmd.delta == DELTA_MAX
    mirrored = Path([(0.0, 0.0), (0.0, -1.0), (0.0, -2.0)], closed=False)
    assert pure_pursuit(VehicleState(0, 0, 1, 0), mirrored, 1.0, 0.45).delta == -DELTA_MAX


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 15), st.floats(0.2, 3.0))
def test_pure_pursuit_straight_any_lookahead(x, la):
    assert pure_pursuit(VehicleState(x, 0, 1, 0), STRAIGHT, lookahead=la).delta == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-math.pi, math.pi))
def test_pure_pursuit_mirror(y, x, th):
    path = Path([(t, 0.5 * math.sin(t)) for t in np.arange(0, 20, 0.25)], closed=False)
    mpath = Path([(t, -0.5 * math.sin(t)) for t in np.arange(0, 20, 0.25)], closed=False)
    a = pure_pursuit(VehicleState(x + 5, y, 1, th), path)
    b = pure_pursuit(VehicleState(x + 5, -y, 1, -th), mpath)
    assert a.delta == pytest.approx(-b.delta, abs=1e-12)


def test_disparity_extender_uniform_scan_goes_straight():
    cmd = disparity_extender(LidarScan.uniform(5.0))
    assert cmd.delta == pytest.approx(0.0, abs=1e-12) and not cmd.stop


def test_disparity_extender_wall_on_right_turns_left():
    s = scan_with(lambda a: 0.8 if a < 0 else 5.0)
    assert disparity_extender(s).delta > 0


def test_extension_span_by_arc_length():
    # 10 beams over 90 degrees: near 1 m then far 5 m
    r = np.array([1.0] * 4 + [5.0] * 6)
    s = LidarScan(r, angle_min=-math.pi / 4, angle_max=math.pi / 4)
    ext = extend_disparities(s, car_half_width=0.25, disparity_threshold=0.5)
    # 0.25 m of arc at 1 m is 0.25 rad; beams are 10 degrees apart -> 2 beams
    m = math.ceil((0.25 / 1.0) / s.increment)
    assert m == 2
    assert np.all(ext[4:4 + m] == 1.0) and np.all(ext[4 + m:] == 5.0) and np.all(ext[:4] == 1.0)


def test_disparity_extender_stops_when_blocked():
    assert disparity_extender(LidarScan.uniform(1.0)).stop


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.05, 12), min_size=20, max_size=200))
def test_gap_follower_stateless_and_bounded(ranges):
    s = LidarScan(np.array(ranges))
    a, b = disparity_extender(s), disparity_extender(s)
    assert a == b and abs(a.delta) <= DELTA_MAX
    gov = SpeedGovernor(SIM)
    for c in (SafetyController(gov), DisparityExtenderController(gov, 1.0)):
        act = c.act(VehicleState(0, 0, 0.4, 0), s, 0.0)
        assert abs(act.delta) <= DELTA_MAX and math.isfinite(act.u_v)


def test_safety_controller_speed_and_stop():
    gov = SpeedGovernor(SIM)
    sc = SafetyController(gov)
    open_scan = LidarScan.uniform(8.0)
    a = sc.act(VehicleState(0, 0, 0.0, 0), open_scan, 0.0)
    assert SIM.equilibrium_speed(a.u_v) <= 0.3 + 1e-12
    ahead = lambda d: scan_with(lambda ang: d if abs(ang) < 0.05 else 8.0)
    assert safety_controller(ahead(0.4)).stop
    assert not safety_controller(ahead(0.6)).stop
    stop = sc.act(VehicleState(0, 0, 0.3, 0), ahead(0.4), 0.0)
    assert SIM.equilibrium_speed(stop.u_v) <= 0.0 + 1e-12
    moving = sc.act(VehicleState(0, 0, 0.2, 0), ahead(0.6), 0.0)
    assert 0 < SIM.equilibrium_speed(moving.u_v) <= 0.3 + 1e-12
    assert forward_min(ahead(0.6)) == pytest.approx(0.6)


def test_governor_settles_under_a_second():
    gov = SpeedGovernor(SIM)
    v, dt = 0.0, 1e-3
    for _ in range(1000):
        u = gov.throttle(v, 1.0)
        v += dt * bicycle_deriv(VehicleState(0, 0, v, 0), ControlAction(u, 0.0), SIM)[2]
    assert abs(v - 1.0) < 0.02


def test_replay_hold_last_and_errors(tmp_path):
    r = ReplayController([ControlAction(1.0, 0.1)])
    assert [r.act().delta for _ in range(3)] == [0.1, 0.1, 0.1]
    with pytest.raises(ValueError):
        ReplayController([])
    p = tmp_path / "log.jsonl"
    write_replay_log(p, [(0.0, ControlAction(2.0, 0.1)), (0.05, ControlAction(3.0, -0.2))])
    rr = ReplayController.from_jsonl(p)
    assert [rr.act() for _ in range(3)] == [ControlAction(2.0, 0.1), ControlAction(3.0, -0.2),
                                            ControlAction(3.0, -0.2)]


def test_pure_pursuit_controller_uses_governor():
    gov = SpeedGovernor(SIM)
    a = PurePursuitController(STRAIGHT, gov, 0.5).act(VehicleState(1, 0, 0.5, 0), None, 0.0)
    assert a.u_v == pytest.approx(SIM.equilibrium_input(0.5)) and a.delta == 0.0

import math

import numpy as np
import pytest

from auvstack import control as ctl
from auvstack import dynamics as dyn
from auvstack.frames import Pose, Twist, Wrench, quat_from_euler


# ---------------------------------------------------------------------------
# outer loop


def test_outer_zero_error_zero_velocity():
    gains = ctl.OuterLoopGains()
    pose = Pose(np.array([1.0, 2.0, 3.0]), quat_from_euler(0, 0, 0.5))
    out = ctl.outer_loop(pose, pose, gains)
    assert np.allclose(out.as_vector(), 0.0)


def test_outer_linear_region():
    gains = ctl.OuterLoopGains(kp=[0.5] * 6, velocity_limit=[1.0] * 6)
    ref = Pose(np.array([1.0, 0.0, 0.0]))
    est = Pose(np.zeros(3))
    out = ctl.outer_loop(ref, est, gains)
    assert out.linear[0] == pytest.approx(0.5)
    assert np.allclose(out.as_vector()[1:], 0.0)


def test_outer_saturates():
    gains = ctl.OuterLoopGains(kp=[0.5] * 6, velocity_limit=[1.0] * 6)
    ref = Pose(np.array([10.0, 0.0, 0.0]))
    out = ctl.outer_loop(ref, Pose(np.zeros(3)), gains)
    assert out.linear[0] == pytest.approx(1.0)


def test_outer_yaw_error_wraps():
    gains = ctl.OuterLoopGains(kp=[0, 0, 0, 0, 0, 1.0], velocity_limit=[1.0] * 6)
    ref = Pose(np.zeros(3), quat_from_euler(0, 0, math.pi - 0.1))
    est = Pose(np.zeros(3), quat_from_euler(0, 0, -math.pi + 0.1))
    out = ctl.outer_loop(ref, est, gains)
    # shortest way is -0.2 rad, not +2pi - 0.2
    assert out.angular[2] == pytest.approx(-0.2, abs=1e-9)


def test_outer_rotates_error_into_body():
    gains = ctl.OuterLoopGains(kp=[1, 1, 1, 0, 0, 0], velocity_limit=[5.0] * 6)
    ref = Pose(np.array([1.0, 0.0, 0.0]))
    est = Pose(np.zeros(3), quat_from_euler(0, 0, math.pi / 2))  # facing east
    out = ctl.outer_loop(ref, est, gains)
    # north error appears as negative sway in a body facing east
    assert out.linear[0] == pytest.approx(0.0, abs=1e-12)
    assert out.linear[1] == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# inner loop


def test_inner_zero_error_zero_output():
    pid = ctl.VelocityPid(ctl.PidGains())
    out = pid.step(Twist(), Twist(), 0.1)
    assert np.allclose(out.as_vector(), 0.0)


def test_inner_pure_p_with_zero_ki():
    gains = ctl.PidGains(kp=[10.0] * 6, ki=[0.0] * 6, kd=[0.0] * 6)
    pid = ctl.VelocityPid(gains)
    ref = Twist(np.array([0.3, 0.0, 0.0]), np.zeros(3))
    for _ in range(5):
        out = pid.step(ref, Twist(), 0.1)
    assert out.force[0] == pytest.approx(3.0)


def test_inner_integrator_clamped():
    gains = ctl.PidGains(kp=[0.0] * 6, ki=[10.0] * 6, kd=[0.0] * 6,
                         integrator_limit=[1.0] * 6, output_limit=[100.0] * 6)
    pid = ctl.VelocityPid(gains)
    ref = Twist(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    for _ in range(100):
        pid.step(ref, Twist(), 0.1)
    assert np.all(np.abs(pid.integrator) <= 1.0 + 1e-12)


def test_inner_antiwindup_freezes_when_saturated():
    gains = ctl.PidGains(kp=[100.0] * 6, ki=[10.0] * 6, kd=[0.0] * 6,
                         integrator_limit=[50.0] * 6, output_limit=[10.0] * 6)
    pid = ctl.VelocityPid(gains)
    ref = Twist(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    out = pid.step(ref, Twist(), 0.1)
    assert out.force[0] == pytest.approx(10.0)      # saturated
    assert pid.integrator[0] == pytest.approx(0.0)  # frozen, not wound up


def test_inner_requires_positive_dt():
    pid = ctl.VelocityPid(ctl.PidGains())
    with pytest.raises(ValueError):
        pid.step(Twist(), Twist(), 0.0)


def test_zero_gains_zero_output():
    zeros = [0.0] * 6
    gains = ctl.PidGains(kp=zeros, ki=zeros, kd=zeros)
    pid = ctl.VelocityPid(gains)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ref = Twist(rng.normal(size=3), rng.normal(size=3))
        meas = Twist(rng.normal(size=3), rng.normal(size=3))
        assert np.allclose(pid.step(ref, meas, 0.1).as_vector(), 0.0)
    outer = ctl.OuterLoopGains(kp=zeros, velocity_limit=[1.0] * 6)
    out = ctl.outer_loop(Pose(np.array([5, 5, 5.0])), Pose(np.zeros(3)), outer)
    assert np.allclose(out.as_vector(), 0.0)


def test_closed_loop_surge_step_response():
    # 0.3 m/s surge step against the default vehicle with shipped gains
    params = dyn.default_vehicle()
    model = dyn.RigidBodyModel(params)
    env = dyn.Environment()
    allocator = ctl.Allocator(model.mixer, params.max_thrusts)
    pid = ctl.VelocityPid(ctl.PidGains())
    state = dyn.SimState(Pose(np.array([0.0, 0.0, 5.0])), Twist())
    dt = 0.02
    ref = Twist(np.array([0.3, 0.0, 0.0]), np.zeros(3))
    history = []
    for k in range(int(15.0 / dt)):
        wrench = pid.step(ref, state.twist, dt)
        thrusts = allocator.allocate(wrench)
        state = model.step(state, thrusts, env, dt)
        history.append(state.twist.linear[0])
    history = np.array(history)
    # settles within 5% inside 10 s
    settled = history[int(10.0 / dt):]
    assert np.all(np.abs(settled - 0.3) < 0.05 * 0.3)
    assert history.max() < 0.3 * 1.2  # overshoot < 20%


# ---------------------------------------------------------------------------
# allocation


def test_allocate_zero_wrench():
    params = dyn.default_vehicle()
    b = dyn.mixer_matrix(params)
    u = ctl.allocate(Wrench(), b, params.max_thrusts)
    assert np.allclose(u, 0.0)


def test_allocate_residual_and_limits():
    params = dyn.default_vehicle()
    b = dyn.mixer_matrix(params)
    allocator = ctl.Allocator(b, params.max_thrusts)
    rng = np.random.default_rng(8)
    for _ in range(500):
        tau = rng.uniform(-1, 1, 6) * np.array([30.0, 30.0, 40.0, 3.0, 3.0, 5.0])
        u = allocator.allocate(Wrench.from_vector(tau))
        assert np.all(np.abs(u) <= params.max_thrusts + 1e-12)
        if np.max(np.abs(np.linalg.pinv(b) @ tau) / params.max_thrusts) <= 1.0:
            assert np.linalg.norm(b @ u - tau) < 1e-9


def test_allocate_scales_direction_preserving():
    params = dyn.default_vehicle()
    b = dyn.mixer_matrix(params)
    # find a wrench that demands exactly 2x the limit on some thruster
    tau = np.array([0.0, 0.0, -320.0, 0.0, 0.0, 0.0])  # heave needs 80 N each
    u = ctl.allocate(Wrench.from_vector(tau), b, params.max_thrusts)
    realized = b @ u
    assert np.max(np.abs(u)) == pytest.approx(40.0)
    # direction preserved, magnitude halved
    assert np.allclose(realized, tau / 2.0, atol=1e-9)


def test_allocate_rejects_nonfinite_and_bad_rank():
    params = dyn.default_vehicle()
    b = dyn.mixer_matrix(params)
    with pytest.raises(ValueError):
        ctl.allocate(Wrench(force=np.array([np.nan, 0, 0])), b, params.max_thrusts)
    with pytest.raises(ValueError):
        ctl.allocate(Wrench(), b[:, :4] @ np.zeros((4, 8)), params.max_thrusts)


def test_setpoint_mode_validation():
    pose = Pose()
    sp = ctl.position_setpoint(pose)
    assert sp.mode is ctl.SetpointMode.POSITION and sp.pose is pose
    with pytest.raises(ValueError):
        ctl.ControlSetpoint(ctl.SetpointMode.POSITION, twist=Twist())
    with pytest.raises(ValueError):
        ctl.ControlSetpoint(ctl.SetpointMode.WRENCH, pose=pose)

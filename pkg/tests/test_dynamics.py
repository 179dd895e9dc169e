import math

import numpy as np
import pytest

from auvstack import dynamics as dyn
from auvstack import frames as fr


def neutral_vehicle(**overrides):
    base = dyn.default_vehicle()
    kwargs = dict(
        mass=base.mass,
        inertia=base.inertia,
        added_mass=base.added_mass,
        damping_linear=base.damping_linear,
        damping_quadratic=base.damping_quadratic,
        weight=base.weight,
        buoyancy=base.weight,  # neutral
        cob_offset=np.zeros(3),
        thrusters=base.thrusters,
    )
    kwargs.update(overrides)
    return dyn.VehicleParams(**kwargs)


def rest_state():
    return dyn.SimState(fr.Pose(np.array([0.0, 0.0, 5.0])), fr.Twist())


def still_water():
    return dyn.Environment(current=np.zeros(3))


# ---------------------------------------------------------------------------
# mixer


def test_mixer_default_rank_and_shape():
    b = dyn.mixer_matrix(dyn.default_vehicle())
    assert b.shape == (6, 8)
    # SVD oracle: all six singular values clearly non-zero
    sv = np.linalg.svd(b, compute_uv=False)
    assert sv[5] > 1e-3


def test_mixer_single_thruster_column():
    b = dyn.mixer_from_thrusters([dyn.Thruster((0, 0, 0), (1, 0, 0), 10.0)])
    assert np.allclose(b[:, 0], [1, 0, 0, 0, 0, 0])


def test_mixer_vertical_quad_pure_heave():
    b = dyn.mixer_matrix(dyn.default_vehicle())
    u = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
    tau = b @ u
    assert np.allclose(tau, [0, 0, -4, 0, 0, 0], atol=1e-12)  # zero net moment


def test_mixer_rejects_rank_deficient():
    # all eight thrusters vertical: no surge/sway/yaw authority
    th = [dyn.Thruster((0.1 * i, 0.0, 0.0), (0.0, 0.0, -1.0), 10.0) for i in range(8)]
    base = dyn.default_vehicle()
    with pytest.raises(dyn.InvalidVehicleError):
        dyn.VehicleParams(
            mass=base.mass, inertia=base.inertia, added_mass=base.added_mass,
            damping_linear=base.damping_linear, damping_quadratic=base.damping_quadratic,
            weight=base.weight, buoyancy=base.buoyancy, cob_offset=base.cob_offset,
            thrusters=tuple(th),
        )
    b = dyn.mixer_from_thrusters(th)
    assert np.linalg.matrix_rank(b) < 6


def test_vehicle_params_requires_eight_thrusters():
    base = dyn.default_vehicle()
    with pytest.raises(dyn.InvalidVehicleError):
        neutral_vehicle(thrusters=base.thrusters[:7])


# ---------------------------------------------------------------------------
# restoring wrench


def test_restoring_neutral_level_is_zero():
    w = dyn.restoring_wrench(fr.Pose(), neutral_vehicle())
    assert np.allclose(w.force, 0.0, atol=1e-12)
    assert np.allclose(w.torque, 0.0, atol=1e-12)


def test_restoring_roll_moment_opposes_roll():
    params = neutral_vehicle(buoyancy=120.0, weight=120.0, cob_offset=np.array([0.0, 0.0, -0.05]))
    pose = fr.Pose(orientation=fr.quat_from_euler(math.pi / 2, 0.0, 0.0))
    w = dyn.restoring_wrench(pose, params)
    assert w.torque[0] == pytest.approx(-6.0, rel=1e-9)  # opposes +roll


def test_restoring_buoyant_force_up():
    params = neutral_vehicle(buoyancy=neutral_vehicle().weight + 2.0)
    w = dyn.restoring_wrench(fr.Pose(), params)
    assert np.allclose(w.force, [0.0, 0.0, -2.0], atol=1e-12)
    assert np.allclose(w.torque, 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# step


def test_step_at_rest_is_equilibrium():
    params = neutral_vehicle()
    state = rest_state()
    out = dyn.step(state, np.zeros(8), still_water(), params, 0.02)
    assert np.allclose(out.pose.position, state.pose.position, atol=1e-15)
    assert np.allclose(out.twist.as_vector(), 0.0, atol=1e-15)
    assert out.time == pytest.approx(0.02)


def test_step_rejects_bad_dt_and_nonfinite():
    params = neutral_vehicle()
    state = rest_state()
    with pytest.raises(ValueError):
        dyn.step(state, np.zeros(8), still_water(), params, 0.0)
    with pytest.raises(ValueError):
        dyn.step(state, np.zeros(8), still_water(), params, 0.2)
    bad = np.zeros(8)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        dyn.step(state, bad, still_water(), params, 0.02)
    with pytest.raises(ValueError):
        dyn.step(state, np.full(8, 1e3), still_water(), params, 0.02)


def test_terminal_heave_speed_matches_closed_form():
    # pure quadratic damping: terminal speed sqrt(F/k)
    k = 37.0
    params = neutral_vehicle(
        damping_linear=np.zeros(6),
        damping_quadratic=np.array([0.0, 0.0, k, 0.0, 0.0, 0.0]),
    )
    force = 20.0
    thrusts = np.array([0, 0, 0, 0, -force / 4, -force / 4, -force / 4, -force / 4])
    state = rest_state()
    env = still_water()
    for _ in range(int(60.0 / 0.02)):
        state = dyn.step(state, thrusts, env, params, 0.02)
    expected = math.sqrt(force / k)
    assert state.twist.linear[2] == pytest.approx(expected, rel=0.01)


def test_rk4_against_fine_euler_oracle():
    params = dyn.default_vehicle()
    model = dyn.RigidBodyModel(params)
    env = dyn.Environment(current=np.array([0.05, -0.02, 0.0]))
    thrusts = np.array([3.0, 2.5, 2.0, 2.5, -1.0, -1.0, -1.2, -0.8])

    state = rest_state()
    for _ in range(int(5.0 / 0.02)):
        state = model.step(state, thrusts, env, 0.02)

    # explicit-Euler oracle on the same derivative at dt = 1e-5
    y = np.concatenate([np.array([0.0, 0.0, 5.0]), fr.quat_identity(), np.zeros(6)])
    tau_thrust = model.mixer @ thrusts
    current = tuple(env.current)
    h = 1e-5
    for _ in range(int(5.0 / h)):
        y = y + h * model._derivative(y, tau_thrust, current)
        y[3:7] /= np.linalg.norm(y[3:7])
    assert np.linalg.norm(state.pose.position - y[:3]) < 1e-3


def test_linear_momentum_conserved_without_forces():
    # pure rigid body: no damping, no added mass, neutral, no current
    params = neutral_vehicle(
        added_mass=np.zeros(6),
        damping_linear=np.zeros(6),
        damping_quadratic=np.zeros(6),
    )
    model = dyn.RigidBodyModel(params)
    state = dyn.SimState(
        fr.Pose(np.array([0.0, 0.0, 5.0]), fr.quat_from_euler(0.1, -0.05, 0.4)),
        fr.Twist(np.array([0.4, -0.2, 0.1]), np.array([0.05, -0.1, 0.2])),
    )
    env = still_water()

    def momentum(s):
        r = fr.rotation_matrix(s.pose.orientation)
        return params.mass * (r @ s.twist.linear)

    p0 = momentum(state)
    for _ in range(int(10.0 / 0.02)):
        state = model.step(state, np.zeros(8), env, 0.02)
    assert np.linalg.norm(momentum(state) - p0) / np.linalg.norm(p0) < 1e-6


def test_quadratic_damping_dissipates_energy():
    params = neutral_vehicle(damping_linear=np.zeros(6))
    model = dyn.RigidBodyModel(params)
    state = dyn.SimState(
        fr.Pose(np.array([0.0, 0.0, 5.0])),
        fr.Twist(np.array([0.8, -0.5, 0.3]), np.array([0.2, -0.3, 0.5])),
    )
    env = still_water()

    def energy(s):
        nu = s.twist.as_vector()
        return 0.5 * nu @ model.m_total @ nu

    e = energy(state)
    for _ in range(500):
        state = model.step(state, np.zeros(8), env, 0.02)
        e_next = energy(state)
        assert e_next <= e + 1e-12
        e = e_next


def test_step_deterministic_and_time_invariant():
    params = dyn.default_vehicle()
    env = dyn.Environment(current=np.array([0.1, 0.0, 0.0]))
    thrusts = np.array([1.0, -1.0, 0.5, 0.2, -0.4, 0.4, -0.1, 0.3])
    s0 = dyn.SimState(
        fr.Pose(np.array([1.0, 2.0, 3.0]), fr.quat_from_euler(0.0, 0.1, -0.4)),
        fr.Twist(np.array([0.2, 0.0, -0.1]), np.array([0.0, 0.05, 0.1])),
        time=0.0,
    )
    a = dyn.step(s0, thrusts, env, params, 0.02)
    b = dyn.step(s0.copy(), thrusts, env, params, 0.02)
    assert np.array_equal(a.pose.position, b.pose.position)
    assert np.array_equal(a.pose.orientation, b.pose.orientation)
    assert np.array_equal(a.twist.as_vector(), b.twist.as_vector())

    shifted = s0.copy()
    shifted.time = 1234.5
    c = dyn.step(shifted, thrusts, env, params, 0.02)
    assert np.array_equal(c.pose.position, a.pose.position)
    assert c.time == pytest.approx(1234.52)


def test_thruster_lag_tracks_and_saturates():
    params = dyn.default_vehicle()
    lag = dyn.ThrusterLag(params)
    cmd = np.full(8, 100.0)  # beyond the 40 N limit
    out = None
    for _ in range(200):
        out = lag.advance(cmd, 0.02)
    assert np.allclose(out, params.max_thrusts, atol=1e-3)
    # one time constant reaches ~63% of a step
    lag = dyn.ThrusterLag(params)
    steps = int(params.thruster_time_constant / 0.02)
    for _ in range(steps):
        out = lag.advance(np.full(8, 10.0), 0.02)
    assert out[0] == pytest.approx(10.0 * (1 - math.exp(-1.0)), rel=1e-6)

"""Trajectory smoothness and closed-form checks on the tracking controller."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotorfdi.control import (
    Controller,
    ControllerParams,
    Trajectory,
    control_step,
)
from rotorfdi.rotations import R_from_euler_zyx
from rotorfdi.vehicle import VehicleParams

E3 = np.array([0.0, 0.0, 1.0])


def _sample(traj, ts):
    out = [traj.reference(t) for t in ts]
    p = np.array([o[0] for o in out])
    v = np.array([o[1] for o in out])
    a = np.array([o[2] for o in out])
    return p, v, a


ALL_KINDS = [
    Trajectory(kind="line", direction=(1.0, 0.5), speed=0.6, climb=0.1),
    Trajectory(kind="helicoid", radius=1.0, speed=0.5, climb=0.1),
    Trajectory(kind="figure8", width=2.0, depth=1.0, speed=0.5, climb=0.05),
    Trajectory(kind="square", side=2.0, speed=0.5),
]


@pytest.mark.parametrize("traj", ALL_KINDS, ids=lambda t: t.kind)
def test_references_are_c2(traj):
    # central differences of p must reproduce v and a across ramp ends,
    # square corners and generic interior points
    h = 1e-4
    probes = [0.5, 3.999, 4.0, 4.001, 7.3, 8.0, 11.97, 12.0, 16.0, 23.5]
    for t in probes:
        ts = np.array([t - h, t, t + h])
        if ts[0] < 0.0:
            continue
        p, v, a = _sample(traj, ts)
        v_fd = (p[2] - p[0]) / (2.0 * h)
        a_fd = (p[2] - 2.0 * p[1] + p[0]) / h**2
        np.testing.assert_allclose(v_fd, v[1], rtol=0, atol=5e-6)
        np.testing.assert_allclose(a_fd, a[1], rtol=0, atol=5e-4)


@pytest.mark.parametrize("traj", ALL_KINDS, ids=lambda t: t.kind)
def test_start_at_origin_at_rest(traj):
    p, v, a, yaw = traj.reference(0.0)
    assert np.all(p == 0.0)
    assert np.all(v == 0.0)
    assert np.all(a == 0.0)
    assert yaw == 0.0


def test_line_constant_velocity_after_ramp():
    traj = ALL_KINDS[0]
    d = np.array([1.0, 0.5]) / np.hypot(1.0, 0.5)
    want = np.array([d[0] * 0.6, d[1] * 0.6, -0.1])
    for t in (4.0, 7.1, 30.0):
        _, v, a, _ = traj.reference(t)
        np.testing.assert_allclose(v, want, rtol=1e-12)
        np.testing.assert_allclose(a, 0.0, atol=1e-15)


def test_helicoid_geometry():
    traj = ALL_KINDS[1]
    for t in (5.0, 9.7, 20.0):
        p, v, _, _ = traj.reference(t)
        s = t - 2.0  # warp absorbs half the 4 s ramp
        # circle of radius 1 centered at (-1, 0); tangential speed 0.5
        assert np.hypot(p[0] + 1.0, p[1]) == pytest.approx(1.0, rel=1e-12)
        assert np.hypot(v[0], v[1]) == pytest.approx(0.5, rel=1e-12)
        assert p[2] == pytest.approx(-0.1 * s, rel=1e-12)


def test_square_stops_at_corners():
    traj = ALL_KINDS[3]
    t_leg = 2.0 / 0.5
    corners = [(0, 0), (2, 0), (2, 2), (0, 2), (0, 0)]
    for k, (cx, cy) in enumerate(corners):
        p, v, a, _ = traj.reference(k * t_leg)
        np.testing.assert_allclose(p, [cx, cy, 0.0], atol=1e-12)
        np.testing.assert_allclose(v, 0.0, atol=1e-12)
        np.testing.assert_allclose(a, 0.0, atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(kind="spiral")
    with pytest.raises(ValueError):
        Trajectory(speed=0.0)
    with pytest.raises(ValueError):
        Trajectory(kind="line", direction=(0.0, 0.0)).params_array()
    with pytest.raises(ValueError):
        Trajectory().reference(-0.1)


def _hover_setup():
    veh = VehicleParams()
    ctl = Controller(veh)
    kw = dict(p_m=np.zeros(3), v_m=np.zeros(3), r_m=np.eye(3),
              om_m=np.zeros(3), p_r=np.zeros(3), v_r=np.zeros(3),
              a_r=np.zeros(3), yaw_r=0.0, dt=0.005)
    return veh, ctl, kw


def test_equilibrium_wrench_is_weight():
    veh, ctl, kw = _hover_setup()
    w = ctl.step(**kw)
    m = veh.total_mass_nominal()
    np.testing.assert_allclose(w.tau, [0, 0, -m * veh.g, 0, 0, 0],
                               atol=1e-12)
    assert ctl.thrust_clips == 0


def test_free_fall_reference_zero_thrust():
    veh, ctl, kw = _hover_setup()
    kw["a_r"] = np.array([0.0, 0.0, veh.g])
    w = ctl.step(**kw)
    np.testing.assert_allclose(w.tau, 0.0, atol=1e-9)


def test_position_offset_tilts_thrust_toward_target():
    veh, ctl, kw = _hover_setup()
    kw["p_r"] = np.array([0.5, 0.0, 0.0])
    w = ctl.step(**kw)
    # while still level only the weight projects on body z; the pitch
    # moment (negative about y) is what tips the thrust toward +x
    assert -w.tau[2] == pytest.approx(veh.total_mass_nominal() * veh.g)
    assert w.tau[4] < 0.0
    assert abs(w.tau[3]) < 1e-12 and abs(w.tau[5]) < 1e-12
    # once tilted as demanded, the same offset yields more than hover thrust
    ang = np.arctan2(2.0, veh.g)  # kp * 0.5 m -> 2 m/s^2 sideways
    kw["r_m"] = R_from_euler_zyx(0.0, -ang, 0.0)
    ctl.reset()
    w2 = ctl.step(**kw)
    assert -w2.tau[2] > veh.total_mass_nominal() * veh.g


def test_large_offset_saturates_tilt():
    veh, ctl, kw = _hover_setup()
    c = ctl.params
    kw["p_r"] = np.array([50.0, 0.0, 0.0])
    ctl.step(**kw)
    # recover z_des from the torque-free equilibrium: integrate attitude
    # is overkill; instead check through the kernel's desired rotation by
    # demanding the same offset direction at a tilted current attitude
    r_tilt = R_from_euler_zyx(0.0, -c.tilt_max, 0.0)
    kw["r_m"] = r_tilt
    ctl.reset()
    w = ctl.step(**kw)
    # at exactly the clamped tilt the attitude error torque vanishes
    assert abs(w.tau[4]) < 0.05 * c.k_r * max(veh.i0_diag)


def test_pure_yaw_produces_only_tau_z():
    veh, ctl, kw = _hover_setup()
    kw["yaw_r"] = 0.3
    w = ctl.step(**kw)
    m = veh.total_mass_nominal()
    assert w.tau[2] == pytest.approx(-m * veh.g, rel=1e-12)
    assert abs(w.tau[3]) < 1e-12 and abs(w.tau[4]) < 1e-12
    assert w.tau[5] > 0.0


def test_thrust_clamp_counts_and_logs():
    veh, ctl, kw = _hover_setup()
    kw["a_r"] = np.array([0.0, 0.0, -60.0])  # demand ~6 g upward
    w = ctl.step(**kw)
    assert w.tau[2] == pytest.approx(-veh.n_rotors * veh.u_max)
    assert ctl.thrust_clips == 1
    ctl.step(**kw)
    assert ctl.thrust_clips == 2


def test_integral_backward_euler_and_clamp():
    veh, ctl, kw = _hover_setup()
    kw["p_r"] = np.array([1.0, 0.0, 0.0])
    ctl.step(**kw)
    assert ctl.integ[0] == pytest.approx(0.005)
    for _ in range(1000):
        ctl.step(**kw)
    assert ctl.integ[0] == pytest.approx(ctl.params.i_max)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_wrench_finite_and_tilt_clamped(data):
    f = st.floats(-20.0, 20.0)
    vec = lambda: np.array(data.draw(st.tuples(f, f, f)))
    veh = VehicleParams()
    c = ControllerParams()
    ypr = data.draw(st.tuples(st.floats(-3.0, 3.0), st.floats(-1.4, 1.4),
                              st.floats(-3.0, 3.0)))
    r_m = R_from_euler_zyx(*ypr)
    integ = np.array(data.draw(st.tuples(st.floats(-2, 2), st.floats(-2, 2),
                                         st.floats(-2, 2))))
    tau, _ = control_step(
        vec(), vec(), r_m, vec() * 0.2, integ, vec(), vec(), vec(),
        data.draw(st.floats(-3.0, 3.0)), 0.005,
        c.kp, c.kd, c.ki, c.i_max, c.tilt_max, c.k_r, c.k_w,
        c.k_r_yaw, c.k_w_yaw,
        veh.total_mass_nominal(), veh.g, np.asarray(veh.i0_diag),
        veh.n_rotors * veh.u_max)
    assert np.all(np.isfinite(tau))
    assert tau[0] == 0.0 and tau[1] == 0.0
    assert -veh.n_rotors * veh.u_max - 1e-12 <= tau[2] <= 0.0
    assert np.all(np.abs(integ) <= c.i_max + 1e-12)


def test_outer_loop_settles_on_design_model():
    # the outer loop is designed against p_ddot = a_des; close that loop
    # directly (a_des = g e3 - t_e / m) and check the step response settles
    from rotorfdi.control import _outer_loop

    veh = VehicleParams()
    c = ControllerParams()
    m = veh.total_mass_nominal()
    dt = 0.005
    p = np.zeros(3)
    v = np.zeros(3)
    integ = np.zeros(3)
    target = np.array([1.0, -0.5, -0.5])
    err = []
    for _ in range(4000):
        t_e, _ = _outer_loop(p, v, integ, target, np.zeros(3), np.zeros(3),
                             0.0, dt, c.kp, c.kd, c.ki, c.i_max, c.tilt_max,
                             m, veh.g)
        a_des = veh.g * E3 - t_e / m
        v = v + a_des * dt
        p = p + v * dt
        err.append(np.linalg.norm(p - target))
    assert err[-1] < 1e-3
    # slowest closed-loop pole is -0.38 (time constant 2.6 s)
    assert max(err[3000:]) < 0.01

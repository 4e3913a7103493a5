"""Reference trajectories and the double-loop tracking controller.

Four trajectory families — straight line, ascending helicoid, ascending
figure-eight and a flat square — all produce twice continuously
differentiable references. The periodic families are driven through a warped
path time ``s(t)`` whose rate ramps from 0 to 1 with a quintic smoothstep
over ``t_ramp`` seconds, so every flight starts at rest without acceleration
jumps. The square instead chains minimum-jerk legs that stop at each corner,
which gives the same C^2 guarantee leg by leg.

Control is a standard double loop. The outer position loop is a PID with
gravity feed-forward producing a desired acceleration, hence a desired
thrust vector ``t_E = m (g e3 - a_des)`` in earth coordinates; total thrust
is the projection of ``t_E`` on the current body z axis and the desired
attitude aligns body z with ``t_E`` at the reference yaw. The inner loop
feedback-linearizes the rotational dynamics about the nominal frame inertia
``I0``: ``tau = I0 (-k_r e_R - k_w omega) + omega x I0 omega`` with the usual
rotation-matrix error ``e_R = 0.5 vee(R_des^T R - R^T R_des)``.

The wrench handed to allocation keeps the in-plane force rows at zero —
a coplanar vehicle cannot realize them — so it is always
``(0, 0, -T, tau_x, tau_y, tau_z)``. Thrust demands beyond the combined
rotor capability are clamped and counted, never raised mid-flight.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

# Trajectory kind codes shared with the jitted flight loop.
TRAJ_LINE = 0
TRAJ_HELICOID = 1
TRAJ_FIGURE8 = 2
TRAJ_SQUARE = 3

_KIND_CODES = {
    "line": TRAJ_LINE,
    "helicoid": TRAJ_HELICOID,
    "figure8": TRAJ_FIGURE8,
    "square": TRAJ_SQUARE,
}

# Layout of the packed trajectory parameter vector.
_T_RAMP = 0     # warm-up duration [s]
_T_YAWRATE = 1  # yaw rate along the path [rad/s]
_T_CLIMB = 2    # ascent rate, positive up [m/s]
_T_SPEED = 3    # horizontal path speed [m/s]
_T_A = 4        # radius / amplitude / side / direction-x [m]
_T_B = 5        # secondary amplitude / direction-y [m]
N_TRAJ_PARAMS = 6


class ThrustOutOfRange(RuntimeError):
    """Total thrust demand exceeded the combined rotor capability."""


@njit(cache=True)
def _warp(t, t_ramp):
    """Warped path time: s' ramps 0 -> 1 with a quintic smoothstep.

    Returns (s, s', s''). For t >= t_ramp the warp is the identity shifted
    by the half ramp it absorbed, s = t - t_ramp / 2.
    """
    if t_ramp <= 0.0 or t >= t_ramp:
        return t - 0.5 * t_ramp, 1.0, 0.0
    x = t / t_ramp
    # integral of 6x^5 - 15x^4 + 10x^3 is x^6 - 3x^5 + 2.5x^4
    s = t_ramp * (((x - 3.0) * x + 2.5) * x * x * x * x)
    sdot = ((6.0 * x - 15.0) * x + 10.0) * x * x * x
    sddot = (((30.0 * x - 60.0) * x + 30.0) * x * x) / t_ramp
    return s, sdot, sddot


@njit(cache=True)
def _minjerk(x):
    """Minimum-jerk blend q, q', q'' on [0, 1] (rest-to-rest)."""
    q = ((6.0 * x - 15.0) * x + 10.0) * x * x * x
    qd = ((30.0 * x - 60.0) * x + 30.0) * x * x
    qdd = ((120.0 * x - 180.0) * x + 60.0) * x
    return q, qd, qdd


@njit(cache=True)
def reference(kind, tp, t):
    """Reference position, velocity, acceleration and yaw at time t.

    ``kind`` is one of the TRAJ_* codes and ``tp`` the packed parameter
    vector. All trajectories start at the origin with zero velocity; earth
    coordinates are NED so ascending means decreasing z.
    """
    p = np.zeros(3)
    v = np.zeros(3)
    a = np.zeros(3)

    if kind == TRAJ_SQUARE:
        # Minimum-jerk legs +x, +y, -x, -y stopping at every corner.
        L = tp[_T_A]
        t_leg = L / tp[_T_SPEED]
        leg = int(t // t_leg)
        x = (t - leg * t_leg) / t_leg
        q, qd, qdd = _minjerk(x)
        cx = np.array([0.0, L, L, 0.0])
        cy = np.array([0.0, 0.0, L, L])
        dx = np.array([1.0, 0.0, -1.0, 0.0])
        dy = np.array([0.0, 1.0, 0.0, -1.0])
        i = leg % 4
        p[0] = cx[i] + dx[i] * L * q
        p[1] = cy[i] + dy[i] * L * q
        v[0] = dx[i] * L * qd / t_leg
        v[1] = dy[i] * L * qd / t_leg
        a[0] = dx[i] * L * qdd / (t_leg * t_leg)
        a[1] = dy[i] * L * qdd / (t_leg * t_leg)
        yaw = tp[_T_YAWRATE] * t
        return p, v, a, yaw

    s, sd, sdd = _warp(t, tp[_T_RAMP])
    c = tp[_T_CLIMB]
    p[2] = -c * s
    v[2] = -c * sd
    a[2] = -c * sdd

    if kind == TRAJ_LINE:
        ux, uy, sp = tp[_T_A], tp[_T_B], tp[_T_SPEED]
        p[0] = ux * sp * s
        p[1] = uy * sp * s
        v[0] = ux * sp * sd
        v[1] = uy * sp * sd
        a[0] = ux * sp * sdd
        a[1] = uy * sp * sdd
    elif kind == TRAJ_HELICOID:
        R = tp[_T_A]
        nu = tp[_T_SPEED] / R
        ph = nu * s
        # circle through the origin, centered at (-R, 0)
        p[0] = R * (np.cos(ph) - 1.0)
        p[1] = R * np.sin(ph)
        v[0] = -R * nu * np.sin(ph) * sd
        v[1] = R * nu * np.cos(ph) * sd
        a[0] = -R * nu * (nu * np.cos(ph) * sd * sd + np.sin(ph) * sdd)
        a[1] = R * nu * (np.cos(ph) * sdd - nu * np.sin(ph) * sd * sd)
    else:  # TRAJ_FIGURE8
        A, B = tp[_T_A], tp[_T_B]
        nu = tp[_T_SPEED] / A
        p[0] = A * np.sin(nu * s)
        p[1] = B * np.sin(2.0 * nu * s)
        v[0] = A * nu * np.cos(nu * s) * sd
        v[1] = 2.0 * B * nu * np.cos(2.0 * nu * s) * sd
        a[0] = A * nu * (np.cos(nu * s) * sdd - nu * np.sin(nu * s) * sd * sd)
        a[1] = 2.0 * B * nu * (np.cos(2.0 * nu * s) * sdd
                               - 2.0 * nu * np.sin(2.0 * nu * s) * sd * sd)

    yaw = tp[_T_YAWRATE] * s
    return p, v, a, yaw


@dataclass(frozen=True)
class Trajectory:
    """One reference trajectory; all families start at the origin at rest.

    speed is the horizontal path speed, climb the ascent rate (positive up,
    ignored by the flat square), radius the helicoid radius, width/depth the
    figure-eight amplitudes along x/y, side the square edge length. The yaw
    reference is yaw_rate times the path time (warped, except for the
    square whose legs already start and stop at rest).
    """

    kind: str = "helicoid"
    speed: float = 0.4        # [m/s]
    climb: float = 0.1        # [m/s]
    radius: float = 1.0       # [m]
    width: float = 2.0        # [m]
    depth: float = 1.0        # [m]
    side: float = 2.0         # [m]
    direction: tuple = (1.0, 0.0)
    yaw_rate: float = 0.0     # [rad/s]
    t_ramp: float = 4.0       # [s]

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError("unknown trajectory kind %r" % (self.kind,))
        if self.speed <= 0.0:
            raise ValueError("speed must be positive")
        for name in ("radius", "width", "depth", "side"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be positive" % name)

    @property
    def kind_code(self):
        return _KIND_CODES[self.kind]

    def params_array(self):
        """Packed parameter vector consumed by the jitted kernels."""
        tp = np.zeros(N_TRAJ_PARAMS)
        tp[_T_RAMP] = self.t_ramp
        tp[_T_YAWRATE] = self.yaw_rate
        tp[_T_CLIMB] = self.climb
        tp[_T_SPEED] = self.speed
        if self.kind == "line":
            d = np.asarray(self.direction, dtype=float)
            n = np.hypot(d[0], d[1])
            if n < 1e-12:
                raise ValueError("line direction must be nonzero")
            tp[_T_A] = d[0] / n
            tp[_T_B] = d[1] / n
        elif self.kind == "helicoid":
            tp[_T_A] = self.radius
        elif self.kind == "figure8":
            tp[_T_A] = self.width
            tp[_T_B] = self.depth
        else:
            tp[_T_A] = self.side
        return tp

    def reference(self, t):
        """(p_ref, v_ref, a_ref, yaw_ref) at time t >= 0."""
        if t < 0.0:
            raise ValueError("t must be nonnegative")
        return reference(self.kind_code, self.params_array(), t)


@dataclass(frozen=True)
class ControllerParams:
    """Gains for the double-loop tracking controller.

    The outer position loop places its closed-loop poles through
    kp, kd, ki (characteristic polynomial s^3 + kd s^2 + kp s + ki, roots
    all real for the defaults). The inner attitude loop would be
    critically damped at sqrt(k_r) on a rigid actuator; the torque passes
    through the 10 rad/s powertrain lag, so the stiffness stays below that
    pole to keep phase margin. Yaw runs much softer: its effectiveness per
    newton of lift is two orders below roll/pitch, and stiff yaw feedback
    turns attitude noise into large lift swings. Integrator state is
    clamped to i_max per axis and the commanded tilt to tilt_max.
    """

    kp: float = 4.0
    kd: float = 4.0
    ki: float = 1.0
    i_max: float = 2.0        # integral clamp [m s]
    k_r: float = 64.0         # roll/pitch stiffness [1/s^2]
    k_w: float = 16.0         # roll/pitch damping [1/s]
    k_r_yaw: float = 9.0      # [1/s^2]
    k_w_yaw: float = 6.0      # [1/s]
    tilt_max: float = 0.6     # [rad]


@dataclass
class WrenchDemand:
    """Controller output: body wrench (N, N m) and its timestamp."""

    tau: np.ndarray
    t: float


@njit(cache=True)
def _outer_loop(p_m, v_m, integ, p_r, v_r, a_r, yaw_r, dt,
                kp, kd, ki, i_max, tilt_max, mass, g):
    """Position PID -> desired thrust vector and tilt-limited body z axis.

    Updates the integral state in place (backward Euler with clamping).
    """
    e_p = p_r - p_m
    e_v = v_r - v_m
    for i in range(3):
        integ[i] += e_p[i] * dt
        if integ[i] > i_max:
            integ[i] = i_max
        elif integ[i] < -i_max:
            integ[i] = -i_max
    a_des = a_r + kp * e_p + kd * e_v + ki * integ

    # thrust vector: m (g e3 - a_des), NED so hover is +z (down)
    t_e = -mass * a_des
    t_e[2] += mass * g
    t_norm = np.sqrt(t_e[0] ** 2 + t_e[1] ** 2 + t_e[2] ** 2)

    z_des = np.zeros(3)
    if t_norm < 1e-9 * mass * g:
        z_des[2] = 1.0
    else:
        z_des = t_e / t_norm
        # clamp the angle from vertical, preserving the horizontal heading
        h = np.hypot(z_des[0], z_des[1])
        if z_des[2] <= 0.0 or h > np.tan(tilt_max) * z_des[2]:
            if h < 1e-12:
                z_des[0] = 0.0
                z_des[1] = 0.0
                z_des[2] = 1.0
            else:
                st = np.sin(tilt_max) / h
                z_des[0] *= st
                z_des[1] *= st
                z_des[2] = np.cos(tilt_max)

    return t_e, z_des


@njit(cache=True)
def _attitude_from_thrust(z_des, yaw_r):
    """Desired rotation: body z along z_des, heading at yaw_r."""
    x_c = np.array([np.cos(yaw_r), np.sin(yaw_r), 0.0])
    y_d = np.array([z_des[1] * x_c[2] - z_des[2] * x_c[1],
                    z_des[2] * x_c[0] - z_des[0] * x_c[2],
                    z_des[0] * x_c[1] - z_des[1] * x_c[0]])
    n = np.sqrt(y_d[0] ** 2 + y_d[1] ** 2 + y_d[2] ** 2)
    if n < 1e-9:
        # z_des parallel to the heading: fall back to the yaw y axis
        y_c = np.array([-np.sin(yaw_r), np.cos(yaw_r), 0.0])
        x_d = np.array([y_c[1] * z_des[2] - y_c[2] * z_des[1],
                        y_c[2] * z_des[0] - y_c[0] * z_des[2],
                        y_c[0] * z_des[1] - y_c[1] * z_des[0]])
        x_d /= np.sqrt(x_d[0] ** 2 + x_d[1] ** 2 + x_d[2] ** 2)
        y_d = np.array([z_des[1] * x_d[2] - z_des[2] * x_d[1],
                        z_des[2] * x_d[0] - z_des[0] * x_d[2],
                        z_des[0] * x_d[1] - z_des[1] * x_d[0]])
    else:
        y_d /= n
        x_d = np.array([y_d[1] * z_des[2] - y_d[2] * z_des[1],
                        y_d[2] * z_des[0] - y_d[0] * z_des[2],
                        y_d[0] * z_des[1] - y_d[1] * z_des[0]])
    r_des = np.empty((3, 3))
    for i in range(3):
        r_des[i, 0] = x_d[i]
        r_des[i, 1] = y_d[i]
        r_des[i, 2] = z_des[i]
    return r_des


@njit(cache=True)
def _inner_loop(r_m, om_m, r_des, k_r, k_w, k_r_yaw, k_w_yaw, i0_diag):
    """Feedback linearization about I0: torque from attitude error."""
    e = r_des.T @ r_m - r_m.T @ r_des
    e_r = 0.5 * np.array([e[2, 1], e[0, 2], e[1, 0]])
    tau = np.empty(3)
    for i in range(3):
        kr = k_r if i < 2 else k_r_yaw
        kw = k_w if i < 2 else k_w_yaw
        tau[i] = i0_diag[i] * (-kr * e_r[i] - kw * om_m[i])
    # gyroscopic feed-forward omega x I0 omega
    tau[0] += om_m[1] * i0_diag[2] * om_m[2] - om_m[2] * i0_diag[1] * om_m[1]
    tau[1] += om_m[2] * i0_diag[0] * om_m[0] - om_m[0] * i0_diag[2] * om_m[2]
    tau[2] += om_m[0] * i0_diag[1] * om_m[1] - om_m[1] * i0_diag[0] * om_m[0]
    return tau


@njit(cache=True)
def control_step(p_m, v_m, r_m, om_m, integ, p_r, v_r, a_r, yaw_r, dt,
                 kp, kd, ki, i_max, tilt_max, k_r, k_w, k_r_yaw, k_w_yaw,
                 mass, g, i0_diag, thrust_max):
    """One control cycle on measured states; returns (tau6, clipped).

    ``integ`` (the position integral) is updated in place. The wrench keeps
    the in-plane force rows at zero; thrust is the projection of the desired
    thrust vector on the current body z axis, clamped to [0, thrust_max].
    """
    t_e, z_des = _outer_loop(
        p_m, v_m, integ, p_r, v_r, a_r, yaw_r, dt,
        kp, kd, ki, i_max, tilt_max, mass, g)
    thrust = t_e[0] * r_m[0, 2] + t_e[1] * r_m[1, 2] + t_e[2] * r_m[2, 2]
    clipped = False
    if thrust > thrust_max:
        thrust = thrust_max
        clipped = True
    elif thrust < 0.0:
        thrust = 0.0

    r_des = _attitude_from_thrust(z_des, yaw_r)
    tau_rot = _inner_loop(r_m, om_m, r_des, k_r, k_w, k_r_yaw, k_w_yaw,
                          i0_diag)

    tau = np.zeros(6)
    tau[2] = -thrust
    tau[3] = tau_rot[0]
    tau[4] = tau_rot[1]
    tau[5] = tau_rot[2]
    return tau, clipped


class Controller:
    """Stateful double-loop controller bound to one vehicle.

    Feed it measured kinematics and a reference sample each control cycle;
    it returns the body wrench demand for allocation. Thrust clipping is
    logged once and counted in ``thrust_clips``.
    """

    def __init__(self, vehicle, params=None):
        self.vehicle = vehicle
        self.params = params if params is not None else ControllerParams()
        self.mass = vehicle.total_mass_nominal()
        self.i0_diag = np.asarray(vehicle.i0_diag, dtype=float)
        self.thrust_max = vehicle.n_rotors * vehicle.u_max
        self.integ = np.zeros(3)
        self.thrust_clips = 0

    def reset(self):
        self.integ[:] = 0.0
        self.thrust_clips = 0

    def step(self, p_m, v_m, r_m, om_m, p_r, v_r, a_r, yaw_r, dt, t=0.0):
        """Run one cycle; returns a WrenchDemand."""
        c = self.params
        tau, clipped = control_step(
            np.asarray(p_m, dtype=float), np.asarray(v_m, dtype=float),
            np.asarray(r_m, dtype=float), np.asarray(om_m, dtype=float),
            self.integ, np.asarray(p_r, dtype=float),
            np.asarray(v_r, dtype=float), np.asarray(a_r, dtype=float),
            yaw_r, dt, c.kp, c.kd, c.ki, c.i_max, c.tilt_max, c.k_r, c.k_w,
            c.k_r_yaw, c.k_w_yaw, self.mass, self.vehicle.g, self.i0_diag,
            self.thrust_max)
        if clipped:
            if self.thrust_clips == 0:
                log.warning("thrust demand exceeds %.1f N, clamping",
                            self.thrust_max)
            self.thrust_clips += 1
        return WrenchDemand(tau=tau, t=t)

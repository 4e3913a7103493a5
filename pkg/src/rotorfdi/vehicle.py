"""Rigid multibody model of an octarotor with chipped-blade rotor faults.

The vehicle is a central rigid frame plus ``n_rotors`` two-blade propellers
spinning about the body z axis at their attachment points. Chipping a blade
shortens it from the nominal radius ``r`` to ``(1 - depth) * r``, which
perturbs the rotor's mass, its center of mass, its inertia and its lift and
drag. Every perturbation reduces to five dimensionless weights per rotor,
computed from the two blade radii:

    w    = (r1 + r2) / (2 r)            mass / lift fraction
    w_k  = (r1 - r2) / r                imbalance fraction
    k    = (r / 2) w_k                  center-of-mass offset along the blade [m]
    w_d  = (r1^4 + r2^4) / (2 r^4)      drag fraction
    w_a  = (r1 - r2)(r1^3 - r2^3)/(2 r^4)  asymmetric-drag fraction

Frames and conventions
----------------------
North-east-down earth frame; body frame at the frame center with e3 pointing
down. ``R`` maps body to earth coordinates, ``v`` and ``omega`` are the body
frame linear and angular velocity. Rotor ``i`` has blade direction
``p_i = (cos theta_i, sin theta_i, 0)`` and a signed spin rate ``thetadot_i``
whose sign is opposite the rotor's structural spin sign ``c_w`` (so that
lift points along -e3, i.e. up).

The translational dynamics are

    m (vdot + omega x v) + f_as + f_aa = f_g + f_m + f_fr + f_ext

where ``f_as`` (frame asymmetry) and ``f_aa`` (rotor imbalance) are the
vibration forces, and the rotational dynamics are

    I omega_dot + omega x I omega + tau_gyro + tau_a
        = r_g x f_g + tau_fr + tau_m + tau_ext

with a time-varying inertia tensor ``I`` that follows the blade angles.
Because ``f_as``, ``f_aa`` and ``tau_a`` depend linearly on the unknown
accelerations, each derivative evaluation assembles and solves a symmetric
positive definite 6x6 system for ``(vdot, omegadot)``.

State layout used by the integrator (``3 + 9 + 3 + 3 + 2 n`` floats)::

    y[0:3]        p      earth position [m]
    y[3:12]       R      body-to-earth rotation, row major
    y[12:15]      v      body linear velocity [m/s]
    y[15:18]      omega  body angular velocity [rad/s]
    y[18:18+n]    theta  blade angles [rad]
    y[18+n:18+2n] thetadot  signed blade rates [rad/s]
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rotations import orthonormalize, skew

# Indices into the packed scalar-parameter vector consumed by the kernels.
P_M0 = 0        # frame mass [kg]
P_MBAR = 1      # nominal rotor mass [kg]
P_G = 2         # gravity [m/s^2]
P_BLADE_R = 3   # nominal blade radius [m]
P_BLADE_A = 4   # blade width [m]
P_CLIFT = 5     # lift coefficient [N s^2]
P_CDRAG = 6     # drag coefficient [N m s^2]
P_KT = 7        # translational friction [N s/m]
P_KR = 8        # rotational friction [N m s]
P_MOTOR_LAM = 9     # motor pole, 1/tau_pt [1/s]
P_SPEED_MAX = 10    # rotor speed saturation [rad/s]
N_SCALARS = 11


class SingularMassMatrix(Exception):
    """The 6x6 acceleration system is singular or too ill conditioned."""


@dataclass
class VehicleParams:
    """Physical parameters; defaults are the reference octarotor."""

    n_rotors: int = 8
    m0: float = 1.55              # frame mass [kg]
    mbar: float = 0.13            # nominal propeller mass [kg]
    i0_diag: tuple = (0.0266, 0.0266, 0.0498)  # frame inertia [kg m^2]
    g: float = 9.81               # gravity [m/s^2]
    arm_length: float = 0.275     # attachment radius [m]
    arm_azimuth0: float = 0.0     # azimuth of rotor 1 [rad]
    blade_radius: float = 0.12    # nominal blade radius [m]
    blade_width: float = 0.025    # blade width [m]
    c_lift: float = 1.23e-5       # lift coefficient [N s^2]
    c_drag: float = 1.10e-7       # drag coefficient [N m s^2]
    k_t: float = 3.2e-2           # translational friction [N s/m]
    k_r: float = 5.57e-4          # rotational friction [N m s]
    u_max: float = 4.75           # per-rotor lift saturation [N]
    speed_max: float = 620.97     # rotor speed saturation [rad/s]
    motor_tau: float = 0.1        # rotor first-order time constant [s]

    def i0(self):
        return np.diag(np.asarray(self.i0_diag, dtype=float))

    def arms(self):
        """Attachment points, body frame, one column per rotor (3, n)."""
        az = self.arm_azimuth0 + 2.0 * np.pi * np.arange(self.n_rotors) / self.n_rotors
        return np.vstack([
            self.arm_length * np.cos(az),
            self.arm_length * np.sin(az),
            np.zeros(self.n_rotors),
        ])

    def spin_signs(self):
        """Alternating structural spin signs c_w, starting with +1."""
        s = np.ones(self.n_rotors)
        s[1::2] = -1.0
        return s

    def scalars(self):
        ph = np.empty(N_SCALARS)
        ph[P_M0] = self.m0
        ph[P_MBAR] = self.mbar
        ph[P_G] = self.g
        ph[P_BLADE_R] = self.blade_radius
        ph[P_BLADE_A] = self.blade_width
        ph[P_CLIFT] = self.c_lift
        ph[P_CDRAG] = self.c_drag
        ph[P_KT] = self.k_t
        ph[P_KR] = self.k_r
        ph[P_MOTOR_LAM] = 1.0 / self.motor_tau
        ph[P_SPEED_MAX] = self.speed_max
        return ph

    def total_mass_nominal(self):
        """Mass of the healthy vehicle (all weights equal one)."""
        return self.m0 + self.n_rotors * self.mbar


@dataclass
class FaultState:
    """Per-rotor blade radii; shape (n_rotors, 2), meters."""

    radii: np.ndarray

    @classmethod
    def healthy(cls, params):
        return cls(np.full((params.n_rotors, 2), params.blade_radius))

    @classmethod
    def chipped(cls, params, rotor, depth):
        """Chip one blade of ``rotor`` (numbered 1..n) by ``depth`` (0..1)."""
        if not 0.0 <= depth < 1.0:
            raise ValueError(f"chip depth must be in [0, 1), got {depth}")
        if not 1 <= rotor <= params.n_rotors:
            raise ValueError(f"rotor must be in 1..{params.n_rotors}, got {rotor}")
        f = cls.healthy(params)
        f.radii[rotor - 1, 0] = (1.0 - depth) * params.blade_radius
        return f

    def pack(self, params):
        """Weights (n, 5) and per-rotor blade inertia about the hub (n, 3)."""
        wp = chipping_weights(self.radii, params.blade_radius)
        ib = blade_inertia(self.radii, params.blade_radius, params.mbar,
                           params.blade_width)
        wp = np.column_stack([wp[0], wp[2], wp[3], wp[4], wp[0] * params.mbar])
        return wp, ib


# Columns of the packed weight array.
W_W = 0    # mass/lift fraction
W_K = 1    # center-of-mass offset [m]
W_WD = 2   # drag fraction
W_WA = 3   # asymmetric drag fraction
W_MI = 4   # rotor mass [kg]


@dataclass
class SimState:
    """Full simulator state at one instant."""

    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    thetadot: np.ndarray

    @classmethod
    def at_rest(cls, n_rotors):
        return cls(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3),
                   np.zeros(n_rotors), np.zeros(n_rotors))

    def pack(self):
        return np.concatenate([
            self.p, self.R.ravel(), self.v, self.omega, self.theta,
            self.thetadot,
        ])

    @classmethod
    def unpack(cls, y, n_rotors):
        n = n_rotors
        return cls(y[0:3].copy(), y[3:12].reshape(3, 3).copy(),
                   y[12:15].copy(), y[15:18].copy(),
                   y[18:18 + n].copy(), y[18 + n:18 + 2 * n].copy())


@dataclass
class Wrench:
    """Force [N] and torque [N m] pair."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))


@njit(cache=True)
def chipping_weights(radii, r):
    """Dimensionless chip weights from blade radii.

    Parameters
    ----------
    radii : (n, 2) blade radii [m]
    r : nominal blade radius [m]

    Returns
    -------
    w, wk, k, wd, wa : (n,) arrays; ``k`` is in meters, the rest are
    dimensionless. All equal (1, 0, 0, 1, 0) for healthy rotors.
    """
    n = radii.shape[0]
    w = np.empty(n)
    wk = np.empty(n)
    k = np.empty(n)
    wd = np.empty(n)
    wa = np.empty(n)
    r4 = r ** 4
    for i in range(n):
        r1 = radii[i, 0]
        r2 = radii[i, 1]
        w[i] = (r1 + r2) / (2.0 * r)
        wk[i] = (r1 - r2) / r
        k[i] = 0.5 * r * wk[i]
        wd[i] = (r1 ** 4 + r2 ** 4) / (2.0 * r4)
        wa[i] = (r1 - r2) * (r1 ** 3 - r2 ** 3) / (2.0 * r4)
    return w, wk, k, wd, wa


@njit(cache=True)
def blade_inertia(radii, r, mbar, width):
    """Rotor inertia about the hub in the rotor rest frame, (n, 3).

    Each blade is a thin rectangular plate of width ``width`` lying along the
    rotor x axis, one from 0 to r1 and one from 0 to -r2, with mass
    proportional to length (a full rotor of two nominal blades has mass
    ``mbar``). Products of inertia vanish by symmetry, so the tensor is
    diag(Ixx, Iyy, Izz) with Izz = Ixx + Iyy (thin plate).
    """
    n = radii.shape[0]
    out = np.empty((n, 3))
    lam = mbar / (2.0 * r)  # mass per unit blade length [kg/m]
    for i in range(n):
        r1 = radii[i, 0]
        r2 = radii[i, 1]
        mi = lam * (r1 + r2)
        ixx = mi * width * width / 12.0
        iyy = lam * (r1 ** 3 + r2 ** 3) / 3.0
        out[i, 0] = ixx
        out[i, 1] = iyy
        out[i, 2] = ixx + iyy
    return out


@njit(cache=True)
def _assemble_inertia(i0, ib, theta):
    """Total inertia: frame plus blade tensors rotated to blade angles."""
    I = i0.copy()
    for i in range(theta.shape[0]):
        c = np.cos(theta[i])
        s = np.sin(theta[i])
        A = ib[i, 0]
        B = ib[i, 1]
        I[0, 0] += A * c * c + B * s * s
        I[1, 1] += A * s * s + B * c * c
        I[0, 1] += (A - B) * c * s
        I[1, 0] += (A - B) * c * s
        I[2, 2] += ib[i, 2]
    return I


@njit(cache=True)
def _mass_and_com(ph, arms, wp, theta):
    """Total mass, mass-weighted center of mass m*r_g, and its two parts."""
    n = theta.shape[0]
    m = ph[P_M0]
    ml = np.zeros(3)   # sum m_i l_i (arm part)
    mk = np.zeros(3)   # sum m_i k_i p_i (imbalance part)
    for i in range(n):
        mi = wp[i, W_MI]
        m += mi
        ml[0] += mi * arms[0, i]
        ml[1] += mi * arms[1, i]
        ki = wp[i, W_K]
        mk[0] += mi * ki * np.cos(theta[i])
        mk[1] += mi * ki * np.sin(theta[i])
    return m, ml, mk


@njit(cache=True)
def _actuation(ph, arms, spin, wp, thetadot):
    """Rotor force and torque on the body from lift and blade drag."""
    cl = ph[P_CLIFT]
    cd = ph[P_CDRAG]
    asym = 2.0 / (3.0 * ph[P_BLADE_R])
    f = np.zeros(3)
    tau = np.zeros(3)
    for i in range(thetadot.shape[0]):
        sv = thetadot[i] * np.abs(thetadot[i])  # signed theta_dot^2
        fz = spin[i] * wp[i, W_W] * cl * sv     # lift along e3 (negative up)
        f[2] += fz
        # l x (0, 0, fz)
        tau[0] += arms[1, i] * fz
        tau[1] += -arms[0, i] * fz
        tau[2] += (-wp[i, W_WD] + wp[i, W_WA] * asym) * cd * sv
    return f, tau


@njit(cache=True)
def _gyroscopic(ib, theta, thetadot, thetaddot, omega):
    """Gyroscopic torque of the spinning blades."""
    tau = np.zeros(3)
    for i in range(theta.shape[0]):
        c = np.cos(theta[i])
        s = np.sin(theta[i])
        A = ib[i, 0]
        B = ib[i, 1]
        izz = ib[i, 2]
        a = A * c * c + B * s * s
        b = A * s * s + B * c * c
        cxy = (A - B) * c * s
        # [e3^, I_i] omega for the rotated blade tensor (z column zero)
        tau[0] += thetadot[i] * (-2.0 * cxy * omega[0] + (a - b) * omega[1])
        tau[1] += thetadot[i] * ((a - b) * omega[0] + 2.0 * cxy * omega[1])
        # I_zz thetadot (omega x e3) + I_zz thetaddot e3
        tau[0] += izz * thetadot[i] * omega[1]
        tau[1] += izz * thetadot[i] * (-omega[0])
        tau[2] += izz * thetaddot[i]
    return tau


@njit(cache=True)
def _vibration_const(arms, wp, theta, thetadot, thetaddot, omega):
    """Acceleration-independent parts of f_as and f_aa."""
    cs = np.zeros(3)
    ca = np.zeros(3)
    wx, wy, wz = omega[0], omega[1], omega[2]
    for i in range(theta.shape[0]):
        mi = wp[i, W_MI]
        lx, ly = arms[0, i], arms[1, i]
        # omega x (omega x l), l_z = 0
        cl0 = wy * (wx * ly - wy * lx) + wz * (wx * 0.0 - wz * lx)
        cl1 = wz * (wy * 0.0 - wz * ly) + wx * (wy * lx - wx * ly)
        cl2 = wx * (wz * lx) + wy * (wz * ly)
        cs[0] += mi * cl0
        cs[1] += mi * cl1
        cs[2] += mi * cl2
        ki = wp[i, W_K]
        if ki != 0.0:
            c = np.cos(theta[i])
            s = np.sin(theta[i])
            td = thetadot[i]
            # p = (c, s, 0); e3 x p = (-s, c, 0)
            cp0 = wy * (wx * s - wy * c) - wz * wz * c
            cp1 = -wz * wz * s + wx * (wy * c - wx * s)
            cp2 = wx * wz * c + wy * wz * s
            # 2 thetadot (omega x (e3 x p))
            cp0 += 2.0 * td * (wy * 0.0 - wz * c)
            cp1 += 2.0 * td * (wz * (-s) - wx * 0.0)
            cp2 += 2.0 * td * (wx * c - wy * (-s))
            # thetaddot (e3 x p) - thetadot^2 p
            cp0 += thetaddot[i] * (-s) - td * td * c
            cp1 += thetaddot[i] * c - td * td * s
            ca[0] += mi * ki * cp0
            ca[1] += mi * ki * cp1
            ca[2] += mi * ki * cp2
    return cs, ca


@njit(cache=True)
def _solve_spd6(A, b):
    """Cholesky solve of a 6x6 SPD system; returns (x, ok)."""
    L = np.zeros((6, 6))
    x = np.zeros(6)
    maxd = 0.0
    for i in range(6):
        if A[i, i] > maxd:
            maxd = A[i, i]
    for j in range(6):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d <= 1e-12 * maxd:
            return x, False
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, 6):
            v = A[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / L[j, j]
    # forward then backward substitution
    for i in range(6):
        v = b[i]
        for k in range(i):
            v -= L[i, k] * x[k]
        x[i] = v / L[i, i]
    for i in range(5, -1, -1):
        v = x[i]
        for k in range(i + 1, 6):
            v -= L[k, i] * x[k]
        x[i] = v / L[i, i]
    return x, True


@njit(cache=True)
def _rhs(y, refs, ext_f_e, ext_tau_b, ph, i0, arms, spin, wp, ib):
    """Time derivative of the packed state.

    Returns (dy, aux, ok) with aux = [f_as (3), f_aa (3), total mass].
    ``refs`` are the rotor speed references (signed, clamped here),
    ``ext_f_e`` an external force in the earth frame, ``ext_tau_b`` an
    external torque in the body frame.
    """
    n = refs.shape[0]
    R = y[3:12].copy().reshape(3, 3)
    v = y[12:15]
    omega = y[15:18]
    theta = y[18:18 + n]
    thetadot = y[18 + n:18 + 2 * n]

    lam = ph[P_MOTOR_LAM]
    smax = ph[P_SPEED_MAX]
    thetaddot = np.empty(n)
    for i in range(n):
        ref = refs[i]
        if ref > smax:
            ref = smax
        elif ref < -smax:
            ref = -smax
        thetaddot[i] = lam * (ref - thetadot[i])

    m, ml, mk = _mass_and_com(ph, arms, wp, theta)
    mrg = ml + mk
    rg = mrg / m
    I = _assemble_inertia(i0, ib, theta)
    cs, ca = _vibration_const(arms, wp, theta, thetadot, thetaddot, omega)
    cv = cs + ca
    f_m, tau_m = _actuation(ph, arms, spin, wp, thetadot)
    tau_g = _gyroscopic(ib, theta, thetadot, thetaddot, omega)

    g = ph[P_G]
    fg = np.empty(3)
    fg[0] = m * g * R[2, 0]
    fg[1] = m * g * R[2, 1]
    fg[2] = m * g * R[2, 2]
    fext = R.T @ ext_f_e

    wxv = np.empty(3)
    wxv[0] = omega[1] * v[2] - omega[2] * v[1]
    wxv[1] = omega[2] * v[0] - omega[0] * v[2]
    wxv[2] = omega[0] * v[1] - omega[1] * v[0]

    Iw = I @ omega
    wxIw = np.empty(3)
    wxIw[0] = omega[1] * Iw[2] - omega[2] * Iw[1]
    wxIw[1] = omega[2] * Iw[0] - omega[0] * Iw[2]
    wxIw[2] = omega[0] * Iw[1] - omega[1] * Iw[0]

    b = np.empty(6)
    inert = m * wxv + cv
    b[0:3] = fg + f_m - ph[P_KT] * v + fext - inert
    rgxfg = np.empty(3)
    rgxfg[0] = rg[1] * fg[2] - rg[2] * fg[1]
    rgxfg[1] = rg[2] * fg[0] - rg[0] * fg[2]
    rgxfg[2] = rg[0] * fg[1] - rg[1] * fg[0]
    rgxin = np.empty(3)
    rgxin[0] = rg[1] * inert[2] - rg[2] * inert[1]
    rgxin[1] = rg[2] * inert[0] - rg[0] * inert[2]
    rgxin[2] = rg[0] * inert[1] - rg[1] * inert[0]
    b[3:6] = rgxfg - ph[P_KR] * omega + tau_m + ext_tau_b - wxIw - tau_g - rgxin

    A = np.zeros((6, 6))
    A[0, 0] = m
    A[1, 1] = m
    A[2, 2] = m
    smrg = skew(mrg)
    A[0:3, 3:6] = -smrg
    A[3:6, 0:3] = smrg
    A[3:6, 3:6] = I - smrg @ skew(rg)

    sol, ok = _solve_spd6(A, b)

    dy = np.empty_like(y)
    dy[0:3] = R @ v
    dR = R @ skew(omega)
    dy[3:12] = dR.ravel()
    dy[12:15] = sol[0:3]
    dy[15:18] = sol[3:6]
    dy[18:18 + n] = thetadot
    dy[18 + n:18 + 2 * n] = thetaddot

    aux = np.empty(7)
    dw = sol[3:6]
    # f_as = cs + dw x ml, f_aa = ca + dw x mk
    aux[0] = cs[0] + dw[1] * ml[2] - dw[2] * ml[1]
    aux[1] = cs[1] + dw[2] * ml[0] - dw[0] * ml[2]
    aux[2] = cs[2] + dw[0] * ml[1] - dw[1] * ml[0]
    aux[3] = ca[0] + dw[1] * mk[2] - dw[2] * mk[1]
    aux[4] = ca[1] + dw[2] * mk[0] - dw[0] * mk[2]
    aux[5] = ca[2] + dw[0] * mk[1] - dw[1] * mk[0]
    aux[6] = m
    return dy, aux, ok


@njit(cache=True)
def _rk4_step(y, dt, refs, ext_f_e, ext_tau_b, ph, i0, arms, spin, wp, ib):
    """One fixed-step 4th-order step; re-orthonormalizes the attitude."""
    k1, _, ok1 = _rhs(y, refs, ext_f_e, ext_tau_b, ph, i0, arms, spin, wp, ib)
    k2, _, ok2 = _rhs(y + 0.5 * dt * k1, refs, ext_f_e, ext_tau_b, ph, i0,
                      arms, spin, wp, ib)
    k3, _, ok3 = _rhs(y + 0.5 * dt * k2, refs, ext_f_e, ext_tau_b, ph, i0,
                      arms, spin, wp, ib)
    k4, _, ok4 = _rhs(y + dt * k3, refs, ext_f_e, ext_tau_b, ph, i0, arms,
                      spin, wp, ib)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    R = orthonormalize(out[3:12].copy().reshape(3, 3))
    out[3:12] = R.ravel()
    return out, ok1 and ok2 and ok3 and ok4


def _packed(params, fault):
    ph = params.scalars()
    wp, ib = fault.pack(params)
    return ph, params.i0(), params.arms(), params.spin_signs(), wp, ib


def mass_properties(params, fault, theta):
    """Total mass [kg], center of mass r_g [m] and inertia I [kg m^2].

    ``r_g`` is the sum of the arm part (nonzero only when rotor masses
    differ) and the rotating imbalance part that follows the blade angles.
    """
    ph, i0, arms, spin, wp, ib = _packed(params, fault)
    theta = np.asarray(theta, dtype=float)
    m, ml, mk = _mass_and_com(ph, arms, wp, theta)
    I = _assemble_inertia(i0, ib, theta)
    return m, (ml + mk) / m, I


def actuation_wrench(params, fault, theta, thetadot):
    """Rotor lift force and torque (lift arms, drag, asymmetric drag)."""
    ph, i0, arms, spin, wp, ib = _packed(params, fault)
    f, tau = _actuation(ph, arms, spin, wp, np.asarray(thetadot, dtype=float))
    return f, tau


def vibration_forces(params, fault, theta, thetadot, thetaddot, omega,
                     omega_dot):
    """Vibration forces (f_as, f_aa) for known accelerations.

    f_as collects the arm terms m_i (omega^^2 + omegadot^) l_i, f_aa the
    imbalance terms m_i k_i Xi_a p_i. Both vanish identically for a healthy
    symmetric vehicle.
    """
    ph, i0, arms, spin, wp, ib = _packed(params, fault)
    theta = np.asarray(theta, dtype=float)
    thetadot = np.asarray(thetadot, dtype=float)
    thetaddot = np.asarray(thetaddot, dtype=float)
    omega = np.asarray(omega, dtype=float)
    omega_dot = np.asarray(omega_dot, dtype=float)
    cs, ca = _vibration_const(arms, wp, theta, thetadot, thetaddot, omega)
    m, ml, mk = _mass_and_com(ph, arms, wp, theta)
    return cs + np.cross(omega_dot, ml), ca + np.cross(omega_dot, mk)


def reaction_torques(params, fault, theta, thetadot, thetaddot, omega,
                     omega_dot, v, vdot):
    """Reaction torques (tau_a, tau_gyro) for known accelerations.

    tau_a is the moment of the total inertial force about the body origin,
    acting at the center of mass; tau_gyro collects the gyroscopic terms of
    the spinning blades.
    """
    ph, i0, arms, spin, wp, ib = _packed(params, fault)
    theta = np.asarray(theta, dtype=float)
    thetadot = np.asarray(thetadot, dtype=float)
    thetaddot = np.asarray(thetaddot, dtype=float)
    omega = np.asarray(omega, dtype=float)
    f_as, f_aa = vibration_forces(params, fault, theta, thetadot, thetaddot,
                                  omega, omega_dot)
    m, ml, mk = _mass_and_com(ph, arms, wp, theta)
    rg = (ml + mk) / m
    inertial = m * (np.asarray(vdot, dtype=float)
                    + np.cross(omega, np.asarray(v, dtype=float)))
    tau_a = np.cross(rg, inertial + f_as + f_aa)
    tau_gyro = _gyroscopic(ib, theta, thetadot, thetaddot, omega)
    return tau_a, tau_gyro


def dynamics_derivative(params, fault, state, speed_refs,
                        ext_wrench=None, cond_check=True):
    """Full state derivative and the vibration-force diagnostics.

    Parameters
    ----------
    state : SimState
    speed_refs : (n,) signed rotor speed references [rad/s]
    ext_wrench : optional Wrench; force in the earth frame, torque in the
        body frame.

    Returns
    -------
    (SimState derivative, dict with f_as, f_aa, total mass)

    Raises SingularMassMatrix if the acceleration system is singular or,
    with ``cond_check``, has a condition number above 1e12.
    """
    ph, i0, arms, spin, wp, ib = _packed(params, fault)
    if ext_wrench is None:
        ext_wrench = Wrench()
    y = state.pack()
    refs = np.asarray(speed_refs, dtype=float)
    dy, aux, ok = _rhs(y, refs, ext_wrench.force, ext_wrench.torque,
                       ph, i0, arms, spin, wp, ib)
    if not ok:
        raise SingularMassMatrix("acceleration system is numerically singular")
    if cond_check:
        m, ml, mk = _mass_and_com(ph, arms, wp, state.theta)
        I = _assemble_inertia(i0, ib, state.theta)
        smrg = skew(ml + mk)
        A = np.zeros((6, 6))
        A[:3, :3] = m * np.eye(3)
        A[:3, 3:] = -smrg
        A[3:, :3] = smrg
        A[3:, 3:] = I - smrg @ skew((ml + mk) / m)
        if np.linalg.cond(A) > 1e12:
            raise SingularMassMatrix(
                f"acceleration system condition number {np.linalg.cond(A):.3e}")
    deriv = SimState.unpack(dy, params.n_rotors)
    return deriv, {"f_as": aux[0:3], "f_aa": aux[3:6], "mass": aux[6]}

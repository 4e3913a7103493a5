"""Closed-loop flight simulation with in-the-loop detection and isolation.

One flight couples every layer of the package at two rates: the rigid-body
physics integrates at 1 ms with fixed-step RK4, while control, allocation,
sensing and the spectral machinery run on a 5 ms cycle (the 200 Hz IMU
rate). Each cycle, in order,

  1. samples the IMU — one extra dynamics evaluation at the cycle instant
     under the still-active speed references gives the true acceleration
     and its fault-induced share, then damping and pre-drawn noise are
     applied;
  2. slides the two Goertzel phasor banks (detection and isolation bands,
     accelerometer x/y channels in g units) and steps the FDI machine,
     which may ask for a rotor pin;
  3. runs the double-loop tracking controller on the measured kinematics;
  4. allocates the wrench by QP, soft-pinning the requested rotor to the
     lift that realizes the isolation speed target at the current total
     thrust;
  5. converts lifts to speed references and advances the physics five
     substeps, applying the seeded low-frequency external wrench.

The whole loop is compiled as one numba kernel; all randomness (sensor
noise, external-wrench realization) is drawn up front from seeds derived
from the run seed, so a repeated seed reproduces every logged byte.

Divergence (non-finite or runaway state) is recorded in the result, not
raised, so batch sweeps can keep going.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .allocation import AllocationParams, _qp_build, _qp_solve, \
    effectiveness_matrix
from .control import ControllerParams, Trajectory, _attitude_from_thrust, \
    _inner_loop, _outer_loop, reference
from .fdi import ResidualConfig, _bank_refresh, _bank_update, \
    _S_DETECT, _S_SCORES, _S_VERDICT, fdi_step, new_fdi_state
from .rotations import R_from_euler_zyx, euler_zyx_from_R
from .sensing import Imu, ImuModel
from .vehicle import FaultState, P_CLIFT, P_G, VehicleParams, _rhs, _rk4_step


class SimDiverged(RuntimeError):
    """The state left the trust region (non-finite or runaway)."""


@dataclass(frozen=True)
class ExternalWrenchParams:
    """Seeded low-frequency disturbance: per-axis sinusoids plus bias.

    Each axis gets ``n_tones`` sinusoids with amplitudes drawn uniformly
    up to amp/n_tones, pulsations inside ``freq_band`` (rad/s, all well
    below the rotor frequencies) and random phases, plus a constant bias
    uniform in [-bias, +bias]. Forces are earth-frame newtons, torques
    body-frame newton meters.
    """

    force_amp: tuple = (0.3, 0.3, 0.6)
    force_bias: tuple = (0.1, 0.1, 0.25)
    torque_amp: tuple = (0.01, 0.01, 0.005)
    torque_bias: tuple = (0.002, 0.002, 0.001)
    n_tones: int = 2
    freq_band: tuple = (0.5, 8.0)

    def __post_init__(self):
        if self.n_tones < 1:
            raise ValueError("n_tones must be at least 1")
        lo, hi = self.freq_band
        if not 0.0 < lo < hi <= 10.0:
            raise ValueError("disturbance band must lie inside (0, 10] rad/s")

    @classmethod
    def off(cls):
        return cls(force_amp=(0.0,) * 3, force_bias=(0.0,) * 3,
                   torque_amp=(0.0,) * 3, torque_bias=(0.0,) * 3)

    def realize(self, rng):
        """Draw one disturbance realization (fixed draw order)."""
        nt = self.n_tones
        out = {}
        for tag, amp, bias in (("f", self.force_amp, self.force_bias),
                               ("t", self.torque_amp, self.torque_bias)):
            a = rng.uniform(0.0, 1.0, (3, nt))
            w = rng.uniform(self.freq_band[0], self.freq_band[1], (3, nt))
            ph = rng.uniform(0.0, 2.0 * np.pi, (3, nt))
            b = rng.uniform(-1.0, 1.0, 3)
            for i in range(3):
                a[i] *= amp[i] / nt
                b[i] *= bias[i]
            out[tag] = (a, w, ph, b)
        return out["f"], out["t"]


@njit(cache=True)
def _ext_eval(amp, freq, phase, bias, t, out):
    for i in range(3):
        s = bias[i]
        for j in range(amp.shape[1]):
            s += amp[i, j] * math.sin(freq[i, j] * t + phase[i, j])
        out[i] = s


@njit(cache=True)
def _band_residual(re, im, n):
    """Largest normalized magnitude over channels and bins."""
    best = 0.0
    for ch in range(re.shape[0]):
        for b in range(re.shape[1]):
            m = re[ch, b] ** 2 + im[ch, b] ** 2
            if m > best:
                best = m
    return 2.0 / n * math.sqrt(best)


@njit(cache=True)
def _fly(y0, n_cycles, dt_ctrl, n_sub,
         ph, i0, arms, spin, wp_h, ib_h, wp_f, ib_f, fault_cycle,
         kp, kd, ki, i_max, tilt_max, k_r, k_w, k_r_yaw, k_w_yaw,
         mass_nom, i0_diag, thrust_max,
         traj_kind, traj_params,
         B, lam_h, lam_f, kappa, delta, qp_max_iter, u_max, u0,
         rho_live, fd_omegas, fdi_omegas, win_n, refresh_every,
         stage_n, settle_n, confirm_n, prominence, theta_dot_des,
         damping, noise,
         f_amp, f_freq, f_phase, f_bias, t_amp, t_freq, t_phase, t_bias,
         log_p, log_pref, log_u, log_thetadot, log_accel, log_rfd,
         log_rfdi, log_pin, log_slack, fdi_state):
    """Run the whole flight; returns (diverged_cycle, n_clip, n_stall).

    diverged_cycle is -1 for a clean flight. Logs are filled per cycle up
    to and including the cycle where divergence was caught.
    """
    n = spin.size
    dt_phys = dt_ctrl / n_sub
    fs = 1.0 / dt_ctrl
    g = ph[P_G]
    c_lift = ph[P_CLIFT]

    y = y0.copy()
    u_prev = u0.copy()
    refs = np.empty(n)
    for i in range(n):
        refs[i] = -spin[i] * math.sqrt(u_prev[i] / c_lift)
    integ = np.zeros(3)

    # shared ring buffer, one phasor set per band
    buf = np.zeros((2, win_n))
    head = 0
    fd_re = np.zeros((2, fd_omegas.size))
    fd_im = np.zeros((2, fd_omegas.size))
    fdi_re = np.zeros((2, fdi_omegas.size))
    fdi_im = np.zeros((2, fdi_omegas.size))
    wt_fd = fd_omegas / fs
    fd_rot_c = np.cos(wt_fd)
    fd_rot_s = np.sin(wt_fd)
    fd_tail_c = np.cos(wt_fd * (win_n - 1))
    fd_tail_s = -np.sin(wt_fd * (win_n - 1))
    wt_fdi = fdi_omegas / fs
    fdi_rot_c = np.cos(wt_fdi)
    fdi_rot_s = np.sin(wt_fdi)
    fdi_tail_c = np.cos(wt_fdi * (win_n - 1))
    fdi_tail_s = -np.sin(wt_fdi * (win_n - 1))

    fe = np.empty(3)
    tb = np.empty(3)
    sample = np.empty(2)
    n_clip = 0
    n_stall = 0
    diverged = -1
    pin_u_des_den = (n - 1) / 2.0 + 1.0 / kappa

    for k in range(n_cycles):
        t = k * dt_ctrl
        faulty = k >= fault_cycle
        wp = wp_f if faulty else wp_h
        ib = ib_f if faulty else ib_h

        # --- IMU sample under the still-active references
        _ext_eval(f_amp, f_freq, f_phase, f_bias, t, fe)
        _ext_eval(t_amp, t_freq, t_phase, t_bias, t, tb)
        dy, aux, ok = _rhs(y, refs, fe, tb, ph, i0, arms, spin, wp, ib)
        if not ok:
            diverged = k
            break
        m_tot = aux[6]
        acc0 = dy[12] - (1.0 - damping) * (-(aux[0] + aux[3]) / m_tot)
        acc1 = dy[13] - (1.0 - damping) * (-(aux[1] + aux[4]) / m_tot)
        acc2 = dy[14] - (1.0 - damping) * (-(aux[2] + aux[5]) / m_tot)
        acc0 += noise[k, 0]
        acc1 += noise[k, 1]
        acc2 += noise[k, 2]
        vel_m = y[12:15] + noise[k, 3:6]
        pos_m = y[0:3] + noise[k, 6:9]
        gyro_m = y[15:18] + noise[k, 9:12]
        R_true = y[3:12].copy().reshape(3, 3)
        yaw_t, pitch_t, roll_t = euler_zyx_from_R(R_true)
        R_m = R_from_euler_zyx(yaw_t + noise[k, 12], pitch_t + noise[k, 13],
                               roll_t + noise[k, 14])

        # --- spectral banks and FDI machine (accelerations in g)
        sample[0] = acc0 / g
        sample[1] = acc1 / g
        x_old = buf[:, head].copy()
        _bank_update(fd_re, fd_im, fd_rot_c, fd_rot_s, fd_tail_c, fd_tail_s,
                     x_old, sample)
        _bank_update(fdi_re, fdi_im, fdi_rot_c, fdi_rot_s, fdi_tail_c,
                     fdi_tail_s, x_old, sample)
        buf[0, head] = sample[0]
        buf[1, head] = sample[1]
        head = (head + 1) % win_n
        if (k + 1) % refresh_every == 0:
            _bank_refresh(buf, head, k + 1, fd_omegas, fs, fd_re, fd_im)
            _bank_refresh(buf, head, k + 1, fdi_omegas, fs, fdi_re, fdi_im)
        if k + 1 >= win_n:
            r_fd = _band_residual(fd_re, fd_im, win_n)
            r_fdi = _band_residual(fdi_re, fdi_im, win_n)
        else:
            r_fd = 0.0
            r_fdi = 0.0
        pin = fdi_step(fdi_state, k, r_fd, r_fdi, rho_live, win_n, stage_n,
                       settle_n, confirm_n, n, prominence)

        # --- tracking controller on measured kinematics
        p_r, v_r, a_r, yaw_r = reference(traj_kind, traj_params, t)
        v_e_m = R_m @ vel_m
        t_e, z_des = _outer_loop(pos_m, v_e_m, integ, p_r, v_r, a_r, yaw_r,
                                 dt_ctrl, kp, kd, ki, i_max, tilt_max,
                                 mass_nom, g)
        thrust = t_e[0] * R_m[0, 2] + t_e[1] * R_m[1, 2] + t_e[2] * R_m[2, 2]
        if thrust > thrust_max:
            thrust = thrust_max
            n_clip += 1
        elif thrust < 0.0:
            thrust = 0.0
        r_des = _attitude_from_thrust(z_des, yaw_r)
        tau_rot = _inner_loop(R_m, gyro_m, r_des, k_r, k_w, k_r_yaw,
                              k_w_yaw, i0_diag)
        tau6 = np.zeros(6)
        tau6[2] = -thrust
        tau6[3] = tau_rot[0]
        tau6[4] = tau_rot[1]
        tau6[5] = tau_rot[2]

        # --- allocation with the requested soft pin
        pin_u = 0.0
        if pin > 0:
            u_tgt = c_lift * theta_dot_des * theta_dot_des
            pin_u = (u_tgt - thrust / (pin_u_des_den * kappa)) \
                / (1.0 - 1.0 / (pin_u_des_den * kappa))
            if pin_u < 0.0:
                pin_u = 0.0
            elif pin_u > u_max:
                pin_u = u_max
        H, f = _qp_build(n, lam_h, lam_f, pin, pin_u, kappa)
        lb = np.empty(n)
        ub = np.empty(n)
        for i in range(n):
            lo = u_prev[i] - delta
            lb[i] = lo if lo > 0.0 else 0.0
            hi = u_prev[i] + delta
            ub[i] = hi if hi < u_max else u_max
        x, iters, status = _qp_solve(H, f, B, tau6, lb, ub, qp_max_iter)
        if status == 0:
            for i in range(n):
                u_prev[i] = x[i]
            slack = x[n]
        else:
            n_stall += 1
            slack = -1.0
        for i in range(n):
            refs[i] = -spin[i] * math.sqrt(u_prev[i] / c_lift)

        # --- log the cycle
        log_p[k, 0] = y[0]
        log_p[k, 1] = y[1]
        log_p[k, 2] = y[2]
        log_pref[k, 0] = p_r[0]
        log_pref[k, 1] = p_r[1]
        log_pref[k, 2] = p_r[2]
        for i in range(n):
            log_u[k, i] = u_prev[i]
            log_thetadot[k, i] = y[18 + n + i]
        log_accel[k, 0] = acc0
        log_accel[k, 1] = acc1
        log_accel[k, 2] = acc2
        log_rfd[k] = r_fd
        log_rfdi[k] = r_fdi
        log_pin[k] = pin
        log_slack[k] = slack

        # --- physics to the next cycle
        bad = False
        for j in range(n_sub):
            ts = t + j * dt_phys
            _ext_eval(f_amp, f_freq, f_phase, f_bias, ts, fe)
            _ext_eval(t_amp, t_freq, t_phase, t_bias, ts, tb)
            y, ok = _rk4_step(y, dt_phys, refs, fe, tb, ph, i0, arms, spin,
                              wp, ib)
            if not ok:
                bad = True
                break
        for i in range(3):
            if not math.isfinite(y[i]) or abs(y[i]) > 1e4 \
                    or not math.isfinite(y[12 + i]) or abs(y[12 + i]) > 1e3:
                bad = True
        if bad:
            diverged = k
            break

    return diverged, n_clip, n_stall


@dataclass
class FlightResult:
    """Everything one flight produced, cycle-resolved plus FDI summary."""

    t: np.ndarray
    p: np.ndarray
    p_ref: np.ndarray
    u: np.ndarray
    thetadot: np.ndarray
    accel_meas: np.ndarray
    r_fd: np.ndarray
    r_fdi: np.ndarray
    pin: np.ndarray
    slack: np.ndarray
    detected_at: float        # s, nan if never
    verdict: int              # 1-based rotor, 0 = none/inconclusive
    stage_peaks: np.ndarray
    diverged: bool
    diverged_at: float        # s, nan if clean
    thrust_clips: int
    qp_stalls: int
    seed: int

    @property
    def detected(self):
        return math.isfinite(self.detected_at)

    def tracking_error(self):
        """Per-cycle reference tracking error norm (m)."""
        return np.sqrt(((self.p - self.p_ref) ** 2).sum(axis=1))


def hover_lifts(vehicle):
    """Equal per-rotor lifts that carry the nominal weight."""
    u = vehicle.total_mass_nominal() * vehicle.g / vehicle.n_rotors
    return np.full(vehicle.n_rotors, u)


def initial_state(vehicle):
    """Hover equilibrium at the trajectory start point (the origin)."""
    n = vehicle.n_rotors
    y = np.zeros(18 + 2 * n)
    y[3:12] = np.eye(3).ravel()
    u = hover_lifts(vehicle)
    y[18 + n:18 + 2 * n] = -vehicle.spin_signs() \
        * np.sqrt(u / vehicle.c_lift)
    return y


def simulate_flight(vehicle=None, trajectory=None, imu=None, residual=None,
                    alloc=None, ctrl=None, wrench=None, duration=55.0,
                    seed=0, fault_rotor=0, fault_depth=0.0,
                    fault_onset=10.0, rho_live=None, n_substeps=5):
    """Fly once and return a FlightResult.

    ``fault_rotor`` 0 flies healthy; otherwise that rotor (1-based) chips
    abruptly by ``fault_depth`` at ``fault_onset`` seconds. ``rho_live``
    overrides the detection threshold driving the in-flight machine
    (``math.inf`` flies a pure monitoring pass that never pins); metrics
    against other thresholds can then be replayed from the logged r_fd.
    Identical arguments and seed reproduce the result byte for byte.
    """
    vehicle = vehicle if vehicle is not None else VehicleParams()
    trajectory = trajectory if trajectory is not None else Trajectory()
    imu = imu if imu is not None else ImuModel()
    residual = residual if residual is not None else ResidualConfig()
    alloc = alloc if alloc is not None else AllocationParams()
    ctrl = ctrl if ctrl is not None else ControllerParams()
    wrench = wrench if wrench is not None else ExternalWrenchParams()

    if abs(imu.sample_rate - residual.sample_rate) > 1e-9:
        raise ValueError("IMU and residual sample rates must agree")
    dt_ctrl = 1.0 / residual.sample_rate
    n_cycles = int(round(duration * residual.sample_rate))
    if n_cycles < 1:
        raise ValueError("duration too short for one cycle")
    if fault_rotor and not 0.0 < fault_depth < 1.0:
        raise ValueError("fault_depth must lie in (0, 1) when chipping")
    fault_cycle = int(round(fault_onset * residual.sample_rate)) \
        if fault_rotor else n_cycles + 1

    healthy = FaultState.healthy(vehicle)
    faulted = FaultState.chipped(vehicle, fault_rotor, fault_depth) \
        if fault_rotor else healthy
    wp_h, ib_h = healthy.pack(vehicle)
    wp_f, ib_f = faulted.pack(vehicle)

    seq = np.random.SeedSequence(seed)
    wrench_seed, imu_seed = seq.spawn(2)
    (fa, ff, fp, fb), (ta, tf, tp_, tb_) = wrench.realize(
        np.random.default_rng(wrench_seed))
    noise = Imu(imu, seed=imu_seed).draw_noise(n_cycles)

    n = vehicle.n_rotors
    log_p = np.zeros((n_cycles, 3))
    log_pref = np.zeros((n_cycles, 3))
    log_u = np.zeros((n_cycles, n))
    log_thetadot = np.zeros((n_cycles, n))
    log_accel = np.zeros((n_cycles, 3))
    log_rfd = np.zeros(n_cycles)
    log_rfdi = np.zeros(n_cycles)
    log_pin = np.zeros(n_cycles, dtype=np.int64)
    log_slack = np.zeros(n_cycles)
    fdi_state = new_fdi_state(n)

    rho = residual.rho_fd if rho_live is None else float(rho_live)
    diverged_cycle, n_clip, n_stall = _fly(
        initial_state(vehicle), n_cycles, dt_ctrl, int(n_substeps),
        vehicle.scalars(), vehicle.i0(), vehicle.arms(),
        vehicle.spin_signs(), wp_h, ib_h, wp_f, ib_f, fault_cycle,
        ctrl.kp, ctrl.kd, ctrl.ki, ctrl.i_max, ctrl.tilt_max, ctrl.k_r,
        ctrl.k_w, ctrl.k_r_yaw, ctrl.k_w_yaw,
        vehicle.total_mass_nominal(),
        np.asarray(vehicle.i0_diag, dtype=float),
        vehicle.n_rotors * vehicle.u_max,
        trajectory.kind_code, trajectory.params_array(),
        effectiveness_matrix(vehicle), alloc.lambda_h, alloc.lambda_f,
        alloc.kappa, alloc.delta, alloc.max_iter, vehicle.u_max,
        hover_lifts(vehicle),
        rho, residual.fd_grid(), residual.fdi_grid(),
        residual.window_samples(), residual.refresh_every,
        residual.stage_samples(), residual.settle_samples(),
        residual.confirm_samples(),
        residual.prominence, residual.theta_dot_des,
        imu.damping, noise,
        fa, ff, fp, fb, ta, tf, tp_, tb_,
        log_p, log_pref, log_u, log_thetadot, log_accel, log_rfd, log_rfdi,
        log_pin, log_slack, fdi_state)

    k_det = int(fdi_state[_S_DETECT])
    detected_at = (k_det + 1) * dt_ctrl if k_det >= 0 else math.nan
    last = n_cycles if diverged_cycle < 0 else diverged_cycle + 1
    sl = slice(0, last)
    return FlightResult(
        t=np.arange(n_cycles)[sl] * dt_ctrl,
        p=log_p[sl], p_ref=log_pref[sl], u=log_u[sl],
        thetadot=log_thetadot[sl], accel_meas=log_accel[sl],
        r_fd=log_rfd[sl], r_fdi=log_rfdi[sl], pin=log_pin[sl],
        slack=log_slack[sl],
        detected_at=detected_at,
        verdict=int(fdi_state[_S_VERDICT]),
        stage_peaks=fdi_state[_S_SCORES:_S_SCORES + n].copy(),
        diverged=diverged_cycle >= 0,
        diverged_at=diverged_cycle * dt_ctrl if diverged_cycle >= 0
        else math.nan,
        thrust_clips=int(n_clip), qp_stalls=int(n_stall), seed=int(seed))

"""IMU measurement model: vibration damping, white noise, 200 Hz sampling.

The airframe does not transmit rotor vibrations to the accelerometer one to
one; structure and mounts damp them. Following the operational definition of
the damping factor ``d`` (the ratio of measured to actual vibration
acceleration amplitude), the measured body acceleration is

    vdot_meas = vdot_rigid + d * a_fault + noise

where ``a_fault`` is the share of the body acceleration induced by the
chipped-blade forces f_as + f_aa and ``vdot_rigid`` the remainder. All other
channels — body velocity, earth position, body rates, ZYX Euler angles —
carry additive white Gaussian noise with the MPU-9250-grade standard
deviations listed in the defaults.

Noise streams are owned per simulation and drawn in a fixed channel order
(accel, velocity, position, rates, angles — 15 values per sample), so a
fixed seed reproduces the measurement sequence bit for bit.

Two optional effects are available but off by default: a second-order
Butterworth low-pass on the accelerometer (the mass-spring-damper reading of
the mount) and harmonic distortion that adds copies of the imbalance tone at
integer multiples of each rotor angle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .rotations import euler_zyx_from_R
from .vehicle import W_K, W_MI

SAMPLE_RATE_DEFAULT = 200.0  # [Hz]


@dataclass(frozen=True)
class ImuModel:
    """Noise levels, vibration damping and sampling of the simulated IMU.

    ``damping`` is d, the measured-to-actual vibration amplitude ratio.
    ``lowpass_cutoff`` (Hz) enables the optional accelerometer low-pass when
    positive; ``harmonics`` lists relative amplitudes for the 2nd, 3rd, ...
    rotor-angle harmonics (empty disables distortion).
    """

    damping: float = 0.05
    sample_rate: float = SAMPLE_RATE_DEFAULT  # [Hz]
    noise_accel: float = 0.0785   # [m/s^2]
    noise_vel: float = 0.0392     # [m/s]
    noise_pos: float = 0.0196     # [m]
    noise_gyro: float = 0.0055    # [rad/s]
    noise_att: float = 0.0028     # [rad]
    lowpass_cutoff: float = 0.0   # [Hz], 0 disables
    harmonics: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive")
        if self.lowpass_cutoff >= 0.5 * self.sample_rate:
            raise ValueError("lowpass_cutoff must stay below Nyquist")

    def noise_std_vector(self):
        """Per-channel standard deviations in draw order (15 values)."""
        out = np.empty(15)
        out[0:3] = self.noise_accel
        out[3:6] = self.noise_vel
        out[6:9] = self.noise_pos
        out[9:12] = self.noise_gyro
        out[12:15] = self.noise_att
        return out


@dataclass
class ImuSample:
    """One 200 Hz measurement: all channels in SI units.

    accel and gyro are body-frame, pos earth-frame, vel the body-frame
    coordinates of the earth-relative velocity, att the (yaw, pitch, roll)
    ZYX Euler angles of the body-to-earth rotation.
    """

    accel: np.ndarray
    vel: np.ndarray
    pos: np.ndarray
    gyro: np.ndarray
    att: np.ndarray


class Imu:
    """Stateful measurement model bound to one simulation.

    ``vehicle``/``fault`` are only needed when harmonic distortion is
    enabled (the harmonic amplitudes derive from the chip weights).
    """

    def __init__(self, model=None, seed=0, vehicle=None, fault=None):
        self.model = model if model is not None else ImuModel()
        self.rng = np.random.default_rng(seed)
        self._std = self.model.noise_std_vector()
        self._sos = None
        self._zi = None
        if self.model.lowpass_cutoff > 0.0:
            self._sos = scipy.signal.butter(
                2, self.model.lowpass_cutoff, fs=self.model.sample_rate,
                output="sos")
            self._zi = np.zeros((self._sos.shape[0], 2, 3))
        if self.model.harmonics and (vehicle is None or fault is None):
            raise ValueError("harmonic distortion needs vehicle and fault")
        self._veh = vehicle
        self._wp = fault.pack(vehicle)[0] if fault is not None else None

    def draw_noise(self, n_samples):
        """Pre-draw n measurement noise rows (n, 15), already scaled.

        Consumes the stream exactly as n measure() calls would, which lets
        a batch simulation loop add slices of this array instead.
        """
        return self.rng.standard_normal((n_samples, 15)) * self._std

    def _harmonic_accel(self, state, mass):
        """Distortion tones at multiples of each rotor angle (body frame)."""
        out = np.zeros(3)
        # fundamental imbalance amplitude k_i m_i thetadot_i^2 / m per rotor
        base = self._wp[:, W_K] * self._wp[:, W_MI] \
            * state.thetadot ** 2 / mass
        for h, rel in enumerate(self.model.harmonics, start=2):
            if rel == 0.0:
                continue
            ang = h * state.theta
            out[0] += rel * np.sum(base * np.cos(ang))
            out[1] += rel * np.sum(base * np.sin(ang))
        return out

    def measure(self, state, accel_true, fault_accel, mass=None):
        """Sample every channel once.

        ``accel_true`` is the full body acceleration vdot and
        ``fault_accel`` its fault-induced share -(f_as + f_aa)/m, so the
        rigid part is their difference. Returns an ImuSample.
        """
        m = self.model
        noise = self.rng.standard_normal(15) * self._std

        accel = accel_true + (m.damping - 1.0) * np.asarray(fault_accel)
        if self._wp is not None and m.harmonics:
            if mass is None:
                raise ValueError("harmonic distortion needs the total mass")
            accel = accel + m.damping * self._harmonic_accel(state, mass)
        if self._sos is not None:
            accel, self._zi = scipy.signal.sosfilt(
                self._sos, accel[None, :], axis=0, zi=self._zi)
            accel = accel[0]
        accel = accel + noise[0:3]

        yaw, pitch, roll = euler_zyx_from_R(state.R)
        att = np.array([yaw, pitch, roll]) + noise[12:15]
        return ImuSample(accel=accel,
                         vel=state.v + noise[3:6],
                         pos=state.p + noise[6:9],
                         gyro=state.omega + noise[9:12],
                         att=att)

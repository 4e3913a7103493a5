"""ESC/motor layer: lift-to-speed conversion, PWM and first-order lag.

Allocation thinks in per-rotor lifts u_i; the ESC converts each to a speed
reference through the nominal lift map u = c_L thetadot^2 (the conversion is
deliberately fault-blind — a chipped rotor still receives the healthy
reference) and tracks it as a first-order system

    thetaddot_i = -lambda_i (thetadot_i - thetadot_ref_i)

with lambda_i = 1 / tau_pt. References are clamped to the speed saturation
before integration so the ODE right-hand side stays smooth; rotors are
unidirectional and their sign convention (opposite the structural spin sign)
is applied here. The physics integrator applies the identical clamp and lag
internally; this module is the command-side view of the same powertrain.
"""

from dataclasses import dataclass, field

import numpy as np


class NegativeLift(ValueError):
    """A lift command below zero reached the ESC (allocation bug)."""


def lift_to_speed(u, params):
    """Signed speed references (rad/s) from lift commands (N).

    Uses the nominal lift coefficient; the rotor spins against its
    structural spin sign so lift points up. Raises NegativeLift on any
    negative command.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise NegativeLift("lift commands must be nonnegative")
    return -params.spin_signs() * np.sqrt(u / params.c_lift)


def speed_to_lift(thetadot, params):
    """Nominal lift (N) produced at the given signed speeds."""
    return params.c_lift * np.square(np.asarray(thetadot, dtype=float))


def pwm(u, params):
    """Duty cycle u_i / u_max in [0, 1]."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise NegativeLift("lift commands must be nonnegative")
    return u / params.u_max


@dataclass
class MotorBank:
    """First-order powertrain state for all rotors of one vehicle."""

    params: object
    thetadot: np.ndarray = None
    thetadot_ref: np.ndarray = None

    def __post_init__(self):
        n = self.params.n_rotors
        if self.thetadot is None:
            self.thetadot = np.zeros(n)
        if self.thetadot_ref is None:
            self.thetadot_ref = np.zeros(n)

    def command(self, u):
        """Set speed references from lift commands, clamped to saturation."""
        ref = lift_to_speed(u, self.params)
        np.clip(ref, -self.params.speed_max, self.params.speed_max, out=ref)
        self.thetadot_ref = ref
        return ref

    def derivative(self):
        """thetaddot_i = -lambda (thetadot_i - thetadot_ref_i)."""
        lam = 1.0 / self.params.motor_tau
        return -lam * (self.thetadot - self.thetadot_ref)

    def step(self, dt):
        """Advance the lag exactly over dt (linear ODE, exact exponential)."""
        a = np.exp(-dt / self.params.motor_tau)
        self.thetadot = self.thetadot_ref + a * (self.thetadot
                                                 - self.thetadot_ref)
        return self.thetadot

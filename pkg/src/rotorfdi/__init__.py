"""Octarotor flight simulation with rotor fault detection and isolation."""

from .actuation import (
    MotorBank,
    NegativeLift,
    lift_to_speed,
    pwm,
    speed_to_lift,
)
from .allocation import (
    AllocationParams,
    Allocator,
    MaxIterations,
    PinDirective,
    build_qp,
    effectiveness_matrix,
    kkt_residual,
    pin_lift_command,
    solve_qp,
)
from .control import (
    Controller,
    ControllerParams,
    ThrustOutOfRange,
    Trajectory,
    WrenchDemand,
    control_step,
    reference,
)
from .fdi import (
    FdiMachine,
    ResidualConfig,
    SpectralBank,
    WindowNotFull,
    goertzel_magnitude,
    spectral_predictor_fas,
    stage_verdict,
)
from .sensing import (
    Imu,
    ImuModel,
    ImuSample,
)
from .simulate import (
    ExternalWrenchParams,
    FlightResult,
    SimDiverged,
    hover_lifts,
    initial_state,
    simulate_flight,
)
from .vehicle import (
    FaultState,
    SimState,
    SingularMassMatrix,
    VehicleParams,
    Wrench,
    actuation_wrench,
    blade_inertia,
    chipping_weights,
    dynamics_derivative,
    mass_properties,
    reaction_torques,
    vibration_forces,
)

__all__ = [
    "AllocationParams",
    "Allocator",
    "Controller",
    "ControllerParams",
    "ExternalWrenchParams",
    "FaultState",
    "FdiMachine",
    "FlightResult",
    "Imu",
    "ImuModel",
    "ImuSample",
    "MaxIterations",
    "MotorBank",
    "NegativeLift",
    "PinDirective",
    "ResidualConfig",
    "SimDiverged",
    "SimState",
    "SingularMassMatrix",
    "SpectralBank",
    "ThrustOutOfRange",
    "Trajectory",
    "VehicleParams",
    "WindowNotFull",
    "Wrench",
    "WrenchDemand",
    "actuation_wrench",
    "blade_inertia",
    "build_qp",
    "chipping_weights",
    "control_step",
    "dynamics_derivative",
    "effectiveness_matrix",
    "goertzel_magnitude",
    "hover_lifts",
    "initial_state",
    "kkt_residual",
    "lift_to_speed",
    "mass_properties",
    "pin_lift_command",
    "pwm",
    "reaction_torques",
    "reference",
    "simulate_flight",
    "solve_qp",
    "spectral_predictor_fas",
    "speed_to_lift",
    "stage_verdict",
    "vibration_forces",
]

__version__ = "0.1.0"

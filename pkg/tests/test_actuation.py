"""Lift/speed conversions and the first-order powertrain lag."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotorfdi.actuation import (
    MotorBank,
    NegativeLift,
    lift_to_speed,
    pwm,
    speed_to_lift,
)
from rotorfdi.vehicle import VehicleParams

VEH = VehicleParams()


def test_zero_lift_zero_speed_zero_pwm():
    u = np.zeros(8)
    assert np.all(lift_to_speed(u, VEH) == 0.0)
    assert np.all(pwm(u, VEH) == 0.0)


def test_max_lift_gives_unit_pwm():
    u = np.full(8, VEH.u_max)
    np.testing.assert_array_equal(pwm(u, VEH), 1.0)


def test_known_speed_point():
    # c_L * 520^2 = 3.32592 N commands 520 rad/s
    u = np.full(8, VEH.c_lift * 520.0**2)
    ref = lift_to_speed(u, VEH)
    np.testing.assert_allclose(np.abs(ref), 520.0, rtol=1e-12)
    # signs oppose the structural spin direction
    np.testing.assert_array_equal(np.sign(ref), -VEH.spin_signs())


def test_negative_lift_raises():
    with pytest.raises(NegativeLift):
        lift_to_speed(np.array([-0.01]), VEH)
    with pytest.raises(NegativeLift):
        pwm(np.array([-0.01]), VEH)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-9, 4.75))
def test_round_trip_speed_lift(u):
    back = speed_to_lift(lift_to_speed(np.array([u]), VEH), VEH)[0]
    assert back == pytest.approx(u, rel=1e-12)


def test_first_order_rise_time():
    bank = MotorBank(VEH)
    bank.command(np.full(8, VEH.c_lift * 500.0**2))
    bank.step(VEH.motor_tau)
    # 63.2% of the step after one time constant
    np.testing.assert_allclose(np.abs(bank.thetadot),
                               500.0 * (1.0 - np.exp(-1.0)), rtol=1e-12)


def test_equilibrium_has_zero_derivative():
    bank = MotorBank(VEH)
    bank.command(np.full(8, 2.0))
    bank.thetadot = bank.thetadot_ref.copy()
    np.testing.assert_array_equal(bank.derivative(), 0.0)


def test_reference_above_saturation_settles_at_clamp():
    bank = MotorBank(VEH)
    # u_max maps to 621.4 rad/s, just over the 620.97 rad/s ceiling
    bank.command(np.full(8, VEH.u_max))
    np.testing.assert_allclose(np.abs(bank.thetadot_ref), VEH.speed_max)
    for _ in range(4000):
        bank.step(0.005)
    np.testing.assert_allclose(np.abs(bank.thetadot), VEH.speed_max,
                               rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 4.75), min_size=5, max_size=5))
def test_speed_never_exceeds_saturation(us):
    bank = MotorBank(VEH)
    for u in us:
        bank.command(np.full(8, u))
        for _ in range(40):
            bank.step(0.005)
        assert np.all(np.abs(bank.thetadot) <= VEH.speed_max + 1e-9)

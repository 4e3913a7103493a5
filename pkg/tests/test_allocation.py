import numpy as np
import pytest

from rotorfdi.allocation import (
    AllocationParams,
    Allocator,
    PinDirective,
    build_qp,
    effectiveness_matrix,
    kkt_residual,
    pin_lift_command,
    qp_objective,
    solve_qp,
)
from rotorfdi.vehicle import VehicleParams

from qp_oracles import enumeration_oracle, pg_oracle, random_instance

P = VehicleParams()
AP = AllocationParams()
B = effectiveness_matrix(P)
HOVER_TAU = np.array([0.0, 0.0, -P.total_mass_nominal() * P.g, 0.0, 0.0,
                      0.0])
HOVER_U = P.total_mass_nominal() * P.g / P.n_rotors


def test_effectiveness_structure():
    assert B.shape == (6, 8)
    np.testing.assert_allclose(B[0], 0.0, atol=0)
    np.testing.assert_allclose(B[1], 0.0, atol=0)
    np.testing.assert_allclose(B[2], -1.0, atol=0)
    assert np.linalg.matrix_rank(B) == 4
    # yaw row alternates sign with the spin directions
    np.testing.assert_allclose(B[5], P.spin_signs() * P.c_drag / P.c_lift,
                               rtol=1e-15)


def test_build_qp_defaults():
    u_prev = np.full(8, HOVER_U)
    H, f, lb, ub = build_qp(HOVER_TAU, u_prev, P, AP)
    np.testing.assert_allclose(np.diag(H), [2.0] * 8 + [200.0], atol=0)
    np.testing.assert_allclose(H, np.diag(np.diag(H)), atol=0)
    np.testing.assert_allclose(f, [0.0] * 8 + [100.0], atol=0)
    np.testing.assert_allclose(lb, HOVER_U - 0.5, rtol=1e-15)
    np.testing.assert_allclose(ub, HOVER_U + 0.5, rtol=1e-15)


def test_build_qp_pin_entries():
    """Frozen pin example: u_des = 3.326 N, kappa = 20."""
    u_prev = np.full(8, 3.3)
    pin = PinDirective(rotor=3, u_des=3.326, kappa=20.0)
    H, f, lb, ub = build_qp(HOVER_TAU, u_prev, P, AP, pin)
    assert H[2, 2] == pytest.approx(20.0, abs=0)
    assert f[2] == pytest.approx(-66.52, rel=1e-12)
    assert H[3, 3] == 2.0 and f[3] == 0.0


def test_pin_validation():
    u_prev = np.full(8, 3.3)
    with pytest.raises(ValueError):
        build_qp(HOVER_TAU, u_prev, P, AP, PinDirective(rotor=9, u_des=3.0))
    with pytest.raises(ValueError):
        build_qp(HOVER_TAU, u_prev, P, AP,
                 PinDirective(rotor=1, u_des=3.0, kappa=100.0))
    with pytest.raises(ValueError):
        build_qp(HOVER_TAU, u_prev, P, AP, PinDirective(rotor=1, u_des=5.0))


def test_hover_equal_lifts():
    """Symmetric hover demand: all lifts equal, wrench met exactly."""
    u_prev = np.full(8, HOVER_U)
    H, f, lb, ub = build_qp(HOVER_TAU, u_prev, P, AP)
    u, s, status = solve_qp(H, f, B, HOVER_TAU, lb, ub)
    assert status == "optimal"
    np.testing.assert_allclose(u, HOVER_U, rtol=1e-9)
    assert s <= 1e-8
    np.testing.assert_allclose(B @ u, HOVER_TAU, atol=1e-8)


def test_feasible_demand_minimum_norm():
    """Interior feasible demand: u is the minimum-norm realization."""
    rng = np.random.default_rng(2)
    u_prev = np.full(8, HOVER_U)
    tau = HOVER_TAU + np.array([0, 0, 0.8, 0.05, -0.03, 0.002])
    H, f, lb, ub = build_qp(tau, u_prev, P, AP)
    u, s, status = solve_qp(H, f, B, tau, lb, ub)
    assert status == "optimal"
    assert s <= 1e-8
    u_mn, *_ = np.linalg.lstsq(B, tau, rcond=None)
    np.testing.assert_allclose(u, u_mn, atol=1e-7)


def test_pin_preserves_wrench_and_shrinks_like_inv_kappa():
    """Soft pin at kappa=20: wrench invariant, offset scales as 1/kappa.

    The pin is a weighted penalty, so the optimum sits at
    u_j = u_des + (B^T nu)_j / kappa where nu are the wrench multipliers
    (about 2x mean lift at hover).  Quadrupling kappa quarters the offset.
    """
    u_prev = np.full(8, HOVER_U)
    H0, f0, lb, ub = build_qp(HOVER_TAU, u_prev, P, AP)
    u0, s0, _ = solve_qp(H0, f0, B, HOVER_TAU, lb, ub)
    devs = {}
    for kappa in (20.0, 80.0):
        pin = PinDirective(rotor=3, u_des=3.326, kappa=kappa)
        H1, f1, lb1, ub1 = build_qp(HOVER_TAU, u_prev, P, AP, pin)
        u1, s1, _ = solve_qp(H1, f1, B, HOVER_TAU, lb1, ub1)
        assert s1 <= 1e-8
        np.testing.assert_allclose(B @ u1, B @ u0, atol=1e-6)
        devs[kappa] = abs(u1[2] - 3.326)
    assert devs[20.0] > 0.1  # finite-kappa offset is real, not a bug
    assert 3.5 < devs[20.0] / devs[80.0] < 4.5


def test_pin_steering_accuracy_large_kappa():
    """With kappa large the pin lands within 1e-3 u_max of u_des."""
    ap = AllocationParams(lambda_h=2e5, lambda_f=100.0)
    u_prev = np.full(8, HOVER_U)
    for tau_extra in (np.zeros(6), np.array([0, 0, 0.6, 0.04, -0.05, 0.003])):
        tau = HOVER_TAU + tau_extra
        pin = PinDirective(rotor=3, u_des=3.326, kappa=1e5)
        H, f, lb, ub = build_qp(tau, u_prev, P, ap, pin)
        u, s, status = solve_qp(H, f, B, tau, lb, ub)
        assert status == "optimal"
        assert abs(u[2] - 3.326) < 1e-3 * P.u_max
        np.testing.assert_allclose(B @ u, tau, atol=1e-6)


def test_pin_lift_command_hits_target_speed():
    """Compensated pin command realizes the requested rotor speed."""
    target = 560.0
    u_des = pin_lift_command(target, P, AP)
    # commanded below the naive c_L * target^2 to absorb the soft-pin offset
    assert u_des < P.c_lift * target**2
    u = np.full(8, HOVER_U)
    pin = PinDirective(rotor=3, u_des=u_des, kappa=AP.kappa)
    for _ in range(6):  # rate-limit box recenters each cycle
        H, f, lb, ub = build_qp(HOVER_TAU, u, P, AP, pin)
        u, s, status = solve_qp(H, f, B, HOVER_TAU, lb, ub)
        assert status == "optimal" and s <= 1e-8
    realized = np.sqrt(u[2] / P.c_lift)
    assert abs(realized - target) < 4.0


def test_rate_limit_steps_down():
    """Zero-wrench demand from hover: lifts drop by delta per cycle."""
    u_prev = np.full(8, HOVER_U)
    tau = np.zeros(6)
    H, f, lb, ub = build_qp(tau, u_prev, P, AP)
    u, s, status = solve_qp(H, f, B, tau, lb, ub)
    assert status == "optimal"
    np.testing.assert_allclose(u, HOVER_U - AP.delta, rtol=1e-9)
    assert s == pytest.approx(8 * (HOVER_U - AP.delta), rel=1e-6)


def test_infeasible_slack_is_worst_row():
    """Unreachable demand: s equals the infinity norm of the shortfall."""
    u_prev = np.full(8, 4.5)
    tau = np.array([0.0, 0.0, -2.0 * 8 * P.u_max, 0.0, 0.0, 0.0])
    H, f, lb, ub = build_qp(tau, u_prev, P, AP)
    u, s, status = solve_qp(H, f, B, tau, lb, ub)
    assert status == "optimal"
    np.testing.assert_allclose(u, ub, rtol=1e-9)  # saturated upward
    assert s == pytest.approx(np.abs(B @ u - tau).max(), rel=1e-9)
    assert s > 0


def test_kkt_on_random_instances():
    rng = np.random.default_rng(42)
    n_steer = 0
    for _ in range(200):
        H, f, Bm, tau, lb, ub, meta = random_instance(rng, P, AP)
        u, s, status = solve_qp(H, f, Bm, tau, lb, ub)
        assert status == "optimal"
        x = np.concatenate([u, [s]])
        assert kkt_residual(H, f, Bm, tau, lb, ub, x) < 1e-6
        assert np.all(u >= lb - 1e-9) and np.all(u <= ub + 1e-9)
        assert s >= -1e-12
        if meta.steering:
            n_steer += 1
            j = meta.pin.rotor - 1
            assert abs(u[j] - meta.pin.u_des) < 1e-3 * P.u_max
    assert n_steer > 10  # population actually exercised


def test_matches_pg_oracle_objective():
    rng = np.random.default_rng(7)
    for _ in range(60):
        H, f, Bm, tau, lb, ub, meta = random_instance(rng, P, AP)
        u, s, status = solve_qp(H, f, Bm, tau, lb, ub)
        assert status == "optimal"
        x = np.concatenate([u, [s]])
        x_ref = pg_oracle(H, f, Bm, tau, lb, ub)
        o1 = qp_objective(H, f, x)
        o2 = qp_objective(H, f, x_ref)
        assert abs(o1 - o2) <= 1e-8 * max(1.0, abs(o2))


def test_matches_enumeration_on_quadrotor():
    """Exhaustive active-set enumeration is tractable at four rotors."""
    quad = VehicleParams(n_rotors=4)
    Bq = effectiveness_matrix(quad)
    rng = np.random.default_rng(3)
    for _ in range(6):
        H, f, _, tau, lb, ub, meta = random_instance(rng, quad, AP,
                                                     hard_prob=0.5,
                                                     steer_prob=0.0)
        tau[0:2] = 0.0
        u, s, status = solve_qp(H, f, Bq, tau, lb, ub)
        assert status == "optimal"
        x = np.concatenate([u, [s]])
        x_ref = enumeration_oracle(H, f, Bq, tau, lb, ub)
        o1 = qp_objective(H, f, x)
        o2 = qp_objective(H, f, x_ref)
        assert abs(o1 - o2) <= 1e-7 * max(1.0, abs(o2))
        np.testing.assert_allclose(u, x_ref[:4], atol=1e-6)


def test_allocator_statefulness_and_fallback():
    alloc = Allocator(P)
    np.testing.assert_allclose(alloc.u_prev, HOVER_U, rtol=1e-12)
    u1 = alloc.allocate(HOVER_TAU)
    np.testing.assert_allclose(u1, HOVER_U, rtol=1e-8)
    # starved iteration budget: previous lifts returned unchanged
    stingy = Allocator(P, AllocationParams(max_iter=1))
    tau = HOVER_TAU + np.array([0, 0, 1.0, 0.1, 0.0, 0.0])
    u2 = stingy.allocate(tau)
    np.testing.assert_allclose(u2, HOVER_U, rtol=1e-12)

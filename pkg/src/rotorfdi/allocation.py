"""QP-based control allocation with an optional single-rotor speed pin.

Each control cycle distributes a six-component wrench demand tau over the
n rotor lifts u by solving

    min_x  0.5 x' H x + f' x,   x = [u; s]
    s.t.   -1 s <= B u - tau <= 1 s        (slack-relaxed wrench equality)
           max(u_prev - delta, 0) <= u <= min(u_prev + delta, u_max)

with H = 2 diag(1, ..., 1, lambda_H) and f = [0; lambda_f]. The linear
slack weight acts as an exact penalty: whenever the demand is achievable
inside the box, the optimum has B u = tau and s = 0, and u is the
minimum-norm realization. When the demand is not achievable, s equals the
infinity-norm shortfall.

Pinning rotor j to a lift u_des replaces H_jj by kappa and f_j by
-kappa u_des (0 < kappa < lambda_H), which steers u_j to u_des whenever
the box and the wrench demand allow it, while the remaining rotors absorb
the difference; the realized wrench is unchanged.

The solver is a primal active-set method written for this exact problem
shape (a handful of variables, box plus paired slab constraints).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from numba import njit


class MaxIterations(Exception):
    """Active-set solver failed to converge (degenerate working set)."""


@dataclass
class PinDirective:
    """Pin rotor ``rotor`` (1..n) to lift ``u_des`` with weight ``kappa``."""

    rotor: int = 0          # 0 = no pin
    u_des: float = 0.0
    kappa: float = 20.0


@dataclass
class AllocationParams:
    lambda_h: float = 100.0   # quadratic slack weight
    lambda_f: float = 100.0   # linear slack weight (exact penalty)
    kappa: float = 20.0       # pin weight, 0 < kappa < lambda_h
    delta: float = 0.5        # lift rate limit per cycle [N]
    max_iter: int = 200


def effectiveness_matrix(params):
    """6 x n map from rotor lifts to body wrench (lift along -e3)."""
    n = params.n_rotors
    arms = params.arms()
    spin = params.spin_signs()
    B = np.zeros((6, n))
    B[2, :] = -1.0
    B[3, :] = -arms[1, :]
    B[4, :] = arms[0, :]
    B[5, :] = spin * params.c_drag / params.c_lift
    return B


@njit(cache=True)
def _qp_solve(H, f, B, tau, lb, ub, max_iter):
    """Primal active-set solve of the allocation QP.

    Constraint rows, in index order:
      0 .. 2m-1      : slab rows  +-(B u - tau)_i <= s   (m wrench rows)
      2m .. 2m+n-1   : lower box  -u_i <= -lb_i
      2m+n .. 2m+2n-1: upper box   u_i <=  ub_i

    Returns (x, iters, status) with status 0 = optimal, 1 = max_iter.
    """
    m = B.shape[0]
    n = B.shape[1]
    nx = n + 1
    nc = 2 * m + 2 * n

    # constraint normals a_k' x <= b_k
    A = np.zeros((nc, nx))
    b = np.zeros(nc)
    for i in range(m):
        for j in range(n):
            A[i, j] = B[i, j]
            A[m + i, j] = -B[i, j]
        A[i, n] = -1.0
        A[m + i, n] = -1.0
        b[i] = tau[i]
        b[m + i] = -tau[i]
    for j in range(n):
        A[2 * m + j, j] = -1.0
        b[2 * m + j] = -lb[j]
        A[2 * m + n + j, j] = 1.0
        b[2 * m + n + j] = ub[j]

    # feasible start: mid-box lifts, slack above the largest violation
    x = np.zeros(nx)
    for j in range(n):
        x[j] = 0.5 * (lb[j] + ub[j])
    smax = 0.0
    for i in range(m):
        v = -tau[i]
        for j in range(n):
            v += B[i, j] * x[j]
        if abs(v) > smax:
            smax = abs(v)
    x[n] = smax + 1e-9

    active = np.full(nx, -1, dtype=np.int64)  # working set, at most nx rows
    na = 0

    for it in range(max_iter):
        # solve the equality-constrained subproblem via dense KKT
        dim = nx + na
        K = np.zeros((dim, dim))
        rhs = np.zeros(dim)
        for i in range(nx):
            for j in range(nx):
                K[i, j] = H[i, j]
            rhs[i] = -(f[i])
            for j in range(nx):
                rhs[i] -= H[i, j] * x[j]
        for a_i in range(na):
            row = active[a_i]
            for j in range(nx):
                K[nx + a_i, j] = A[row, j]
                K[j, nx + a_i] = A[row, j]
            rhs[nx + a_i] = 0.0
        sol = np.linalg.solve(K, rhs)
        p = sol[:nx]

        if np.max(np.abs(p)) < 1e-11:
            # subproblem optimal: check multipliers of the working set
            drop = -1
            lam_min = -1e-9
            for a_i in range(na):
                lam = sol[nx + a_i]
                if lam < lam_min:
                    lam_min = lam
                    drop = a_i
            if drop < 0:
                return x, it + 1, 0
            for a_i in range(drop, na - 1):
                active[a_i] = active[a_i + 1]
            na -= 1
            continue

        # ratio test against inactive constraints
        alpha = 1.0
        block = -1
        for k in range(nc):
            in_ws = False
            for a_i in range(na):
                if active[a_i] == k:
                    in_ws = True
                    break
            if in_ws:
                continue
            ap = 0.0
            ax = 0.0
            for j in range(nx):
                ap += A[k, j] * p[j]
                ax += A[k, j] * x[j]
            if ap > 1e-13:
                ratio = (b[k] - ax) / ap
                if ratio < alpha - 1e-15:
                    alpha = ratio
                    block = k
        if alpha < 0.0:
            alpha = 0.0
        for j in range(nx):
            x[j] += alpha * p[j]
        if block >= 0:
            active[na] = block
            na += 1
            if na > nx:
                return x, it + 1, 1
    return x, max_iter, 1


@njit(cache=True)
def _qp_build(n, lam_h, lam_f, pin_rotor, pin_u, kappa):
    """H and f for the allocation QP; pin_rotor is 1-based, 0 disables."""
    H = np.zeros((n + 1, n + 1))
    f = np.zeros(n + 1)
    for j in range(n):
        H[j, j] = 2.0
    H[n, n] = 2.0 * lam_h
    f[n] = lam_f
    if pin_rotor > 0:
        H[pin_rotor - 1, pin_rotor - 1] = kappa
        f[pin_rotor - 1] = -kappa * pin_u
    return H, f


def build_qp(tau, u_prev, vehicle, alloc=None, pin=None, u_max=None):
    """Assemble (H, f, B, lb, ub) for one allocation cycle."""
    if alloc is None:
        alloc = AllocationParams()
    n = vehicle.n_rotors
    umax = vehicle.u_max if u_max is None else u_max
    pin_rotor = 0
    pin_u = 0.0
    kappa = alloc.kappa
    if pin is not None and pin.rotor > 0:
        if not 1 <= pin.rotor <= n:
            raise ValueError(f"pin rotor must be in 1..{n}, got {pin.rotor}")
        if not 0.0 < pin.kappa < alloc.lambda_h:
            raise ValueError("pin weight must satisfy 0 < kappa < lambda_h")
        if not 0.0 <= pin.u_des <= umax:
            raise ValueError("pinned lift must lie in [0, u_max]")
        pin_rotor = pin.rotor
        pin_u = pin.u_des
        kappa = pin.kappa
    H, f = _qp_build(n, alloc.lambda_h, alloc.lambda_f, pin_rotor, pin_u,
                     kappa)
    lb = np.maximum(np.asarray(u_prev, dtype=float) - alloc.delta, 0.0)
    ub = np.minimum(np.asarray(u_prev, dtype=float) + alloc.delta, umax)
    return H, f, lb, ub


def pin_lift_command(theta_dot_des, vehicle, alloc=None, total_lift=None):
    """Lift command that realizes a target rotor speed under a soft pin.

    The pin penalty is finite, so the QP optimum carries an offset
    (B^T nu)_j / kappa above u_des, nu being the wrench multipliers.  At the
    dominant lift row the multiplier is shared by all rotors, which gives a
    closed-form steady state: solving it for u_des makes the realized lift
    land on c_L * theta_dot_des^2 instead of overshooting by ~0.3 N.
    """
    if alloc is None:
        alloc = AllocationParams()
    n = vehicle.n_rotors
    kappa = alloc.kappa
    u_tgt = vehicle.c_lift * theta_dot_des**2
    if total_lift is None:
        total_lift = vehicle.total_mass_nominal() * vehicle.g
    # u_j = u_des + nu/kappa with nu = (L - u_des)/((n-1)/2 + 1/kappa)
    c = (n - 1) / 2.0 + 1.0 / kappa
    u_des = (u_tgt - total_lift / (c * kappa)) / (1.0 - 1.0 / (c * kappa))
    return float(np.clip(u_des, 0.0, vehicle.u_max))


def solve_qp(H, f, B, tau, lb, ub, max_iter=200):
    """Solve one allocation QP; returns (u, s, status_string)."""
    x, iters, status = _qp_solve(H, f, B, np.asarray(tau, dtype=float),
                                 np.asarray(lb, dtype=float),
                                 np.asarray(ub, dtype=float), max_iter)
    n = B.shape[1]
    return x[:n], x[n], "optimal" if status == 0 else "max_iter"


def kkt_residual(H, f, B, tau, lb, ub, x, tol_active=1e-7):
    """Max KKT violation (stationarity, feasibility, complementarity).

    Multipliers for the active rows come from a least-squares fit of the
    stationarity condition, so this is an independent certificate of the
    solution rather than a readout of the solver's internals.
    """
    m, n = B.shape
    nx = n + 1
    A = np.zeros((2 * m + 2 * n, nx))
    b = np.zeros(2 * m + 2 * n)
    A[:m, :n] = B
    A[m:2 * m, :n] = -B
    A[:2 * m, n] = -1.0
    b[:m] = tau
    b[m:2 * m] = -tau
    A[2 * m:2 * m + n, :n] = -np.eye(n)
    b[2 * m:2 * m + n] = -lb
    A[2 * m + n:, :n] = np.eye(n)
    b[2 * m + n:] = ub
    viol = A @ x - b
    primal = max(0.0, viol.max())
    act = viol > -tol_active
    g = H @ x + f
    lam = np.zeros(A.shape[0])
    if act.any():
        # nonnegative fit: degenerate active sets (both slab rows of one
        # wrench component tight at s=0) admit many multiplier splits and
        # the min-norm one may go negative; nnls picks a certified split
        lam_act, _ = scipy.optimize.nnls(A[act].T, -g)
        lam[act] = lam_act
    stat = np.abs(g + A.T @ lam).max()
    comp = np.abs(lam * viol).max() if lam.size else 0.0
    return max(primal, stat, comp)


def qp_objective(H, f, x):
    return 0.5 * x @ H @ x + f @ x


class Allocator:
    """Stateful per-simulation allocation: rate limits off the previous u."""

    def __init__(self, vehicle, alloc=None, u_init=None):
        self.vehicle = vehicle
        self.alloc = alloc if alloc is not None else AllocationParams()
        self.B = effectiveness_matrix(vehicle)
        if u_init is None:
            hover = vehicle.total_mass_nominal() * vehicle.g / vehicle.n_rotors
            u_init = np.full(vehicle.n_rotors, hover)
        self.u_prev = np.asarray(u_init, dtype=float).copy()
        self.last_slack = 0.0

    def allocate(self, tau, pin=None):
        """Lifts for one cycle; falls back to the previous lifts if the
        solver stalls."""
        H, f, lb, ub = build_qp(tau, self.u_prev, self.vehicle, self.alloc,
                                pin)
        u, s, status = solve_qp(H, f, self.B, tau, lb, ub,
                                self.alloc.max_iter)
        if status != "optimal":
            return self.u_prev.copy()
        self.u_prev = u.copy()
        self.last_slack = s
        return u

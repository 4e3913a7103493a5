"""Small rotation helpers shared by the dynamics, sensing and control code.

All rotation matrices map body coordinates to earth coordinates (NED, z
down). Euler angles follow the ZYX (yaw-pitch-roll) convention.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def skew(a):
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    s = np.zeros((3, 3))
    s[0, 1] = -a[2]
    s[0, 2] = a[1]
    s[1, 0] = a[2]
    s[1, 2] = -a[0]
    s[2, 0] = -a[1]
    s[2, 1] = a[0]
    return s


@njit(cache=True)
def orthonormalize(R):
    """Project a near-orthonormal matrix back onto SO(3).

    Two Newton steps of the polar-decomposition iteration
    R <- R (1.5 I - 0.5 R^T R); quadratic convergence, keeps the error of a
    1 kHz integration below 1e-12.
    """
    out = R.copy()
    for _ in range(2):
        x = out.T @ out
        c = -0.5 * x
        c[0, 0] += 1.5
        c[1, 1] += 1.5
        c[2, 2] += 1.5
        out = out @ c
    return out


@njit(cache=True)
def euler_zyx_from_R(R):
    """Yaw, pitch, roll from a body-to-earth rotation matrix.

    Pitch is clamped just short of +-pi/2 so the downstream atan2 calls stay
    well conditioned near the gimbal singularity.
    """
    s = -R[2, 0]
    if s > 1.0 - 1e-12:
        s = 1.0 - 1e-12
    elif s < -1.0 + 1e-12:
        s = -1.0 + 1e-12
    pitch = math.asin(s)
    yaw = math.atan2(R[1, 0], R[0, 0])
    roll = math.atan2(R[2, 1], R[2, 2])
    return yaw, pitch, roll


@njit(cache=True)
def R_from_euler_zyx(yaw, pitch, roll):
    """Body-to-earth rotation matrix from ZYX Euler angles."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    R = np.empty((3, 3))
    R[0, 0] = cy * cp
    R[0, 1] = cy * sp * sr - sy * cr
    R[0, 2] = cy * sp * cr + sy * sr
    R[1, 0] = sy * cp
    R[1, 1] = sy * sp * sr + cy * cr
    R[1, 2] = sy * sp * cr - cy * sr
    R[2, 0] = -sp
    R[2, 1] = cp * sr
    R[2, 2] = cp * cr
    return R

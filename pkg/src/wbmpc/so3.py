"""Quaternion and SO(3) helpers.

Quaternions are stored as (w, x, y, z) numpy arrays. Orientation
perturbations are expressed in the body frame (right multiplication),
which matches the angular-velocity convention used by the planner.
"""

import numpy as np

_EPS = 1e-12


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q (active rotation)."""
    w = q[0]
    u = q[1:]
    # Rodrigues-style expansion, cheaper than building the matrix.
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * axis / n
    return q


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic x-y-z (roll, pitch, yaw) to quaternion."""
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation vector to quaternion."""
    angle = np.linalg.norm(w)
    q = np.empty(4)
    if angle < 1e-10:
        # sin(a/2)/a ~ 1/2 - a^2/48
        s = 0.5 - angle * angle / 48.0
        q[0] = 1.0 - angle * angle / 8.0
        q[1:] = s * w
        return q / np.linalg.norm(q)
    q[0] = np.cos(0.5 * angle)
    q[1:] = np.sin(0.5 * angle) * w / angle
    return q


def so3_log(q: np.ndarray) -> np.ndarray:
    """Quaternion to rotation vector (angle in [0, pi])."""
    q = q if q[0] >= 0.0 else -q
    norm_v = np.linalg.norm(q[1:])
    if norm_v < 1e-10:
        return 2.0 * q[1:] / q[0]
    angle = 2.0 * np.arctan2(norm_v, q[0])
    return angle * q[1:] / norm_v


def hat(w: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def so3_right_jacobian(w: np.ndarray) -> np.ndarray:
    """Jr(w): Exp(w + dw) ~ Exp(w) Exp(Jr(w) dw)."""
    angle = np.linalg.norm(w)
    W = hat(w)
    if angle < 1e-7:
        return np.eye(3) - 0.5 * W + W @ W / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / a2 * W
        + (angle - np.sin(angle)) / (a2 * angle) * (W @ W)
    )


def so3_right_jacobian_inv(w: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(w)
    W = hat(w)
    if angle < 1e-7:
        return np.eye(3) + 0.5 * W + W @ W / 12.0
    a2 = angle * angle
    coef = 1.0 / a2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))
    return np.eye(3) + 0.5 * W + coef * (W @ W)


def quat_geodesic(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions."""
    return float(np.linalg.norm(so3_log(quat_mul(quat_conj(a), b))))

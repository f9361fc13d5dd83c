"""SO(3) and planar-angle utilities.

Rotations are 3x3 orthonormal matrices with det +1. The log map returns the
axial (axis-angle) vector with angle in [0, pi]; small and near-pi angles go
through dedicated numerically stable branches.
"""

from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-6
_NEAR_PI = np.pi - 1e-4


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() < tol
            and abs(np.linalg.det(R) - 1.0) < tol)


def hat(w: np.ndarray) -> np.ndarray:
    """3-vector -> skew-symmetric matrix."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix -> its axial 3-vector (inverse of hat)."""
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a second-order Taylor branch near zero."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    S = hat(w)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * S + b * (S @ S)


def so3_log_vee(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, angle in [0, pi]."""
    R = np.asarray(R, dtype=np.float64)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    s = vee(R - R.T) / 2.0  # = sin(theta) * axis
    if theta < _SMALL_ANGLE:
        # vee(R - R^T)/2 ~ w (1 - theta^2/6); invert to second order
        return s * (1.0 + theta * theta / 6.0)
    if theta > _NEAR_PI:
        # sin(theta) -> 0: the symmetric part gives the axis exactly via
        # (R + R^T)/2 = c I + (1-c) n n^T, well conditioned near pi.
        M = ((R + R.T) / 2.0 - c * np.eye(3)) / (1.0 - c)
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(max(M[k, k], 1e-18))
        axis = axis / np.linalg.norm(axis)
        # angle from the skew norm (= sin(theta)), sharper than arccos here
        theta = np.pi - np.arcsin(min(np.linalg.norm(s), 1.0))
        # keep continuity with the skew part while it is still informative
        if np.dot(axis, s) < 0:
            axis = -axis
        return theta * axis
    return s * (theta / np.sin(theta))


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi], congruent mod 2*pi."""
    w = float(theta) % (2.0 * np.pi)
    if w > np.pi:
        w -= 2.0 * np.pi
    return w


def to_local(R: np.ndarray, x_world: np.ndarray) -> np.ndarray:
    """World vector expressed in the frame of R: R^T x."""
    return np.asarray(R, dtype=np.float64).T @ np.asarray(x_world, dtype=np.float64)


def yaw_of(R: np.ndarray) -> float:
    """Heading angle of the rotated x-axis projected onto the ground plane."""
    return float(np.arctan2(R[1, 0], R[0, 0]))


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation in the Frobenius sense (polar projection via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def project_rotations(M: np.ndarray) -> np.ndarray:
    """Batched polar projection for an (..., 3, 3) stack."""
    M = np.asarray(M, dtype=np.float64)
    U, _, Vt = np.linalg.svd(M)
    det = np.linalg.det(np.matmul(U, Vt))
    U = U.copy()
    U[..., :, -1] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return np.matmul(U, Vt)

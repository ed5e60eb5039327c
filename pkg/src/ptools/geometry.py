"""Rotation helpers shared across the package.

Convention: ZYZ Euler angles (theta, phi, psi) compose as
R = Rz(theta) @ Ry(phi) @ Rz(psi).
"""

from __future__ import annotations

import numpy as np


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def euler_zyz_to_matrix(theta: float, phi: float, psi: float) -> np.ndarray:
    """Rotation matrix for ZYZ Euler angles."""
    return rot_z(theta) @ rot_y(phi) @ rot_z(psi)


def matrix_to_euler_zyz(R: np.ndarray) -> tuple[float, float, float]:
    """Extract ZYZ Euler angles (theta, phi, psi) with phi in [0, pi].

    Gimbal-locked matrices (phi = 0 or pi) put the full z-rotation
    into theta and set psi = 0.
    """
    R = np.asarray(R, dtype=float)
    sy = np.hypot(R[0, 2], R[1, 2])
    phi = np.arctan2(sy, R[2, 2])
    if sy > 1e-12:
        theta = np.arctan2(R[1, 2], R[0, 2])
        psi = np.arctan2(R[2, 1], -R[2, 0])
    elif R[2, 2] > 0.0:  # phi = 0: R = Rz(theta + psi)
        theta = np.arctan2(R[1, 0], R[0, 0])
        psi = 0.0
    else:  # phi = pi: R = Rz(theta - psi) @ Ry(pi)
        theta = np.arctan2(-R[1, 0], -R[0, 0])
        psi = 0.0
    return float(theta), float(phi), float(psi)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        raise ValueError("rotation axis must be nonzero")
    kx, ky, kz = axis / n
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking direction a onto direction b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        raise ValueError("directions must be nonzero")
    a = a / na
    b = b / nb
    c = float(np.dot(a, b))
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        if c > 0.0:
            return np.eye(3)
        # Antiparallel: rotate pi about any axis perpendicular to a.
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return rotation_about_axis(perp, np.pi)
    return rotation_about_axis(axis, float(np.arctan2(s, c)))


def is_rotation_matrix(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    ortho = np.max(np.abs(R.T @ R - np.eye(3))) < tol
    return bool(ortho and np.linalg.det(R) > 0.0)

"""SE(3)/SO(3) primitives used by every measurement model.

Conventions:
    - Quaternions are stored (x, y, z, w) and canonicalized to w >= 0.
    - ``rotation_matrix(q)`` maps robot-frame vectors into the world frame.
    - Relative rotation residuals use the quaternion vector part, which is
      sin(angle/2) * axis. Valid for the small inter-step rotations produced
      by a 10 Hz odometer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-6
IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def quat_canonical(q) -> np.ndarray:
    """Normalize ``q`` and flip its sign so that w >= 0.

    Quaternions already unit to rounding are left unscaled, which keeps
    canonicalization idempotent bit for bit.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidInputError(f"cannot normalize quaternion {q!r}")
    if abs(n - 1.0) > 4e-16:
        q = q / n
    if q[3] < 0.0:
        q = -q
    return q


def _check_unit(q: np.ndarray) -> None:
    if q.shape != (4,):
        raise InvalidInputError(f"quaternion must have 4 components, got shape {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"quaternion is not unit norm: |q| = {np.linalg.norm(q)}")


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a ⊗ b for (x, y, z, w) quaternions."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return quat_canonical(np.append(np.sin(0.5 * angle) * axis, np.cos(0.5 * angle)))


def quat_from_yaw(yaw: float) -> np.ndarray:
    return quat_canonical([0.0, 0.0, np.sin(0.5 * yaw), np.cos(0.5 * yaw)])


def quat_exp(phi) -> np.ndarray:
    """Quaternion of the rotation vector ``phi`` (axis * angle, radians)."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < 1e-12:
        return quat_canonical(np.append(0.5 * phi, 1.0))
    return quat_canonical(np.append(np.sin(0.5 * angle) * phi / angle, np.cos(0.5 * angle)))


def yaw_of(q) -> float:
    """Heading angle of the rotated robot x axis projected onto the world xy plane."""
    R = rotation_matrix(q)
    return float(np.arctan2(R[1, 0], R[0, 0]))


def rotation_matrix(q) -> np.ndarray:
    """3x3 rotation matrix of unit quaternion ``q`` (local -> world)."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_relative(qa, qb) -> np.ndarray:
    """Relative rotation qa⁻¹ ⊗ qb, canonicalized to w >= 0."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    _check_unit(qa)
    _check_unit(qb)
    return quat_canonical(quat_multiply(quat_conjugate(qa), qb))


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


@dataclass(frozen=True)
class Pose:
    """Robot pose: world translation ``t`` and orientation ``q`` (x, y, z, w)."""

    t: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.shape != (3,):
            raise InvalidInputError(f"translation must be a 3-vector, got shape {t.shape}")
        q = np.asarray(self.q, dtype=float)
        if q.shape != (4,):
            raise InvalidInputError(f"quaternion must have 4 components, got shape {q.shape}")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "q", _frozen(quat_canonical(q)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), IDENTITY_QUAT)

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        return cls(np.array([x, y, z]), quat_from_yaw(yaw))

    @property
    def R(self) -> np.ndarray:
        return rotation_matrix(self.q)

    @property
    def yaw(self) -> float:
        return yaw_of(self.q)

    def as_array(self) -> np.ndarray:
        """Seven-vector (x, y, z, qx, qy, qz, qw)."""
        return np.concatenate([self.t, self.q])

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.t, other.t) and np.array_equal(self.q, other.q))

    def __hash__(self):
        return hash((self.t.tobytes(), self.q.tobytes()))


@dataclass(frozen=True)
class Tangent6:
    """Relative pose: ``dt`` in the source-pose frame, ``dr`` the relative quaternion vector part."""

    dt: np.ndarray
    dr: np.ndarray

    def __post_init__(self):
        dt = np.asarray(self.dt, dtype=float)
        dr = np.asarray(self.dr, dtype=float)
        if dt.shape != (3,) or dr.shape != (3,):
            raise InvalidInputError("Tangent6 needs two 3-vectors")
        if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(dr))):
            raise InvalidInputError("Tangent6 entries must be finite")
        if np.linalg.norm(dr) > 1.0 + 1e-12:
            raise InvalidInputError(f"|dr| = {np.linalg.norm(dr)} exceeds 1")
        object.__setattr__(self, "dt", _frozen(dt))
        object.__setattr__(self, "dr", _frozen(dr))

    @classmethod
    def zero(cls) -> "Tangent6":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v) -> "Tangent6":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dt, self.dr])

    def __eq__(self, other):
        if not isinstance(other, Tangent6):
            return NotImplemented
        return bool(np.array_equal(self.dt, other.dt) and np.array_equal(self.dr, other.dr))

    def __hash__(self):
        return hash((self.dt.tobytes(), self.dr.tobytes()))


def odom_predict(pi: Pose, pj: Pose) -> Tangent6:
    """Relative motion from ``pi`` to ``pj`` expressed in the frame of ``pi``."""
    dt = pi.R.T @ (pj.t - pi.t)
    dr = quat_relative(pi.q, pj.q)[:3]
    return Tangent6(dt, dr)


def odom_compose(pi: Pose, z: Tangent6) -> Pose:
    """Apply relative motion ``z`` to ``pi``; inverse of :func:`odom_predict`."""
    dr = np.asarray(z.dr, dtype=float)
    n2 = float(dr @ dr)
    if n2 > 1.0 + 1e-12:
        raise InvalidInputError(f"|dr| = {np.sqrt(n2)} exceeds 1")
    dq = np.append(dr, np.sqrt(max(0.0, 1.0 - n2)))
    t = pi.t + pi.R @ z.dt
    return Pose(t, quat_multiply(pi.q, dq))


def tangent_basis(u) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis (b1, b2) of the plane orthogonal to unit vector ``u``.

    Gram-Schmidt is seeded with the world axis least aligned with ``u`` (ties
    resolved x, then y, then z), and b2 = u x b1 so that (b1, b2, u) is
    right-handed.
    """
    u = np.asarray(u, dtype=float)
    k = int(np.argmin(np.abs(u)))  # argmin returns the first index on ties
    seed = np.zeros(3)
    seed[k] = 1.0
    b1 = seed - (seed @ u) * u
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(u, b1)
    return b1, b2


def wrap_angle(a):
    """Wrap angles to [-pi, pi)."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return float(w) if np.ndim(w) == 0 else w


def unit_dir(v) -> np.ndarray:
    """Normalize ``v`` to a unit direction; zero vectors are rejected."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise InvalidInputError("cannot build a direction from a zero vector")
    return v / n


def azimuth_elevation_dir(theta: float, phi: float = 0.0) -> np.ndarray:
    """Unit direction subtending azimuth ``theta`` and elevation ``phi``."""
    return np.array([np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)])

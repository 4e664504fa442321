"""Quaternion algebra, rigid-body kinematics, and grasp-matrix construction.

Conventions used throughout the package:

* Quaternions are length-4 ``float64`` arrays ``[eta, ex, ey, ez]`` --
  Hamilton product, scalar part first, right-handed. Every operation that
  composes quaternions renormalizes its result so the unit constraint
  ``eta^2 + ||eps||^2 = 1`` never drifts.
* Angular velocities are world-frame vectors; ``qdot = 0.5 * [0, omega] * q``.
* All positions, velocities and wrenches are world-frame unless a function
  says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def skew(a: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix S with S @ b == np.cross(a, b) for every b."""
    ax, ay, az = a
    return np.array([[0.0, -az, ay], [az, 0.0, -ax], [-ay, ax, 0.0]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    inv = 1.0 / math.sqrt(w * w + x * x + y * y + z * z)
    return np.array([w * inv, x * inv, y * inv, z * inv])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, renormalized."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    w = aw * bw - ax * bx - ay * by - az * bz
    x = aw * bx + bw * ax + ay * bz - az * by
    y = aw * by + bw * ay + az * bx - ax * bz
    z = aw * bz + bw * az + ax * by - ay * bx
    inv = 1.0 / math.sqrt(w * w + x * x + y * y + z * z)
    return np.array([w * inv, x * inv, y * inv, z * inv])


def quat_inv(q: np.ndarray) -> np.ndarray:
    """Inverse of a unit quaternion (its conjugate)."""
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_error(q: np.ndarray, q_des: np.ndarray) -> np.ndarray:
    """Orientation deviation dq = q * inv(q_des)."""
    return quat_mul(q, quat_inv(q_des))


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    """Exponential map: rotation by ||v|| radians about v/||v||."""
    vx, vy, vz = v
    angle = math.sqrt(vx * vx + vy * vy + vz * vz)
    if angle < 1e-12:
        # second-order small-angle expansion keeps the map smooth at zero
        q = np.array([1.0 - 0.125 * angle * angle, 0.5 * vx, 0.5 * vy, 0.5 * vz])
        return quat_normalize(q)
    half = 0.5 * angle
    s = math.sin(half) / angle
    return quat_normalize(np.array([math.cos(half), s * vx, s * vy, s * vz]))


def rot_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (proper orthogonal, det = 1)."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


@dataclass
class Pose:
    p: np.ndarray  # position, m
    q: np.ndarray  # unit quaternion [eta, eps]

    def rotation(self) -> np.ndarray:
        return rot_from_quat(self.q)


@dataclass
class Twist:
    v: np.ndarray  # linear velocity, m/s
    omega: np.ndarray  # angular velocity, rad/s


@dataclass
class Accel:
    a: np.ndarray  # linear acceleration, m/s^2
    alpha: np.ndarray  # angular acceleration, rad/s^2


@dataclass
class Wrench:
    f: np.ndarray  # force, N
    tau: np.ndarray  # torque, N*m

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.f, self.tau])


@dataclass
class GraspGeometry:
    """Constant object-frame grasp points of the N agents.

    ``offsets[i]`` is the vector from the object center of mass to agent i's
    grasp frame, expressed in the object frame; it never changes while the
    grasp is rigid. ``orientations[i]`` is the constant object-frame
    orientation of agent i's frame (identity unless configured otherwise).
    """

    offsets: np.ndarray  # (N, 3)
    orientations: np.ndarray = field(default=None)  # (N, 4) quaternions

    def __post_init__(self) -> None:
        self.offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if self.orientations is None:
            self.orientations = np.tile(IDENTITY_QUAT, (self.n_agents, 1))
        else:
            self.orientations = np.atleast_2d(np.asarray(self.orientations, dtype=float))

    @property
    def n_agents(self) -> int:
        return self.offsets.shape[0]

    def rel_offset(self, j: int, i: int) -> np.ndarray:
        """Object-frame offset from agent i's grasp point to agent j's."""
        return self.offsets[j] - self.offsets[i]


def relative_pose(pose_i: Pose, pose_j: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Pose of frame i expressed in frame j: (R_j^T (p_i - p_j), inv(q_j)*q_i)."""
    p_rel = rot_from_quat(pose_j.q).T @ (pose_i.p - pose_j.p)
    q_rel = quat_mul(quat_inv(pose_j.q), pose_i.q)
    return p_rel, q_rel


def T_operator(omega: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Acceleration transport operator T = S(alpha) + S(omega)^2.

    For a point rigidly offset by r from a base frame, the point's linear
    acceleration is the base acceleration plus T @ r.
    """
    s = skew(omega)
    return skew(alpha) + s @ s


def rigid_transport(
    pose: Pose, twist: Twist, accel: Accel, r_world: np.ndarray
) -> tuple[Pose, Twist, Accel]:
    """State of a frame rigidly offset by the world-frame vector r_world.

    Angular components are copied unchanged (rigid bodies share omega); any
    constant relative orientation is composed by the caller.
    """
    p = pose.p + r_world
    v = twist.v + np.cross(twist.omega, r_world)
    a = accel.a + T_operator(twist.omega, accel.alpha) @ r_world
    return Pose(p, pose.q), Twist(v, twist.omega), Accel(a, accel.alpha)


def grasp_partial(r_world: np.ndarray) -> np.ndarray:
    """Single-agent 6x6 block of the grasp matrix: [[I, 0], [S(r), I]]."""
    G = np.eye(6)
    G[3:, :3] = skew(r_world)
    return G


def grasp_matrix(world_offsets: np.ndarray) -> np.ndarray:
    """6 x 6N grasp matrix mapping stacked wrenches to the object wrench.

    ``world_offsets[i]`` is the world-frame vector from the object center of
    mass to grasp point i. The map applies to the stacked vector of wrenches
    acting *on the object*; end-effector wrenches enter negated.
    """
    world_offsets = np.atleast_2d(world_offsets)
    n = world_offsets.shape[0]
    G = np.zeros((6, 6 * n))
    for i, r in enumerate(world_offsets):
        G[:, 6 * i : 6 * i + 6] = grasp_partial(r)
    return G

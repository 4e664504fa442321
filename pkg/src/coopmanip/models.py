"""Per-agent regression samples for the translational and rotational models.

The coupled dynamics, rewritten purely in terms of one agent's own state
and the shared reference signals, are linear in the unknown parameters:

* translational: theta_i = [rel. offsets r_{j,i} (j != i, ascending j);
  m_o * r_i; m_o], a (3N+1)-vector. Row m of the 3 x (3N+1) regressor
  matrix is the regressor of the m-th scalar output.
* rotational: theta_r = the six unique entries of the object-frame inertia,
  ordered (11, 12, 13, 22, 23, 33). The target needs the other agents'
  states, which are reconstructed from the fused grasp-offset estimates, so
  this estimator runs downstream of the translational one.

The parameter ordering defined here is load-bearing: the decomposition and
bound modules index into it via the slice helpers below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopmanip.geometry import (
    Accel,
    Pose,
    Twist,
    quat_error,
    quat_inv,
    quat_mul,
    rot_from_quat,
    skew,
)
from coopmanip.simulate import AgentParams, DesiredSignals


def rel_offset_slice(agent_index: int, j: int, n_agents: int) -> slice:
    """Columns of r_{j,i} inside theta_i (ascending j, skipping j == i)."""
    if j == agent_index:
        raise ValueError("theta_i holds no relative offset for j == i")
    pos = j if j < agent_index else j - 1
    return slice(3 * pos, 3 * pos + 3)


def mass_offset_slice(n_agents: int) -> slice:
    """Columns of m_o * r_i inside theta_i."""
    return slice(3 * (n_agents - 1), 3 * n_agents)


def mass_index(n_agents: int) -> int:
    """Column of m_o inside theta_i (the last one)."""
    return 3 * n_agents


def true_translational_theta(offsets: np.ndarray, m_o: float, agent_index: int) -> np.ndarray:
    """Ground-truth theta_i from the object-frame grasp offsets."""
    n = offsets.shape[0]
    theta = np.empty(3 * n + 1)
    for j in range(n):
        if j == agent_index:
            continue
        theta[rel_offset_slice(agent_index, j, n)] = offsets[j] - offsets[agent_index]
    theta[mass_offset_slice(n)] = m_o * offsets[agent_index]
    theta[mass_index(n)] = m_o
    return theta


@dataclass
class DesiredSnapshot:
    """All agents' reference signals at one time instant."""

    pos: np.ndarray  # (N, 3)
    vel: np.ndarray  # (N, 3)
    acc: np.ndarray  # (N, 3)
    quat: np.ndarray  # (N, 4)
    omega: np.ndarray  # (3,) shared angular velocity
    alpha: np.ndarray  # (3,)
    wrench: np.ndarray  # (N, 6)

    @classmethod
    def from_signals(cls, desired: DesiredSignals, k: int) -> "DesiredSnapshot":
        return cls(
            pos=desired.agent_pos[k],
            vel=desired.agent_vel[k],
            acc=desired.agent_acc[k],
            quat=desired.agent_quat[k],
            omega=desired.omega[k],
            alpha=desired.alpha[k],
            wrench=desired.wrenches,
        )


@dataclass
class LocalInfo:
    """Everything agent i can see: its own state plus shared knowledge.

    The reference signals and impedance parameters of all agents are shared
    ahead of time; ``rel_quats[j]`` is the constant object-frame orientation
    of agent j's grasp frame, likewise shared before execution.
    """

    pose: Pose
    twist: Twist
    accel: Accel
    desired: DesiredSnapshot
    agents: list[AgentParams]
    rel_quats: np.ndarray  # (N, 4)
    gravity: np.ndarray


def object_rotation(info: LocalInfo, agent_index: int) -> np.ndarray:
    """R_o reconstructed from the agent's own orientation: R_i (oR_i)^T."""
    R_i = rot_from_quat(info.pose.q)
    return R_i @ rot_from_quat(info.rel_quats[agent_index]).T


def build_translational_sample(
    info: LocalInfo, agent_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Target y_i and 3 x (3N+1) regressor matrix of the translational model."""
    n = len(info.agents)
    if info.rel_quats.shape[0] != n or info.desired.pos.shape[0] != n:
        raise ValueError("agent count mismatch between params and desired signals")
    R_o = object_rotation(info, agent_index)
    omega, alpha = info.twist.omega, info.accel.alpha
    S = skew(omega)
    T = skew(alpha) + S @ S

    Phi = np.zeros((3, 3 * n + 1))
    y = np.zeros(3)
    m_c = d_c = k_c = 0.0
    for j, par in enumerate(info.agents):
        y += (
            par.m * info.desired.acc[j]
            + par.d * info.desired.vel[j]
            + par.k * info.desired.pos[j]
            - info.desired.wrench[j, :3]
        )
        m_c += par.m
        d_c += par.d
        k_c += par.k
        if j != agent_index:
            block = (par.m * T + par.d * S + par.k * np.eye(3)) @ R_o
            Phi[:, rel_offset_slice(agent_index, j, n)] = block
    y -= m_c * info.accel.a + d_c * info.twist.v + k_c * info.pose.p
    Phi[:, mass_offset_slice(n)] = -T @ R_o
    Phi[:, mass_index(n)] = info.accel.a - info.gravity
    return y, Phi


def stack_sym(w: np.ndarray) -> np.ndarray:
    """3x6 matrix with stack_sym(w) @ vec6(J) == J @ w for symmetric J."""
    w1, w2, w3 = w
    return np.array(
        [
            [w1, w2, w3, 0.0, 0.0, 0.0],
            [0.0, w1, 0.0, w2, w3, 0.0],
            [0.0, 0.0, w1, 0.0, w2, w3],
        ]
    )


def vec6(J: np.ndarray) -> np.ndarray:
    """Unique entries of a symmetric matrix, ordered (11,12,13,22,23,33)."""
    return np.array([J[0, 0], J[0, 1], J[0, 2], J[1, 1], J[1, 2], J[2, 2]])


def sym_from_vec6(v: np.ndarray) -> np.ndarray:
    a, b, c, d, e, f = v
    return np.array([[a, b, c], [b, d, e], [c, e, f]])


def build_V(R_o: np.ndarray) -> np.ndarray:
    """6x6 map with V @ vec6(J) == vec6(R_o J R_o^T) for all symmetric J.

    Built by pushing the six symmetric basis matrices through the
    congruence; rejects inputs that are not rotations.
    """
    if np.max(np.abs(R_o.T @ R_o - np.eye(3))) > 1e-6:
        raise ValueError("build_V requires an orthogonal rotation matrix")
    V = np.empty((6, 6))
    for l in range(6):
        basis = np.zeros(6)
        basis[l] = 1.0
        V[:, l] = vec6(R_o @ sym_from_vec6(basis) @ R_o.T)
    return V


def true_rotational_theta(J_body: np.ndarray) -> np.ndarray:
    return vec6(J_body)


def build_rotational_sample(
    info: LocalInfo, agent_index: int, offset_estimates: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Target y_r and 3x6 regressor of the rotational (inertia) model.

    ``offset_estimates`` are the agent's current fused estimates of all N
    object-frame grasp offsets; they both reconstruct the other agents'
    states and provide the torque lever arms, so the target inherits their
    estimation error (which vanishes as the translational estimator
    converges).
    """
    n = len(info.agents)
    if offset_estimates.shape != (n, 3):
        raise ValueError("need one grasp-offset estimate per agent")
    R_o = object_rotation(info, agent_index)
    omega, alpha = info.twist.omega, info.accel.alpha
    S = skew(omega)
    T = skew(alpha) + S @ S

    Phi_r = (stack_sym(alpha) + S @ stack_sym(omega)) @ build_V(R_o)

    q_obj = quat_mul(info.pose.q, quat_inv(info.rel_quats[agent_index]))
    y_r = np.zeros(3)
    for j, par in enumerate(info.agents):
        dr_w = R_o @ (offset_estimates[j] - offset_estimates[agent_index])
        dp = info.pose.p + dr_w - info.desired.pos[j]
        dv = info.twist.v + S @ dr_w - info.desired.vel[j]
        da = info.accel.a + T @ dr_w - info.desired.acc[j]
        q_j = quat_mul(q_obj, info.rel_quats[j])
        dq = quat_error(q_j, info.desired.quat[j])
        kappa_p = 2.0 * dq[0] * par.kappa
        lever = skew(R_o @ offset_estimates[j])
        y_r -= (
            lever @ (par.m * da + par.d * dv + par.k * dp + info.desired.wrench[j, :3])
            + par.J @ (alpha - info.desired.alpha)
            + par.delta * (omega - info.desired.omega)
            + kappa_p * dq[1:]
            + info.desired.wrench[j, 3:]
        )
    return y_r, Phi_r

"""Closed-loop simulation of N impedance agents rigidly holding one object.

Each agent renders a virtual mass-damper-spring between its actual and
desired end-effector motion; the object obeys Newton-Euler dynamics driven
by the grasp-transported end-effector wrenches. Because the grasp is rigid,
every agent acceleration is affine in the object acceleration, so the
coupled motion is obtained exactly per step from a 6x6 linear system (no
constraint drift). Integration is semi-implicit Euler with the quaternion
advanced by the exponential map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from coopmanip.geometry import (
    Accel,
    GraspGeometry,
    Pose,
    Twist,
    Wrench,
    grasp_partial,
    quat_error,
    quat_from_rotvec,
    quat_mul,
    rot_from_quat,
    skew,
)

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class AgentParams:
    """Virtual impedance parameters of one agent (all strictly positive)."""

    m: float  # virtual mass, kg
    J: np.ndarray  # virtual inertia, kg m^2 (3x3 SPD)
    d: float  # translational damping
    delta: float  # rotational damping
    k: float  # translational stiffness
    kappa: float  # rotational stiffness

    def __post_init__(self) -> None:
        self.J = np.asarray(self.J, dtype=float)
        if self.J.ndim == 0:
            self.J = float(self.J) * np.eye(3)
        for name in ("m", "d", "delta", "k", "kappa"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"agent parameter {name} must be positive")
        if np.max(np.abs(self.J - self.J.T)) > 1e-12 or np.min(np.linalg.eigvalsh(self.J)) <= 0:
            raise ValueError("agent inertia J must be symmetric positive definite")


@dataclass
class ObjectParams:
    """Rigid-object parameters; inertia is given in the body frame."""

    m_o: float
    J_body: np.ndarray  # constant object-frame inertia, SPD
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self) -> None:
        self.J_body = np.asarray(self.J_body, dtype=float)
        if self.J_body.ndim == 0:
            self.J_body = float(self.J_body) * np.eye(3)
        self.g = np.asarray(self.g, dtype=float)
        if self.m_o <= 0.0:
            raise ValueError("object mass must be positive")
        if (
            np.max(np.abs(self.J_body - self.J_body.T)) > 1e-12
            or np.min(np.linalg.eigvalsh(self.J_body)) <= 0
        ):
            raise ValueError("object inertia must be symmetric positive definite")


@dataclass
class ExcitationSegment:
    """One sinusoidal contribution to the desired angular velocity.

    Contributes amplitude * sin(2 pi f (t - start)) on one axis while
    start <= t < end; overlapping segments sum.
    """

    axis: int
    amplitude: float
    frequency: float
    start: float = 0.0
    end: float = np.inf

    @classmethod
    def parse(cls, spec: dict, duration: float) -> "ExcitationSegment":
        axis = spec["axis"]
        if isinstance(axis, str):
            axis = _AXES[axis.lower()]
        return cls(
            axis=int(axis),
            amplitude=float(spec["amplitude"]),
            frequency=float(spec["frequency"]),
            start=float(spec.get("start", 0.0)),
            end=float(spec.get("end", duration)),
        )


@dataclass
class ExcitationSchedule:
    segments: list[ExcitationSegment]

    def omega(self, t: np.ndarray | float) -> np.ndarray:
        """Desired angular velocity at time(s) t; shape (3,) or (K, 3)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        for seg in self.segments:
            active = (t >= seg.start) & (t < seg.end)
            out[..., seg.axis] += np.where(
                active,
                seg.amplitude * np.sin(2.0 * np.pi * seg.frequency * (t - seg.start)),
                0.0,
            )
        return out

    def alpha(self, t: np.ndarray | float) -> np.ndarray:
        """Analytic derivative of the schedule (piecewise within segments)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        for seg in self.segments:
            active = (t >= seg.start) & (t < seg.end)
            w = 2.0 * np.pi * seg.frequency
            out[..., seg.axis] += np.where(
                active, seg.amplitude * w * np.cos(w * (t - seg.start)), 0.0
            )
        return out


def default_excitation(duration: float, amplitude: float = 0.5, frequency: float = 0.5,
                       segment_length: float = 2.0) -> ExcitationSchedule:
    """Sequential per-axis sinusoids, cycling x -> y -> z every segment."""
    segments = []
    t = 0.0
    axis = 0
    while t < duration:
        segments.append(
            ExcitationSegment(axis, amplitude, frequency, t, min(t + segment_length, duration))
        )
        t += segment_length
        axis = (axis + 1) % 3
    return ExcitationSchedule(segments)


def excitation_profile(t: float, schedule: ExcitationSchedule) -> Twist:
    """Desired object twist at time t: zero linear part, scheduled rotation."""
    return Twist(np.zeros(3), schedule.omega(float(t)))


def _quat_series_rotations(quats: np.ndarray) -> np.ndarray:
    """Rotation matrices for an array of unit quaternions, shape (K, 3, 3)."""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    R = np.empty((quats.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass
class DesiredSignals:
    """Per-agent reference trajectories on the simulation grid.

    Known to every agent ahead of time; the estimators read the same arrays
    the simulator tracks. Desired agent motion is derived from the desired
    object motion through the (possibly perturbed) grasp offsets.
    """

    times: np.ndarray  # (K,)
    object_position: np.ndarray  # constant (3,), purely rotational excitation
    object_quat: np.ndarray  # (K, 4)
    omega: np.ndarray  # (K, 3) shared by object and all agents
    alpha: np.ndarray  # (K, 3)
    agent_pos: np.ndarray  # (K, N, 3)
    agent_vel: np.ndarray  # (K, N, 3)
    agent_acc: np.ndarray  # (K, N, 3)
    agent_quat: np.ndarray  # (K, N, 4)
    wrenches: np.ndarray  # (N, 6) constant desired end-effector wrenches

    @property
    def n_agents(self) -> int:
        return self.agent_pos.shape[1]

    def agent_state(self, k: int, i: int) -> tuple[Pose, Twist, Accel]:
        return (
            Pose(self.agent_pos[k, i], self.agent_quat[k, i]),
            Twist(self.agent_vel[k, i], self.omega[k]),
            Accel(self.agent_acc[k, i], self.alpha[k]),
        )

    def agent_wrench(self, i: int) -> Wrench:
        return Wrench(self.wrenches[i, :3], self.wrenches[i, 3:])


def desired_agent_trajectories(
    schedule: ExcitationSchedule,
    initial_pose: Pose,
    traj_offsets: np.ndarray,
    orientations: np.ndarray,
    dt: float,
    n_steps: int,
    wrenches: np.ndarray | None = None,
) -> DesiredSignals:
    """Build the desired signals for all agents on the simulation grid.

    ``traj_offsets`` are the object-frame grasp offsets used to synthesize
    the references (the scenario perturbs the true offsets here, since the
    real geometry is unknown). Desired poses integrate the scheduled
    velocity; desired accelerations differentiate the schedule analytically.
    """
    n_agents = traj_offsets.shape[0]
    times = np.arange(n_steps + 1) * dt
    omega = schedule.omega(times)
    alpha = schedule.alpha(times)

    quats = np.empty((n_steps + 1, 4))
    quats[0] = initial_pose.q
    for k in range(n_steps):
        quats[k + 1] = quat_mul(quat_from_rotvec(omega[k + 1] * dt), quats[k])

    R = _quat_series_rotations(quats)
    r_world = np.einsum("kab,ib->kia", R, traj_offsets)  # (K, N, 3)
    agent_pos = initial_pose.p[None, None, :] + r_world
    agent_vel = np.cross(omega[:, None, :], r_world)
    # T(omega, alpha) r = alpha x r + omega x (omega x r)
    agent_acc = np.cross(alpha[:, None, :], r_world) + np.cross(
        omega[:, None, :], np.cross(omega[:, None, :], r_world)
    )

    agent_quat = np.empty((n_steps + 1, n_agents, 4))
    for i in range(n_agents):
        q_rel = orientations[i]
        w2, v2 = q_rel[0], q_rel[1:]
        w1, v1 = quats[:, 0], quats[:, 1:]
        agent_quat[:, i, 0] = w1 * w2 - v1 @ v2
        agent_quat[:, i, 1:] = w1[:, None] * v2[None, :] + w2 * v1 + np.cross(v1, v2[None, :])
    agent_quat /= np.linalg.norm(agent_quat, axis=2, keepdims=True)

    if wrenches is None:
        wrenches = np.zeros((n_agents, 6))
    return DesiredSignals(
        times=times,
        object_position=initial_pose.p.copy(),
        object_quat=quats,
        omega=omega,
        alpha=alpha,
        agent_pos=agent_pos,
        agent_vel=agent_vel,
        agent_acc=agent_acc,
        agent_quat=agent_quat,
        wrenches=np.asarray(wrenches, dtype=float),
    )


@dataclass
class WorldState:
    """Object pose and twist; agent states are derived through the grasp."""

    pose: Pose
    twist: Twist


def initial_state(geometry: GraspGeometry, pose: Pose | None = None) -> WorldState:
    if pose is None:
        pose = Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))
    return WorldState(pose, Twist(np.zeros(3), np.zeros(3)))


def derive_agent_states(
    state: WorldState, accel: Accel, geometry: GraspGeometry
) -> list[tuple[Pose, Twist, Accel]]:
    """Agent kinematics implied by the object state under the rigid grasp."""
    R = rot_from_quat(state.pose.q)
    omega, alpha = state.twist.omega, accel.alpha
    T = skew(alpha) + skew(omega) @ skew(omega)
    out = []
    for i in range(geometry.n_agents):
        r_w = R @ geometry.offsets[i]
        pose = Pose(state.pose.p + r_w, quat_mul(state.pose.q, geometry.orientations[i]))
        twist = Twist(state.twist.v + np.cross(omega, r_w), omega)
        acc = Accel(accel.a + T @ r_w, alpha)
        out.append((pose, twist, acc))
    return out


def solve_coupled_acceleration(
    state: WorldState,
    agents: list[AgentParams],
    obj: ObjectParams,
    geometry: GraspGeometry,
    desired: DesiredSignals,
    step_index: int,
) -> tuple[Accel, list[Wrench]]:
    """Object acceleration and end-effector wrenches consistent with the
    impedance laws, the rigid coupling, and the object dynamics.

    Returns the paper-side end-effector wrenches h_i (the wrench each agent
    feels); the wrench applied to the object at grasp i is -h_i, which is
    the sign the grasp map consumes.
    """
    R = rot_from_quat(state.pose.q)
    omega = state.twist.omega
    J_w = R @ obj.J_body @ R.T
    S_w = skew(omega)

    A = np.zeros((6, 6))
    A[:3, :3] = obj.m_o * np.eye(3)
    A[3:, 3:] = J_w
    rhs = np.empty(6)
    rhs[:3] = obj.m_o * obj.g  # minus gravity part of the Coriolis wrench
    rhs[3:] = -np.cross(omega, J_w @ omega)

    k = step_index
    omega_d, alpha_d = desired.omega[k], desired.alpha[k]
    blocks = []  # per agent: (r_w, S_r, b_i)
    for i, par in enumerate(agents):
        r_w = R @ geometry.offsets[i]
        S_r = skew(r_w)
        p_i = state.pose.p + r_w
        v_i = state.twist.v + S_w @ r_w
        q_i = quat_mul(state.pose.q, geometry.orientations[i])

        dq = quat_error(q_i, desired.agent_quat[k, i])
        kappa_p = 2.0 * dq[0] * par.kappa  # geometrically consistent stiffness
        c_lin = S_w @ (S_w @ r_w)

        b_f = (
            par.m * (c_lin - desired.agent_acc[k, i])
            + par.d * (v_i - desired.agent_vel[k, i])
            + par.k * (p_i - desired.agent_pos[k, i])
            + desired.wrenches[i, :3]
        )
        b_t = (
            par.J @ (-alpha_d)
            + par.delta * (omega - omega_d)
            + kappa_p * dq[1:]
            + desired.wrenches[i, 3:]
        )

        # G_i M_i G_i^T accumulated blockwise:
        #   [[m I, -m S(r)], [m S(r), J_i - m S(r)^2]]
        A[:3, :3] += par.m * np.eye(3)
        A[:3, 3:] -= par.m * S_r
        A[3:, :3] += par.m * S_r
        A[3:, 3:] += par.J - par.m * (S_r @ S_r)

        rhs[:3] -= b_f
        rhs[3:] -= S_r @ b_f + b_t
        blocks.append((S_r, c_lin, b_f, b_t))

    try:
        u = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:  # positive virtual masses make A SPD
        raise AssertionError("coupled system matrix is singular") from exc

    a_o, alpha_o = u[:3], u[3:]
    wrenches = []
    for par, (S_r, c_lin, b_f, b_t) in zip(agents, blocks):
        a_i = a_o - S_r @ alpha_o + c_lin
        f = par.m * a_i + b_f
        tau = par.J @ alpha_o + b_t
        wrenches.append(Wrench(f, tau))
    return Accel(a_o, alpha_o), wrenches


def step(state: WorldState, accel: Accel, dt: float) -> WorldState:
    """Semi-implicit Euler: twist first, then pose with the new twist."""
    v = state.twist.v + accel.a * dt
    omega = state.twist.omega + accel.alpha * dt
    p = state.pose.p + v * dt
    q = quat_mul(quat_from_rotvec(omega * dt), state.pose.q)
    return WorldState(Pose(p, q), Twist(v, omega))


def sample_target_noise(y: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Corrupt a regression target with i.i.d. N(0, 1/beta) noise."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    return y + rng.standard_normal(y.shape) / np.sqrt(beta)

"""Scenario configuration, end-to-end execution, metrics, and CSV output.

A scenario couples the closed-loop simulation with the full estimation
pipeline: per step each agent builds its regression samples, updates its
three Bayesian estimators per problem, fuses them with a generalized
product of experts, decomposes the fused belief into per-parameter
marginals, and exchanges the transformed marginals over the communication
graph with one dynamic-average-consensus round. Error bounds are evaluated
alongside. Everything is deterministic given the configuration and seed.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from coopmanip.bayes import (
    DenominatorNearZero,
    GaussianBelief,
    MarginalGaussian,
    assemble_local,
    blr_update,
    gpoe,
)
from coopmanip.bounds import (
    Assumption4Violated,
    aggregate_eta,
    local_eta,
    mass_offset_eta,
    rho_bound,
)
from coopmanip.consensus import (
    CommGraph,
    ConsensusState,
    NonpositivePrecision,
    consensus_step,
    psi_transform,
    zeta_transform,
)
from coopmanip.geometry import GraspGeometry, Pose
from coopmanip.models import (
    DesiredSnapshot,
    LocalInfo,
    build_rotational_sample,
    build_translational_sample,
    mass_index,
    mass_offset_slice,
    true_rotational_theta,
    true_translational_theta,
)
from coopmanip.simulate import (
    AgentParams,
    ExcitationSchedule,
    ExcitationSegment,
    ObjectParams,
    default_excitation,
    derive_agent_states,
    desired_agent_trajectories,
    initial_state,
    sample_target_noise,
    solve_coupled_acceleration,
    step,
)

logger = logging.getLogger("coopmanip")

RESULT_HEADER = ["time", "agent", "quantity", "index", "mean", "variance", "truth", "bound"]
METRICS_HEADER = ["time", "agent", "e_m", "e_r", "e_J"]


class ConfigError(ValueError):
    """Configuration file is malformed; the message names the offending key."""


@dataclass
class PriorSpec:
    """Initial beliefs: mean drawn around the truth, isotropic covariance."""

    sigma0: float = 0.5
    std_rel_offset: float = 0.5
    std_mass_offset: float = 5.0
    std_mass: float = 10.0
    std_inertia: float = 1.0

    def translational_std(self, n_agents: int) -> np.ndarray:
        out = np.empty(3 * n_agents + 1)
        out[: 3 * (n_agents - 1)] = self.std_rel_offset
        out[3 * (n_agents - 1) : 3 * n_agents] = self.std_mass_offset
        out[3 * n_agents] = self.std_mass
        return out

    def rotational_std(self) -> np.ndarray:
        return np.full(6, self.std_inertia)


@dataclass
class RotationalSchedule:
    """Update precision of the rotational estimator: tiny until the grasp
    estimates settle, then equal to the measurement precision."""

    enabled: bool = True
    factor: float = 1e-6
    switch_time: float = 1.0

    def beta_r(self, beta: float, t: float) -> float:
        return beta * self.factor if t < self.switch_time else beta


@dataclass
class ScenarioConfig:
    agents: list[AgentParams]
    obj: ObjectParams
    geometry: GraspGeometry
    graph: CommGraph
    excitation: ExcitationSchedule
    priors: PriorSpec = field(default_factory=PriorSpec)
    rotational: RotationalSchedule = field(default_factory=RotationalSchedule)
    beta: float = 0.5
    duration: float = 7.0
    dt: float = 1e-3
    estimator_rate: float = 100.0
    offset_perturbation_std: float = 0.1
    delta: float = 0.1
    ratio_guard: float = 1e-3
    consensus_iterations: int = 1
    desired_wrenches: np.ndarray | None = None
    seed: int = 0
    name: str = "scenario"
    raw: dict | None = None

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def substeps(self) -> int:
        sub = round(1.0 / (self.dt * self.estimator_rate))
        if sub < 1 or abs(sub * self.dt * self.estimator_rate - 1.0) > 1e-9:
            raise ConfigError("estimator_rate must divide the simulation rate 1/dt")
        return sub

    def validate(self) -> None:
        if self.n_agents != self.geometry.n_agents:
            raise ConfigError("agents: count differs from grasp.offsets length")
        if self.graph.n_agents != self.n_agents:
            raise ConfigError("graph.adjacency: size differs from agent count")
        for key in ("beta", "duration", "dt", "estimator_rate", "ratio_guard"):
            if getattr(self, key) <= 0.0:
                raise ConfigError(f"{key} must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.offset_perturbation_std < 0.0:
            raise ConfigError("offset_perturbation_std must be nonnegative")
        if self.consensus_iterations < 1:
            raise ConfigError("consensus_iterations must be at least 1")
        _ = self.substeps


def _as_matrix3(value, key: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(3)
    if arr.shape == (6,):
        from coopmanip.models import sym_from_vec6

        return sym_from_vec6(arr)
    if arr.shape == (3, 3):
        return arr
    raise ConfigError(f"{key}: expected scalar, 6-vector, or 3x3 matrix")


def _agent_from_dict(spec: dict, key: str) -> AgentParams:
    try:
        return AgentParams(
            m=float(spec["mass"]),
            J=_as_matrix3(spec["inertia"], f"{key}.inertia"),
            d=float(spec["damping_lin"]),
            delta=float(spec["damping_rot"]),
            k=float(spec["stiffness_lin"]),
            kappa=float(spec["stiffness_rot"]),
        )
    except KeyError as exc:
        raise ConfigError(f"{key}: missing field {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def bundled_config_path(name: str):
    return resources.files("coopmanip.configs").joinpath(f"{name}.yaml")


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    """Load and validate a scenario from a YAML file.

    ``path`` may also name a bundled configuration (e.g. ``paper_sec4``).
    """
    text = None
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        name_default = os.path.splitext(os.path.basename(path))[0]
    else:
        candidate = bundled_config_path(str(path).removesuffix(".yaml"))
        if candidate.is_file():
            text = candidate.read_text(encoding="utf-8")
            name_default = str(path).removesuffix(".yaml")
        else:
            raise ConfigError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(raw, name_default)


def config_from_dict(raw: dict, name_default: str = "scenario") -> ScenarioConfig:
    def need(key: str):
        if key not in raw:
            raise ConfigError(f"missing required key: {key}")
        return raw[key]

    duration = float(raw.get("duration", 7.0))

    agents_spec = need("agents")
    if isinstance(agents_spec, dict):
        count = int(agents_spec.get("count", 0))
        if count < 1:
            raise ConfigError("agents.count must be at least 1")
        params = agents_spec.get("params")
        if params is None:
            raise ConfigError("agents.params is required with agents.count")
        agents = [_agent_from_dict(params, "agents.params") for _ in range(count)]
    elif isinstance(agents_spec, list):
        agents = [_agent_from_dict(a, f"agents[{i}]") for i, a in enumerate(agents_spec)]
    else:
        raise ConfigError("agents: expected a list or a {count, params} mapping")

    obj_spec = need("object")
    try:
        obj = ObjectParams(
            m_o=float(obj_spec["mass"]),
            J_body=_as_matrix3(obj_spec["inertia"], "object.inertia"),
            g=np.asarray(obj_spec.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        )
    except KeyError as exc:
        raise ConfigError(f"object: missing field {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"object: {exc}") from exc

    grasp_spec = need("grasp")
    offsets = np.asarray(grasp_spec.get("offsets"), dtype=float)
    if offsets.ndim != 2 or offsets.shape[1] != 3:
        raise ConfigError("grasp.offsets: expected a list of 3-vectors")
    orientations = grasp_spec.get("orientations")
    if orientations is not None:
        orientations = np.asarray(orientations, dtype=float)
        norms = np.linalg.norm(orientations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ConfigError("grasp.orientations: quaternions must be unit length")
        orientations = orientations / norms[:, None]
    geometry = GraspGeometry(offsets, orientations)

    graph_spec = need("graph")
    try:
        graph = CommGraph(
            np.asarray(graph_spec["adjacency"], dtype=float),
            float(graph_spec.get("alpha", 1e-3)),
        )
    except KeyError as exc:
        raise ConfigError(f"graph: missing field {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"graph: {exc}") from exc

    priors_spec = raw.get("priors", {})
    priors = PriorSpec(
        sigma0=float(priors_spec.get("sigma0", 0.5)),
        std_rel_offset=float(priors_spec.get("std_rel_offset", 0.5)),
        std_mass_offset=float(priors_spec.get("std_mass_offset", 5.0)),
        std_mass=float(priors_spec.get("std_mass", 10.0)),
        std_inertia=float(priors_spec.get("std_inertia", 1.0)),
    )

    rot_spec = raw.get("rotational", {})
    rotational = RotationalSchedule(
        enabled=bool(rot_spec.get("enabled", True)),
        factor=float(rot_spec.get("beta_r_factor", 1e-6)),
        switch_time=float(rot_spec.get("switch_time", 1.0)),
    )

    if "excitation" in raw:
        segments = [ExcitationSegment.parse(s, duration) for s in raw["excitation"]]
        excitation = ExcitationSchedule(segments)
    else:
        excitation = default_excitation(duration)

    wrenches = raw.get("desired_wrenches")
    if wrenches is not None:
        wrenches = np.asarray(wrenches, dtype=float)
        if wrenches.shape != (len(agents), 6):
            raise ConfigError("desired_wrenches: expected an N x 6 array")

    config = ScenarioConfig(
        agents=agents,
        obj=obj,
        geometry=geometry,
        graph=graph,
        excitation=excitation,
        priors=priors,
        rotational=rotational,
        beta=float(raw.get("beta", 0.5)),
        duration=duration,
        dt=float(raw.get("dt", 1e-3)),
        estimator_rate=float(raw.get("estimator_rate", 100.0)),
        offset_perturbation_std=float(raw.get("offset_perturbation_std", 0.1)),
        delta=float(raw.get("delta", 0.1)),
        ratio_guard=float(raw.get("ratio_guard", 1e-3)),
        consensus_iterations=int(raw.get("consensus_iterations", 1)),
        desired_wrenches=wrenches,
        seed=int(raw.get("seed", 0)),
        name=str(raw.get("name", name_default)),
        raw=raw,
    )
    config.validate()
    return config


@dataclass
class RunResult:
    """Time-indexed fused estimates, variances, bounds, truth, and errors."""

    times: np.ndarray  # (K,)
    mu: np.ndarray  # (K, N, 3N+1) fused translational means per agent
    var: np.ndarray  # (K, N, 3N+1)
    mu_rot: np.ndarray  # (K, N, 6); NaN when the rotational estimator is off
    var_rot: np.ndarray  # (K, N, 6)
    eta_hat: np.ndarray  # (K, 3N+1); NaN before the first valid bound
    a4_ok: np.ndarray  # (K,) bool, mass interval excluded zero this step
    errors: np.ndarray  # (K, N, 3): e_m, e_r, e_J
    truth: np.ndarray  # (3N+1,) [r_1 ... r_N, m_o]
    truth_rot: np.ndarray  # (6,)
    seed: int
    config: ScenarioConfig
    guard_events: list[tuple[float, int, str]]
    samples: dict[str, np.ndarray] | None = None

    @property
    def n_agents(self) -> int:
        return self.mu.shape[1]

    def probe_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def compute_errors(
    mu: np.ndarray, mu_rot: np.ndarray, truth: np.ndarray, truth_rot: np.ndarray, agent: int
) -> tuple[float, float, float]:
    """Euclidean errors of the agent's fused mass, own-offset, and inertia."""
    n = (truth.shape[0] - 1) // 3
    e_m = abs(mu[mass_index(n)] - truth[-1])
    e_r = float(np.linalg.norm(mu[3 * agent : 3 * agent + 3] - truth[3 * agent : 3 * agent + 3]))
    e_j = float(np.linalg.norm(mu_rot - truth_rot)) if np.all(np.isfinite(mu_rot)) else np.nan
    return float(e_m), e_r, e_j


def _rng_streams(seed) -> tuple[np.random.Generator, ...]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(c) for c in ss.spawn(3))


def run_scenario(
    config: ScenarioConfig,
    seed: int | np.random.SeedSequence | None = None,
    record_samples: bool = False,
) -> RunResult:
    """Execute the full pipeline: simulate, estimate, fuse, bound."""
    t_start = time.perf_counter()
    config.validate()
    if seed is None:
        seed = config.seed
    rng_off, rng_prior, rng_noise = _rng_streams(seed)

    n = config.n_agents
    dim = 3 * n + 1
    geometry = config.geometry
    obj = config.obj
    agents = config.agents

    # references are synthesized from grasp offsets perturbed once per
    # scenario: the true geometry is exactly what the team does not know
    traj_offsets = geometry.offsets + config.offset_perturbation_std * rng_off.standard_normal(
        (n, 3)
    )
    n_steps = round(config.duration / config.dt)
    desired = desired_agent_trajectories(
        config.excitation,
        Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0])),
        traj_offsets,
        geometry.orientations,
        config.dt,
        n_steps,
        config.desired_wrenches,
    )
    state = initial_state(geometry)

    theta_true = [true_translational_theta(geometry.offsets, obj.m_o, i) for i in range(n)]
    truth_rot = true_rotational_theta(obj.J_body)
    truth = np.concatenate([geometry.offsets.ravel(), [obj.m_o]])

    trans_std = config.priors.translational_std(n)
    rot_std = config.priors.rotational_std()
    beliefs_t = [
        [
            GaussianBelief(
                theta_true[i] + trans_std * rng_prior.standard_normal(dim),
                config.priors.sigma0 * np.eye(dim),
            )
            for _ in range(3)
        ]
        for i in range(n)
    ]
    beliefs_r = [
        [
            GaussianBelief(
                truth_rot + rot_std * rng_prior.standard_normal(6),
                config.priors.sigma0 * np.eye(6),
            )
            for _ in range(3)
        ]
        for i in range(n)
    ]

    substeps = config.substeps
    n_records = (n_steps + substeps - 1) // substeps
    times = np.empty(n_records)
    mu = np.empty((n_records, n, dim))
    var = np.empty((n_records, n, dim))
    mu_rot = np.full((n_records, n, 6), np.nan)
    var_rot = np.full((n_records, n, 6), np.nan)
    eta_hat = np.full((n_records, dim), np.nan)
    a4_ok = np.zeros(n_records, dtype=bool)
    errors = np.full((n_records, n, 3), np.nan)
    samples = None
    if record_samples:
        samples = {
            "y": np.empty((n_records, n, 3)),
            "Phi": np.empty((n_records, n, 3, dim)),
            "y_rot": np.empty((n_records, n, 3)),
            "Phi_rot": np.empty((n_records, n, 3, 6)),
        }

    trans_cons: ConsensusState | None = None
    rot_cons: ConsensusState | None = None
    prev_decomp: list[MarginalGaussian | None] = [None] * n
    prev_fused: list[MarginalGaussian | None] = [None] * n
    prev_fused_rot: list[MarginalGaussian | None] = [None] * n
    prev_eta = np.full(dim, np.nan)
    guard_events: list[tuple[float, int, str]] = []

    rec = 0
    for k in range(n_steps):
        accel, _wrenches = solve_coupled_acceleration(state, agents, obj, geometry, desired, k)

        if k % substeps == 0:
            t = k * config.dt
            snapshot = DesiredSnapshot.from_signals(desired, k)
            kin = derive_agent_states(state, accel, geometry)
            infos = [
                LocalInfo(pose, twist, acc, snapshot, agents, geometry.orientations, obj.g)
                for (pose, twist, acc) in kin
            ]

            fused_local: list[GaussianBelief] = []
            psis = np.empty((n, 2 * dim))
            for i in range(n):
                y, phi = build_translational_sample(infos[i], i)
                target = sample_target_noise(y, config.beta, rng_noise)
                for m in range(3):
                    beliefs_t[i][m] = blr_update(beliefs_t[i][m], phi[m], target[m], config.beta)
                fused = gpoe(beliefs_t[i])
                fused_local.append(fused)
                try:
                    decomp = assemble_local(fused, i, n, tau=config.ratio_guard)
                    prev_decomp[i] = decomp
                except DenominatorNearZero:
                    guard_events.append((t, i, "ratio_guard"))
                    if prev_decomp[i] is None:
                        # first step with a degenerate mass estimate: clamp the
                        # denominator at the guard so the pipeline can start
                        clamped = GaussianBelief(fused.mu.copy(), fused.Sigma)
                        mo = mass_index(n)
                        sign = 1.0 if clamped.mu[mo] >= 0 else -1.0
                        clamped.mu[mo] = sign * config.ratio_guard * 1.001
                        prev_decomp[i] = assemble_local(clamped, i, n, tau=config.ratio_guard)
                    decomp = prev_decomp[i]
                psis[i] = psi_transform(decomp)
                if record_samples:
                    samples["y"][rec, i] = y
                    samples["Phi"][rec, i] = phi

            if trans_cons is None:
                trans_cons = ConsensusState.initialize(psis)
            else:
                for _ in range(config.consensus_iterations):
                    trans_cons = consensus_step(trans_cons, psis, config.graph)
            fused_net: list[MarginalGaussian] = []
            for i in range(n):
                try:
                    out = zeta_transform(trans_cons.xi[i])
                    prev_fused[i] = out
                except NonpositivePrecision:
                    guard_events.append((t, i, "zeta_guard"))
                    out = prev_fused[i]
                fused_net.append(out)

            if config.rotational.enabled:
                beta_r = config.rotational.beta_r(config.beta, t)
                psis_r = np.empty((n, 12))
                for i in range(n):
                    offsets_est = fused_net[i].mean[: 3 * n].reshape(n, 3)
                    y_r, phi_r = build_rotational_sample(infos[i], i, offsets_est)
                    target_r = sample_target_noise(y_r, config.beta, rng_noise)
                    for m in range(3):
                        beliefs_r[i][m] = blr_update(
                            beliefs_r[i][m], phi_r[m], target_r[m], beta_r
                        )
                    fused_r = gpoe(beliefs_r[i])
                    psis_r[i] = psi_transform(
                        MarginalGaussian(fused_r.mu, fused_r.marginal_var())
                    )
                    if record_samples:
                        y_true, phi_true = build_rotational_sample(
                            infos[i], i, geometry.offsets
                        )
                        samples["y_rot"][rec, i] = y_true
                        samples["Phi_rot"][rec, i] = phi_true
                if rot_cons is None:
                    rot_cons = ConsensusState.initialize(psis_r)
                else:
                    for _ in range(config.consensus_iterations):
                        rot_cons = consensus_step(rot_cons, psis_r, config.graph)
                for i in range(n):
                    try:
                        rot_out = zeta_transform(rot_cons.xi[i])
                        prev_fused_rot[i] = rot_out
                    except NonpositivePrecision:
                        guard_events.append((t, i, "zeta_guard_rot"))
                        rot_out = prev_fused_rot[i]
                    mu_rot[rec, i] = rot_out.mean
                    var_rot[rec, i] = rot_out.var

            try:
                etas = np.stack(
                    [
                        local_eta(
                            fused_local[i].Sigma,
                            [b.Sigma for b in beliefs_t[i]],
                            config.delta,
                            n,
                        )
                        for i in range(n)
                    ]
                )
                rhos = np.empty((n, 3))
                mo = mass_index(n)
                mor = mass_offset_slice(n)
                for i in range(n):
                    eta_mr, eta_m = mass_offset_eta(etas[i], n)
                    rhos[i] = rho_bound(
                        fused_local[i].mu[mor], fused_local[i].mu[mo], eta_mr, eta_m
                    )
                dec_vars = np.stack([prev_decomp[i].var for i in range(n)])
                prev_eta = aggregate_eta(etas, rhos, dec_vars, n).flat()
                a4_ok[rec] = True
            except Assumption4Violated:
                guard_events.append((t, -1, "assumption4"))
                a4_ok[rec] = False

            times[rec] = t
            eta_hat[rec] = prev_eta
            for i in range(n):
                mu[rec, i] = fused_net[i].mean
                var[rec, i] = fused_net[i].var
                errors[rec, i] = compute_errors(
                    fused_net[i].mean, mu_rot[rec, i], truth, truth_rot, i
                )
            rec += 1

        state = step(state, accel, config.dt)

    logger.info(
        "scenario %s: %d sim steps, %d estimator steps, %.2f s wall",
        config.name,
        n_steps,
        rec,
        time.perf_counter() - t_start,
    )
    return RunResult(
        times=times,
        mu=mu,
        var=var,
        mu_rot=mu_rot,
        var_rot=var_rot,
        eta_hat=eta_hat,
        a4_ok=a4_ok,
        errors=errors,
        truth=truth,
        truth_rot=truth_rot,
        seed=seed if isinstance(seed, int) else -1,
        config=config,
        guard_events=guard_events,
        samples=samples,
    )


def _fmt(x: float) -> str:
    if np.isnan(x):
        return ""
    return repr(float(x))


def write_results(result: RunResult, out_dir: str | os.PathLike) -> list[str]:
    """Write results.csv, metrics.csv, and manifest.json into out_dir.

    results.csv is long-format, one row per (time, agent, quantity
    component); quantity names are m_o, r_1 ... r_N, and J.
    """
    os.makedirs(out_dir, exist_ok=True)
    n = result.n_agents
    mo = mass_index(n)
    paths = []

    path = os.path.join(out_dir, "results.csv")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULT_HEADER)
            for rec, t in enumerate(result.times):
                ts = _fmt(t)
                for i in range(n):
                    writer.writerow(
                        [
                            ts,
                            i,
                            "m_o",
                            0,
                            _fmt(result.mu[rec, i, mo]),
                            _fmt(result.var[rec, i, mo]),
                            _fmt(result.truth[mo]),
                            _fmt(result.eta_hat[rec, mo]),
                        ]
                    )
                    for j in range(n):
                        for c in range(3):
                            idx = 3 * j + c
                            writer.writerow(
                                [
                                    ts,
                                    i,
                                    f"r_{j + 1}",
                                    c,
                                    _fmt(result.mu[rec, i, idx]),
                                    _fmt(result.var[rec, i, idx]),
                                    _fmt(result.truth[idx]),
                                    _fmt(result.eta_hat[rec, idx]),
                                ]
                            )
                    for c in range(6):
                        writer.writerow(
                            [
                                ts,
                                i,
                                "J",
                                c,
                                _fmt(result.mu_rot[rec, i, c]),
                                _fmt(result.var_rot[rec, i, c]),
                                _fmt(result.truth_rot[c]),
                                "",
                            ]
                        )
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    paths.append(path)

    path = os.path.join(out_dir, "metrics.csv")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRICS_HEADER)
            for rec, t in enumerate(result.times):
                for i in range(n):
                    writer.writerow(
                        [
                            _fmt(t),
                            i,
                            _fmt(result.errors[rec, i, 0]),
                            _fmt(result.errors[rec, i, 1]),
                            _fmt(result.errors[rec, i, 2]),
                        ]
                    )
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    paths.append(path)

    from coopmanip import __version__

    manifest = {
        "name": result.config.name,
        "seed": result.seed,
        "version": __version__,
        "n_agents": n,
        "duration": result.config.duration,
        "dt": result.config.dt,
        "estimator_rate": result.config.estimator_rate,
        "guard_events": [[t, i, kind] for t, i, kind in result.guard_events],
        "config": result.config.raw,
    }
    path = os.path.join(out_dir, "manifest.json")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest to {path}: {exc}") from exc
    paths.append(path)
    return paths


@dataclass
class TrialSummary:
    """Per-trial digest used by the multi-seed and coverage modes."""

    trial: int
    errors_probe: np.ndarray  # (N, 3) at the probe time (1 s)
    errors_final: np.ndarray  # (N, 3) at the last step
    covered: bool
    a4_ok_final: bool
    max_violation: float  # max over agents/entries of |mu - truth| - eta_hat


def _summarize(result: RunResult, trial: int, probe_time: float = 1.0) -> TrialSummary:
    probe = result.probe_index(probe_time)
    dev = np.abs(result.mu[-1] - result.truth[None, :])  # (N, 3N+1)
    if result.a4_ok[-1] and np.all(np.isfinite(result.eta_hat[-1])):
        violation = dev - result.eta_hat[-1][None, :]
        covered = bool(np.all(violation <= 0.0))
        max_violation = float(np.max(violation))
    else:
        covered = False
        max_violation = np.inf
    return TrialSummary(
        trial=trial,
        errors_probe=result.errors[probe].copy(),
        errors_final=result.errors[-1].copy(),
        covered=covered,
        a4_ok_final=bool(result.a4_ok[-1]),
        max_violation=max_violation,
    )


def _trial_worker(args) -> TrialSummary:
    config, trial, seed_seq = args
    result = run_scenario(config, seed=seed_seq)
    return _summarize(result, trial)


def run_trials(
    config: ScenarioConfig,
    n_trials: int,
    workers: int | None = None,
    base_seed: int | None = None,
) -> list[TrialSummary]:
    """Run independently seeded scenario trials, optionally in parallel."""
    if base_seed is None:
        base_seed = config.seed
    seeds = np.random.SeedSequence(base_seed).spawn(n_trials)
    jobs = [(config, t, seeds[t]) for t in range(n_trials)]
    if workers is None:
        workers = min(os.cpu_count() or 1, n_trials)
    if workers <= 1 or n_trials == 1:
        return [_trial_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_worker, jobs, chunksize=max(1, n_trials // (4 * workers))))


@dataclass
class CoverageReport:
    trials: int
    covered: int
    delta: float
    wall_time: float
    summaries: list[TrialSummary]

    @property
    def coverage(self) -> float:
        return self.covered / self.trials


def coverage_run(
    config: ScenarioConfig,
    n_trials: int,
    delta: float | None = None,
    workers: int | None = None,
) -> CoverageReport:
    """Monte-Carlo check of the high-probability bound at the final step."""
    import dataclasses

    if delta is not None:
        config = dataclasses.replace(config, delta=delta)
    t0 = time.perf_counter()
    summaries = run_trials(config, n_trials, workers=workers)
    covered = sum(1 for s in summaries if s.covered)
    return CoverageReport(
        trials=n_trials,
        covered=covered,
        delta=config.delta,
        wall_time=time.perf_counter() - t0,
        summaries=summaries,
    )

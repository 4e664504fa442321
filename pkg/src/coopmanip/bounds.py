"""High-probability error bounds for the fused translational estimates.

For a confidence level 1 - delta, each agent bounds its local estimation
error through Gaussian tail and union bounds, the division by the mass
estimate is bounded with interval arithmetic, and the per-agent bounds are
combined with the same precision weights the distributed fusion uses. The
result bounds |fused estimate - true parameter| elementwise with
probability at least 1 - delta in the limit of converged estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopmanip.bayes import spd_solve
from coopmanip.models import mass_index, mass_offset_slice, rel_offset_slice


class Assumption4Violated(ValueError):
    """Mass-estimate interval touches zero; the ratio bound is undefined."""


@dataclass
class EtaHat:
    """Network-wide bound entries for the grasp offsets and the mass."""

    eta_r: np.ndarray  # (N, 3)
    eta_m: float

    def flat(self) -> np.ndarray:
        """[r_1 ... r_N, m_o] ordering, matching the fused mean vectors."""
        return np.concatenate([self.eta_r.ravel(), [self.eta_m]])


def gamma_factor(delta: float, n_agents: int) -> float:
    """Union-bound tail factor sqrt(2 log(6 N (3N+1) / delta))."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    d = 3 * n_agents + 1
    return float(np.sqrt(2.0 * np.log(6.0 * n_agents * d / delta)))


def local_eta(
    fused_cov: np.ndarray,
    expert_covs: list[np.ndarray],
    delta: float,
    n_agents: int,
) -> np.ndarray:
    """Per-parameter bound on one agent's fused estimation error.

    eta_i = gamma * sum_m |fused_cov expert_cov_m^-1 / 3| diag(expert_cov_m),
    with the absolute value taken elementwise on the weight matrix.
    """
    gamma = gamma_factor(delta, n_agents)
    eta = np.zeros(fused_cov.shape[0])
    for cov in expert_covs:
        weight = spd_solve(cov, fused_cov.T).T / len(expert_covs)
        eta += np.abs(weight) @ np.diag(cov)
    return gamma * eta


def check_assumption4(mean_mass: float, eta_mass: float) -> bool:
    """True when the mass-estimate interval excludes zero."""
    return abs(mean_mass) - eta_mass > 0.0


def rho_bound(
    mean_mr: np.ndarray, mean_m: float, eta_mr: np.ndarray, eta_m: float
) -> np.ndarray:
    """Interval-arithmetic bound on the error of the offset ratio.

    Elementwise maximum over the four sign corners of
    |mean_mr/mean_m - (mean_mr +/- eta_mr)/(mean_m +/- eta_m)|.
    """
    if not check_assumption4(mean_m, eta_m):
        raise Assumption4Violated(
            f"|{mean_m:.3e}| - {eta_m:.3e} <= 0: mass interval touches zero"
        )
    center = mean_mr / mean_m
    worst = np.zeros_like(center)
    for sn in (-1.0, 1.0):
        for sd in (-1.0, 1.0):
            corner = (mean_mr + sn * eta_mr) / (mean_m + sd * eta_m)
            worst = np.maximum(worst, np.abs(center - corner))
    return worst


def aggregate_eta(
    etas: np.ndarray,
    rhos: np.ndarray,
    decomposed_vars: np.ndarray,
    n_agents: int,
) -> EtaHat:
    """Combine the per-agent bounds with the fusion's precision weights.

    ``etas[i]`` is agent i's local eta vector over theta_i, ``rhos[i]`` its
    ratio bound for its own offset, and ``decomposed_vars[i]`` its
    decomposed per-parameter variances ordered [r_1 ... r_N, m_o]. Agent j's
    own contribution to the bound on r_j is its ratio bound alone; every
    other agent adds the relative-offset entry of its local eta on top.
    """
    if np.any(decomposed_vars <= 0.0):
        raise ValueError("decomposed variances must be positive")
    eta_r = np.zeros((n_agents, 3))
    for j in range(n_agents):
        inv_var = 1.0 / decomposed_vars[:, 3 * j : 3 * j + 3]
        weights = inv_var / inv_var.sum(axis=0, keepdims=True)
        for i in range(n_agents):
            num = rhos[i].copy()
            if i != j:
                num += etas[i, rel_offset_slice(i, j, n_agents)]
            eta_r[j] += weights[i] * num
    mo = mass_index(n_agents)
    inv_var_m = 1.0 / decomposed_vars[:, mo]
    weights_m = inv_var_m / inv_var_m.sum()
    eta_m = float(weights_m @ etas[:, mo])
    return EtaHat(eta_r, eta_m)


def mass_offset_eta(eta: np.ndarray, n_agents: int) -> tuple[np.ndarray, float]:
    """Convenience split of one agent's eta vector into (m_o r_i, m_o) parts."""
    return eta[mass_offset_slice(n_agents)], float(eta[mass_index(n_agents)])

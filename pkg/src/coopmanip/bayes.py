"""Recursive Bayesian linear regression and Gaussian fusion primitives.

Per-output estimators maintain a ``GaussianBelief`` over the parameter
vector; new scalar observations enter through a rank-one covariance
downdate (never a repeated dense inversion). The three per-agent experts
are fused with a generalized product of experts, and the fused belief is
decomposed into per-parameter marginals using moment-matched Gaussian
ratio and sum algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from coopmanip.models import mass_index, mass_offset_slice, rel_offset_slice


class DenominatorNearZero(ValueError):
    """Ratio denominator mean too close to zero (insufficient excitation)."""


class NonSPDError(ValueError):
    """Covariance matrix is not symmetric positive definite."""


@dataclass
class GaussianBelief:
    """Mean vector and full covariance of a parameter estimate.

    ``sqrt`` caches a square root S with Sigma = S S^T between recursive
    updates; it is an implementation detail and never required.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    sqrt: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def marginal_var(self) -> np.ndarray:
        return np.diag(self.Sigma).copy()

    def validate(self, tol: float = 1e-9) -> None:
        if not np.all(np.isfinite(self.mu)) or not np.all(np.isfinite(self.Sigma)):
            raise NonSPDError("belief contains non-finite entries")
        if np.max(np.abs(self.Sigma - self.Sigma.T)) > tol:
            raise NonSPDError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(self.Sigma)) <= 0.0:
            raise NonSPDError("covariance is not positive definite")


@dataclass
class MarginalGaussian:
    """Elementwise means and variances of the decomposed parameters."""

    mean: np.ndarray
    var: np.ndarray


def spd_solve(A: np.ndarray, B: np.ndarray, jitter: float = 1e-12) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A.

    Uses a Cholesky factorization; on failure retries with escalating
    diagonal jitter (long runs shrink covariances toward singularity).
    The jitter is relative to the diagonal scale so it works for
    covariances and precisions alike.
    """
    try:
        return cho_solve(cho_factor(A, lower=True, check_finite=False), B, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.max(np.abs(np.diag(A)))), np.finfo(float).tiny)
    eye = np.eye(A.shape[0])
    while jitter < 1.0:
        try:
            return cho_solve(
                cho_factor(A + jitter * scale * eye, lower=True, check_finite=False),
                B,
                check_finite=False,
            )
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NonSPDError("matrix not positive definite even after jitter")


def spd_inv(A: np.ndarray) -> np.ndarray:
    X = spd_solve(A, np.eye(A.shape[0]))
    return 0.5 * (X + X.T)


def blr_update(
    belief: GaussianBelief, phi: np.ndarray, target: float, beta: float
) -> GaussianBelief:
    """One recursive Bayesian linear-regression step for a scalar target.

    Posterior covariance (Sigma^-1 + beta phi phi^T)^-1 and mean
    Sigma'(Sigma^-1 mu + beta phi t), realized as Potter's rank-one update
    of a covariance square root (never a repeated dense inversion). The
    factored form keeps the posterior positive semidefinite across the
    extreme precision ratios of near-noise-free runs, where plain
    covariance recursions lose definiteness to cancellation.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if phi.shape[0] != belief.dim:
        raise ValueError("regressor dimension does not match belief")
    S = belief.sqrt
    if S is None:
        try:
            S = np.linalg.cholesky(belief.Sigma)
        except np.linalg.LinAlgError as exc:
            raise NonSPDError("prior covariance is not positive definite") from exc
    r = 1.0 / beta
    v = S.T @ phi
    alpha = v @ v + r
    gain = (S @ v) / alpha
    mu = belief.mu + gain * (target - phi @ belief.mu)
    # Potter: S' = S (I - gamma v v^T / alpha) satisfies S'S'^T = Sigma'
    gamma = 1.0 / (1.0 + np.sqrt(r / alpha))
    S_new = S - np.outer(gain, gamma * v)
    Sigma = S_new @ S_new.T
    return GaussianBelief(mu, 0.5 * (Sigma + Sigma.T), sqrt=S_new)


def gpoe(beliefs: list[GaussianBelief]) -> GaussianBelief:
    """Generalized product of experts over M same-dimension Gaussians.

    Fused covariance M (sum_m Sigma_m^-1)^-1; fused mean is the
    precision-weighted average of the expert means. The 1/M normalization
    keeps the fused variance honest when experts carry no data.
    """
    m = len(beliefs)
    if m < 1:
        raise ValueError("gpoe needs at least one expert")
    dim = beliefs[0].dim
    if any(b.dim != dim for b in beliefs):
        raise ValueError("gpoe experts must share a dimension")
    precision_sum = np.zeros((dim, dim))
    weighted_mean_sum = np.zeros(dim)
    for b in beliefs:
        lam = spd_inv(b.Sigma)
        precision_sum += lam
        weighted_mean_sum += lam @ b.mu
    mu = spd_solve(precision_sum, weighted_mean_sum)
    Sigma = m * spd_inv(precision_sum)
    return GaussianBelief(mu, 0.5 * (Sigma + Sigma.T))


def ratio_gaussian(
    num: tuple[np.ndarray, np.ndarray],
    den: tuple[float, float],
    tau: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched Gaussian approximation of a Gaussian ratio.

    ``num`` may be elementwise vectors, ``den`` is scalar (mean, var). The
    denominator mean must be bounded away from zero; otherwise the division
    is meaningless and the caller should hold its previous decomposition.
    """
    num_mean, num_var = num
    den_mean, den_var = den
    if abs(den_mean) <= tau:
        raise DenominatorNearZero(
            f"denominator mean {den_mean:.3e} within guard {tau:.1e}"
        )
    mean = num_mean / den_mean
    var = mean**2 * (num_var / num_mean**2 + den_var / den_mean**2)
    return mean, var


def sum_gaussian(
    a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Sum of independent Gaussians: means add, variances add."""
    return a[0] + b[0], a[1] + b[1]


def assemble_local(
    belief: GaussianBelief, agent_index: int, n_agents: int, tau: float = 1e-3
) -> MarginalGaussian:
    """Decompose a fused belief into per-parameter marginals.

    Input belief is over theta_i = [rel offsets r_{j,i} (j != i); m_o r_i;
    m_o]. Output is ordered [r_1 ... r_N, m_o]: the agent's own grasp offset
    comes from the Gaussian ratio of the (m_o r_i, m_o) marginals, every
    other offset from adding the matching relative-offset marginal, and the
    mass passes through unchanged.
    """
    dim = 3 * n_agents + 1
    if belief.dim != dim:
        raise ValueError(f"belief dimension {belief.dim} != 3N+1 = {dim}")
    var = belief.marginal_var()
    mo_idx = mass_index(n_agents)
    mor = mass_offset_slice(n_agents)
    own_mean, own_var = ratio_gaussian(
        (belief.mu[mor], var[mor]), (belief.mu[mo_idx], var[mo_idx]), tau=tau
    )
    mean_out = np.empty(dim)
    var_out = np.empty(dim)
    for j in range(n_agents):
        if j == agent_index:
            mean_out[3 * j : 3 * j + 3] = own_mean
            var_out[3 * j : 3 * j + 3] = own_var
        else:
            sl = rel_offset_slice(agent_index, j, n_agents)
            m, v = sum_gaussian((own_mean, own_var), (belief.mu[sl], var[sl]))
            mean_out[3 * j : 3 * j + 3] = m
            var_out[3 * j : 3 * j + 3] = v
    mean_out[mo_idx] = belief.mu[mo_idx]
    var_out[mo_idx] = var[mo_idx]
    return MarginalGaussian(mean_out, var_out)

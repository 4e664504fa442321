"""Communication-graph checks and dynamic average consensus.

The network must be strongly connected and balanced with a uniform positive
weight floor; under those conditions the consensus states track the network
average of the (time-varying) transformed beliefs. One synchronous round
per call: all agents read round-k states, write round k+1, so results are
independent of agent ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopmanip.bayes import MarginalGaussian


class NonpositivePrecision(ValueError):
    """Consensus state carries a nonpositive precision (transient)."""


@dataclass
class CommGraph:
    """Weighted adjacency matrix with a positive weight floor alpha."""

    A: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        violations = validate_graph(self.A, self.alpha)
        if violations:
            raise ValueError("invalid communication graph: " + "; ".join(violations))

    @property
    def n_agents(self) -> int:
        return self.A.shape[0]


def _strongly_connected(pattern: np.ndarray) -> bool:
    """Reachability from node 0 along edges and reversed edges."""
    n = pattern.shape[0]
    for mat in (pattern, pattern.T):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(mat[u])[0]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != n:
            return False
    return True


def validate_graph(A: np.ndarray, alpha: float, tol: float = 1e-12) -> list[str]:
    """All clauses of the connectivity assumption; empty list means valid."""
    A = np.asarray(A, dtype=float)
    violations = []
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return ["adjacency matrix must be square"]
    if alpha <= 0.0:
        violations.append("alpha must be positive")
    if np.any(A < 0.0) or np.any(A > 1.0):
        violations.append("weights must lie in [0, 1]")
    row = A.sum(axis=1)
    col = A.sum(axis=0)
    if np.max(np.abs(row - 1.0)) > tol:
        violations.append(f"row sums != 1 (max dev {np.max(np.abs(row - 1.0)):.2e})")
    if np.max(np.abs(col - 1.0)) > tol:
        violations.append(f"column sums != 1, graph not balanced (max dev {np.max(np.abs(col - 1.0)):.2e})")
    if np.any(np.diag(A) < alpha):
        violations.append("diagonal entries below alpha")
    off = A[~np.eye(A.shape[0], dtype=bool)]
    nonzero = off[off > 0.0]
    if nonzero.size and np.any(nonzero < alpha):
        violations.append("nonzero off-diagonal weights below alpha")
    if not _strongly_connected(A > 0.0):
        violations.append("directed graph of nonzero weights is not strongly connected")
    return violations


@dataclass
class ConsensusState:
    """Per-agent consensus states xi and the previously applied inputs."""

    xi: np.ndarray  # (N, D)
    psi_prev: np.ndarray  # (N, D)

    @classmethod
    def initialize(cls, psis: np.ndarray) -> "ConsensusState":
        # xi^(0) = psi^(0) with psi^(-1) := psi^(0): the first round applies a
        # zero input difference, which yields exact sum conservation.
        psis = np.asarray(psis, dtype=float)
        return cls(psis.copy(), psis.copy())


def consensus_step(state: ConsensusState, psis: np.ndarray, graph: CommGraph) -> ConsensusState:
    """One synchronous round: neighbor mixing plus the input increment.

    xi_i <- xi_i + sum_{j != i} A_ij (xi_j - xi_i) + psi_i - psi_i^prev.
    After every round the agent sum of xi equals the agent sum of the inputs
    just applied (balanced-graph telescoping).
    """
    psis = np.asarray(psis, dtype=float)
    if psis.shape != state.xi.shape:
        raise ValueError("input dimension does not match consensus state")
    if graph.A.shape[0] != state.xi.shape[0]:
        raise ValueError("graph size does not match number of agents")
    row = graph.A.sum(axis=1)
    mixed = state.xi + graph.A @ state.xi - row[:, None] * state.xi
    xi = mixed + psis - state.psi_prev
    return ConsensusState(xi, psis.copy())


def psi_transform(m: MarginalGaussian) -> np.ndarray:
    """Belief -> consensus coordinates: [mean/var, 1/var] elementwise."""
    if np.any(m.var <= 0.0):
        raise ValueError("psi transform requires positive variances")
    return np.concatenate([m.mean / m.var, 1.0 / m.var])


def zeta_transform(xi: np.ndarray, eps: float = 1e-12) -> MarginalGaussian:
    """Consensus coordinates -> belief; inverse of the psi transform.

    Raises ``NonpositivePrecision`` while a consensus transient leaves a
    trailing (precision) entry at or below eps; callers hold their previous
    output in that case.
    """
    if xi.shape[0] % 2 != 0:
        raise ValueError("consensus vector length must be even")
    half = xi.shape[0] // 2
    precision = xi[half:]
    if np.any(precision <= eps):
        raise NonpositivePrecision("consensus precision entries not yet positive")
    return MarginalGaussian(xi[:half] / precision, 1.0 / precision)

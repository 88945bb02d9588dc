"""Optimal Gaussian policy, policy cost, and the cost-difference machinery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GaussianPolicy, LQRModel, MatrixPath, min_eig, second_moment_initial
from .errors import ContractError
from .riccati import (
    ValueSolution, solve_optimal_riccati, solve_policy_P, solve_policy_riccati,
    solve_state_moment, spd_inverse,
)


def optimal_covariance(model: LQRModel) -> MatrixPath:
    """Sigma*_t = (tau/2) R_t^-1 at every node."""
    Rinv = spd_inverse(model.R.values)
    return MatrixPath(model.grid, 0.5 * model.tau * Rinv)


def gain_from_value(model: LQRModel, P: MatrixPath) -> MatrixPath:
    """R_t^-1 B_t^T P_t per node."""
    Rinv = spd_inverse(model.R.values)
    return MatrixPath(model.grid, Rinv @ np.swapaxes(model.B.values, 1, 2) @ P.values)


def covariance_floor(Sigma: MatrixPath) -> float:
    """Half the smallest eigenvalue over the path, a safe positive floor."""
    return 0.5 * min(min_eig(S) for S in Sigma.values)


def optimal_policy(model: LQRModel, solution: Optional[ValueSolution] = None) -> GaussianPolicy:
    """K* = R^-1 B^T P and Sigma* = (tau/2) R^-1, with P the optimal Riccati solution."""
    if solution is None:
        solution = solve_optimal_riccati(model)
    Sigma = optimal_covariance(model)
    return GaussianPolicy(gain_from_value(model, solution.P), Sigma, covariance_floor(Sigma))


def with_gain(policy: GaussianPolicy, K: MatrixPath) -> GaussianPolicy:
    return GaussianPolicy(K, policy.Sigma, policy.sigma_floor)


def cost_from_solution(model: LQRModel, solution: ValueSolution) -> float:
    """E[x^T P_0 x] + r_0 for x ~ initial distribution."""
    y0 = second_moment_initial(model.init)
    return float(np.sum(solution.P0 * y0) + solution.r0)


def cost(model: LQRModel, policy: GaussianPolicy) -> float:
    """Closed-form entropy-regularized cost tr(P^K_0 E[x0 x0^T]) + r^{K,Sigma}_0."""
    return cost_from_solution(model, solve_policy_riccati(model, policy))


def g_matrix(model: LQRModel, K: MatrixPath, node: int,
             PK: Optional[MatrixPath] = None) -> np.ndarray:
    """G(t,K) = P B R^-1 B^T P + K^T R K - P B K - K^T B^T P, with P = P^K.

    Positive semidefinite: it equals (K - R^-1 B^T P)^T R (K - R^-1 B^T P).
    """
    if PK is None:
        PK = solve_policy_P(model, K)
    P, B, R, Kt = PK.values[node], model.B.values[node], model.R.values[node], K.values[node]
    PB = P @ B
    BK = PB @ Kt
    G = PB @ np.linalg.solve(R, PB.T) + Kt.T @ R @ Kt - BK - BK.T
    return 0.5 * (G + G.T)


def script_g_matrix(model: LQRModel, Kprime: MatrixPath, K: MatrixPath, node: int,
                    PK: Optional[MatrixPath] = None) -> np.ndarray:
    """P^K B(K - K') + [B(K - K')]^T P^K + K'^T R K' - K^T R K at one node."""
    if PK is None:
        PK = solve_policy_P(model, K)
    P, B, R = PK.values[node], model.B.values[node], model.R.values[node]
    Kn, Kp = K.values[node], Kprime.values[node]
    X = P @ B @ (Kn - Kp)
    M = X + X.T + Kp.T @ R @ Kp - Kn.T @ R @ Kn
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class CostDifference:
    lhs: float
    rhs: float
    abs_gap: float


def cost_difference_identity_check(model: LQRModel, policy: GaussianPolicy,
                                   policy_prime: GaussianPolicy) -> CostDifference:
    """Compare C(K',Sigma) - C(K,Sigma) with int_0^T <y'_t, script-G(t,K',K)> dt.

    The two sides are computed along independent routes: the left from two
    policy-value solves, the right from the forward moment ODE under K' and a
    trapezoidal time integral.
    """
    if not np.array_equal(policy.Sigma.values, policy_prime.Sigma.values):
        raise ContractError("cost-difference identity needs both policies to share Sigma")
    lhs = cost(model, policy_prime) - cost(model, policy)
    PK = solve_policy_P(model, policy.K)
    y_prime = solve_state_moment(model, policy_prime)
    integrand = [
        np.sum(y_prime.values[j] * script_g_matrix(model, policy_prime.K, policy.K, j, PK))
        for j in range(model.grid.N + 1)
    ]
    rhs = float(np.trapezoid(integrand, model.grid.nodes))
    return CostDifference(lhs, rhs, abs(lhs - rhs))

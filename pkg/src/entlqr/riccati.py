"""Matrix Riccati, Lyapunov and moment ODE solvers.

All solvers use fixed-step RK4 on the model's grid.  Backward equations are
integrated from the terminal condition towards t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianPolicy, LQRModel, MatrixPath, second_moment_initial
from .errors import InversionError, LogDetError, ShapeError
from .integrate import rk4

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ValueSolution:
    """Quadratic value function x^T P_t x + r_t on the grid."""

    P: MatrixPath
    r: MatrixPath

    @property
    def P0(self) -> np.ndarray:
        return self.P.values[0]

    @property
    def r0(self) -> float:
        return float(self.r.values[0, 0, 0])


def spd_inverse(R: np.ndarray, name: str = "R") -> np.ndarray:
    """Invert a stack of SPD matrices through their Cholesky factors."""
    eig = np.linalg.eigvalsh(R)
    lo, hi = eig[..., 0], eig[..., -1]
    bad = (lo <= 0) | (hi > COND_LIMIT * lo)
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise InversionError(
            f"{name} is singular or ill-conditioned (condition number > {COND_LIMIT:g}) "
            f"at half-grid index {i}")
    L = np.linalg.cholesky(R)
    Linv = np.linalg.inv(L)
    return np.swapaxes(Linv, -1, -2) @ Linv


def _sym(M):
    return 0.5 * (M + M.T)


def _unpack(x, n):
    return x[:-1].reshape(n, n), x[-1]


def _pack(P, r):
    return np.concatenate([P.ravel(), [r]])


def _solution(model, out) -> ValueSolution:
    n = model.n
    P = out[:, :-1].reshape(-1, n, n)
    r = out[:, -1].reshape(-1, 1, 1)
    return ValueSolution(MatrixPath(model.grid, P), MatrixPath(model.grid, r))


def solve_optimal_riccati(model: LQRModel) -> ValueSolution:
    """Solve dP/dt + A^T P + P A + Q - P B R^-1 B^T P = 0, P_T = Q', and the
    offset dr/dt + tr(sigma^T P sigma) + (tau/2) log(|R|/(tau pi)^k) = 0, r_T = 0.
    """
    n, k, tau = model.n, model.k, model.tau
    A = model.A.half_grid
    B = model.B.half_grid
    Q = model.Q.half_grid
    R = model.R.half_grid
    Rinv = spd_inverse(R)
    S = B @ Rinv @ np.swapaxes(B, 1, 2)
    SS = model.sigma.half_grid @ np.swapaxes(model.sigma.half_grid, 1, 2)
    _, logdetR = np.linalg.slogdet(R)
    offset = 0.5 * tau * (logdetR - k * np.log(tau * np.pi))

    def rhs(m, x):
        P, _ = _unpack(x, n)
        PA = P @ A[m]
        dP = -_sym(PA + PA.T + Q[m] - P @ S[m] @ P)
        dr = -(np.sum(SS[m] * P) + offset[m])
        return _pack(dP, dr)

    out = rk4(rhs, _pack(model.Qprime, 0.0), model.grid, backward=True)
    return _solution(model, out)


def solve_policy_riccati(model: LQRModel, policy: GaussianPolicy) -> ValueSolution:
    """Value of the Gaussian policy N(-K x, Sigma).

    P^K solves the linear equation dP/dt + (A-BK)^T P + P(A-BK) + Q + K^T R K = 0
    with P_T = Q'; r solves
    dr/dt + tr(sigma^T P sigma + Sigma R) - (tau/2)[k + log((2 pi)^k |Sigma|)] = 0.
    """
    n, k, tau = model.n, model.k, model.tau
    _check_policy_shapes(model, policy)
    K = policy.K.half_grid
    R = model.R.half_grid
    F = model.A.half_grid - model.B.half_grid @ K
    Kt = np.swapaxes(K, 1, 2)
    QK = model.Q.half_grid + Kt @ R @ K
    SS = model.sigma.half_grid @ np.swapaxes(model.sigma.half_grid, 1, 2)
    Sig = policy.Sigma.half_grid
    sign, logdetS = np.linalg.slogdet(Sig)
    if np.any(sign <= 0):
        i = int(np.flatnonzero(sign <= 0)[0])
        raise LogDetError(f"|Sigma_t| <= 0 at half-grid index {i}")
    entropy = 0.5 * tau * (k + k * np.log(2 * np.pi) + logdetS)
    trSR = np.einsum("mij,mji->m", Sig, R)

    def rhs(m, x):
        P, _ = _unpack(x, n)
        PF = P @ F[m]
        dP = -_sym(PF + PF.T + QK[m])
        dr = -(np.sum(SS[m] * P) + trSR[m] - entropy[m])
        return _pack(dP, dr)

    out = rk4(rhs, _pack(model.Qprime, 0.0), model.grid, backward=True)
    return _solution(model, out)


def solve_policy_P(model: LQRModel, K: MatrixPath) -> MatrixPath:
    """P^K alone (the gain-dependent part of the policy value)."""
    n = model.n
    Kh = K.half_grid
    F = model.A.half_grid - model.B.half_grid @ Kh
    QK = model.Q.half_grid + np.swapaxes(Kh, 1, 2) @ model.R.half_grid @ Kh

    def rhs(m, P):
        PF = P @ F[m]
        return -_sym(PF + PF.T + QK[m])

    return MatrixPath(model.grid, rk4(rhs, model.Qprime, model.grid, backward=True))


def solve_state_moment(model: LQRModel, policy) -> MatrixPath:
    """Second moment y_t = E[x_t x_t^T] under the policy's gain.

    dy/dt = (A-BK) y + y (A-BK)^T + sigma sigma^T, y_0 = E[x_0 x_0^T].
    ``policy`` may be a GaussianPolicy or a gain path K.
    """
    K = policy.K if isinstance(policy, GaussianPolicy) else policy
    F = model.A.half_grid - model.B.half_grid @ K.half_grid
    SS = model.sigma.half_grid @ np.swapaxes(model.sigma.half_grid, 1, 2)

    def rhs(m, y):
        Fy = F[m] @ y
        return _sym(Fy + Fy.T + SS[m])

    y0 = second_moment_initial(model.init)
    return MatrixPath(model.grid, rk4(rhs, y0, model.grid))


def _check_policy_shapes(model, policy):
    if policy.K.grid != model.grid:
        raise ShapeError("policy lives on a different grid than the model")
    if policy.K.shape != (model.k, model.n):
        raise ShapeError(f"K must be {model.k}x{model.n}, got {policy.K.shape}")


@dataclass(frozen=True)
class ContinuityProbe:
    sup_norm_delta_P: float
    input_distance: float


def _path_distance(a: MatrixPath, b: MatrixPath) -> float:
    return float(np.max(np.linalg.norm(a.values - b.values, ord=2, axis=(1, 2))))


def input_distance(model: LQRModel, other: LQRModel) -> float:
    """||dA||_inf + ||dQ||_inf + ||dB||_inf + ||dR||_inf + ||dQ'||_2."""
    if model.grid != other.grid:
        raise ShapeError("models live on different grids")
    if (model.n, model.k, model.d) != (other.n, other.k, other.d):
        raise ShapeError("models have different dimensions")
    total = sum(_path_distance(getattr(model, s), getattr(other, s)) for s in "AQBR")
    return total + float(np.linalg.norm(model.Qprime - other.Qprime, ord=2))


def riccati_continuity_probe(model: LQRModel, perturbed: LQRModel) -> ContinuityProbe:
    """Measure how far the optimal Riccati solution moves under a data perturbation."""
    dist = input_distance(model, perturbed)
    P = solve_optimal_riccati(model).P
    Pt = solve_optimal_riccati(perturbed).P
    return ContinuityProbe(_path_distance(P, Pt), dist)

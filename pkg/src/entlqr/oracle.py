"""Independent checks: Monte Carlo cost, closed-form scalar Riccati, grid refinement.

Nothing here reuses the Riccati solvers on the path being checked; the
Monte Carlo estimator simulates the state SDE directly and the scalar
solution is written in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GaussianPolicy, LQRModel, MatrixPath
from .errors import BlowUpError
from .policy import optimal_covariance
from .riccati import solve_optimal_riccati, solve_policy_riccati, solve_state_moment
from .rng import stream

X0_STREAM, STEP_STREAM = 0, 1


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float
    paths: int

    def agrees_with(self, value: float, n_se: float = 3.0) -> bool:
        return abs(self.estimate - value) <= n_se * self.std_error


def mc_cost(model: LQRModel, policy: GaussianPolicy, paths: int = 100_000,
            seed: int = 0) -> MCEstimate:
    """Monte Carlo estimate of the entropy-regularized cost.

    The state follows Euler-Maruyama steps of dx = (A - BK) x dt + sigma dW on
    the model grid.  At each step an action u ~ N(-Kx, Sigma) is drawn and
    contributes u^T R u + tau log h(u|x) to the running cost (left-point rule);
    the action noise never enters the dynamics.

    Step j draws the action and Brownian increments for every path from one
    Philox stream keyed by (seed, 1, j); path p is row p.
    """
    if paths < 100:
        raise ValueError("mc_cost needs at least 100 paths")
    grid, n, k, d = model.grid, model.n, model.k, model.d
    h = grid.h
    A, B, Q, R, sig = (getattr(model, s).values for s in ("A", "B", "Q", "R", "sigma"))
    K, Sigma = policy.K.values, policy.Sigma.values
    L0 = _chol_psd(model.init.cov)
    x = model.init.mean + _rows_times(stream(seed, X0_STREAM, 0).standard_normal((paths, n)), L0)
    running = np.zeros(paths)
    log_norm = -0.5 * k * math.log(2 * math.pi)
    for j in range(grid.N):
        L = np.linalg.cholesky(Sigma[j])
        noise = stream(seed, STEP_STREAM, j).standard_normal((paths, k + d))
        xi, dW = noise[:, :k], noise[:, k:] * math.sqrt(h)
        u = _rows_times(xi, L) - _rows_times(x, K[j])
        # exact Gaussian log-density of u: (u - mean) = L xi
        log_h = log_norm - np.sum(np.log(np.diag(L))) - 0.5 * np.sum(xi * xi, axis=1)
        running += h * (_quad(x, Q[j]) + _quad(u, R[j]) + model.tau * log_h)
        x = x + h * _rows_times(x, A[j] - B[j] @ K[j]) + _rows_times(dW, sig[j])
    total = running + _quad(x, model.Qprime)
    return MCEstimate(float(np.mean(total)), float(np.std(total, ddof=1) / math.sqrt(paths)), paths)


def _rows_times(X, M):
    return X @ M.T


def _quad(X, M):
    """Row-wise x^T M x."""
    return np.sum((X @ M) * X, axis=1)


def _chol_psd(S):
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


def analytic_scalar_riccati(a, b, q, r, qprime, T, t) -> float:
    """Closed-form P(t) for dP/dt + 2aP + q - (b^2/r) P^2 = 0, P(T) = q'.

    With s = T - t, beta = b^2/r and gamma = sqrt(a^2 + beta q), linearizing
    P = U/V gives P(s) = (q' + (a q' + q) S) / (1 + (beta q' - a) S) where
    S = tanh(gamma s)/gamma (S = s when gamma = 0).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    slack = 1e-12 * max(1.0, abs(T))
    if t < -slack or t > T + slack:
        raise ValueError(f"t={t} outside [0, {T}]")
    t = min(max(t, 0.0), T)
    beta = b * b / r
    disc = a * a + beta * q

    def S_of(s):
        if disc > 1e-300:
            g = math.sqrt(disc)
            return math.tanh(g * s) / g
        if disc < -1e-300:
            w = math.sqrt(-disc)
            if w * s >= math.pi / 2:
                raise BlowUpError("tangent pole inside the horizon")
            return math.tan(w * s) / w
        return s

    for s in (T, T - t):
        if 1.0 + (beta * qprime - a) * S_of(s) <= 0.0:
            raise BlowUpError(f"scalar Riccati solution blows up within [0, {T}]")
    S = S_of(T - t)
    return (qprime + (a * qprime + q) * S) / (1.0 + (beta * qprime - a) * S)


@dataclass(frozen=True)
class RefinementRow:
    N: int
    error: float
    order: float


SOLVERS = ("optimal", "policy", "moment", "forward")


def _is_constant_scalar(model):
    return model.n == 1 and model.k == 1 and all(
        getattr(model, s).is_constant() for s in ("A", "B", "Q", "R"))


def _solve(model: LQRModel, solver: str) -> np.ndarray:
    if solver == "optimal":
        sol = solve_optimal_riccati(model)
        return np.concatenate([sol.P.values.reshape(len(sol.P), -1),
                               sol.r.values.reshape(len(sol.r), -1)], axis=1)
    zero = MatrixPath.constant(model.grid, np.zeros((model.k, model.n)))
    if solver == "policy":
        Sigma = optimal_covariance(model)
        sol = solve_policy_riccati(model, GaussianPolicy(zero, Sigma, 1e-12))
        return np.concatenate([sol.P.values.reshape(len(sol.P), -1),
                               sol.r.values.reshape(len(sol.r), -1)], axis=1)
    if solver == "moment":
        return solve_state_moment(model, zero).values.reshape(model.grid.N + 1, -1)
    if solver == "forward":
        from .diffusion import forward_moments
        return forward_moments(model, np.linalg.inv(model.Qprime)).values.reshape(
            model.grid.N + 1, -1)
    raise ValueError(f"unknown solver '{solver}' (choose from {', '.join(SOLVERS)})")


def refinement_order(model: LQRModel, solver: str, Ns) -> list[RefinementRow]:
    """Grid-refinement study of one deterministic solver.

    Errors are sup-norms over the coarsest grid's nodes.  The reference is
    the closed-form scalar solution for the ``optimal`` solver on constant
    scalar models (P only), otherwise the finest grid in ``Ns`` (which then
    gets no row).  ``order`` is log2 of the error ratio per halving of the
    step, NaN for the first row or when an error is zero.
    """
    Ns = [int(N) for N in Ns]
    if sorted(Ns) != Ns or len(set(Ns)) != len(Ns):
        raise ValueError("Ns must be strictly ascending")
    if Ns[-1] < 4 * Ns[0]:
        raise ValueError("finest grid must be at least 4x the coarsest")
    if any(N % Ns[0] for N in Ns):
        raise ValueError("every N must be a multiple of the coarsest N")
    coarse = model.regrid(Ns[0]).grid.nodes
    analytic = solver == "optimal" and _is_constant_scalar(model)
    if analytic:
        c = lambda name: float(getattr(model, name).values[0, 0, 0])
        ref = np.array([[analytic_scalar_riccati(c("A"), c("B"), c("Q"), c("R"),
                                                 float(model.Qprime[0, 0]), model.grid.T, t)]
                        for t in coarse])
        runs = Ns
    else:
        N_f = Ns[-1]
        ref = _solve(model.regrid(N_f), solver)[:: N_f // Ns[0]]
        runs = Ns[:-1]
    rows = []
    prev = None
    for N in runs:
        sol = _solve(model.regrid(N), solver)[:: N // Ns[0]]
        if analytic:
            sol = sol[:, :1]
        err = float(np.max(np.abs(sol - ref)))
        order = math.nan
        if prev is not None and prev[1] > 0 and err > 0:
            order = math.log2(prev[1] / err) / math.log2(N / prev[0])
        rows.append(RefinementRow(N, err, order))
        prev = (N, err)
    return rows

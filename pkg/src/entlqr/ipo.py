"""Iterative policy optimization (IPO) and convergence-rate diagnostics.

One IPO step maps a gain K to R^-1 B^T P^K, where P^K is the value matrix of
the policy with gain K.  The covariance is set to its optimum (tau/2) R^-1
once and never iterated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import LQRModel, MatrixPath, l2_squared
from .errors import DiagnosticWindowError
from .policy import (
    cost_from_solution, gain_from_value, optimal_covariance, optimal_policy, with_gain,
)
from .riccati import solve_optimal_riccati, solve_policy_P, solve_policy_riccati

DIVERGENCE_SLACK = 1e-8
MONOTONE_SLACK = 1e-10
WINDOW = (1e-10, 1e-2)
USABLE_GAP = 1e-14


class StopReason(str, enum.Enum):
    TOLERANCE = "tolerance"
    MAX_ITER = "maxIter"
    DIVERGENCE = "divergence"


@dataclass
class IPOTrace:
    """Per-iterate record of an IPO run; index 0 is the initial gain."""

    iterates: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    l2dists: list = field(default_factory=list)
    stop_reason: StopReason = StopReason.MAX_ITER
    optimal_cost: float = math.nan

    @property
    def iterations(self) -> int:
        """Number of IPO updates performed."""
        return len(self.iterates) - 1

    @property
    def final_gain(self) -> MatrixPath:
        return self.iterates[-1]

    def is_monotone(self, slack: float = MONOTONE_SLACK) -> bool:
        g = np.asarray(self.gaps)
        return bool(np.all(g[1:] <= g[:-1] + slack))


def ipo_step(model: LQRModel, K: MatrixPath) -> MatrixPath:
    """K -> R^-1 B^T P^K."""
    return gain_from_value(model, solve_policy_P(model, K))


def ipo_sigma(model: LQRModel) -> MatrixPath:
    """(tau/2) R^-1, the covariance reached after a single IPO update."""
    return optimal_covariance(model)


def run_ipo(model: LQRModel, K0: MatrixPath, tol: float = 1e-10, max_iter: int = 50) -> IPOTrace:
    """Run IPO from K0 until the cost gap or the gain increment falls below tol.

    The gap is measured against C* = cost(K*, Sigma*) from the closed-form
    optimum.  A cost increase larger than 1e-8 stops the run with reason
    ``divergence``; IPO is monotone so this signals bad input or a bug.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    star = optimal_policy(model, solve_optimal_riccati(model))
    c_star = cost_from_solution(model, solve_policy_riccati(model, star))
    policy = with_gain(star, K0)
    trace = IPOTrace(optimal_cost=c_star)

    def record(K):
        sol = solve_policy_riccati(model, with_gain(star, K))
        c = cost_from_solution(model, sol)
        trace.iterates.append(K)
        trace.costs.append(c)
        trace.gaps.append(c - c_star)
        trace.l2dists.append(l2_squared(K.with_values(K.values - star.K.values)))
        return sol

    sol = record(policy.K)
    if trace.gaps[0] <= tol:
        trace.stop_reason = StopReason.TOLERANCE
        return trace
    for _ in range(max_iter):
        K_prev = trace.iterates[-1]
        K_next = gain_from_value(model, sol.P)
        sol = record(K_next)
        if trace.costs[-1] > trace.costs[-2] + DIVERGENCE_SLACK:
            trace.stop_reason = StopReason.DIVERGENCE
            return trace
        increment = l2_squared(K_next.with_values(K_next.values - K_prev.values))
        if trace.gaps[-1] <= tol or increment <= tol * tol:
            trace.stop_reason = StopReason.TOLERANCE
            return trace
    trace.stop_reason = StopReason.MAX_ITER
    return trace


@dataclass(frozen=True)
class RateDiagnostics:
    linear_ratios: list
    superlinear_exponent: float
    superlinear_constant: float
    window_ratios: list


def rate_diagnostics(trace: IPOTrace, window=WINDOW) -> RateDiagnostics:
    """Empirical linear ratios and local super-linear exponent of a trace.

    ``linear_ratios[i] = gaps[i+1] / gaps[i]`` over consecutive usable gaps
    (> 1e-14).  The exponent is the least-squares slope of log gaps[i+1]
    against log gaps[i] over the iterations whose resulting gap gaps[i+1]
    lies in ``window``; the constant is the largest gaps[i+1] / gaps[i]^1.5
    over the same pairs.  Both are NaN when fewer than two pairs qualify.
    """
    g = np.asarray(trace.gaps, dtype=float)
    usable = int(np.argmax(g <= USABLE_GAP)) if np.any(g <= USABLE_GAP) else len(g)
    if usable < 3:
        raise DiagnosticWindowError(
            f"need at least 3 iterates with gap > {USABLE_GAP:g}, trace has {usable}")
    head = g[:usable]
    ratios = list(head[1:] / head[:-1])
    lo, hi = window
    pairs = [(head[i], head[i + 1]) for i in range(usable - 1) if lo <= head[i + 1] <= hi]
    if len(pairs) < 2:
        return RateDiagnostics(ratios, math.nan, math.nan, [])
    x = np.log([p[0] for p in pairs])
    y = np.log([p[1] for p in pairs])
    slope = float(np.polyfit(x, y, 1)[0])
    wr = [b / a ** 1.5 for a, b in pairs]
    return RateDiagnostics(ratios, slope, float(max(wr)), wr)


def iterate_bound_holds(model: LQRModel, trace: IPOTrace, slack: float = 1e-8) -> bool:
    """Check ||K^(i)_t|| <= ||R_t^-1 B_t^T|| ||P^{K^(0)}_t|| for every i >= 1 and node."""
    P0 = solve_policy_P(model, trace.iterates[0]).values
    RB = np.linalg.solve(model.R.values, np.swapaxes(model.B.values, 1, 2))
    bound = np.linalg.norm(RB, ord=2, axis=(1, 2)) * np.linalg.norm(P0, ord=2, axis=(1, 2))
    for K in trace.iterates[1:]:
        if np.any(np.linalg.norm(K.values, ord=2, axis=(1, 2)) > bound + slack):
            return False
    return True


def perturbed_start(model: LQRModel, target_gap: float, seed: int = 0) -> MatrixPath:
    """A gain K* + s*D whose cost gap equals ``target_gap``.

    D is a seeded Gaussian direction of unit 2-norm held constant in time; the
    scale s is found by root-finding on log gap(s).  Used to start IPO inside
    the local basin at a controlled distance from the optimum.
    """
    from scipy.optimize import brentq

    star = optimal_policy(model, solve_optimal_riccati(model))
    c_star = cost_from_solution(model, solve_policy_riccati(model, star))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7])))
    D = rng.standard_normal((model.k, model.n))
    D /= np.linalg.norm(D, ord=2)

    def gain(s):
        return star.K.with_values(star.K.values + s * D)

    def excess(log_s):
        sol = solve_policy_riccati(model, with_gain(star, gain(math.exp(log_s))))
        return math.log(max(cost_from_solution(model, sol) - c_star, 1e-300)) - math.log(target_gap)

    lo, hi = -12.0, 0.0
    while excess(hi) < 0:
        hi += 2.0
        if hi > 20:
            raise ValueError(f"cannot reach gap {target_gap:g} along the chosen direction")
    return gain(math.exp(brentq(excess, lo, hi, xtol=1e-6)))

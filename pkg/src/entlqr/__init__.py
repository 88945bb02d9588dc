"""Entropy-regularized continuous-time LQR.

Riccati solvers, Gaussian policies, iterative policy optimization, policy
transfer, the diffusion models induced by a class of LQRs, and independent
numerical oracles.
"""

from .config import builtin, load_config
from .core import GaussianPolicy, InitialDistribution, LQRModel, MatrixPath, TimeGrid, validate_model
from .ipo import run_ipo
from .policy import cost, optimal_policy
from .riccati import solve_optimal_riccati, solve_policy_riccati, solve_state_moment

__all__ = [
    "GaussianPolicy", "InitialDistribution", "LQRModel", "MatrixPath", "TimeGrid",
    "builtin", "cost", "load_config", "optimal_policy", "run_ipo", "solve_optimal_riccati",
    "solve_policy_riccati", "solve_state_moment", "validate_model",
]

__version__ = "0.1.0"

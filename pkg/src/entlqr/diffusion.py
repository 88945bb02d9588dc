"""Score-based diffusion models induced by a class of LQRs.

When Q = 0, B R^-1 B^T = sigma sigma^T and tr(A_t) = -(tau/4) log(|R_t|/(tau pi)^k),
the value function of the LQR is the log-density of an Ornstein-Uhlenbeck
process started from N(0, (Q')^-1): the forward marginal at time t has
precision P_{T-t}.  Everything here is linear-Gaussian, so distributions are
propagated exactly through their first two moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .core import LQRModel, MatrixPath, min_eig
from .errors import ContractError, DegenerateDensityError, LQRError
from .integrate import rk4
from .rng import stream as _stream
from .riccati import solve_optimal_riccati, spd_inverse

RESIDUAL_TOL = 1e-10
EIG_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianState:
    """N(mean, covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float)).ravel()
        S = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if S.shape != (m.size, m.size):
            raise ContractError(f"covariance must be {m.size}x{m.size}, got {S.shape}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", 0.5 * (S + S.T))

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass
class Assumption5Report:
    """Per-node residuals of the identities that make an LQR a diffusion model."""

    noise_residual: np.ndarray
    trace_residual: np.ndarray
    q_zero: bool
    qprime_pd: bool
    tol: float = RESIDUAL_TOL

    @property
    def passed(self) -> bool:
        return not self.failures()

    def failures(self) -> list[str]:
        out = []
        if np.max(self.noise_residual) > self.tol:
            j = int(np.argmax(self.noise_residual))
            out.append(f"B R^-1 B^T = sigma sigma^T fails (residual "
                       f"{self.noise_residual[j]:.3g} at node {j})")
        if np.max(self.trace_residual) > self.tol:
            j = int(np.argmax(self.trace_residual))
            out.append(f"tr(A) = -(tau/4) log(|R|/(tau pi)^k) fails (residual "
                       f"{self.trace_residual[j]:.3g} at node {j})")
        if not self.q_zero:
            out.append("Q = 0 fails")
        if not self.qprime_pd:
            out.append("Q' > 0 fails")
        return out


def check_assumption5(model: LQRModel, tol: float = RESIDUAL_TOL) -> Assumption5Report:
    R = model.R.values
    B = model.B.values
    sig = model.sigma.values
    noise = B @ spd_inverse(R) @ np.swapaxes(B, 1, 2) - sig @ np.swapaxes(sig, 1, 2)
    _, logdetR = np.linalg.slogdet(R)
    target = -0.25 * model.tau * (logdetR - model.k * math.log(model.tau * math.pi))
    trace = np.abs(np.trace(model.A.values, axis1=1, axis2=2) - target)
    return Assumption5Report(
        noise_residual=np.linalg.norm(noise, ord=2, axis=(1, 2)),
        trace_residual=trace,
        q_zero=bool(np.all(model.Q.values == 0.0)),
        qprime_pd=min_eig(model.Qprime) > 0,
        tol=tol,
    )


@dataclass(frozen=True, eq=False)
class ScoreSpec:
    """Score model grad log p^M built from the Riccati solution with terminal value M."""

    M: np.ndarray
    P: MatrixPath

    def __post_init__(self):
        if not np.array_equal(self.P.values[-1], self.M):
            raise ContractError("Riccati path must end at the terminal matrix M")


def score_spec(model: LQRModel, M) -> ScoreSpec:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (model.n, model.n):
        raise ContractError(f"terminal matrix must be {model.n}x{model.n}")
    M = 0.5 * (M + M.T)
    if not min_eig(M) > 0:
        raise ContractError("terminal matrix M must be positive definite")
    target = model.replace(Qprime=M)
    return ScoreSpec(np.array(target.Qprime), solve_optimal_riccati(target).P)


def _precision(spec: ScoreSpec, t: float) -> np.ndarray:
    T = spec.P.grid.T
    return spec.P(T - t) if t != 0.0 else spec.P.values[-1]


def density_params(model: LQRModel, M, t: float, spec: ScoreSpec | None = None) -> GaussianState:
    """Forward marginal at time t of the diffusion whose data law is N(0, M^-1): N(0, (P^M_{T-t})^-1)."""
    spec = spec or score_spec(model, M)
    prec = _precision(spec, t)
    if not min_eig(prec) > 0:
        raise DegenerateDensityError(f"precision P_(T-t) is singular at t={t}")
    return GaussianState(np.zeros(model.n), np.linalg.inv(prec))


def score(spec: ScoreSpec, t: float, x) -> np.ndarray:
    """grad_x log p^M(t, x) = -P^M_{T-t} x."""
    return -_precision(spec, t) @ np.asarray(x, dtype=float)


def log_density(state: GaussianState, x) -> float:
    return float(stats.multivariate_normal(state.mean, state.covariance).logpdf(x))


def _noise_cov(sig):
    SS = sig @ np.swapaxes(sig, 1, 2)
    return 0.5 * (SS + np.swapaxes(SS, 1, 2))


def _rhs_cov(F, SS):
    def rhs(m, S):
        FS = F[m] @ S
        return FS + FS.T + SS[m]
    return rhs


def forward_moments(model: LQRModel, start_cov) -> MatrixPath:
    """Covariance of dX = -A_{T-t} X dt + sigma_{T-t} dW from X_0 ~ N(0, start_cov).

    Node j of the result is the forward time t_j; coefficients are read in
    reverse (half-grid index 2N - m).
    """
    start_cov = np.atleast_2d(np.asarray(start_cov, dtype=float))
    F = -model.A.half_grid[::-1]
    SS = _noise_cov(model.sigma.half_grid[::-1])
    return MatrixPath(model.grid, rk4(_rhs_cov(F, SS), start_cov, model.grid))


def backward_drift(model: LQRModel, spec: ScoreSpec) -> np.ndarray:
    """Half-grid values of F_t = A_t - sigma_t sigma_t^T P^M_t.

    The score is evaluated at diffusion time T - t, i.e. s(T-t, y) = -P^M_t y.
    """
    sig = model.sigma.half_grid
    return model.A.half_grid - sig @ np.swapaxes(sig, 1, 2) @ spec.P.half_grid


def backward_moments(model: LQRModel, spec: ScoreSpec, init: GaussianState):
    """Exact mean and covariance paths of dY = [A Y + sigma sigma^T s(T-t, Y)] dt + sigma dW."""
    F = backward_drift(model, spec)
    SS = _noise_cov(model.sigma.half_grid)
    mean = rk4(lambda m, x: F[m] @ x, init.mean.reshape(-1, 1), model.grid)
    cov = rk4(_rhs_cov(F, SS), init.covariance, model.grid)
    return MatrixPath(model.grid, mean), MatrixPath(model.grid, cov)


def terminal_state(model: LQRModel, spec: ScoreSpec, init: GaussianState) -> GaussianState:
    mean, cov = backward_moments(model, spec, init)
    return GaussianState(mean.values[-1].ravel(), cov.values[-1])


def sample_backward(model: LQRModel, spec: ScoreSpec, init: GaussianState,
                    paths: int, seed: int) -> np.ndarray:
    """Euler-Maruyama samples of Y_T, shape (paths, n).

    Step j draws its Gaussian increments from a Philox stream keyed by
    (seed, 1, j) and the initial draw uses (seed, 0, 0).  Path p is row p of
    every draw, so results do not depend on how the work is scheduled.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    n, d, grid = model.n, model.d, model.grid
    F = backward_drift(model, spec)[0::2]
    sig = model.sigma.values
    h = grid.h
    L = _psd_sqrt(init.covariance)
    Y = init.mean + _stream(seed, 0, 0).standard_normal((paths, n)) @ L.T
    for j in range(grid.N):
        dW = _stream(seed, 1, j).standard_normal((paths, d)) * math.sqrt(h)
        Y = Y + h * (Y @ F[j].T) + dW @ sig[j].T
    return Y


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root; eigenvalues in (-1e-12, 0) are clamped to 0."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if np.any(w < -EIG_CLAMP):
        raise LQRError(f"matrix square root of an indefinite matrix (eigenvalue {w.min():.3g})")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def w2_gaussians(a: GaussianState, b: GaussianState) -> float:
    """2-Wasserstein distance between two Gaussians (closed form)."""
    if a.n != b.n:
        raise ContractError("Gaussians of different dimension")
    rb = _psd_sqrt(b.covariance)
    cross = _psd_sqrt(rb @ a.covariance @ rb)
    sq = float(np.sum((a.mean - b.mean) ** 2)
               + np.trace(a.covariance + b.covariance - 2.0 * cross))
    return math.sqrt(max(sq, 0.0))


def kl_gaussians(a: GaussianState, b: GaussianState) -> float:
    """KL(a || b) for nondegenerate Gaussians."""
    for s in (a, b):
        if not min_eig(s.covariance) > 0:
            raise DegenerateDensityError("KL divergence needs positive-definite covariances")
    Sb_inv = np.linalg.inv(b.covariance)
    dm = b.mean - a.mean
    _, lda = np.linalg.slogdet(a.covariance)
    _, ldb = np.linalg.slogdet(b.covariance)
    return 0.5 * float(np.trace(Sb_inv @ a.covariance) + dm @ Sb_inv @ dm - a.n + ldb - lda)


@dataclass(frozen=True)
class TVBounds:
    pinsker_upper_bound: float
    exact_1d: float | None = None


def tv_gaussians(a: GaussianState, b: GaussianState) -> TVBounds:
    """Pinsker bound sqrt(KL(a||b)/2) on total variation, plus exact TV in 1-D."""
    pinsker = math.sqrt(max(kl_gaussians(a, b), 0.0) / 2.0)
    exact = None
    if a.n == 1:
        pa = stats.norm(a.mean[0], math.sqrt(a.covariance[0, 0]))
        pb = stats.norm(b.mean[0], math.sqrt(b.covariance[0, 0]))
        lo = min(pa.ppf(1e-15), pb.ppf(1e-15))
        hi = max(pa.isf(1e-15), pb.isf(1e-15))
        # split at the density crossings so quad sees smooth pieces
        pts = _crossings(a, b)
        val, _ = integrate.quad(lambda x: abs(pa.pdf(x) - pb.pdf(x)), lo, hi,
                                points=[p for p in pts if lo < p < hi] or None,
                                limit=200, epsabs=1e-13, epsrel=1e-11)
        exact = 0.5 * val
    return TVBounds(pinsker, exact)


def _crossings(a: GaussianState, b: GaussianState) -> list[float]:
    m1, m2 = a.mean[0], b.mean[0]
    v1, v2 = a.covariance[0, 0], b.covariance[0, 0]
    # log N(x; m1, v1) = log N(x; m2, v2) is a quadratic in x
    qa = 0.5 / v2 - 0.5 / v1
    qb = m1 / v1 - m2 / v2
    qc = 0.5 * m2 ** 2 / v2 - 0.5 * m1 ** 2 / v1 + 0.5 * math.log(v2 / v1)
    if abs(qa) < 1e-15:
        return [] if abs(qb) < 1e-15 else [-qc / qb]
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted([(-qb - r) / (2 * qa), (-qb + r) / (2 * qa)])


@dataclass(frozen=True)
class ErrorBoundRecord:
    m_norm: float
    noise_w2: float
    terminal_w2: float
    terminal_tv_bound: float
    grid_n: int
    seed: int
    m_label: str = ""
    noise_label: str = ""


def data_distribution(model: LQRModel) -> GaussianState:
    """N(0, (Q')^-1), the law the backward SDE should reproduce."""
    return GaussianState(np.zeros(model.n), np.linalg.inv(model.Qprime))


def exact_noise(model: LQRModel, spec: ScoreSpec | None = None) -> GaussianState:
    """p^{Q'}(T, .), the exact starting law of the backward SDE."""
    return density_params(model, model.Qprime, model.grid.T, spec)


def error_bound_sweep(model: LQRModel, Ms, noises, seed: int = 0) -> list[ErrorBoundRecord]:
    """Distances between Y_T and the data law over the grid of (M, noise) pairs.

    ``Ms`` and ``noises`` may be sequences of arrays/GaussianStates or of
    (label, value) tuples; rows are ordered by M then noise.
    """
    data = data_distribution(model)
    reference = exact_noise(model)
    rows = []
    for m_label, M in _labelled(Ms):
        spec = score_spec(model, M)
        m_norm = float(np.linalg.norm(spec.M - model.Qprime, ord=2))
        for n_label, noise in _labelled(noises):
            terminal = terminal_state(model, spec, noise)
            rows.append(ErrorBoundRecord(
                m_norm=m_norm,
                noise_w2=w2_gaussians(noise, reference),
                terminal_w2=w2_gaussians(terminal, data),
                terminal_tv_bound=tv_gaussians(terminal, data).pinsker_upper_bound,
                grid_n=model.grid.N,
                seed=seed,
                m_label=m_label,
                noise_label=n_label,
            ))
    return rows


def _labelled(items):
    out = []
    for i, item in enumerate(items):
        if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str):
            out.append(item)
        else:
            out.append((str(i), item))
    return out

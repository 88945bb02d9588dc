"""Domain types for finite-horizon entropy-regularized LQRs.

Every time-dependent coefficient lives on one shared uniform ``TimeGrid``
and is stored as a ``MatrixPath``; values between nodes are obtained by
piecewise-linear interpolation.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ShapeError, ValidationFailed

SYM_TOL = 1e-12
PSD_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def symmetrize(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return (M + M^T)/2, warning when M was asymmetric beyond 1e-12."""
    M = np.asarray(M, dtype=float)
    dev = np.max(np.abs(M - np.swapaxes(M, -1, -2))) if M.size else 0.0
    if dev > SYM_TOL:
        warnings.warn(f"{name} is asymmetric (max deviation {dev:.3g}); symmetrized",
                      stacklevel=3)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*T/N, j = 0..N, on [0, T]."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ShapeError(f"horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 2:
            raise ShapeError(f"grid needs N >= 2 steps, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        return _frozen(np.arange(self.N + 1) * self.T / self.N)

    def locate(self, t: float) -> tuple[int, float]:
        """Return (j, w) with t = (1-w) t_j + w t_{j+1}, w in [0, 1)."""
        if t < 0.0 or t > self.T:
            if np.isclose(t, 0.0, atol=1e-14) or np.isclose(t, self.T, rtol=1e-14):
                t = min(max(t, 0.0), self.T)
            else:
                raise ValueError(f"t={t} outside [0, {self.T}]")
        j = int(np.searchsorted(self.nodes, t, side="right")) - 1
        j = min(max(j, 0), self.N)
        if j == self.N or self.nodes[j] == t:
            return j, 0.0
        return j, (t - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j])


@dataclass(frozen=True, eq=False)
class MatrixPath:
    """Matrix-valued function of time, one matrix per grid node."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != self.grid.N + 1:
            raise ShapeError(
                f"path needs shape (N+1, rows, cols) = ({self.grid.N + 1}, ., .), got {v.shape}")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant(cls, grid: TimeGrid, M) -> "MatrixPath":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(grid, np.broadcast_to(M, (grid.N + 1,) + M.shape))

    @classmethod
    def from_function(cls, grid: TimeGrid, f: Callable[[float], np.ndarray]) -> "MatrixPath":
        return cls(grid, np.stack([np.atleast_2d(f(t)) for t in grid.nodes]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def __call__(self, t: float) -> np.ndarray:
        j, w = self.grid.locate(t)
        if w == 0.0:
            return self.values[j]
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def __len__(self):
        return self.values.shape[0]

    @cached_property
    def half_grid(self) -> np.ndarray:
        """Values at t_0, t_{1/2}, t_1, ..., t_N (length 2N+1) for RK4 stages."""
        v = self.values
        out = np.empty((2 * v.shape[0] - 1,) + v.shape[1:])
        out[0::2] = v
        out[1::2] = 0.5 * (v[:-1] + v[1:])
        out.setflags(write=False)
        return out

    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    def sup_norm(self) -> float:
        """max_j ||values[j]||_2."""
        return float(np.max(np.linalg.norm(self.values, ord=2, axis=(1, 2))))

    def resample(self, grid: TimeGrid) -> "MatrixPath":
        if grid == self.grid:
            return self
        if grid.T != self.grid.T:
            raise ShapeError("cannot resample onto a grid with a different horizon")
        if self.is_constant():
            return MatrixPath.constant(grid, self.values[0])
        return MatrixPath.from_function(grid, self)

    def with_values(self, values) -> "MatrixPath":
        return MatrixPath(self.grid, values)


def l2_squared(path: MatrixPath) -> float:
    """Trapezoidal approximation of int_0^T ||M_t||_2^2 dt."""
    norms = np.linalg.norm(path.values, ord=2, axis=(1, 2)) ** 2
    return float(np.trapezoid(norms, path.grid.nodes))


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    """Mean and covariance of the initial state distribution."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float)).ravel()
        S = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if S.shape != (m.size, m.size):
            raise ShapeError(f"initial covariance must be {m.size}x{m.size}, got {S.shape}")
        object.__setattr__(self, "mean", _frozen(m))
        object.__setattr__(self, "cov", _frozen(symmetrize(S, "initial covariance")))

    @property
    def n(self) -> int:
        return self.mean.size


def second_moment_initial(init: InitialDistribution) -> np.ndarray:
    """E[x0 x0^T] = S0 + m0 m0^T."""
    y0 = init.cov + np.outer(init.mean, init.mean)
    return 0.5 * (y0 + y0.T)


@dataclass(frozen=True, eq=False)
class LQRModel:
    """Coefficients (A, B, Q, R, sigma, Q') plus tau, initial law and R-floor delta.

    Q, R and Q' are symmetrized on construction.
    """

    A: MatrixPath
    B: MatrixPath
    Q: MatrixPath
    R: MatrixPath
    sigma: MatrixPath
    Qprime: np.ndarray
    tau: float
    init: InitialDistribution
    delta: float

    def __post_init__(self):
        grid = self.A.grid
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ShapeError(f"A must be square, got {self.A.shape}")
        k = self.B.shape[1]
        expected = {
            "B": (self.B, (n, k)),
            "Q": (self.Q, (n, n)),
            "R": (self.R, (k, k)),
            "sigma": (self.sigma, (n, self.sigma.shape[1])),
        }
        for name, (path, shape) in expected.items():
            if path.grid != grid:
                raise ShapeError(f"{name} lives on a different time grid than A")
            if path.shape != shape:
                raise ShapeError(f"{name} must be {shape[0]}x{shape[1]}, got {path.shape}")
        Qp = np.atleast_2d(np.asarray(self.Qprime, dtype=float))
        if Qp.shape != (n, n):
            raise ShapeError(f"Qprime must be {n}x{n}, got {Qp.shape}")
        if self.init.n != n:
            raise ShapeError(f"initial mean has dimension {self.init.n}, state has {n}")
        object.__setattr__(self, "Q", self.Q.with_values(symmetrize(self.Q.values, "Q")))
        object.__setattr__(self, "R", self.R.with_values(symmetrize(self.R.values, "R")))
        object.__setattr__(self, "Qprime", _frozen(symmetrize(Qp, "Qprime")))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def grid(self) -> TimeGrid:
        return self.A.grid

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.sigma.shape[1]

    def replace(self, **changes) -> "LQRModel":
        return dataclasses.replace(self, **changes)

    def regrid(self, N: int) -> "LQRModel":
        """Same model on a grid with N steps (interpolating non-constant paths)."""
        grid = TimeGrid(self.grid.T, N)
        return self.replace(**{name: getattr(self, name).resample(grid)
                               for name in ("A", "B", "Q", "R", "sigma")})

    @classmethod
    def constant(cls, grid: TimeGrid, A, B, Q, R, sigma, Qprime, tau, init, delta) -> "LQRModel":
        """Build a model whose coefficients do not depend on time."""
        c = lambda M: MatrixPath.constant(grid, M)
        return cls(c(A), c(B), c(Q), c(R), c(sigma), np.atleast_2d(Qprime), tau, init, delta)


@dataclass(frozen=True, eq=False)
class GaussianPolicy:
    """pi_t(.|x) = N(-K_t x, Sigma_t) with Sigma_t >= sigma_floor * I."""

    K: MatrixPath
    Sigma: MatrixPath
    sigma_floor: float

    def __post_init__(self):
        k = self.K.shape[0]
        if self.Sigma.shape != (k, k):
            raise ShapeError(f"Sigma must be {k}x{k}, got {self.Sigma.shape}")
        if self.Sigma.grid != self.K.grid:
            raise ShapeError("K and Sigma live on different grids")
        object.__setattr__(self, "Sigma",
                           self.Sigma.with_values(symmetrize(self.Sigma.values, "Sigma")))

    def violations(self) -> list[str]:
        out = []
        if not self.sigma_floor > 0:
            out.append(f"sigma floor must be positive, got {self.sigma_floor}")
        k = self.K.shape[0]
        for j, S in enumerate(self.Sigma.values):
            lam = min_eig(S - self.sigma_floor * np.eye(k))
            if lam < -PSD_TOL:
                out.append(f"Sigma_t - floor*I >= 0 fails at node {j} (min eig {lam:.3g})")
        return out


@dataclass(frozen=True)
class Violation:
    """One failed admissibility condition."""

    condition: str
    assumption: str
    node: Optional[int] = None
    evidence: Optional[float] = None

    def __str__(self):
        where = "" if self.node is None else f" at node {self.node}"
        ev = "" if self.evidence is None else f" (min eigenvalue {self.evidence:.6g})"
        return f"{self.assumption}: {self.condition} violated{where}{ev}"


REGULARITY = "regularity assumption"
INITIAL_MOMENT = "initial second-moment assumption"


def validate_model(model: LQRModel) -> list[Violation]:
    """Check every admissibility condition; an empty list means admissible.

    Shape problems are caught when the model is constructed and raise
    ``ShapeError``; this function only reports assumption violations.
    """
    report: list[Violation] = []
    if not model.tau > 0:
        report.append(Violation("tau > 0", REGULARITY, evidence=model.tau))
    if not model.delta > 0:
        report.append(Violation("delta > 0", REGULARITY, evidence=model.delta))
    for name, path in (("A", model.A), ("B", model.B), ("Q", model.Q),
                       ("R", model.R), ("sigma", model.sigma)):
        if not np.all(np.isfinite(path.values)):
            report.append(Violation(f"{name} finite", REGULARITY))
    Q_eigs = np.linalg.eigvalsh(model.Q.values)[:, 0]
    for j in np.flatnonzero(Q_eigs < -PSD_TOL):
        report.append(Violation("Q_t >= 0", REGULARITY, int(j), float(Q_eigs[j])))
    lam = min_eig(model.Qprime)
    if lam < -PSD_TOL:
        report.append(Violation("Q' >= 0", REGULARITY, None, lam))
    shifted = model.R.values - model.delta * np.eye(model.k)
    R_eigs = np.linalg.eigvalsh(shifted)[:, 0]
    for j in np.flatnonzero(R_eigs < -PSD_TOL):
        report.append(Violation("R_t - delta*I >= 0", REGULARITY, int(j), float(R_eigs[j])))
    lam = min_eig(model.init.cov)
    if lam < -PSD_TOL:
        report.append(Violation("initial covariance >= 0", REGULARITY, None, lam))
    lam = min_eig(second_moment_initial(model.init))
    if not lam > PSD_TOL:
        report.append(Violation("E[x0 x0^T] > 0", INITIAL_MOMENT, None, lam))
    return report


def require_valid(model: LQRModel) -> LQRModel:
    report = validate_model(model)
    if report:
        raise ValidationFailed(report)
    return model

"""Policy transfer: warm-start IPO on a perturbed model from the source optimum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import LQRModel, MatrixPath, min_eig, require_valid
from .errors import DiagnosticWindowError, InfeasiblePerturbationError
from .ipo import IPOTrace, rate_diagnostics, run_ipo
from .policy import optimal_policy
from .riccati import input_distance, solve_optimal_riccati
from .rng import replicate_seed, stream

SLOTS = ("A", "Q", "B", "R", "Qprime")
SYMMETRIC = {"Q", "R", "Qprime"}
DIRECTION_STREAM = 3
EXPONENT_TARGET = 1.3


@dataclass(frozen=True)
class PerturbationSpec:
    """Relative perturbation of selected model components.

    With ``directions=None`` each targeted slot gets a seeded Gaussian
    direction; otherwise ``directions`` maps slot names to fixed matrices
    (normalized the same way).
    """

    rho: float
    targets: tuple = ("A", "Qprime")
    seed: int = 0
    directions: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.rho >= 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if not self.targets:
            raise ValueError("targets must be nonempty")
        unknown = set(self.targets) - set(SLOTS)
        if unknown:
            raise ValueError(f"unknown perturbation targets {sorted(unknown)}")

    def with_rho(self, rho: float) -> "PerturbationSpec":
        return PerturbationSpec(rho, self.targets, self.seed, self.directions)

    def with_seed(self, seed: int) -> "PerturbationSpec":
        return PerturbationSpec(self.rho, self.targets, seed, self.directions)


def _direction(spec: PerturbationSpec, slot: str, shape) -> np.ndarray:
    if spec.directions is not None and slot in spec.directions:
        D = np.array(spec.directions[slot], dtype=float).reshape(shape)
    else:
        D = stream(spec.seed, DIRECTION_STREAM, SLOTS.index(slot)).standard_normal(shape)
    if slot in SYMMETRIC:
        D = 0.5 * (D + D.T)
    norm = np.linalg.norm(D, ord=2)
    if norm == 0:
        raise ValueError(f"perturbation direction for {slot} is zero")
    return D / norm


def _clip_psd(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    if w[0] >= 0:
        return M
    return 0.5 * ((V * np.clip(w, 0.0, None)) @ V.T + ((V * np.clip(w, 0.0, None)) @ V.T).T)


def perturb_model(model: LQRModel, spec: PerturbationSpec) -> LQRModel:
    """Replace each targeted X by X + rho * ||X|| * D.

    ||X|| is the sup over nodes of the spectral norm and D is one unit-norm
    direction shared by every node.  Q, R and Q' are then clipped back to the
    PSD cone; if R ends up below delta the perturbation is infeasible.
    """
    require_valid(model)
    if spec.rho == 0:
        return model
    changes = {}
    for slot in spec.targets:
        if slot == "Qprime":
            X = model.Qprime
            D = _direction(spec, slot, X.shape)
            changes[slot] = _clip_psd(X + spec.rho * np.linalg.norm(X, ord=2) * D)
            continue
        path = getattr(model, slot)
        D = _direction(spec, slot, path.shape)
        values = path.values + spec.rho * path.sup_norm() * D
        if slot in SYMMETRIC:
            values = np.stack([_clip_psd(V) for V in values])
        if slot == "R":
            low = min(min_eig(V) for V in values)
            if low < model.delta:
                raise InfeasiblePerturbationError(
                    f"perturbed R has eigenvalue {low:.6g} below delta={model.delta:g}; shrink rho")
        changes[slot] = path.with_values(values)
    return require_valid(model.replace(**changes))


def _exponent(trace: IPOTrace) -> float:
    try:
        return rate_diagnostics(trace).superlinear_exponent
    except DiagnosticWindowError:
        return math.nan


@dataclass
class TransferReport:
    perturb_size: float
    warm_trace: IPOTrace
    cold_trace: IPOTrace
    target_opt_cost: float

    @property
    def warm_iters(self) -> int:
        return self.warm_trace.iterations

    @property
    def cold_iters(self) -> int:
        return self.cold_trace.iterations

    @property
    def warm_exponent(self) -> float:
        return _exponent(self.warm_trace)

    @property
    def cold_exponent(self) -> float:
        return _exponent(self.cold_trace)


def transfer_experiment(source: LQRModel, spec: PerturbationSpec, tol: float = 1e-10,
                        max_iter: int = 50, source_gain: Optional[MatrixPath] = None
                        ) -> TransferReport:
    """Run IPO on the perturbed target from the source optimum and from zero."""
    require_valid(source)
    if source_gain is None:
        source_gain = optimal_policy(source, solve_optimal_riccati(source)).K
    target = perturb_model(source, spec)
    warm = run_ipo(target, source_gain, tol, max_iter)
    cold = run_ipo(target, MatrixPath.constant(source.grid, np.zeros((source.k, source.n))),
                   tol, max_iter)
    return TransferReport(input_distance(source, target), warm, cold, warm.optimal_cost)


@dataclass(frozen=True)
class SweepRow:
    """One replicate of a sweep; ``report`` is None when the perturbation was infeasible."""

    rho: float
    seed: int
    report: Optional[TransferReport]


@dataclass(frozen=True)
class SweepStats:
    rho: float
    feasible: int
    infeasible: int
    mean_warm_iters: Optional[float]
    max_warm_iters: Optional[int]
    mean_cold_iters: Optional[float]
    max_cold_iters: Optional[int]
    superlinear_fraction: Optional[float]
    mean_perturb_size: Optional[float]


def sweep_rows(source: LQRModel, rhos, template: PerturbationSpec, tol: float = 1e-10,
               max_iter: int = 50, replicates: int = 20) -> list[SweepRow]:
    """Run ``transfer_experiment`` for every (rho, replicate), ordered by rho then replicate.

    Replicate r uses seed derived from (template.seed, r), so the same
    replicate shares its direction across every rho.
    """
    rhos = [float(r) for r in rhos]
    if not rhos:
        raise ValueError("rhos must be nonempty")
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rhos must be strictly ascending")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    source_gain = optimal_policy(source, solve_optimal_riccati(source)).K
    rows = []
    for rho in rhos:
        for r in range(replicates):
            seed = replicate_seed(template.seed, r)
            spec = template.with_rho(rho).with_seed(seed)
            try:
                report = transfer_experiment(source, spec, tol, max_iter, source_gain)
            except InfeasiblePerturbationError:
                report = None
            rows.append(SweepRow(rho, seed, report))
    return rows


def aggregate(rows: list[SweepRow]) -> list[SweepStats]:
    """Per-rho summary of a sweep; statistics are None when no replicate was feasible."""
    stats = []
    for rho in sorted({row.rho for row in rows}):
        reports = [row.report for row in rows if row.rho == rho and row.report is not None]
        bad = sum(1 for row in rows if row.rho == rho and row.report is None)
        if not reports:
            stats.append(SweepStats(rho, 0, bad, None, None, None, None, None, None))
            continue
        warm = [rep.warm_iters for rep in reports]
        cold = [rep.cold_iters for rep in reports]
        fast = [rep.warm_exponent >= EXPONENT_TARGET for rep in reports]
        stats.append(SweepStats(
            rho, len(reports), bad, float(np.mean(warm)), max(warm), float(np.mean(cold)),
            max(cold), float(np.mean(fast)), float(np.mean([rep.perturb_size for rep in reports]))))
    return stats


def epsilon_sweep(source: LQRModel, rhos, template: PerturbationSpec, tol: float = 1e-10,
                  max_iter: int = 50, replicates: int = 20) -> list[SweepStats]:
    """Aggregated warm/cold statistics per rho; see ``sweep_rows``."""
    return aggregate(sweep_rows(source, rhos, template, tol, max_iter, replicates))

"""Command-line experiment runner.

Exit codes: 0 success, 2 usage or config error, 3 validation failure,
4 numerical failure.  Every command is deterministic given its config,
flags and seed.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .core import MatrixPath, min_eig, require_valid
from .errors import (
    ConfigError, ContractError, DiagnosticWindowError, NumericalError, ShapeError,
    ValidationFailed,
)
from .io import (
    DIFFUSION_HEADER, TRACE_HEADER, TRANSFER_HEADER, diffusion_rows, fmt, read_path,
    trace_rows, transfer_rows, write_csv, write_path,
)

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4
MC_INCONCLUSIVE_BELOW = 10_000


class UsageError(Exception):
    pass


def _floats(text: str, flag: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got '{text}'") from None
    if not values or any(not math.isfinite(v) for v in values):
        raise UsageError(f"{flag}: expected comma-separated finite numbers, got '{text}'")
    return values


def _load(args):
    cfg = load_config(args.config)
    require_valid(cfg.model)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(out: Path, name: str, lines: list[str]):
    text = "\n".join(lines) + "\n"
    (out / name).write_text(text)
    sys.stdout.write(text)


def cmd_solve(args) -> int:
    from .policy import cost_from_solution, optimal_policy
    from .riccati import solve_optimal_riccati, solve_policy_riccati

    cfg = _load(args)
    model = cfg.model
    sol = solve_optimal_riccati(model)
    pol = optimal_policy(model, sol)
    c_star = cost_from_solution(model, solve_policy_riccati(model, pol))
    out = _out_dir(args)
    write_path(out / "P.csv", sol.P)
    write_path(out / "r.csv", sol.r)
    write_path(out / "K.csv", pol.K)
    write_path(out / "Sigma.csv", pol.Sigma)
    p_min = min(min_eig(P) for P in sol.P.values)
    s_min = min(min_eig(S) for S in pol.Sigma.values)
    _emit(out, "summary.txt", [
        f"config: {cfg.name}",
        f"nodes: {model.grid.N + 1}",
        f"optimal cost: {fmt(c_star)}",
        f"P(0): {fmt_matrix(sol.P0)}",
        f"r(0): {fmt(sol.r0)}",
        f"min eigenvalue of P over nodes: {fmt(p_min)} ({'PSD' if p_min >= -1e-12 else 'NOT PSD'})",
        f"min eigenvalue of Sigma* over nodes: {fmt(s_min)}",
    ])
    return 0


def fmt_matrix(M) -> str:
    M = np.atleast_2d(M)
    return "[" + "; ".join(" ".join(fmt(v) for v in row) for row in M) + "]"


def _initial_gain(args, model):
    from .policy import optimal_policy

    if args.k0 == "zero":
        return MatrixPath.constant(model.grid, np.zeros((model.k, model.n)))
    if args.k0 == "optimal":
        return optimal_policy(model).K
    if args.k0_path is None:
        raise UsageError("--k0 file needs --k0-path")
    try:
        times, flat = read_path(args.k0_path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read --k0-path: {exc}") from None
    size = model.k * model.n
    if flat.shape[1] != size:
        raise UsageError(f"--k0-path has {flat.shape[1]} entries per row, gain needs {size}")
    if len(flat) == 1:
        return MatrixPath.constant(model.grid, flat[0].reshape(model.k, model.n))
    if len(flat) != model.grid.N + 1:
        raise UsageError(f"--k0-path needs 1 or N+1 = {model.grid.N + 1} rows, got {len(flat)}")
    return MatrixPath(model.grid, flat.reshape(-1, model.k, model.n))


def cmd_ipo(args) -> int:
    from .ipo import rate_diagnostics, run_ipo

    if args.max_iter < 1:
        raise UsageError("--max-iter must be at least 1")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    cfg = _load(args)
    model = cfg.model
    trace = run_ipo(model, _initial_gain(args, model), args.tol, args.max_iter)
    out = _out_dir(args)
    write_csv(out / "trace.csv", TRACE_HEADER, trace_rows(trace))
    lines = [
        f"config: {cfg.name}",
        f"k0: {args.k0}",
        f"iterations: {trace.iterations}",
        f"stop reason: {trace.stop_reason.value}",
        f"optimal cost: {fmt(trace.optimal_cost)}",
        f"final gap: {fmt(trace.gaps[-1])}",
    ]
    try:
        rates = rate_diagnostics(trace)
        lines += [f"max linear ratio: {fmt(max(rates.linear_ratios))}",
                  f"superlinear exponent: {fmt(rates.superlinear_exponent)}"]
    except DiagnosticWindowError as exc:
        lines += [f"rate diagnostics: unavailable ({exc})"]
    _emit(out, "summary.txt", lines)
    return 0


def cmd_transfer(args) -> int:
    from .transfer import SLOTS, PerturbationSpec, aggregate, sweep_rows

    rhos = _floats(args.rhos, "--rhos")
    if any(r < 0 for r in rhos) or any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise UsageError("--rhos must be nonnegative and strictly ascending")
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
    if not targets or any(t not in SLOTS for t in targets):
        raise UsageError(f"--targets must be a subset of {','.join(SLOTS)}")
    if args.max_iter < 1:
        raise UsageError("--max-iter must be at least 1")
    cfg = _load(args)
    rows = sweep_rows(cfg.model, rhos, PerturbationSpec(0.0, targets, args.seed),
                      args.tol, args.max_iter, args.replicates)
    out = _out_dir(args)
    write_csv(out / "transfer.csv", TRANSFER_HEADER, transfer_rows(rows))
    lines = [f"config: {cfg.name}", f"targets: {','.join(targets)}",
             f"replicates: {args.replicates}", f"seed: {args.seed}"]
    for s in aggregate(rows):
        if s.feasible == 0:
            lines.append(f"rho={fmt(s.rho)}: all {s.infeasible} perturbations infeasible")
            continue
        lines.append(
            f"rho={fmt(s.rho)}: feasible={s.feasible} infeasible={s.infeasible} "
            f"warm mean={fmt(s.mean_warm_iters)} max={s.max_warm_iters} "
            f"cold mean={fmt(s.mean_cold_iters)} max={s.max_cold_iters} "
            f"superlinear fraction={fmt(s.superlinear_fraction)} "
            f"mean perturb size={fmt(s.mean_perturb_size)}")
    _emit(out, "summary.txt", lines)
    return 0


def cmd_diffusion(args) -> int:
    from .diffusion import (
        GaussianState, check_assumption5, error_bound_sweep, exact_noise, score_spec,
    )

    scales = _floats(args.m_scales, "--m-scales")
    inflations = _floats(args.noise_inflation, "--noise-inflation")
    if any(s <= 0 for s in scales) or any(f <= 0 for f in inflations):
        raise UsageError("--m-scales and --noise-inflation must be positive")
    cfg = _load(args)
    model = cfg.model
    report = check_assumption5(model)
    if not report.passed:
        raise ValidationFailed(report.failures())
    spec = score_spec(model, model.Qprime)
    base = exact_noise(model, spec)
    Ms = [(repr(s), s * model.Qprime) for s in scales]
    noises = [(repr(f), GaussianState(base.mean, f * base.covariance)) for f in inflations]
    records = error_bound_sweep(model, Ms, noises, seed=args.seed)
    out = _out_dir(args)
    write_csv(out / "diffusion.csv", DIFFUSION_HEADER, diffusion_rows(records))
    lines = [f"config: {cfg.name}", f"rows: {len(records)}"]
    lines += [f"m-scale={r.m_label} noise-inflation={r.noise_label}: terminal W2={fmt(r.terminal_w2)}"
              for r in records]
    _emit(out, "summary.txt", lines)
    return 0


def _verify_checks(cfg, args):
    """Yield (name, status, detail) for each oracle check."""
    from .diffusion import check_assumption5, density_params, forward_moments
    from .oracle import analytic_scalar_riccati, mc_cost, refinement_order
    from .policy import cost, cost_difference_identity_check, optimal_policy, with_gain
    from .riccati import solve_optimal_riccati

    model = cfg.model
    sol = solve_optimal_riccati(model)
    star = optimal_policy(model, sol)
    scalar = model.n == 1 and model.k == 1 and all(
        getattr(model, s).is_constant() for s in ("A", "B", "Q", "R"))

    if scalar:
        c = lambda s: float(getattr(model, s).values[0, 0, 0])
        exact = np.array([analytic_scalar_riccati(c("A"), c("B"), c("Q"), c("R"),
                                                  float(model.Qprime[0, 0]), model.grid.T, t)
                          for t in model.grid.nodes])
        err = float(np.max(np.abs(sol.P.values[:, 0, 0] - exact)) / max(1.0, np.max(np.abs(exact))))
        yield "analytic Riccati", "pass" if err <= 1e-6 else "fail", f"relative sup error {fmt(err)}"
    else:
        yield "analytic Riccati", "skipped", "model is not a constant scalar"

    rows = refinement_order(model, "optimal", [250, 500, 1000] if scalar else [250, 500, 1000, 2000])
    orders = [r.order for r in rows if not math.isnan(r.order)]
    tiny = all(r.error <= 1e-11 for r in rows)
    ok = tiny or (orders and min(orders) >= 3.5)
    detail = ", ".join(f"N={r.N} error={fmt(r.error)}" for r in rows)
    yield "refinement order", "pass" if ok else "fail", detail

    mc_model = model.regrid(args.mc_steps) if model.grid.N > args.mc_steps else model
    mc_star = optimal_policy(mc_model)
    est = mc_cost(mc_model, mc_star, args.paths, args.seed)
    truth = cost(mc_model, mc_star)
    z = abs(est.estimate - truth) / est.std_error if est.std_error > 0 else math.inf
    status = "pass" if z <= 3 else ("inconclusive" if args.paths < MC_INCONCLUSIVE_BELOW else "fail")
    yield "Monte Carlo cost", status, (f"estimate {fmt(est.estimate)} +- {fmt(est.std_error)}, "
                                       f"closed form {fmt(truth)}, paths {args.paths}")

    half = with_gain(star, star.K.with_values(0.5 * star.K.values))
    diff = cost_difference_identity_check(model, star, half)
    rel = diff.abs_gap / max(1.0, abs(diff.lhs))
    yield "cost-difference identity", "pass" if rel <= 1e-5 else "fail", f"relative gap {fmt(rel)}"

    if check_assumption5(model).passed:
        S = forward_moments(model, np.linalg.inv(model.Qprime))
        gap = max(float(np.max(np.abs(S.values[j] - density_params(model, model.Qprime, t).covariance)))
                  for j, t in enumerate(model.grid.nodes))
        yield "density consistency", "pass" if gap <= 1e-6 else "fail", f"sup gap {fmt(gap)}"
    else:
        yield "density consistency", "skipped", "model is outside the diffusion class"


def cmd_verify(args) -> int:
    if args.paths < 100:
        raise UsageError("--paths must be at least 100")
    cfg = _load(args)
    failed = False
    lines = [f"config: {cfg.name}"]
    for name, status, detail in _verify_checks(cfg, args):
        failed |= status == "fail"
        lines.append(f"{status.upper():13s}{name}: {detail}")
    lines.append("result: " + ("FAIL" if failed else "PASS"))
    sys.stdout.write("\n".join(lines) + "\n")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entlqr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, func):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config path or builtin:<name>")
        p.set_defaults(func=func)
        return p

    p = command("solve", "solve the optimal Riccati equation and write P, r, K*, Sigma*", cmd_solve)
    p.add_argument("--out", default=".", help="output directory")

    p = command("ipo", "run iterative policy optimization and write its trace", cmd_ipo)
    p.add_argument("--k0", choices=("zero", "file", "optimal"), default="zero")
    p.add_argument("--k0-path", help="gain CSV for --k0 file (1 or N+1 rows)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out", default=".")

    p = command("transfer", "warm- versus cold-start IPO over a perturbation sweep", cmd_transfer)
    p.add_argument("--rhos", default="0,0.01,0.05")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", default="A,Qprime")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out", default=".")

    p = command("diffusion", "terminal-error sweep of the induced diffusion model", cmd_diffusion)
    p.add_argument("--m-scales", default="1.0,1.1,1.5,2.0")
    p.add_argument("--noise-inflation", default="1.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    p = command("verify", "run the oracle battery and print pass/fail per check", cmd_verify)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-steps", type=int, default=500,
                   help="regrid to this many steps for Monte Carlo if the model is finer")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ShapeError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

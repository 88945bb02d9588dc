import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entlqr.core import GaussianPolicy, MatrixPath
from entlqr.errors import BlowUpError
from entlqr.oracle import analytic_scalar_riccati, mc_cost, refinement_order
from entlqr.policy import cost, optimal_policy
from entlqr.riccati import solve_policy_riccati

from conftest import scalar_model


def _const(model, M):
    return MatrixPath.constant(model.grid, np.atleast_2d(M))


@pytest.mark.parametrize("args,expected", [
    ((0, 1, 0, 1, 1, 1, 0), 0.5),
    ((0, 0, 1, 1, 0, 1, 0), 1.0),
    ((0.4, 1.2, 0, 0.7, 0, 1.5, 0.3), 0.0),
])
def test_analytic_examples(args, expected):
    assert analytic_scalar_riccati(*args) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(0, 2), q=st.floats(0, 2), qp=st.floats(0, 2),
       r=st.floats(0.5, 2), T=st.floats(0.5, 2), frac=st.floats(0, 1))
def test_analytic_satisfies_the_ode(a, b, q, qp, r, T, frac):
    f = lambda s: analytic_scalar_riccati(a, b, q, r, qp, T, s)
    assert f(T) == pytest.approx(qp, abs=1e-14)
    h = 1e-4 * T
    t = min(max(frac * T, h), T - h)
    dP = (f(t + h) - f(t - h)) / (2 * h)
    P = f(t)
    assert P >= -1e-14
    assert abs(dP + 2 * a * P + q - b * b * P * P / r) <= 1e-5 * (1 + abs(P)) ** 2


def test_analytic_blow_up_is_reported():
    # negative terminal weight makes 1 - (T - t) vanish inside the horizon
    with pytest.raises(BlowUpError):
        analytic_scalar_riccati(0, 1, 0, 1, -1, 2, 0)


def test_analytic_rejects_bad_arguments():
    with pytest.raises(ValueError):
        analytic_scalar_riccati(0, 1, 0, 0, 1, 1, 0)
    with pytest.raises(ValueError):
        analytic_scalar_riccati(0, 1, 0, 1, 1, 1, 1.5)


def test_mc_matches_scalar_benchmark_cost(scalar):
    m = scalar.regrid(200)
    star = optimal_policy(m)
    est = mc_cost(m, star, paths=100_000, seed=0)
    assert est.agrees_with(cost(m, star))
    assert est.paths == 100_000 and est.std_error > 0


def test_mc_entropy_only_cost():
    m = scalar_model(b=1.0, q=0.0, qprime=0.0, s=0.0, mean=0.0, var=1.0, tau=0.5, N=100)
    pol = GaussianPolicy(_const(m, 0.0), _const(m, 1e-4), 1e-6)
    exact = solve_policy_riccati(m, pol).r0
    est = mc_cost(m, pol, paths=2000, seed=1)
    assert abs(est.estimate - exact) <= 3 * est.std_error + 1e-12


def test_mc_is_deterministic_and_seed_dependent(double_integrator):
    m = double_integrator.regrid(50)
    star = optimal_policy(m)
    a, b = mc_cost(m, star, 500, seed=9), mc_cost(m, star, 500, seed=9)
    assert a == b
    assert mc_cost(m, star, 500, seed=10).estimate != a.estimate


def test_mc_rejects_too_few_paths(scalar):
    with pytest.raises(ValueError):
        mc_cost(scalar, optimal_policy(scalar), paths=99)


def test_refinement_order_on_scalar_benchmark():
    rows = refinement_order(scalar_model(N=250), "optimal", [250, 500, 1000])
    assert [r.N for r in rows] == [250, 500, 1000]
    assert math.isnan(rows[0].order)
    assert min(r.order for r in rows[1:]) >= 3.7


def test_refinement_on_zero_model_is_exact():
    m = scalar_model(b=0.0, q=0.0, qprime=0.0, s=0.0, tau=1 / math.pi, N=10)
    rows = refinement_order(m, "optimal", [10, 20, 40])
    assert all(r.error == 0.0 for r in rows)


def test_refinement_on_pure_diffusion_moment_is_exact():
    m = scalar_model(a=0.0, s=0.6, N=20)
    rows = refinement_order(m, "moment", [20, 40, 80])
    # the finest grid is the reference and gets no row
    assert [r.N for r in rows] == [20, 40]
    assert all(r.error <= 1e-13 for r in rows)


@pytest.mark.parametrize("solver", ["optimal", "policy", "moment", "forward"])
def test_refinement_on_double_integrator_is_high_order(double_integrator, solver):
    rows = refinement_order(double_integrator.regrid(25), solver, [25, 50, 100, 200])
    errors = [r.error for r in rows]
    assert all(b <= a or b <= 1e-11 for a, b in zip(errors, errors[1:]))
    # orders are meaningless once the error hits round-off
    for r, prev in zip(rows[1:], rows):
        if prev.error > 1e-11:
            assert r.order >= 3.5


@pytest.mark.parametrize("Ns", [[250, 500], [500, 250, 1000], [250, 600, 1000], [250]])
def test_refinement_argument_validation(Ns):
    with pytest.raises(ValueError):
        refinement_order(scalar_model(N=250), "optimal", Ns)


def test_unknown_solver():
    with pytest.raises(ValueError):
        refinement_order(scalar_model(N=10), "euler", [10, 20, 40])

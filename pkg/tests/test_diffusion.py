import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from entlqr.core import InitialDistribution, LQRModel, MatrixPath, TimeGrid
from entlqr.diffusion import (
    GaussianState, backward_moments, check_assumption5, data_distribution, density_params,
    error_bound_sweep, exact_noise, forward_moments, kl_gaussians, log_density, sample_backward,
    score, score_spec, terminal_state, tv_gaussians, w2_gaussians,
)
from entlqr.errors import ContractError, DegenerateDensityError

from conftest import scalar_model

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def diffusion_model(n=2, N=2000, seed=0, T=1.0):
    """An n-dimensional member of the diffusion class: B = sigma, R = I, Q = 0, tau = 2."""
    rng = np.random.default_rng(seed)
    A = 0.4 * rng.standard_normal((n, n))
    A += (n * HALF_LOG_2PI - np.trace(A)) / n * np.eye(n)
    S = 0.5 * rng.standard_normal((n, n)) + np.eye(n)
    G = rng.standard_normal((n, n))
    return LQRModel.constant(TimeGrid(T, N), A, S, np.zeros((n, n)), np.eye(n), S,
                             G @ G.T / n + 0.5 * np.eye(n), 2.0,
                             InitialDistribution(np.zeros(n), np.eye(n)), 0.5)


def test_scalar_benchmark_is_in_the_class(diffusion_scalar):
    assert diffusion_scalar.A.values[0, 0, 0] == pytest.approx(HALF_LOG_2PI, abs=1e-15)
    assert check_assumption5(diffusion_scalar).passed


def test_nonzero_Q_fails(diffusion_scalar):
    m = diffusion_scalar.replace(Q=MatrixPath.constant(diffusion_scalar.grid, np.eye(1)))
    report = check_assumption5(m)
    assert not report.passed
    assert report.failures() == ["Q = 0 fails"]


def test_noise_mismatch_fails(diffusion_scalar):
    m = diffusion_scalar.replace(sigma=MatrixPath.constant(diffusion_scalar.grid, [[2.0]]))
    report = check_assumption5(m)
    assert report.noise_residual[0] == pytest.approx(3.0)
    assert any("sigma sigma^T" in f for f in report.failures())


def test_density_at_time_zero_is_data_law(diffusion_scalar):
    for M, var in ((np.eye(1), 1.0), (2 * np.eye(1), 0.5)):
        np.testing.assert_allclose(density_params(diffusion_scalar, M, 0.0).covariance, [[var]])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_forward_covariance_is_inverse_precision(n, diffusion_scalar):
    m = diffusion_scalar if n == 1 else diffusion_model(n)
    assert check_assumption5(m).passed
    spec = score_spec(m, m.Qprime)
    S = forward_moments(m, np.linalg.inv(m.Qprime))
    gap = max(np.max(np.abs(S.values[j] - np.linalg.inv(spec.P.values[m.grid.N - j])))
              for j in range(m.grid.N + 1))
    assert gap <= 1e-6


def test_forward_pure_diffusion_is_exact():
    m = scalar_model(a=0.0, s=0.6, N=50)
    S = forward_moments(m, [[2.0]])
    np.testing.assert_allclose(S.values[:, 0, 0], 2.0 + 0.36 * m.grid.nodes, atol=1e-14)


def test_forward_noiseless_decay():
    a = 0.7
    m = scalar_model(a=a, s=0.0, N=400)
    S = forward_moments(m, [[1.5]])
    np.testing.assert_allclose(S.values[:, 0, 0], 1.5 * np.exp(-2 * a * m.grid.nodes), rtol=1e-10)


def test_score_formula(diffusion_scalar):
    spec = score_spec(diffusion_scalar, diffusion_scalar.Qprime)
    assert np.all(score(spec, 0.3, [0.0]) == 0.0)
    j = 700
    t = diffusion_scalar.grid.T - diffusion_scalar.grid.nodes[j]
    p = spec.P.values[j, 0, 0]
    assert score(spec, t, [2.0])[0] == pytest.approx(-2.0 * p, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_score_matches_finite_differences(n, diffusion_scalar):
    m = diffusion_scalar if n == 1 else diffusion_model(n, N=400)
    spec = score_spec(m, m.Qprime)
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(100):
        t = rng.uniform(0, m.grid.T)
        x = rng.standard_normal(n)
        state = density_params(m, m.Qprime, t, spec)
        fd = np.array([(log_density(state, x + h * e) - log_density(state, x - h * e)) / (2 * h)
                       for e in np.eye(n)])
        assert np.max(np.abs(score(spec, t, x) - fd)) <= 1e-6


def test_time_reversal_recovers_data_law(diffusion_scalar):
    m = diffusion_scalar
    spec = score_spec(m, m.Qprime)
    final = terminal_state(m, spec, exact_noise(m, spec))
    np.testing.assert_allclose(final.covariance, np.linalg.inv(m.Qprime), atol=1e-6)
    assert np.all(final.mean == 0.0)
    assert w2_gaussians(final, data_distribution(m)) <= 1e-6


def test_time_reversal_in_two_dimensions():
    m = diffusion_model(2)
    spec = score_spec(m, m.Qprime)
    final = terminal_state(m, spec, exact_noise(m, spec))
    assert w2_gaussians(final, data_distribution(m)) <= 1e-6


def test_zero_mean_is_preserved(diffusion_scalar):
    spec = score_spec(diffusion_scalar, 2 * diffusion_scalar.Qprime)
    mean, _ = backward_moments(diffusion_scalar, spec, GaussianState([0.0], [[3.0]]))
    assert np.all(mean.values == 0.0)


def test_mismatched_terminal_matrix_leaves_a_gap(diffusion_scalar):
    m = diffusion_scalar
    spec = score_spec(m, 2 * m.Qprime)
    final = terminal_state(m, spec, exact_noise(m))
    assert abs(final.covariance[0, 0] - 1.0) > 1e-3


def test_noiseless_sampling_follows_the_drift_flow():
    m = scalar_model(a=0.3, s=0.0, N=200)
    spec = score_spec(m, [[1.0]])
    Y = sample_backward(m, spec, GaussianState([1.0], [[1e-12]]), paths=5, seed=0)
    # with sigma = 0 the backward drift is A, so Euler steps give (1 + a h)^N
    expected = (1 + 0.3 * m.grid.h) ** m.grid.N
    np.testing.assert_allclose(Y[:, 0], expected, atol=1e-5)


def test_sampling_matches_exact_moments(diffusion_scalar):
    m = diffusion_scalar.regrid(500)
    spec = score_spec(m, m.Qprime)
    init = exact_noise(m, spec)
    Y = sample_backward(m, spec, init, paths=100_000, seed=3)
    target = terminal_state(m, spec, init).covariance[0, 0]
    var = Y[:, 0].var(ddof=1)
    se = target * math.sqrt(2.0 / (len(Y) - 1))
    assert abs(var - target) <= 3 * se + 2 * m.grid.h
    again = sample_backward(m, spec, init, paths=100_000, seed=3)
    assert np.array_equal(Y, again)


def test_w2_closed_forms():
    a = GaussianState([0.0], [[1.0]])
    assert w2_gaussians(a, a) == 0.0
    assert w2_gaussians(a, GaussianState([1.0], [[1.0]])) == pytest.approx(1.0)
    assert w2_gaussians(GaussianState([0.0], [[4.0]]), a) == pytest.approx(1.0)


def _gaussian(rng, n):
    G = rng.standard_normal((n, n))
    return GaussianState(rng.standard_normal(n), G @ G.T + 0.1 * np.eye(n))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 4))
def test_w2_metric_axioms(seed, n):
    rng = np.random.default_rng(seed)
    a, b = _gaussian(rng, n), _gaussian(rng, n)
    assert w2_gaussians(a, b) == pytest.approx(w2_gaussians(b, a), rel=1e-7, abs=1e-9)
    assert w2_gaussians(a, b) > 0
    # the trace-of-square-root cancellation leaves a floor near sqrt(eps * tr)
    assert w2_gaussians(a, a) <= 1e-6


def test_w2_rejects_indefinite_covariance():
    with pytest.raises(Exception):
        w2_gaussians(GaussianState([0.0, 0.0], [[1.0, 0.0], [0.0, -0.1]]),
                     GaussianState([0.0, 0.0], np.eye(2)))


def test_tv_values():
    a = GaussianState([0.0], [[1.0]])
    same = tv_gaussians(a, a)
    assert same.pinsker_upper_bound == 0.0 and same.exact_1d == pytest.approx(0.0, abs=1e-12)
    shifted = tv_gaussians(a, GaussianState([1.0], [[1.0]]))
    assert shifted.exact_1d == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-9)
    assert tv_gaussians(GaussianState([0.1], [[1.0]]), a).pinsker_upper_bound == \
        pytest.approx(math.sqrt(0.005 / 2))
    assert tv_gaussians(_gaussian(np.random.default_rng(0), 2),
                        _gaussian(np.random.default_rng(1), 2)).exact_1d is None


@settings(max_examples=30, deadline=None)
@given(m1=st.floats(-2, 2), m2=st.floats(-2, 2), v1=st.floats(0.1, 4), v2=st.floats(0.1, 4))
def test_pinsker_bounds_exact_tv(m1, m2, v1, v2):
    tv = tv_gaussians(GaussianState([m1], [[v1]]), GaussianState([m2], [[v2]]))
    assert 0.0 <= tv.exact_1d <= 1.0
    assert tv.exact_1d <= tv.pinsker_upper_bound + 1e-9


def test_kl_rejects_singular_covariance():
    with pytest.raises(DegenerateDensityError):
        kl_gaussians(GaussianState([0.0], [[1.0]]), GaussianState([0.0], [[0.0]]))


def test_score_spec_rejects_indefinite_terminal(diffusion_scalar):
    with pytest.raises(ContractError):
        score_spec(diffusion_scalar, [[-1.0]])


def test_error_bound_sweep_trends(diffusion_scalar):
    m = diffusion_scalar
    rows = error_bound_sweep(m, [s * m.Qprime for s in (1.0, 1.1, 1.5, 2.0)], [exact_noise(m)])
    w2 = [r.terminal_w2 for r in rows]
    assert w2[0] <= 1e-6
    assert all(b > a for a, b in zip(w2, w2[1:]))
    assert [r.m_norm for r in rows] == pytest.approx([0.0, 0.1, 0.5, 1.0])

    base = exact_noise(m)
    noises = [GaussianState(base.mean, f * base.covariance) for f in (1.5, 1.2, 1.05)]
    w2 = [r.terminal_w2 for r in error_bound_sweep(m, [m.Qprime], noises)]
    assert all(v > 0 for v in w2)
    assert all(b < a for a, b in zip(w2, w2[1:]))

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from ouspde.basis import BasisSpec
from ouspde.linalg import (DefinitenessError, SingularityError, conditional_gaussian_params,
                           diagonal_lower_bound_margin, gaussian_density, gaussian_log_density,
                           integration_weights, jaffard_decay_fit, jaffard_sweep, rate_function,
                           ratio_bounds_check, schur_complement_reduce, schur_norm,
                           time_integrated_cov, toeplitz_decay_base, whitening_factors)


def random_spd(rng, n, floor=0.5):
    q = rng.standard_normal((n, n))
    return q @ q.T / n + floor * np.eye(n)


# rate function ------------------------------------------------------------

def test_rate_function_examples():
    assert rate_function(0.0, 0.5) == 2.0
    quad, _ = integrate.quad(lambda s: math.exp(-2 * s), 0, 1)
    assert rate_function(1.0, 1.0) == pytest.approx(1 / quad, rel=1e-12)
    assert rate_function(1.0, 1.0) == pytest.approx(2.3130352854993315, rel=1e-14)
    with pytest.raises(ValueError):
        rate_function(1.0, 0.0)


@given(st.floats(0, 1e4), st.floats(1e-6, 10))
def test_rate_function_sandwich(lam, t):
    g = rate_function(lam, t)
    assert (1 + lam * t) / (2 * t) * (1 - 1e-12) <= g <= 2 * (1 + lam * t) / t * (1 + 1e-12)


def test_rate_function_small_lambda_limit():
    assert rate_function(1e-12, 0.5) == pytest.approx(2.0, rel=1e-9)


# time-integrated covariance -----------------------------------------------

def test_identity_base_whitens_to_identity():
    spec = BasisSpec(1)
    tc = time_integrated_cov(np.eye(2), spec, 1.0)
    lam1 = math.pi**2 / 2
    assert np.allclose(tc.a_t, np.diag([1.0, (1 - math.exp(-2 * lam1)) / (2 * lam1)]), atol=1e-15)
    assert np.allclose(tc.a_tilde, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("t", [1e-4, 0.3, 7.0])
def test_scalar_base_is_time_invariant(t):
    tc = time_integrated_cov(np.array([[1.7]]), np.array([0.0]), t)
    assert tc.a_tilde[0, 0] == pytest.approx(1.7, rel=1e-14)


def test_two_by_two_against_quadrature():
    base = np.array([[2.0, 1.0], [1.0, 2.0]])
    lam = np.array([0.0, math.pi**2 / 2])
    t = 0.1
    tc = time_integrated_cov(base, lam, t)
    for i in range(2):
        for j in range(2):
            q, _ = integrate.quad(lambda s: math.exp(-(lam[i] + lam[j]) * s), 0, t, epsabs=1e-15)
            assert tc.a_t[i, j] == pytest.approx(base[i, j] * q, abs=1e-12)
    assert np.allclose(tc.A_t @ tc.a_t, np.eye(2), atol=1e-10)
    assert tc.logdet_a_t == pytest.approx(math.log(np.linalg.det(tc.a_t)), rel=1e-12)


def test_definiteness_error():
    with pytest.raises(DefinitenessError):
        time_integrated_cov(np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([0.0, 1.0]), 0.1)


@given(st.floats(1e-4, 5.0))
def test_whitening_cauchy_schwarz(t):
    lam = BasisSpec(40).lambdas
    gh = whitening_factors(lam, t)
    assert np.all(gh[:, None] * integration_weights(lam, t) * gh[None, :] <= 1 + 1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 2.0))
def test_monotonicity(seed, t):
    rng = np.random.default_rng(seed)
    lam = BasisSpec(4).lambdas
    b2 = random_spd(rng, 5)
    b1 = b2 + random_spd(rng, 5, 0.0)
    t1 = time_integrated_cov(b1, lam, t)
    t2 = time_integrated_cov(b2, lam, t)
    assert np.linalg.eigvalsh(t1.a_t - t2.a_t).min() >= -1e-10
    assert t1.logdet_a_t >= t2.logdet_a_t - 1e-12


# Schur norm and complement --------------------------------------------------

def test_schur_norm_examples():
    assert schur_norm(np.eye(5)) == 1.0
    assert schur_norm([[1, -2], [3, 4]]) == 7.0


@given(st.integers(0, 2**32 - 1))
def test_schur_norm_dominates_operator_norm(seed):
    m = np.random.default_rng(seed).standard_normal((8, 8))
    m = m + m.T
    assert np.abs(np.linalg.eigvalsh(m)).max() <= schur_norm(m) * (1 + 1e-12)


def test_schur_complement_examples():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    B = schur_complement_reduce(np.linalg.inv(a))
    assert B[0, 0] == pytest.approx(0.5, rel=1e-14)
    D = np.diag([1.0, 2.0, 3.0])
    assert np.array_equal(schur_complement_reduce(D), D[:2, :2])
    with pytest.raises(SingularityError):
        schur_complement_reduce(np.array([[1.0, 0.0], [0.0, 0.0]]))


@given(st.integers(0, 2**32 - 1))
def test_schur_complement_inverts_leading_block(seed):
    a = random_spd(np.random.default_rng(seed), 6)
    B = schur_complement_reduce(np.linalg.inv(a))
    assert np.max(np.abs(np.linalg.inv(B) - a[:5, :5]) / np.abs(a[:5, :5]).max()) <= 1e-10


# Gaussian forms -----------------------------------------------------------

def test_gaussian_density_examples():
    assert gaussian_density([0.0], [[1.0]]) == pytest.approx(0.3989422804014327, rel=1e-14)
    assert gaussian_density([0.0], [[4.0]]) == pytest.approx(stats.norm(0, 0.5).pdf(0), rel=1e-14)
    assert gaussian_density([0.0, 0.0], np.eye(2)) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    with pytest.raises(DefinitenessError):
        gaussian_density([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        gaussian_density([0.0], np.eye(2))


@given(st.integers(0, 2**32 - 1))
def test_gaussian_log_density_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    C = random_spd(rng, 4)
    w = rng.standard_normal(4)
    ref = stats.multivariate_normal(np.zeros(4), np.linalg.inv(C)).logpdf(w)
    assert gaussian_log_density(w, C) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_conditional_params_examples():
    assert conditional_gaussian_params(np.eye(2), [0.3]) == (0.0, 1.0)
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    mu, s2 = conditional_gaussian_params(A, [1.0])
    assert mu == pytest.approx(-0.5) and s2 == pytest.approx(0.5)
    # oracle: first two moments of Q_2(w1, .) by 1-D quadrature
    q = lambda w2, p: w2**p * gaussian_density([1.0, w2], A)
    m0 = integrate.quad(q, -np.inf, np.inf, args=(0,))[0]
    m1 = integrate.quad(q, -np.inf, np.inf, args=(1,))[0] / m0
    m2 = integrate.quad(q, -np.inf, np.inf, args=(2,))[0] / m0
    assert m1 == pytest.approx(mu, abs=1e-8)
    assert m2 - m1**2 == pytest.approx(s2, abs=1e-8)
    with pytest.raises(DefinitenessError):
        conditional_gaussian_params(np.array([[1.0, 0.0], [0.0, -1.0]]), [0.0])


@pytest.mark.parametrize("w1", [0.0, 0.7, -1.9])
def test_marginalisation(w1):
    A = np.array([[2.0, 0.6], [0.6, 1.5]])
    B = schur_complement_reduce(A)
    integral, _ = integrate.quad(lambda w2: gaussian_density([w1, w2], A), -np.inf, np.inf,
                                 epsabs=1e-13)
    assert integral == pytest.approx(gaussian_density([w1], B), abs=1e-8)


# perturbation bounds -------------------------------------------------------

def test_ratio_bounds_equal_matrices():
    a = random_spd(np.random.default_rng(1), 5)
    r = ratio_bounds_check(a, a, BasisSpec(4), 0.1, np.ones(5), 0.5)
    assert r["schur_diff"] == 0 and r["det_lhs"] == 0 and r["density_lhs"] == 0


def test_ratio_bounds_shifted_identity():
    a = random_spd(np.random.default_rng(2), 5, 0.6)
    b = a + 0.01 * np.eye(5)
    r = ratio_bounds_check(a, b, BasisSpec(4), 0.05, np.full(5, 0.3), 0.5)
    assert r["theta"] == pytest.approx(5 * 0.01 / 0.5)
    assert r["phi"] == pytest.approx(5 * 0.09 * 0.01 / 0.25)
    for key in ("bound_tilde_margin", "bound_tilde_op_margin", "bound_det_margin",
                "bound_inverse_margin", "bound_bilinear_margin"):
        assert r[key] >= -1e-12, key
    assert r["bound_det_margin"] > 0


def test_ratio_bounds_scalar():
    r = ratio_bounds_check(np.array([[1.0]]), np.array([[1.2]]), np.array([0.0]), 0.3,
                           np.array([0.0]), 1.0)
    assert r["det_lhs"] == pytest.approx(0.2, rel=1e-12)
    assert r["det_rhs"] == pytest.approx(0.2 * math.exp(0.2), rel=1e-12)
    assert r["det_rhs"] == pytest.approx(0.24428055163203397, rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0))
def test_explicit_bounds_hold(seed, t):
    rng = np.random.default_rng(seed)
    a, L0, _ = toeplitz_decay_base(6, 4.0)
    b = a + 0.05 * np.diag(rng.uniform(0, 1, 6))
    r = ratio_bounds_check(a, b, BasisSpec(5), t, rng.standard_normal(6), L0)
    for key in ("bound_tilde_margin", "bound_tilde_op_margin", "bound_det_margin",
                "bound_inverse_margin", "bound_bilinear_margin"):
        assert r[key] >= -1e-12, key


# decay of inverses ---------------------------------------------------------

def test_identity_decay_is_degenerate():
    fit = jaffard_decay_fit(np.eye(10), 4.0)
    assert fit.degenerate and fit.passed


def test_jaffard_sweep_toeplitz():
    mats = []
    for K in (8, 16, 32, 64):
        base, L0, L1 = toeplitz_decay_base(K + 1, 4.0)
        tc = time_integrated_cov(base, BasisSpec(K), 0.05)
        mats.append(tc.A_tilde)
        assert np.all(diagonal_lower_bound_margin(tc, L1) >= 0)
    sweep = jaffard_sweep(mats, 4.0, 0.25, 2.0)
    assert sweep["passed"]
    assert all(f.exponent >= 3.75 for f in sweep["fits"])
    assert sweep["constant_spread"] <= 2.0


def test_toeplitz_base_bounds_bracket_spectrum():
    base, L0, L1 = toeplitz_decay_base(40, 4.0)
    ev = np.linalg.eigvalsh(base)
    assert L0 <= ev.min() and ev.max() <= L1


@given(st.floats(0, 1e6), st.floats(1e-6, 10))
def test_decay_integral_matches_expm1_form(s, t):
    from ouspde.linalg import decay_integral
    v = float(decay_integral(s, t))
    ref = t if s * t < 1e-300 else -math.expm1(-s * t) / s
    assert v == pytest.approx(ref, rel=1e-12)
    assert 0 < v <= t

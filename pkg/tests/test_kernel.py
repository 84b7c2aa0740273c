import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from ouspde.basis import BasisSpec
from ouspde.linalg import gaussian_density
from ouspde.operators import ConstantOperator, CovarianceField, InnerProductOperator, inner_product_example
from ouspde.kernel import (IllConditionedProposalWarning, ScalingReport, analytic_dij, cutoff_index,
                           diagonal_sum_exact_constant, diagonal_sum_mc, dij_kernel_fd,
                           frozen_log_density, kernel_density, kernel_log_density, kernel_point,
                           moment_mc, perturbation_integral_mc, scaling_report,
                           second_derivative_factor, total_mass_mc, truncate_state)


def constant_field(K, value=1.0, M=256):
    return CovarianceField(ConstantOperator(kappa2=min(value, 1 / value), value=value), BasisSpec(K, M))


def ou_variances(lam, sigma2, t):
    # independent oracle: int_0^t sigma2 exp(-2 lam s) ds by quadrature
    return np.array([integrate.quad(lambda s: sigma2 * math.exp(-2 * l * s), 0, t, epsabs=1e-15)[0]
                     for l in lam])


# densities -----------------------------------------------------------------

@given(st.floats(1e-3, 1.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_k1_constant_matches_ou_density(t, x0, x1, y0, y1):
    field = constant_field(1, 1.2)
    lam = field.spec.lambdas
    v = ou_variances(lam, 1.44, t)
    mean = np.exp(-lam * t) * np.array([x0, x1])
    ref = sum(stats.norm(mean[i], math.sqrt(v[i])).logpdf([y0, y1][i]) for i in range(2))
    got = kernel_log_density(t, [x0, x1], [y0, y1], field)
    assert got == pytest.approx(ref, abs=1e-12 * max(1.0, abs(ref)))


def test_value_at_mean():
    K, t, c = 4, 0.05, 1.3
    field = constant_field(K, c)
    x = np.linspace(-1, 1, K + 1)
    xp = np.exp(-field.spec.lambdas * t) * x
    v = ou_variances(field.spec.lambdas, c * c, t)
    assert kernel_density(t, x, xp, field) == pytest.approx(np.prod((2 * np.pi * v) ** -0.5), rel=1e-11)


def test_kernel_depends_on_target_covariance():
    field = CovarianceField(inner_product_example(amplitude=0.4, phis=("poly(1)",)), BasisSpec(4, 256))
    x = np.zeros(5)
    y = np.array([0.8, 0.3, -0.2, 0.1, 0.0])
    assert abs(kernel_log_density(0.1, x, y, field) - frozen_log_density(0.1, x, y, field, x)) > 1e-3
    assert kernel_log_density(0.1, x, y, field) == pytest.approx(
        frozen_log_density(0.1, x, y, field, y), abs=1e-13)


@given(st.floats(1e-3, 2.0), st.integers(0, 2**32 - 1))
def test_kernel_point_invariants(t, seed):
    rng = np.random.default_rng(seed)
    lam = BasisSpec(6).lambdas
    x, y = rng.standard_normal(7), rng.standard_normal(7)
    kp = kernel_point(t, x, y, lam)
    assert np.array_equal(kp.x_prime, np.exp(-lam * t) * x)
    assert np.array_equal(kp.w, y - kp.x_prime)
    g = np.concatenate([[1 / t], 2 * lam[1:] / (1 - np.exp(-2 * lam[1:] * t))])
    assert np.allclose(kp.w_prime, np.sqrt(g) * kp.w, rtol=1e-13)


# second-derivative factor -------------------------------------------------

def test_second_derivative_factor_examples():
    assert second_derivative_factor(np.zeros(3), np.eye(3), 1, 1) == -1.0
    assert second_derivative_factor([0.0, 1.0, 0.0], np.eye(3), 1, 1) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_second_derivative_factor_is_gaussian_hessian(seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((4, 4))
    A = q @ q.T / 4 + 0.5 * np.eye(4)
    w = rng.standard_normal(4) * 0.5
    j, k = rng.integers(0, 4, 2)
    h = 1e-3
    Q = lambda v: gaussian_density(v, A)
    ej, ek = np.eye(4)[j] * h, np.eye(4)[k] * h
    fd = (Q(w + ej + ek) - Q(w + ej - ek) - Q(w - ej + ek) + Q(w - ej - ek)) / (4 * h * h)
    assert fd / Q(w) == pytest.approx(second_derivative_factor(w, A, j, k), rel=1e-5, abs=1e-5)


# finite differences ---------------------------------------------------------

def test_fd_constant_field_k1_against_closed_form():
    field = constant_field(1)
    lam = field.spec.lambdas
    t = 0.2
    x = np.array([0.3, -0.4])
    y = np.array([0.1, 0.2])
    v = ou_variances(lam, 1.0, t)
    w = y - np.exp(-lam * t) * x
    N = np.prod(stats.norm(0, np.sqrt(v)).pdf(w))
    for j in (0, 1):
        exact = math.exp(-2 * lam[j] * t) * ((w[j] / v[j]) ** 2 - 1 / v[j]) * N
        assert dij_kernel_fd(t, x, y, field, j, j, h=1e-4) == pytest.approx(exact, rel=1e-6)
        assert analytic_dij(t, x, y, field, j, j) == pytest.approx(exact, rel=1e-12)
    mixed = math.exp(-(lam[0] + lam[1]) * t) * (w[0] / v[0]) * (w[1] / v[1]) * N
    assert dij_kernel_fd(t, x, y, field, 0, 1, h=1e-4) == pytest.approx(mixed, rel=1e-6)


def test_offdiagonal_vanishes_at_mean_for_diagonal_precision():
    field = constant_field(3)
    t = 0.1
    x = np.array([0.2, 0.1, -0.3, 0.05])
    y = np.exp(-field.spec.lambdas * t) * x
    N = kernel_density(t, x, y, field)
    assert abs(analytic_dij(t, x, y, field, 1, 2)) <= 1e-12 * N
    assert abs(dij_kernel_fd(t, x, y, field, 1, 2)) <= 1e-8 * N


def test_fd_symmetry_and_step_validation():
    field = CovarianceField(inner_product_example(), BasisSpec(4, 256))
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(5) * 0.3, rng.standard_normal(5) * 0.3
    a = dij_kernel_fd(0.1, x, y, field, 1, 3)
    b = dij_kernel_fd(0.1, x, y, field, 3, 1)
    assert abs(a - b) <= 1e-10 * max(abs(a), kernel_density(0.1, x, y, field))
    with pytest.raises(ValueError):
        dij_kernel_fd(0.1, x, y, field, 1, 1, h=0.0)


def test_fd_matches_analytic_on_random_configurations():
    field = CovarianceField(inner_product_example(), BasisSpec(6, 256))
    rng = np.random.default_rng(2024)
    lam = field.spec.lambdas
    for _ in range(30):
        t = 10 ** rng.uniform(-2, -0.5)
        j, k = (int(i) for i in rng.integers(0, 7, 2))
        x = rng.standard_normal(7) * 0.3
        g = np.concatenate([[1 / t], 2 * lam[1:] / -np.expm1(-2 * lam[1:] * t)])
        y = np.exp(-lam * t) * x + rng.standard_normal(7) / np.sqrt(g)
        an = analytic_dij(t, x, y, field, j, k)
        fd = dij_kernel_fd(t, x, y, field, j, k)
        # S is measured on its natural scale e^{-(l_j+l_k)t} sqrt(G_jj G_kk) N
        scale = math.exp(-(lam[j] + lam[k]) * t) * math.sqrt(g[j] * g[k]) * kernel_density(t, x, y, field)
        assert abs(fd - an) <= 1e-4 * max(abs(an), scale)


# cutoff and truncation -----------------------------------------------------

def test_cutoff_index_examples():
    assert cutoff_index(2, 0.01) == 31
    assert cutoff_index(1, 1) == 1
    ts = np.geomspace(1e-4, 10, 60)
    J = [cutoff_index(4, t) for t in ts]
    assert all(a >= b for a, b in zip(J, J[1:]))
    with pytest.raises(ValueError):
        cutoff_index(0, 0.1)


def test_truncate_examples():
    assert truncate_state([3.0, -5.0, 1.5], 2) .tolist() == [2.0, -2.0, 1.5]
    with pytest.raises(ValueError):
        truncate_state([1.0], 0)


@given(st.floats(-100, 100), st.floats(0, 1e3), st.floats(0, 10), st.floats(1e-3, 50))
def test_clamp_bound(x, lam, t, R):
    lhs = abs(truncate_state([x], R)[0] - truncate_state([x * math.exp(-lam * t)], R)[0])
    assert lhs <= R * lam * t * (1 + 1e-12) + 1e-300


# Monte Carlo ---------------------------------------------------------------

def test_mass_constant_field():
    field = constant_field(8)
    r = total_mass_mc(0.05, np.linspace(-1, 1, 9), field, 20_000, seed=1)
    assert abs(r.estimate - 1) <= 3 * r.stderr + 1e-12
    assert r.ess_fraction == pytest.approx(1.0)


def test_mass_small_time_nonconstant():
    field = CovarianceField(inner_product_example(), BasisSpec(8, 256))
    r = total_mass_mc(1e-3, np.full(9, 0.2), field, 20_000, seed=2)
    assert 0.9 <= r.estimate <= 1.1


def test_importance_sampling_coverage():
    field = constant_field(4, 1.1)
    x = np.array([0.5, -0.3, 0.2, 0.0, 0.1])
    covered = 0
    for seed in range(100):
        r = total_mass_mc(0.1, x, field, 10_000, seed=seed)
        covered += abs(r.estimate - 1) <= 3 * r.stderr + 1e-12
    assert covered >= 95


def test_mass_coverage_nonconstant_near_one():
    field = CovarianceField(inner_product_example(), BasisSpec(4, 256))
    hits = 0
    for seed in range(20):
        r = total_mass_mc(1e-3, np.zeros(5), field, 10_000, seed=seed)
        hits += abs(r.estimate - 1) <= 0.05
    assert hits == 20


def test_worker_count_does_not_change_result():
    field = CovarianceField(inner_product_example(), BasisSpec(4, 256))
    x = np.full(5, 0.1)
    a = total_mass_mc(0.05, x, field, 12_000, seed=9, workers=1)
    b = total_mass_mc(0.05, x, field, 12_000, seed=9, workers=4)
    assert a == b


def test_sample_floor():
    with pytest.raises(ValueError):
        total_mass_mc(0.1, np.zeros(3), constant_field(2), 5000)


def test_moment_examples():
    field = constant_field(4, 1.2)
    x = np.full(5, 0.3)
    assert moment_mc(0.1, x, field, 2, 0, 10_000, seed=4) == total_mass_mc(0.1, x, field, 10_000, seed=4)
    v = ou_variances(field.spec.lambdas, 1.44, 0.1)
    for j in (0, 1, 4):
        r = moment_mc(0.1, x, field, j, 1, 20_000, seed=5)
        assert abs(r.estimate - v[j]) <= 3 * r.stderr
    with pytest.raises(ValueError):
        moment_mc(0.1, x, field, 5, 1, 10_000)


def test_moment_bound_direction():
    const = constant_field(8)
    field = CovarianceField(inner_product_example(), BasisSpec(8, 256))
    x = np.full(9, 0.2)
    lam = const.spec.lambdas
    ts = [0.01, 0.1]
    js = [1, 4]
    shape = lambda j, t: t / (1 + lam[j] * t)
    c = max(moment_mc(t, x, const, j, 1, 10_000, seed=1).estimate / shape(j, t) for t in ts for j in js)
    for t in ts:
        for j in js:
            assert moment_mc(t, x, field, j, 1, 10_000, seed=2).estimate <= 1.5 * c * shape(j, t)


def test_diagonal_sum_k1_against_quadrature():
    field = constant_field(1)
    t = 0.1
    lam1 = field.spec.lambdas[1]
    v = ou_variances(field.spec.lambdas, 1.0, t)[1]
    f = lambda w: (math.exp(-2 * lam1 * t) * ((w / v) ** 2 - 1 / v)) ** 2 * stats.norm(0, math.sqrt(v)).pdf(w)
    ref = integrate.quad(f, -np.inf, np.inf, epsabs=0, epsrel=1e-12)[0]
    assert ref == pytest.approx(2 * math.exp(-4 * lam1 * t) / v**2, rel=1e-9)
    assert diagonal_sum_exact_constant(field, t, 0) == pytest.approx(ref, rel=1e-10)
    r = diagonal_sum_mc(t, np.array([0.3, 0.2]), field, 0, 20_000, seed=3)
    assert abs(r.estimate - ref) <= 3 * r.stderr


def test_diagonal_sum_offdiagonal_smaller():
    field = CovarianceField(inner_product_example(), BasisSpec(8, 256))
    t = 0.2
    J = cutoff_index(4, t)
    x = np.full(9, 0.1)
    d0 = diagonal_sum_mc(t, x, field, 0, 20_000, seed=1).estimate
    dJ = diagonal_sum_mc(t, x, field, J, 20_000, seed=1).estimate
    assert dJ < d0


def test_perturbation_constant_is_zero():
    assert perturbation_integral_mc(0.1, np.zeros(5), constant_field(4), 10_000).estimate == 0.0


def test_perturbation_positive_for_nonconstant():
    field = CovarianceField(inner_product_example(), BasisSpec(4, 256))
    r = perturbation_integral_mc(0.05, np.full(5, 0.2), field, 10_000, seed=0)
    assert r.estimate > 0 and r.stderr < r.estimate


def test_ill_conditioned_proposal_warns():
    # A(u) jumps between 0.02 and 1 across <u, 1> = 0; at x = 0 the proposal
    # frozen at x is a poor match for targets on either side
    op = InnerProductOperator(kappa2=0.02, f=lambda x, s: 0.02 + 0.98 / (1 + np.exp(-40 * s[..., :1])),
                              phis=["poly(1)"])
    field = CovarianceField(op, BasisSpec(8, 256))
    with pytest.warns(IllConditionedProposalWarning):
        r = total_mass_mc(1.0, np.zeros(9), field, 10_000, seed=0)
    assert r.ess_fraction < 0.01


# scaling reports -----------------------------------------------------------

def test_scaling_report_modes():
    ts = [0.01, 0.1, 1.0]
    good = [(t**0.5, 0.01 * t**0.5) for t in ts]
    assert scaling_report(ts, good, 0.5, 0.05).status == "PASS"
    assert scaling_report(ts, good, 1.0, 0.05).status == "FAIL"
    assert scaling_report(ts, good, 0.4, 0.0, mode="at_least").passed
    assert not scaling_report(ts, good, 0.4, 0.0, mode="at_most").passed
    noisy = [(t**0.5, 0.5 * t**0.5) for t in ts]
    rep = scaling_report(ts, noisy, 0.5, 0.05)
    assert rep.status == "INCONCLUSIVE" and not rep.passed
    d = rep.to_dict()
    assert d["pass"] is False and len(d["probe_values"]) == 3
    with pytest.raises(ValueError):
        ScalingReport([(1, 1, 0)], 0.0, 0.0, 0.1, mode="sideways")

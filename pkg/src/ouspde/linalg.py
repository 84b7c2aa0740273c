"""Time-integrated OU covariances, whitening, Schur norms and Gaussian forms.

Indices run over the modes ``0..m-1`` of a given eigenvalue sequence. The
only vanishing eigenvalue is ``lambda_0 = 0``; every expression with a
``lambda`` in a denominator is replaced by its analytic limit there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .fitting import DecayFit, decay_fit


class DefinitenessError(np.linalg.LinAlgError):
    """Cholesky factorisation failed on a matrix required to be positive definite."""


class SingularityError(np.linalg.LinAlgError):
    pass


def _lambdas(spec_or_lambdas, m: int | None = None) -> np.ndarray:
    lam = getattr(spec_or_lambdas, "lambdas", spec_or_lambdas)
    lam = np.asarray(lam, dtype=float)
    if m is not None:
        if lam.shape[0] < m:
            raise ValueError(f"need {m} eigenvalues, got {lam.shape[0]}")
        lam = lam[:m]
    return lam


def rate_function(lam, t):
    """``2 lam / (1 - exp(-2 lam t))``, the diagonal of G(t); ``1/t`` at ``lam = 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    lam = np.asarray(lam, dtype=float)
    x = 2.0 * lam * t
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # below 1e-8 the first-order series is exact to double precision
        out = np.where(x > 1e-8, 2.0 * lam / -np.expm1(-x), (1.0 + 0.5 * x) / t)
    return float(out) if out.ndim == 0 else out


def decay_integral(s, t):
    """``int_0^t exp(-s r) dr = (1 - exp(-s t)) / s``, equal to ``t`` at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    x = s * t
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 1e-8, -np.expm1(-x) / s, t * (1.0 - 0.5 * x))
    return out


def integration_weights(lambdas, t: float) -> np.ndarray:
    """Matrix ``(1 - exp(-(l_i + l_j) t)) / (l_i + l_j)`` with the ``t`` limit."""
    lam = np.asarray(lambdas, dtype=float)
    return decay_integral(lam[:, None] + lam[None, :], t)


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def cholesky(c, what: str = "matrix"):
    """Lower Cholesky factor of the symmetrised input; raises DefinitenessError."""
    try:
        return np.linalg.cholesky(symmetrize(c))
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"{what} is not positive definite") from exc


def spd_inverse_logdet(c, what: str = "matrix"):
    L = cholesky(c, what)
    Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    inv = symmetrize(Linv.T @ Linv)
    return inv, 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class TimeCov:
    """The covariance ``a(t) = int_0^t E(s) a E(s) ds`` of a frozen base matrix.

    ``a_tilde = G^{1/2} a(t) G^{1/2}`` is the whitened version; ``A_t`` and
    ``A_tilde`` are the inverses. ``g_diag`` holds ``G_ii(t)``.
    """

    t: float
    base: np.ndarray
    lambdas: np.ndarray
    g_diag: np.ndarray
    a_t: np.ndarray
    a_tilde: np.ndarray
    A_t: np.ndarray
    A_tilde: np.ndarray
    logdet_a_t: float
    logdet_a_tilde: float

    @property
    def dim(self) -> int:
        return self.base.shape[0]


def whitening_factors(lambdas, t: float) -> np.ndarray:
    """``G_ii(t)^{1/2}``."""
    return np.sqrt(rate_function(np.asarray(lambdas, dtype=float), t))


def time_integrated_cov(base, spec, t: float) -> TimeCov:
    if t <= 0:
        raise ValueError("t must be positive")
    base = np.asarray(base, dtype=float)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ValueError("base must be a square matrix")
    base = symmetrize(base)
    m = base.shape[0]
    lam = _lambdas(spec, m)
    a_t = base * integration_weights(lam, t)
    gdiag = rate_function(lam, t)
    gh = np.sqrt(gdiag)
    a_tilde = symmetrize(gh[:, None] * a_t * gh[None, :])
    # the whitened matrix is well conditioned; invert that and rescale
    A_tilde, logdet_tilde = spd_inverse_logdet(a_tilde, "whitened covariance")
    A_t = symmetrize(gh[:, None] * A_tilde * gh[None, :])
    logdet_a_t = logdet_tilde - float(np.sum(np.log(gdiag)))
    return TimeCov(float(t), base, lam, gdiag, a_t, a_tilde, A_t, A_tilde,
                   logdet_a_t, logdet_tilde)


def schur_norm(m) -> float:
    """Max of the largest absolute row sum and the largest absolute column sum."""
    m = np.abs(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0.0
    return float(max(m.sum(axis=1).max(), m.sum(axis=0).max()))


def schur_complement_reduce(Ainv) -> np.ndarray:
    """``B_ij = A_ij - A_{i,m+1} A_{j,m+1} / A_{m+1,m+1}`` for i, j <= m.

    When ``Ainv`` is the inverse of a positive definite ``a``, the result is
    the inverse of the leading m x m block of ``a``.
    """
    A = np.asarray(Ainv, dtype=float)
    corner = A[-1, -1]
    if not corner > 0:
        raise SingularityError("corner entry must be positive")
    col = A[:-1, -1]
    row = A[-1, :-1]
    return A[:-1, :-1] - np.outer(col, row) / corner


def gaussian_log_density(w, C) -> float:
    """``log Q_m(w, C)`` with ``Q_m(w, C) = (2 pi)^{-m/2} det(C)^{1/2} exp(-<w, C w>/2)``.

    ``C`` is the precision matrix.
    """
    w = np.asarray(w, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape != (w.shape[0], w.shape[0]):
        raise ValueError("dimension mismatch between w and C")
    L = cholesky(C, "precision matrix")
    z = L.T @ w
    m = w.shape[0]
    return float(-0.5 * m * math.log(2 * math.pi) + np.sum(np.log(np.diag(L))) - 0.5 * z @ z)


def gaussian_density(w, C) -> float:
    return math.exp(gaussian_log_density(w, C))


def conditional_gaussian_params(Ainv, w):
    """Mean and variance of the last coordinate given the first ``m``.

    Returns ``(mu, sigma2)`` with ``mu = -sum_i w_i A_{i,m+1} / A_{m+1,m+1}`` and
    ``sigma2 = 1 / A_{m+1,m+1}``. ``w`` may carry ``m`` or ``m + 1`` entries;
    only the first ``m`` are used.
    """
    A = np.asarray(Ainv, dtype=float)
    corner = A[-1, -1]
    if not corner > 0:
        raise DefinitenessError("corner entry must be positive")
    m = A.shape[0] - 1
    w = np.asarray(w, dtype=float)[:m]
    return float(-(w @ A[:m, -1]) / corner), float(1.0 / corner)


def ratio_bounds_check(a, b, spec, t: float, w, Lambda0: float, w2=None) -> dict:
    """Both sides of the perturbation bounds between ``a`` and ``b``.

    Keys ending in ``_margin`` are ``rhs - lhs`` and must be non-negative for
    the explicit inequalities. ``prop_c1`` is the smallest constant making
    ``|Q(w, A~)/Q(w, B~) - 1| <= c1 (phi + theta)`` hold at this instance.
    """
    a = symmetrize(a)
    b = symmetrize(b)
    m = a.shape[0]
    w = np.asarray(w, dtype=float)
    w2 = w if w2 is None else np.asarray(w2, dtype=float)
    ta = time_integrated_cov(a, spec, t)
    tb = time_integrated_cov(b, spec, t)
    d_s = schur_norm(a - b)
    tilde_s = schur_norm(ta.a_tilde - tb.a_tilde)
    tilde_op = float(np.linalg.norm(ta.a_tilde - tb.a_tilde, 2))
    inv_op = float(np.linalg.norm(ta.A_tilde - tb.A_tilde, 2))
    bilinear = abs(float(w @ (ta.A_tilde - tb.A_tilde) @ w2))
    theta = m * d_s / Lambda0
    phi = float(w @ w) * d_s / Lambda0**2
    det_ratio = math.exp(tb.logdet_a_tilde - ta.logdet_a_tilde)
    det_lhs = abs(det_ratio - 1.0)
    det_rhs = theta * math.exp(theta)
    q_ratio = math.exp(gaussian_log_density(w, ta.A_tilde) - gaussian_log_density(w, tb.A_tilde))
    q_lhs = abs(q_ratio - 1.0)
    return {
        "schur_diff": d_s,
        "tilde_schur_diff": tilde_s,
        "tilde_op_diff": tilde_op,
        "bound_tilde_margin": d_s - tilde_s,
        "bound_tilde_op_margin": tilde_s - tilde_op,
        "inverse_op_diff": inv_op,
        "bound_inverse_margin": d_s / Lambda0**2 - inv_op,
        "bilinear": bilinear,
        "bound_bilinear_margin": d_s * np.linalg.norm(w) * np.linalg.norm(w2) / Lambda0**2 - bilinear,
        "theta": theta,
        "phi": phi,
        "det_lhs": det_lhs,
        "det_rhs": det_rhs,
        "bound_det_margin": det_rhs - det_lhs,
        "density_lhs": q_lhs,
        "prop_c1": q_lhs / (phi + theta) if phi + theta > 0 else 0.0,
    }


def diagonal_maxima(m) -> np.ndarray:
    """``max_{|i-j| = d} |m_ij|`` for d = 0..n-1."""
    m = np.abs(np.asarray(m, dtype=float))
    n = m.shape[0]
    return np.array([max(np.diagonal(m, d).max(), np.diagonal(m, -d).max()) for d in range(n)])


def jaffard_decay_fit(matrix, gamma: float, slack: float = 0.25) -> DecayFit:
    """Off-diagonal decay of ``matrix`` measured on its per-diagonal maxima.

    ``exponent`` is regressed on ``d = 1..n-1``; ``constant`` is the sup-form
    constant ``max_d maxima[d] * (1 + d**gamma)``, the smallest ``c`` with
    ``|m_ij| <= c / (1 + |i-j|^gamma)``.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    mx = diagonal_maxima(matrix)
    d = np.arange(mx.shape[0], dtype=float)
    c = float(np.max(mx * (1.0 + d**gamma)))
    if mx.shape[0] < 3:
        return DecayFit(float("inf"), c, 0.0, True, True)
    fit = decay_fit(d[1:], mx[1:], target_exponent=gamma, slack=slack,
                    floor=1e-14 * max(mx[0], 1e-300))
    return DecayFit(fit.exponent, c, fit.max_residual_ratio, fit.passed, fit.degenerate)


def jaffard_sweep(matrices, gamma: float, slack: float = 0.25, stability: float = 2.0):
    """Fit each matrix of a size sweep; pass needs every exponent and constant stability."""
    fits = [jaffard_decay_fit(m, gamma, slack) for m in matrices]
    consts = np.array([f.constant for f in fits])
    spread = float(consts.max() / consts.min()) if consts.min() > 0 else float("inf")
    return {
        "fits": fits,
        "constant_spread": spread,
        "passed": bool(all(f.passed for f in fits) and spread <= stability),
    }


def diagonal_lower_bound_margin(tc: TimeCov, Lambda1: float) -> np.ndarray:
    """``A_jj(t) - (2 Lambda1)^{-1} (1 + lambda_j t) / t`` per mode; all must be >= 0."""
    L = (1.0 + tc.lambdas * tc.t) / tc.t
    return np.diagonal(tc.A_t) - L / (2.0 * Lambda1)


def toeplitz_decay_base(n: int, gamma: float, offdiag: float = 1.0, diag: float = 2.0):
    """Symmetric Toeplitz matrix ``offdiag / (1 + |i-j|^gamma)`` off the diagonal.

    Returns ``(matrix, Lambda0, Lambda1)`` where the bounds come from
    Gershgorin with the full infinite tail, so they hold for every ``n``.
    """
    d = np.arange(n, dtype=float)
    col = offdiag / (1.0 + d**gamma)
    col[0] = diag
    mat = sla.toeplitz(col)
    k = np.arange(1, 200000, dtype=float)
    tail = 2.0 * abs(offdiag) * float(np.sum(1.0 / (1.0 + k**gamma)))
    if diag - tail <= 0:
        raise ValueError("diagonal does not dominate; matrix may not be positive definite")
    return mat, diag - tail, diag + tail

"""Coefficient operators ``A``, the induced covariance field and hypothesis validators.

An operator maps a grid function ``u`` on [0, 1] (batched over leading axes)
to the samples of ``A(u)`` on the same grid. The covariance field turns a
spectral state ``x`` into ``a_jk(x) = int A(u(x))^2 e_j e_k`` with
``u(x) = sum_n x_n e_n``.
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSpec, basis_matrix, project_all, reconstruct, simpson_weights
from .fitting import DecayFit, decay_fit, fit_power_law
from .linalg import schur_norm

log = logging.getLogger(__name__)


class HypothesisViolation(ValueError):
    """An operator produced values outside its declared bounds."""


class SplitConsistencyError(ArithmeticError):
    pass


class NumericalIntegrityWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# named test functions

def smooth_bump(x, center: float = 0.0, width: float = 1.0):
    """``exp(1 - 1 / (1 - r^2))`` for ``|r| < 1``, ``r = (x - center) / width``; peak value 1."""
    r = (np.asarray(x, dtype=float) - center) / width
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def holder_clip(s, alpha: float):
    """``sign(s) min(|s|, 1)^alpha``: bounded, Hoelder of order ``alpha`` and no better at 0."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.minimum(np.abs(s), 1.0) ** alpha


_NAMED = re.compile(r"^\s*(?:(e)_(\d+)|(bump|poly)\(([^)]*)\))\s*$")


def named_function(name: str) -> Callable:
    """Parse ``"e_n"``, ``"bump(center,width)"`` or ``"poly(c0,c1,...)"``."""
    m = _NAMED.match(name)
    if m is None:
        raise ValueError(f"unknown test function {name!r}")
    if m.group(1):
        n = int(m.group(2))
        return lambda x: basis_matrix(n, x)[..., n]
    args = [float(v) for v in m.group(4).split(",") if v.strip()]
    if m.group(3) == "bump":
        if len(args) != 2:
            raise ValueError("bump needs (center, width)")
        c, w = args
        return lambda x: smooth_bump(x, c, w)
    coeffs = np.array(args)
    return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coeffs)


def _sampler(fn):
    if isinstance(fn, str):
        return named_function(fn)
    if callable(fn):
        return fn
    arr = np.asarray(fn, dtype=float)

    def sampled(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != arr.shape[-1]:
            raise ValueError("sampled test function does not match the grid")
        return arr

    return sampled


def _grid_for(u) -> np.ndarray:
    M = np.shape(u)[-1] - 1
    return np.arange(M + 1) / M


# ---------------------------------------------------------------------------
# operators

@dataclass
class CoefficientOperator:
    """Base class; subclasses implement ``_evaluate``.

    ``kappa2`` bounds the operator, ``kappa2 <= A(u) <= 1/kappa2``; ``alpha``,
    ``beta`` and ``gamma`` are the declared Hoelder and decay exponents.
    """

    kappa2: float
    alpha: float = 1.0
    beta: float = 4.0
    gamma: float = 4.0
    kind: str = field(default="abstract", init=False)

    def __post_init__(self):
        if not self.kappa2 > 0:
            raise ValueError("kappa2 must be positive")
        if not 0.5 < self.alpha <= 1.0:
            log.warning("alpha=%s lies outside (1/2, 1]; running in exploration mode", self.alpha)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")
        out = self._evaluate(u)
        tol = 1e-12
        lo, hi = self.kappa2, 1.0 / self.kappa2
        if np.any(out < lo - tol) or np.any(out > hi + tol):
            raise HypothesisViolation(
                f"A(u) ranges over [{out.min():.6g}, {out.max():.6g}], outside [{lo:.6g}, {hi:.6g}]")
        return out

    def _evaluate(self, u):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass
class ConstantOperator(CoefficientOperator):
    value: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        self.kind = "constant"

    def _evaluate(self, u):
        return np.full(u.shape, float(self.value))


@dataclass
class InnerProductOperator(CoefficientOperator):
    """``A(u)(x) = f(x, <u, phi_1>, ..., <u, phi_n>)``.

    ``f`` is called as ``f(x, s)`` with ``x`` of shape (M+1,) and ``s`` of
    shape (..., n); it must broadcast to (..., M+1).
    """

    f: Callable = None
    phis: Sequence = ()

    def __post_init__(self):
        super().__post_init__()
        self.kind = "inner_product"
        if self.f is None or len(self.phis) < 1:
            raise ValueError("inner-product operator needs f and at least one test function")
        self._phi_fns = [_sampler(p) for p in self.phis]
        self._cache = {}

    def phi_samples(self, M: int) -> np.ndarray:
        if M not in self._cache:
            x = np.arange(M + 1) / M
            P = np.stack([np.broadcast_to(fn(x), x.shape) for fn in self._phi_fns])
            if not np.all(np.isfinite(P)):
                raise ValueError("test functions must be finite")
            self._cache[M] = P * simpson_weights(M)
        return self._cache[M]

    def functionals(self, u) -> np.ndarray:
        """``<u, phi_i>`` for each test function, shape (..., n)."""
        M = u.shape[-1] - 1
        return u @ self.phi_samples(M).T

    def _evaluate(self, u):
        x = _grid_for(u)
        s = self.functionals(u)
        return np.broadcast_to(self.f(x, s), u.shape).astype(float)


def _periodic_extension(u):
    """Samples of the even 2-periodic extension at ``j / M``, ``j = -M .. M-1``."""
    M = u.shape[-1] - 1
    idx = np.abs(np.arange(-M, M))
    return u[..., idx]


def _periodic_convolve(ext, kernel_fn, M: int):
    """``(kernel * ext)(j/M)`` on the periodic grid by direct quadrature over the support."""
    h = 1.0 / M
    n = ext.shape[-1]
    offsets = np.arange(-(n // 2), n // 2)
    kv = np.asarray(kernel_fn(offsets * h), dtype=float)
    nz = np.nonzero(kv)[0]
    out = np.zeros_like(ext)
    for i in nz:
        out += kv[i] * np.roll(ext, offsets[i], axis=-1)
    return out * h


@dataclass
class ConvolutionOperator(CoefficientOperator):
    """``A(u) = psi * f(phi_1 * ubar, ..., phi_n * ubar)`` with ``ubar`` the even 2-periodic extension.

    ``psi`` is rescaled to unit discrete mass, so ``A(u)`` takes values in the
    range of ``f``. Kernels are callables on the real line with support in
    (-1, 1); ``f`` maps an array (..., n) to (...).
    """

    psi: Callable = None
    phis: Sequence = ()
    f: Callable = None

    def __post_init__(self):
        super().__post_init__()
        self.kind = "convolution"
        if self.psi is None or self.f is None or len(self.phis) < 1:
            raise ValueError("convolution operator needs psi, f and at least one kernel")
        self._psi = _sampler(self.psi)
        self._phi_fns = [_sampler(p) for p in self.phis]
        probe = np.linspace(-1, 1, 2001)
        pv = self._psi(probe)
        if np.any(pv < 0) or not np.any(pv > 0):
            raise ValueError("psi must be non-negative and not identically zero")
        for fn in [self._psi, *self._phi_fns]:
            if not np.allclose(fn(probe), fn(-probe), atol=1e-14):
                raise ValueError("convolution kernels must be even")

    def evaluate_extended(self, u):
        """``A(u)`` sampled on ``j / M`` for ``j = -M .. M-1`` (one full period)."""
        u = np.asarray(u, dtype=float)
        M = u.shape[-1] - 1
        ext = _periodic_extension(u)
        convs = np.stack([_periodic_convolve(ext, fn, M) for fn in self._phi_fns], axis=-1)
        g = np.asarray(self.f(convs), dtype=float)
        h = 1.0 / M
        offsets = np.arange(-M, M)
        mass = float(np.sum(self._psi(offsets * h)) * h)
        return _periodic_convolve(g, self._psi, M) / mass

    def _evaluate(self, u):
        M = u.shape[-1] - 1
        # j = M wraps to j = -M, stored at position 0
        return self.evaluate_extended(u)[..., np.arange(M, 2 * M + 1) % (2 * M)]


def apply_operator(op: CoefficientOperator, u):
    return op(u)


# ---------------------------------------------------------------------------
# covariance field

@dataclass
class CovarianceField:
    """``x -> a(x)``, the spectral covariance induced by an operator.

    ``scale`` multiplies ``A`` (so ``a`` scales by ``scale**2``); ``scale = 0``
    is the noiseless diagnostic mode and deliberately breaks ellipticity.
    """

    operator: CoefficientOperator
    spec: BasisSpec
    Lambda0: float | None = None
    Lambda1: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        k2 = self.operator.kappa2
        if self.Lambda0 is None:
            self.Lambda0 = (k2 * self.scale) ** 2
        if self.Lambda1 is None:
            self.Lambda1 = (self.scale / k2) ** 2
        M = self.spec.grid_points
        self._w = self.spec.weights
        self._E = self.spec.basis_matrix
        m = np.arange(2 * self.spec.K + 1)
        self._C = np.cos(np.pi * np.multiply.outer(self.spec.grid, m)) * self._w[:, None]
        s = np.ones(self.spec.K + 1)
        s[0] = 1.0 / np.sqrt(2.0)
        self._s = s
        self._M = M

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def dim(self) -> int:
        return self.spec.K + 1

    @property
    def is_constant(self) -> bool:
        return self.operator.kind == "constant"

    def scaled(self, c: float) -> "CovarianceField":
        return CovarianceField(self.operator, self.spec, scale=self.scale * c)

    def with_spec(self, spec: BasisSpec) -> "CovarianceField":
        return CovarianceField(self.operator, spec, self.Lambda0, self.Lambda1, self.scale)

    def squared_coefficient(self, x):
        """Samples of ``(scale * A(u(x)))^2``; batched over leading axes of ``x``."""
        u = reconstruct(x, self.spec)
        A = self.operator(u) * self.scale
        return A * A

    def cosine_moments(self, x):
        """``c_m = int A(u(x))^2 cos(m pi y) dy`` for m = 0..2K."""
        return self.squared_coefficient(x) @ self._C

    def matrix(self, x):
        """Direct quadrature of ``a_jk(x)``; one state."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"state must have length {self.dim}")
        A2 = self.squared_coefficient(x)
        a = (self._E * (A2 * self._w)[:, None]).T @ self._E
        asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
        if asym > 1e-10:
            warnings.warn(f"quadrature asymmetry {asym:.3g} before symmetrisation",
                          NumericalIntegrityWarning, stacklevel=2)
        return 0.5 * (a + a.T)

    def matrices(self, X):
        """Batched ``a(x)`` assembled from cosine moments (Toeplitz plus Hankel)."""
        X = np.asarray(X, dtype=float)
        c = self.cosine_moments(X)
        K = self.K
        i = np.arange(K + 1)
        T = c[..., np.abs(i[:, None] - i[None, :])]
        H = c[..., i[:, None] + i[None, :]]
        return (T + H) * np.outer(self._s, self._s)


def covariance_matrix(field: CovarianceField, x):
    return field.matrix(x)


@dataclass(frozen=True)
class ToeplitzSplit:
    """``a = toeplitz(a1) + a2``; ``a1[m] = int A^2 cos(m pi y) dy``.

    ``a2`` carries the cosine-of-sum part plus the constant adjustment on row
    and column 0 (where ``e_0 = 1`` lacks the ``sqrt 2``).
    """

    a1: np.ndarray
    a2: np.ndarray

    @property
    def a1_matrix(self) -> np.ndarray:
        n = self.a2.shape[0]
        i = np.arange(n)
        return self.a1[np.abs(i[:, None] - i[None, :])]

    def gamma_prime_constant(self, gamma: float) -> float:
        """Smallest ``kappa'`` with ``|a2_ij| <= kappa' / (1 + (i+j)^gamma)``."""
        n = self.a2.shape[0]
        i = np.arange(n)
        s = (i[:, None] + i[None, :]).astype(float)
        return float(np.max(np.abs(self.a2) * (1.0 + s**gamma)))

    def gamma_constant(self, gamma: float) -> float:
        d = np.arange(self.a1.shape[0], dtype=float)
        return float(np.max(np.abs(self.a1) * (1.0 + d**gamma)))


def toeplitz_split(field: CovarianceField, x, tol: float = 1e-8) -> ToeplitzSplit:
    x = np.asarray(x, dtype=float)
    c = field.cosine_moments(x)
    K = field.K
    a1 = c[: K + 1].copy()
    i = np.arange(K + 1)
    a2 = c[i[:, None] + i[None, :]].copy()
    # row/column 0: e_0 e_j = (cos((0-j) pi y) + cos((0+j) pi y)) / sqrt 2
    a2[0, :] = np.sqrt(2.0) * c[i] - c[i]
    a2[:, 0] = a2[0, :]
    a2[0, 0] = 0.0
    split = ToeplitzSplit(a1, a2)
    err = float(np.max(np.abs(split.a1_matrix + split.a2 - field.matrix(x))))
    if err > tol:
        raise SplitConsistencyError(f"split reconstruction error {err:.3g}")
    return split


# ---------------------------------------------------------------------------
# hypothesis validators (report-only)

def _l2(g, M):
    return np.sqrt(np.sum(g * g * simpson_weights(M), axis=-1))


def validate_fholder(op: CoefficientOperator, u_samples, h_values, k_max: int,
                     beta: float | None = None) -> dict:
    """Measure ``||A(u + h e_k) - A(u)||_2`` and fit the Hoelder constant and k-decay.

    Returns a report with the distance table, the minimal ``kappa1`` making
    ``dist <= kappa1 |h|^alpha (k+1)^(-beta)`` hold, and a decay fit of the
    per-k normalised maxima against ``k + 1``.
    """
    beta = op.beta if beta is None else beta
    U = np.atleast_2d(np.asarray(u_samples, dtype=float))
    M = U.shape[-1] - 1
    x = np.arange(M + 1) / M
    hs = np.asarray(h_values, dtype=float)
    ks = np.arange(k_max + 1)
    E = basis_matrix(k_max, x)
    base = op(U)
    dist = np.zeros((U.shape[0], hs.size, ks.size))
    for a, h in enumerate(hs):
        pert = U[:, None, :] + h * E.T[None, :, :]
        dist[:, a, :] = _l2(op(pert) - base[:, None, :], M)
    norm = np.abs(hs)[None, :, None] ** op.alpha
    scaled = dist / norm
    per_k = scaled.max(axis=(0, 1))
    kappa1 = float(np.max(per_k * (ks + 1.0) ** beta))
    # smallest nonincreasing majorant; oscillating coefficients otherwise swamp the fit
    env = np.maximum.accumulate(per_k[::-1])[::-1]
    fit = decay_fit(ks + 1.0, env, target_exponent=beta, slack=0.0, floor=1e-13)
    half = max(2, ks.size // 2)
    head = decay_fit(ks[:half] + 1.0, env[:half], floor=1e-13)
    tail = decay_fit(ks[half - 1:] + 1.0, env[half - 1:], floor=1e-13)
    superpoly = bool(tail.degenerate or (not head.degenerate and tail.exponent > head.exponent + 1.0))
    return {
        "distances": dist,
        "per_k": per_k,
        "envelope": env,
        "kappa1": kappa1,
        "decay": fit,
        "head_exponent": head.exponent,
        "tail_exponent": tail.exponent,
        "superpolynomial": superpoly,
        "passed": bool(np.isfinite(kappa1) and (fit.passed or superpoly)),
    }


def validate_fdecay(op: CoefficientOperator, u, gamma: float, slack: float = 0.25,
                    spec: BasisSpec | None = None) -> DecayFit:
    """Decay of ``|<A(u)^2, e_k>|`` against ``k + 1`` over ``k >= 1``."""
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    u = np.asarray(u, dtype=float)
    M = u.shape[-1] - 1
    if spec is None:
        spec = BasisSpec(min(128, M // 8), M)
    A = op(u)
    coeffs = project_all(A * A, spec)
    k = np.arange(1, spec.K + 1)
    floor = 1e-13 * max(abs(coeffs[0]), 1.0)
    return decay_fit(k + 1.0, coeffs[1:], target_exponent=gamma, slack=slack, floor=floor)


def validate_abnd(op: CoefficientOperator, u_samples) -> dict:
    """Observed range of ``A(u)`` over the samples against ``[kappa2, 1/kappa2]``."""
    U = np.atleast_2d(np.asarray(u_samples, dtype=float))
    vals = op._evaluate(U)
    lo, hi = float(vals.min()), float(vals.max())
    return {"min": lo, "max": hi, "kappa2": op.kappa2,
            "passed": bool(lo >= op.kappa2 - 1e-12 and hi <= 1.0 / op.kappa2 + 1e-12)}


def spectral_sandwich(field: CovarianceField, states, vectors) -> dict:
    """Rayleigh quotients ``<a(x) z, z> / |z|^2`` against ``[Lambda0, Lambda1]``."""
    q = []
    for x, z in zip(states, vectors):
        a = field.matrix(x)
        q.append(float(z @ a @ z / (z @ z)))
    q = np.array(q)
    return {"min": float(q.min()), "max": float(q.max()),
            "passed": bool(q.min() >= field.Lambda0 - 1e-10 and q.max() <= field.Lambda1 + 1e-10)}


def d_alpha_beta(x, y, alpha: float, beta: float) -> float:
    n = np.arange(1, len(x), dtype=float)
    return float(np.sum(np.abs(np.asarray(x)[1:] - np.asarray(y)[1:]) ** alpha * n ** (-beta)))


def holder_modulus_probe(field: CovarianceField, pairs, alpha: float | None = None,
                         beta: float | None = None, margin: float = 1.01) -> dict:
    """Schur-norm modulus of ``x -> a(x)`` against ``|x - y|^(alpha/2)``.

    The constant is fitted on half of the pairs (every other pair after sorting
    by distance) and checked on the other half.
    """
    alpha = field.operator.alpha if alpha is None else alpha
    beta = field.operator.beta if beta is None else beta
    rows = []
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sd = schur_norm(field.matrix(x) - field.matrix(y))
        dist = float(np.linalg.norm(x - y))
        rows.append((sd, dist, dist ** (alpha / 2), d_alpha_beta(x, y, alpha, beta)))
    rows = np.array(rows)
    schur_d, dist, modulus, dab = rows.T
    order = np.argsort(-dist)
    train, held = order[::2], order[1::2]
    ratio = np.divide(schur_d, modulus, out=np.zeros_like(schur_d), where=modulus > 0)
    c1 = float(ratio[train].max()) if train.size else 0.0
    held_ok = bool(np.all(ratio[held] <= margin * c1 + 1e-15)) if held.size else True
    fit = None
    good = (dist > 0) & (schur_d > 1e-14)
    if good.sum() >= 3:
        fit = fit_power_law(np.column_stack([dist[good], schur_d[good]]))
    return {
        "schur_distance": schur_d,
        "distance": dist,
        "modulus": modulus,
        "d_alpha_beta": dab,
        "c1": c1,
        "holdout_passed": held_ok,
        "exponent_fit": fit,
    }


# ---------------------------------------------------------------------------
# canonical example operators and JSON configs

def inner_product_example(alpha: float = 0.9, amplitude: float = 0.3, base: float = 1.0,
                          profile="e_1", phis=("bump(0.3,0.25)",), beta: float = 6.0,
                          gamma: float = 4.0, kappa2: float | None = None) -> InnerProductOperator:
    """``A(u)(x) = base + amplitude * profile(x) * mean_i h(<u, phi_i>)``, ``h`` the Hoelder clip."""
    prof = _sampler(profile)
    probe = prof(np.linspace(0, 1, 4097))
    pmax = float(np.max(np.abs(probe)))
    lo, hi = base - amplitude * pmax, base + amplitude * pmax
    if lo <= 0:
        raise ValueError("operator must stay positive")
    if kappa2 is None:
        kappa2 = min(lo, 1.0 / hi)

    def f(x, s):
        return base + amplitude * prof(x) * np.mean(holder_clip(s, alpha), axis=-1)[..., None]

    return InnerProductOperator(kappa2=kappa2, alpha=alpha, beta=beta, gamma=gamma,
                                f=f, phis=list(phis))


def convolution_example(alpha: float = 0.9, low: float = 0.8, high: float = 1.25,
                        psi="bump(0,0.2)", phis=("bump(0,0.4)",), beta: float = 6.0,
                        gamma: float = 4.0, kappa2: float | None = None,
                        gain: float = 4.0) -> ConvolutionOperator:
    """Convolution operator with ``f(s) = mid + half * mean_i h(gain * s_i)``, values in [low, high]."""
    mid, half = 0.5 * (low + high), 0.5 * (high - low)
    if kappa2 is None:
        kappa2 = min(low, 1.0 / high)

    def f(s):
        return mid + half * np.mean(holder_clip(gain * s, alpha), axis=-1)

    return ConvolutionOperator(kappa2=kappa2, alpha=alpha, beta=beta, gamma=gamma,
                               psi=psi, phis=list(phis), f=f)


def operator_from_config(cfg: dict) -> CoefficientOperator:
    """Build an operator from a JSON-style dict.

    ``kind`` is ``constant``, ``inner_product`` or ``convolution``; the common
    keys are ``kappa2``, ``alpha``, ``beta``, ``gamma``. Test functions are
    named built-ins (``"e_n"``, ``"bump(c,w)"``, ``"poly(c0,...)"``).
    """
    kind = cfg.get("kind")
    common = {k: cfg[k] for k in ("alpha", "beta", "gamma", "kappa2") if k in cfg}
    if kind == "constant":
        value = float(cfg.get("value", 1.0))
        common.setdefault("kappa2", min(value, 1.0 / value))
        return ConstantOperator(value=value, **common)
    if kind == "inner_product":
        f = cfg.get("f", {})
        return inner_product_example(
            base=float(f.get("base", 1.0)), amplitude=float(f.get("amplitude", 0.3)),
            profile=f.get("profile", "e_1"), phis=cfg.get("phis", ["bump(0.3,0.25)"]),
            **common)
    if kind == "convolution":
        f = cfg.get("f", {})
        return convolution_example(
            low=float(f.get("low", 0.8)), high=float(f.get("high", 1.25)),
            gain=float(f.get("gain", 4.0)), psi=cfg.get("psi", "bump(0,0.2)"),
            phis=cfg.get("phis", ["bump(0,0.4)"]), **common)
    raise ValueError(f"unknown operator kind {kind!r}")


def load_operator(path) -> CoefficientOperator:
    with open(Path(path)) as fh:
        return operator_from_config(json.load(fh))

"""Neumann cosine eigenbasis on [0, 1].

``e_0 = 1`` and ``e_n(x) = sqrt(2) cos(n pi x)``; each is an eigenfunction of
``(1/2) d^2/dx^2`` with eigenvalue ``-lambda_n``, ``lambda_n = n^2 pi^2 / 2``.

Grid functions are plain float arrays of length ``M + 1`` sampled at
``x_m = m / M``; spectral states are arrays of length ``K + 1``. Leading batch
axes are allowed wherever it is cheap to support them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fitting import DecayFit, decay_fit

SQRT2 = np.sqrt(2.0)


class GridMismatchError(ValueError):
    """A grid function does not live on the expected grid."""


def simpson_weights(M: int) -> np.ndarray:
    """Composite Simpson weights for M intervals on [0, 1] (M even)."""
    if M < 2 or M % 2:
        raise ValueError(f"Simpson rule needs an even number of intervals, got {M}")
    w = np.full(M + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w / (3.0 * M)


@dataclass(frozen=True)
class BasisSpec:
    """Truncation level ``K`` and quadrature resolution ``grid_points`` (M)."""

    K: int
    grid_points: int = 4096

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.grid_points < 256 or self.grid_points % 2:
            raise ValueError("grid_points must be even and >= 256")

    @cached_property
    def lambdas(self) -> np.ndarray:
        n = np.arange(self.K + 1, dtype=float)
        return n * n * np.pi**2 / 2.0

    @cached_property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_points + 1) / self.grid_points

    @cached_property
    def weights(self) -> np.ndarray:
        return simpson_weights(self.grid_points)

    @cached_property
    def basis_matrix(self) -> np.ndarray:
        """``E[m, n] = e_n(x_m)``, shape (M + 1, K + 1)."""
        return basis_matrix(self.K, self.grid)

    @cached_property
    def kappa_lambda(self) -> float:
        return min(np.pi**2 / 2.0, 2.0 / np.pi**2)

    def with_K(self, K: int) -> "BasisSpec":
        return BasisSpec(K, self.grid_points)


def basis_matrix(K: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = np.arange(K + 1)
    E = SQRT2 * np.cos(np.pi * np.multiply.outer(x, n))
    E[..., 0] = 1.0
    return E


def eigenvalue(spec: BasisSpec, n: int) -> float:
    if not 0 <= n <= spec.K:
        raise IndexError(f"mode {n} outside 0..{spec.K}")
    return n * n * np.pi**2 / 2.0


def basis_eval(n: int, x: float) -> float:
    if n < 0:
        raise IndexError("mode index must be >= 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if n == 0:
        return 1.0
    return float(SQRT2 * np.cos(n * np.pi * x))


def sample_mode(spec: BasisSpec, n: int) -> np.ndarray:
    """Samples of ``e_n`` on the spec grid."""
    return basis_matrix(n, spec.grid)[:, n]


def _check_grid(f: np.ndarray, spec: BasisSpec) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != spec.grid_points + 1:
        raise GridMismatchError(
            f"grid function has {f.shape[-1]} samples, expected {spec.grid_points + 1}")
    return f


def inner(f, g, spec: BasisSpec) -> np.ndarray:
    """Simpson approximation of the L2[0, 1] inner product (batched over leading axes)."""
    f = _check_grid(f, spec)
    g = _check_grid(g, spec)
    return np.sum(f * g * spec.weights, axis=-1)


def project(f, n: int, spec: BasisSpec) -> float:
    if not 0 <= n <= spec.K:
        raise IndexError(f"mode {n} outside 0..{spec.K}")
    f = _check_grid(f, spec)
    return (f * spec.weights) @ spec.basis_matrix[:, n]


def project_all(f, spec: BasisSpec) -> np.ndarray:
    """All coefficients ``<f, e_n>``, n = 0..K; batched over leading axes."""
    f = _check_grid(f, spec)
    return (f * spec.weights) @ spec.basis_matrix


def reconstruct(state, spec: BasisSpec) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != spec.K + 1:
        raise GridMismatchError(f"state has {state.shape[-1]} coefficients, expected {spec.K + 1}")
    return state @ spec.basis_matrix.T


def even_periodic_extension_eval(f, x):
    """Value of the even, 2-periodic extension of ``f`` at ``x`` (linear interpolation)."""
    f = np.asarray(f, dtype=float)
    M = f.shape[-1] - 1
    grid = np.arange(M + 1) / M
    x = np.asarray(x, dtype=float)
    # fmod and the reflection 2 - y are both exact, so evenness holds bitwise
    y = np.abs(np.fmod(x, 2.0))
    y = np.where(y > 1.0, 2.0 - y, y)
    out = np.interp(y, grid, f)
    return float(out) if out.ndim == 0 else out


def fourier_decay_check(f, zeta: float, n_max: int, spec: BasisSpec) -> DecayFit:
    """Fit ``|<f, e_n>| ~ c n^(-p)`` over ``2 <= n <= n_max``; pass if ``p >= zeta - 0.25``."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if n_max > spec.K:
        raise IndexError("n_max exceeds the truncation level")
    coeffs = project_all(f, spec)
    n = np.arange(2, n_max + 1)
    return decay_fit(n, coeffs[2:n_max + 1], target_exponent=zeta)

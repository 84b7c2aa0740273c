"""Exponential-Euler simulation of the spectral SDE system.

Each step freezes the covariance at the left endpoint and draws the exact
frozen-coefficient OU increment::

    X'_n = exp(-lambda_n dt) X_n + xi_n,    xi ~ N(0, a(X, dt))

so constant fields are simulated without discretisation error.

Noise comes from one RNG stream per ``(seed, path, mode)``. Streams are
indexed at a fine resolution ``noise_dt``; a step of size ``dt`` uses the
normalised sum of its ``dt / noise_dt`` fine draws. Runs with different ``K``
or ``dt`` but a common seed and ``noise_dt`` therefore share their driving
noise on the common modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy import stats

from .basis import BasisSpec, basis_matrix, project_all, reconstruct
from .linalg import DefinitenessError, integration_weights
from .operators import CovarianceField, _sampler

log = logging.getLogger(__name__)


class TruncationError(ValueError):
    """A test function has spectral content beyond the truncation level."""


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class SimConfig:
    """Simulation settings.

    ``u0`` is a grid function on the field's grid, a callable of ``x``, a
    named function or ``None`` (zero). ``qv_scale`` multiplies the noise
    covariance; 2 selects the convention in which ``a`` is half the
    quadratic variation density.
    """

    K: int
    dt: float
    T: float
    seed: int
    field: CovarianceField
    u0: object = None
    noise_dt: float | None = None
    qv_scale: float = 1.0
    block_size: int = 250

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0 or (0 < self.T < self.dt * (1 - 1e-9)):
            raise ValueError("need T = 0 or T >= dt")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * max(self.T, self.dt):
            raise ValueError("T must be an integer multiple of dt")
        self.n_steps = int(n)
        nd = self.dt if self.noise_dt is None else self.noise_dt
        r = round(self.dt / nd)
        if r < 1 or abs(r * nd - self.dt) > 1e-9 * self.dt:
            raise ValueError("dt must be an integer multiple of noise_dt")
        self.substeps = int(r)
        if self.qv_scale <= 0:
            raise ValueError("qv_scale must be positive")
        if self.field.K != self.K:
            self.field = self.field.with_spec(self.field.spec.with_K(self.K))

    @property
    def spec(self) -> BasisSpec:
        return self.field.spec

    def initial_state(self) -> np.ndarray:
        spec = self.spec
        if self.u0 is None:
            return np.zeros(self.K + 1)
        u = _sampler(self.u0)(spec.grid)
        u = np.broadcast_to(np.asarray(u, dtype=float), spec.grid.shape)
        return project_all(u, spec)

    def initial_grid(self) -> np.ndarray:
        if self.u0 is None:
            return np.zeros(self.spec.grid_points + 1)
        u = _sampler(self.u0)(self.spec.grid)
        return np.broadcast_to(np.asarray(u, dtype=float), self.spec.grid.shape).copy()


@dataclass
class Trajectory:
    """Spectral states on a uniform time grid.

    ``states`` has shape ``(len(times), K + 1)`` for one path and
    ``(n_paths, len(times), K + 1)`` for an ensemble.
    """

    times: np.ndarray
    states: np.ndarray
    dt: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[-2] != self.times.shape[0]:
            raise ValueError("times and states differ in length")
        if not np.all(np.isfinite(self.states)):
            raise FloatingPointError("trajectory contains non-finite states")

    @property
    def is_ensemble(self) -> bool:
        return self.states.ndim == 3

    @property
    def K(self) -> int:
        return self.states.shape[-1] - 1

    def final(self) -> np.ndarray:
        return self.states[..., -1, :]


@dataclass
class ResidualReport:
    """Weak-form residual and quadratic variation for one path or an ensemble."""

    phi: str
    residual_path: np.ndarray
    qv_measured: np.ndarray
    qv_predicted: np.ndarray
    mismatch_ratio: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        # undefined (nan or inf) for noiseless runs, where nothing is predicted
        with np.errstate(divide="ignore", invalid="ignore"):
            self.mismatch_ratio = np.asarray(self.qv_measured) / np.asarray(self.qv_predicted)

    @property
    def mean_mismatch(self) -> float:
        return float(np.mean(self.mismatch_ratio))

    @property
    def mismatch_stderr(self) -> float:
        r = np.atleast_1d(self.mismatch_ratio)
        return float(np.std(r, ddof=1) / math.sqrt(r.size)) if r.size > 1 else float("nan")


@dataclass(frozen=True)
class LawDistance:
    ks: float
    ks_pvalue: float
    wasserstein: float
    n_paths: int

    def __float__(self):
        return self.wasserstein


# ---------------------------------------------------------------------------
# stepping

def _cholesky_batch(c, X):
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        bad = [i for i in range(c.shape[0]) if np.any(np.linalg.eigvalsh(c[i]) <= 0)]
        i = bad[0] if bad else 0
        log.error("step covariance not positive definite at state %s", np.array2string(X[i]))
        raise DefinitenessError(f"step covariance not positive definite for path {i}") from None


def exp_euler_step(x, dt: float, field: CovarianceField, rng=None, noise=None,
                   qv_scale: float = 1.0) -> np.ndarray:
    """One exponential-Euler step for a state or a batch of states.

    Either ``rng`` (a numpy Generator) or ``noise`` (standard normals of the
    state's shape) supplies the randomness. A field with ``scale == 0`` steps
    deterministically.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    lam = field.spec.lambdas
    decayed = np.exp(-lam * dt) * x
    if field.scale == 0:
        return decayed
    X = np.atleast_2d(x)
    c = field.matrices(X) * (qv_scale * integration_weights(lam, dt))
    L = _cholesky_batch(c, X)
    if noise is None:
        if rng is None:
            raise ValueError("need rng or noise")
        noise = rng.standard_normal(X.shape)
    eta = np.atleast_2d(np.asarray(noise, dtype=float))
    xi = np.einsum("bij,bj->bi", L, eta)
    return decayed + xi.reshape(x.shape)


def _noise_block(cfg: SimConfig, paths) -> np.ndarray:
    """Standard normals of shape (len(paths), n_steps, K + 1) from the per-mode streams."""
    n, r, d = cfg.n_steps, cfg.substeps, cfg.K + 1
    out = np.empty((len(paths), n, d))
    for a, p in enumerate(paths):
        for m in range(d):
            z = np.random.default_rng([cfg.seed, int(p), m]).standard_normal(n * r)
            out[a, :, m] = z.reshape(n, r).sum(axis=1) if r > 1 else z
    if r > 1:
        out /= math.sqrt(r)
    return out


def simulate_paths(cfg: SimConfig, n_paths: int, record: str = "full",
                   first_path: int = 0) -> Trajectory:
    """Simulate ``n_paths`` paths; ``record`` is ``"full"`` or ``"final"``."""
    if record not in ("full", "final"):
        raise ValueError("record must be 'full' or 'final'")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    x0 = cfg.initial_state()
    n, d = cfg.n_steps, cfg.K + 1
    times = cfg.dt * np.arange(n + 1) if record == "full" else np.array([0.0, n * cfg.dt])
    if n == 0:
        times = np.array([0.0])
    states = np.empty((n_paths, len(times), d))
    states[:, 0] = x0
    field = cfg.field
    lam = field.spec.lambdas
    decay = np.exp(-lam * cfg.dt)
    weights = cfg.qv_scale * integration_weights(lam, cfg.dt)
    noiseless = field.scale == 0
    for start in range(0, n_paths, cfg.block_size):
        paths = np.arange(start, min(start + cfg.block_size, n_paths)) + first_path
        rows = paths - first_path
        X = np.repeat(x0[None], len(paths), axis=0)
        eta = None if noiseless or n == 0 else _noise_block(cfg, paths)
        for k in range(n):
            if noiseless:
                X = decay * X
            else:
                L = _cholesky_batch(field.matrices(X) * weights, X)
                X = decay * X + np.einsum("bij,bj->bi", L, eta[:, k])
            if record == "full":
                states[rows, k + 1] = X
        if record == "final" and n > 0:
            states[rows, -1] = X
    return Trajectory(times, states, cfg.dt)


def simulate_path(cfg: SimConfig, path_id: int = 0) -> Trajectory:
    ens = simulate_paths(cfg, 1, "full", first_path=path_id)
    return Trajectory(ens.times, ens.states[0], ens.dt)


# ---------------------------------------------------------------------------
# semigroup, decomposition, weak form

def heat_semigroup(u0, t: float, spec: BasisSpec) -> np.ndarray:
    """``P_t u0`` for the Neumann heat semigroup, as a grid function.

    The cosine series is cut where ``exp(-lambda_n t) < 1e-16`` or at the
    grid resolution, whichever comes first.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    u0 = np.asarray(u0, dtype=float)
    M = spec.grid_points
    if u0.shape[-1] != M + 1:
        raise ValueError("u0 does not match the grid")
    if t == 0:
        return u0.copy()
    n_cut = math.ceil(math.sqrt(2.0 * math.log(1e16) / t) / math.pi)
    n_max = min(n_cut, M - 1)
    E = basis_matrix(n_max, spec.grid)
    c = (u0 * spec.weights) @ E
    lam = 0.5 * (np.pi * np.arange(n_max + 1)) ** 2
    return (c * np.exp(-lam * t)) @ E.T


def decompose_path(traj: Trajectory, spec: BasisSpec):
    """Split ``u(t) = P_t u(0) + u~(t)`` on the grid.

    The deterministic part evolves the truncated initial state, so both parts
    live in the span of ``e_0..e_K`` and ``u~(0) = 0`` exactly.
    """
    lam = spec.lambdas
    X0 = traj.states[..., :1, :]
    det = np.exp(-np.multiply.outer(traj.times, lam)) * X0
    noise = traj.states - det
    return reconstruct(det, spec), reconstruct(noise, spec)


def spectral_phi(phi, K: int, tol: float = 1e-12) -> np.ndarray:
    """Coefficient vector of length ``K + 1``; an int ``n`` means ``e_n``."""
    if isinstance(phi, (int, np.integer)):
        if not 0 <= phi <= K:
            raise TruncationError(f"e_{phi} lies beyond K = {K}")
        v = np.zeros(K + 1)
        v[phi] = 1.0
        return v
    v = np.asarray(phi, dtype=float)
    if v.shape[0] > K + 1:
        if np.any(np.abs(v[K + 1:]) > tol):
            raise TruncationError(f"test function has coefficients beyond K = {K}")
        v = v[: K + 1]
    return np.pad(v, (0, K + 1 - v.shape[0]))


def _phi_label(phi) -> str:
    if isinstance(phi, (int, np.integer)):
        return f"e_{int(phi)}"
    return "phi[" + ",".join(f"{c:g}" for c in np.asarray(phi, dtype=float)) + "]"


def weak_form_residual(traj: Trajectory, phi, field: CovarianceField,
                       qv_scale: float = 1.0, chunk: int = 20000) -> ResidualReport:
    """Martingale residual of the weak form tested against a spectral ``phi``.

    ``M_t = <u_t, phi> - <u_0, phi> + int_0^t sum_n lambda_n phi_n X_n ds`` with
    the trapezoid rule. The predicted quadratic variation is the left-point
    sum of ``qv_scale * phi^T a(X_s) phi dt``.
    """
    K = traj.K
    if field.K != K:
        field = field.with_spec(field.spec.with_K(K))
    v = spectral_phi(phi, K)
    lam = field.spec.lambdas
    S = traj.states
    pairing = S @ v
    drift = S @ (lam * v)
    dt = traj.dt
    integral = np.concatenate(
        [np.zeros(S.shape[:-2] + (1,)),
         np.cumsum(0.5 * dt * (drift[..., 1:] + drift[..., :-1]), axis=-1)], axis=-1)
    resid = pairing - pairing[..., :1] + integral
    qv_measured = np.sum(np.diff(resid, axis=-1) ** 2, axis=-1)
    # phi^T a(x) phi = int A(u(x))^2 psi^2 with psi = sum_n phi_n e_n
    psi = field.spec.basis_matrix @ v
    g = psi * psi * field.spec.weights
    left = S[..., :-1, :].reshape(-1, K + 1)
    vals = np.concatenate([field.squared_coefficient(left[i:i + chunk]) @ g
                           for i in range(0, left.shape[0], chunk)]) if left.size else np.zeros(0)
    vals = vals.reshape(S.shape[:-2] + (S.shape[-2] - 1,))
    qv_predicted = qv_scale * dt * np.sum(vals, axis=-1)
    return ResidualReport(_phi_label(phi), resid, qv_measured, qv_predicted)


# ---------------------------------------------------------------------------
# laws

def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) * math.sqrt((n + m) / (n * m))


def pairing_samples(cfg: SimConfig, phi, n_paths: int) -> np.ndarray:
    """Samples of ``<u_T, phi>`` over ``n_paths`` paths."""
    v = spectral_phi(phi, cfg.K)
    return simulate_paths(cfg, n_paths, record="final").final() @ v


def law_distance(cfgA: SimConfig, cfgB: SimConfig, phi, n_paths: int) -> LawDistance:
    """Two-sample KS statistic and 1-Wasserstein distance for ``<u_T, phi>``."""
    if n_paths < 100:
        raise InsufficientSamplesError("law_distance needs at least 100 paths")
    if abs(cfgA.T - cfgB.T) > 1e-12:
        raise ValueError("configurations must share the horizon T")
    a = pairing_samples(cfgA, phi, n_paths)
    b = pairing_samples(cfgB, phi, n_paths)
    return law_distance_from_samples(a, b)


def law_distance_from_samples(a, b) -> LawDistance:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if min(a.size, b.size) < 100:
        raise InsufficientSamplesError("law distances need at least 100 samples per side")
    ks = stats.ks_2samp(a, b)
    return LawDistance(float(ks.statistic), float(ks.pvalue),
                       float(stats.wasserstein_distance(a, b)), int(min(a.size, b.size)))


def exact_pairing_law(cfg: SimConfig, phi) -> tuple[float, float]:
    """Mean and variance of ``<u_T, phi>`` for a constant field."""
    if not cfg.field.is_constant:
        raise ValueError("closed form only available for constant fields")
    v = spectral_phi(phi, cfg.K)
    lam = cfg.spec.lambdas
    x0 = cfg.initial_state()
    mean = float(np.sum(v * np.exp(-lam * cfg.T) * x0))
    if cfg.T == 0:
        return mean, 0.0
    a = cfg.field.matrix(np.zeros(cfg.K + 1)) * integration_weights(lam, cfg.T) * cfg.qv_scale
    return mean, float(v @ a @ v)


def ks_against_exact(cfg: SimConfig, phi, n_paths: int):
    """One-sample KS of simulated ``<u_T, phi>`` against its exact Gaussian law."""
    mean, var = exact_pairing_law(cfg, phi)
    x = pairing_samples(cfg, phi, n_paths)
    return stats.kstest(x, "norm", args=(mean, math.sqrt(var)))


def ou_stationary_variance(lam, sigma2: float, qv_scale: float = 1.0):
    return qv_scale * sigma2 / (2.0 * np.asarray(lam, dtype=float))

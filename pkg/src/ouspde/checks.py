"""Verification suites: each returns check records with a status and the measured values.

A suite is a function ``(SuiteConfig) -> (checks, sweeps)``. ``sweeps`` maps a
name to ``(params, estimates, stderrs)`` for CSV export. Monte Carlo checks
report INCONCLUSIVE when a standard-error gate trips instead of failing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernel as kn
from . import simulator as sim
from .basis import BasisSpec, reconstruct
from .fitting import fit_power_law
from .linalg import (
    diagonal_lower_bound_margin,
    integration_weights,
    jaffard_sweep,
    rate_function,
    ratio_bounds_check,
    schur_complement_reduce,
    schur_norm,
    time_integrated_cov,
    toeplitz_decay_base,
    whitening_factors,
)
from .operators import (
    CovarianceField,
    holder_modulus_probe,
    operator_from_config,
    spectral_sandwich,
    toeplitz_split,
    validate_abnd,
    validate_fdecay,
    validate_fholder,
)

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"

INNER_PRODUCT_FIELD = {"kind": "inner_product", "alpha": 0.9, "beta": 6, "gamma": 4,
                       "f": {"base": 1.0, "amplitude": 0.3, "profile": "e_1"},
                       "phis": ["bump(0.3,0.25)"]}
CONVOLUTION_FIELD = {"kind": "convolution", "alpha": 0.9, "beta": 6, "gamma": 4,
                     "f": {"low": 0.8, "high": 1.25, "gain": 4.0},
                     "psi": "bump(0,0.2)", "phis": ["bump(0,0.4)"]}
CONSTANT_FIELD = {"kind": "constant", "value": 1.0}

TOLERANCES = {
    "linalg_margin": 1e-9,
    "schur_complement_rel": 1e-10,
    "inversion_residual": 1e-8,
    "jaffard_slack": 0.25,
    "jaffard_stability": 2.0,
    "mass_slope": 0.05,
    "mass_interval": [0.9, 1.1],
    "mass_stderr": 0.02,
    "moment_slope": 0.15,
    "large_j_ratio": 1.0 / 3.0,
    "fd_rel": 1e-4,
    "diag_ratio_slope": 0.1,
    "perturbation_slope": -0.98,
    "x_dependence_margin": 1.5,
    "stderr_gate": 0.1,
    "sigmas": 3.0,
    "composition": 1e-12,
    "qv_ratio": [0.9, 1.1],
    "ks_alpha": 0.01,
    "ks_fraction": 0.95,
    "split": 1e-10,
    "fdecay_slack": 0.25,
}


@dataclass
class Check:
    check_id: str
    anchor: str
    values: dict
    threshold: str
    status: str

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {"check_id": self.check_id, "anchor": self.anchor, "values": _plain(self.values),
                "threshold": self.threshold, "status": self.status}

    def line(self) -> str:
        return f"{self.status:<12} {self.check_id}  [{self.anchor}]  {self.threshold}"


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "to_dict"):
        return _plain(o.to_dict())
    return o


def _check(check_id, anchor, ok, threshold, inconclusive=False, **values) -> Check:
    status = INCONCLUSIVE if inconclusive else (PASS if ok else FAIL)
    return Check(check_id, anchor, values, threshold, status)


# ---------------------------------------------------------------------------
# configuration

SUITE_DEFAULTS = {
    "linalg": {"K": [32], "t": [1e-3, 1.0], "samples": 100, "field": None},
    "jaffard": {"K": [8, 16, 32, 64], "t": [1e-3, 1e-2, 0.1, 1.0], "samples": None, "field": None},
    "kernel_mass": {"K": [2, 4, 8, 16], "t": [0.1, 1e-3], "samples": 100_000,
                    "field": INNER_PRODUCT_FIELD},
    "moments": {"K": [16], "t": [1e-3, 3.1622776601683794e-3, 1e-2, 3.1622776601683794e-2, 0.1],
                "samples": 100_000, "field": INNER_PRODUCT_FIELD},
    "derivative_scaling": {"K": [16], "t": [0.02, 0.05, 0.1, 0.2], "samples": 200_000,
                           "field": INNER_PRODUCT_FIELD},
    "perturbation": {"K": [16], "t": [0.02, 0.05, 0.1, 0.2], "samples": 100_000,
                     "field": INNER_PRODUCT_FIELD},
    "simulator": {"K": [16], "t": [0.5], "samples": 2000, "field": INNER_PRODUCT_FIELD},
    "uniqueness": {"K": [8, 16, 32], "t": [0.5], "samples": 2000, "field": INNER_PRODUCT_FIELD},
    "hypotheses": {"K": [64], "t": [0.1], "samples": 24, "field": CONVOLUTION_FIELD,
                   "grid_points": 1024},
}
SUITES = tuple(SUITE_DEFAULTS)


@dataclass
class SuiteConfig:
    """Everything a suite needs; unspecified entries take the suite defaults."""

    suite: str
    field: dict | None = None
    K: list | None = None
    t: list | None = None
    samples: int | None = None
    seed: int = 0
    out: str = "reports"
    tolerances: dict = dc_field(default_factory=dict)
    grid_points: int | None = None
    half_qv_convention: bool = False
    options: dict = dc_field(default_factory=dict)
    config_path: str | None = None

    def __post_init__(self):
        if self.suite not in SUITE_DEFAULTS:
            raise ValueError(f"unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        d = SUITE_DEFAULTS[self.suite]
        for key in ("field", "K", "t", "samples"):
            if getattr(self, key) is None:
                setattr(self, key, d[key])
        if self.grid_points is None:
            self.grid_points = d.get("grid_points", 256)
        for key in ("K", "t"):
            v = getattr(self, key)
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                raise ValueError(f"{key} must be a nonempty list")
        unknown = set(self.tolerances) - set(TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerances: {', '.join(sorted(unknown))}")

    @classmethod
    def from_file(cls, suite: str, path, **overrides) -> "SuiteConfig":
        """Read a JSON config; keys matching fields are used, the rest go to ``options``."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as e:
            raise OSError(f"cannot read config {path}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ValueError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ValueError(f"config {path} must hold a JSON object")
        known = {"field", "K", "t", "samples", "seed", "out", "tolerances", "grid_points",
                 "half_qv_convention"}
        kw = {k: v for k, v in raw.items() if k in known}
        kw["options"] = {k: v for k, v in raw.items() if k not in known and k != "suite"}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(suite=suite, config_path=str(path), **kw)

    def tol(self, name):
        return self.tolerances.get(name, TOLERANCES[name])

    @property
    def qv_scale(self) -> float:
        return 2.0 if self.half_qv_convention else 1.0

    def build_field(self, K: int, field_cfg: dict | None = None) -> CovarianceField:
        op = operator_from_config(field_cfg or self.field)
        return CovarianceField(op, BasisSpec(int(K), int(self.grid_points)))

    def constant_field(self, K: int) -> CovarianceField:
        return self.build_field(K, CONSTANT_FIELD)


# ---------------------------------------------------------------------------
# linalg

def _random_spd(rng, m, lo=0.5, hi=2.0):
    q = stats.ortho_group.rvs(m, random_state=rng) if m > 1 else np.ones((1, 1))
    ev = rng.uniform(lo, hi, m)
    a = (q * ev) @ q.T
    return 0.5 * (a + a.T)


def _random_sym(rng, m):
    e = rng.standard_normal((m, m))
    e = 0.5 * (e + e.T)
    return e / schur_norm(e)


def _lams(m):
    return 0.5 * (np.pi * np.arange(m)) ** 2


def _instances(rng, n, K_max):
    for _ in range(n):
        m = int(rng.integers(2, K_max + 2))
        t = float(10 ** rng.uniform(-3, 0))
        yield m, t


def suite_linalg(cfg: SuiteConfig):
    rng = np.random.default_rng([cfg.seed, 1])
    n = int(cfg.samples)
    K_max = int(max(cfg.K))
    tol = cfg.tol("linalg_margin")
    checks = []

    # rate-function sandwich
    lam = np.concatenate([[0.0], np.geomspace(1e-3, 1e5, 60)])
    ts = np.geomspace(1e-5, 10, 40)
    L, T = np.meshgrid(lam, ts)
    G = rate_function(L, T)
    m1 = float(np.min(G - (1 + L * T) / (2 * T)) / 1.0)
    m2 = float(np.min(2 * (1 + L * T) / T - G))
    rel = min(np.min((G - (1 + L * T) / (2 * T)) / G), np.min((2 * (1 + L * T) / T - G) / G))
    checks.append(_check("linalg.rate_sandwich", "rate-function sandwich", rel >= -tol,
                         f"relative margin >= -{tol:g}", lower_margin=m1, upper_margin=m2,
                         relative_margin=float(rel)))

    cs, mono_eig, mono_det, tilde_m, inv_m, bil_m, sand_m, sandt_m, det_m = ([] for _ in range(9))
    schur_err, decay_m, resid = [], [], []
    c1_by_M = {0.5: 0.0, 1.0: 0.0, 2.0: 0.0}
    for m, t in _instances(rng, n, K_max):
        lam = _lams(m)
        wh = whitening_factors(lam, t)
        W = integration_weights(lam, t)
        cs.append(float(np.max(wh[:, None] * W * wh[None, :]) - 1.0))

        # monotonicity under a PSD increment
        a2 = _random_spd(rng, m)
        v = rng.standard_normal((m, int(rng.integers(1, m + 1))))
        a1 = a2 + 0.1 * v @ v.T / m
        t1, t2 = time_integrated_cov(a1, lam, t), time_integrated_cov(a2, lam, t)
        d = t1.a_t - t2.a_t
        mono_eig.append(float(np.min(np.linalg.eigvalsh(d)) / max(np.max(np.abs(t1.a_t)), 1e-300)))
        mono_det.append(t1.logdet_a_t - t2.logdet_a_t)

        # perturbation pair
        a = _random_spd(rng, m)
        u = 10 ** rng.uniform(-3, 0)
        Lam0_a = float(np.min(np.linalg.eigvalsh(a)))
        b = a + u * 2.0 * Lam0_a / m * _random_sym(rng, m)
        eb = np.linalg.eigvalsh(b)
        if eb.min() <= 0.05:
            b = a + 0.5 * (b - a)
            eb = np.linalg.eigvalsh(b)
        ea = np.linalg.eigvalsh(a)
        Lam0 = float(min(ea.min(), eb.min()))
        Lam1 = float(max(ea.max(), eb.max()))
        w = rng.standard_normal(m) * 10 ** rng.uniform(-1, 0.5)
        w2 = rng.standard_normal(m)
        rb = ratio_bounds_check(a, b, lam, t, w, Lam0, w2)
        tilde_m.append(min(rb["bound_tilde_margin"], rb["bound_tilde_op_margin"]))
        inv_m.append(rb["bound_inverse_margin"])
        bil_m.append(rb["bound_bilinear_margin"])
        det_m.append(rb["bound_det_margin"])
        for M in c1_by_M:
            if rb["theta"] < M and rb["phi"] < M:
                c1_by_M[M] = max(c1_by_M[M], rb["prop_c1"])

        ta = time_integrated_cov(a, lam, t)
        ev = np.linalg.eigvalsh(ta.a_tilde)
        sand_m.append(float(min(ev.min() - ea.min(), ea.max() - ev.max())))
        g = 1.0 / rate_function(lam, t)
        evt = np.linalg.eigvalsh(ta.a_t)
        lo, hi = ea.min() * g.min(), ea.max() * g.max()
        sandt_m.append(float(min((evt.min() - lo) / hi, (hi - evt.max()) / hi)))
        resid.append(schur_norm(ta.a_t @ ta.A_t - np.eye(m)))

        # Schur complement
        A = np.linalg.inv(a)
        B = schur_complement_reduce(A)
        bb = a[:-1, :-1]
        schur_err.append(float(np.max(np.abs(np.linalg.inv(B) - bb)) / np.max(np.abs(bb))))

        # decay inheritance
        base, _, _ = toeplitz_decay_base(m, 4.0)
        r = rng.uniform(-1, 1, (m, m))
        r = 0.5 * (r + r.T)
        np.fill_diagonal(r, 1.0)
        base = base * r
        dd = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :]) ** 4.0
        kappa = float(np.max(np.abs(base) * (1 + dd)))
        try:
            tb = time_integrated_cov(base, lam, t)
        except np.linalg.LinAlgError:
            continue
        decay_m.append(kappa - float(np.max(np.abs(tb.a_tilde) * (1 + dd))))

    def mn(v):
        return float(np.min(v))

    def mx(v):
        return float(np.max(v))

    checks += [
        _check("linalg.whitening_cauchy_schwarz", "whitened integration weights at most one",
               mx(cs) <= 1e-12, "max weight - 1 <= 1e-12", max_excess=mx(cs), n=len(cs)),
        _check("linalg.monotonicity", "PSD order preserved by time integration",
               mn(mono_eig) >= -1e-10 and mn(mono_det) >= -tol,
               "min eig(a1(t)-a2(t)) >= -1e-10; det order", min_eig=mn(mono_eig),
               min_logdet_gap=mn(mono_det), n=len(mono_eig)),
        _check("linalg.whitened_difference", "whitened difference bounded by Schur norm",
               mn(tilde_m) >= -tol and mn(inv_m) >= -tol and mn(bil_m) >= -tol,
               f"margins >= -{tol:g}", tilde_margin=mn(tilde_m), inverse_margin=mn(inv_m),
               bilinear_margin=mn(bil_m), n=len(tilde_m)),
        _check("linalg.spectral_sandwich", "whitened spectrum inside [Lambda0, Lambda1]",
               mn(sand_m) >= -tol and mn(sandt_m) >= -tol, f"margins >= -{tol:g}",
               whitened_margin=mn(sand_m), unwhitened_rel_margin=mn(sandt_m), n=len(sand_m)),
        _check("linalg.determinant_ratio", "|det b~/det a~ - 1| <= theta e^theta",
               mn(det_m) >= -tol, f"margin >= -{tol:g}", margin=mn(det_m), n=len(det_m)),
        _check("linalg.density_ratio", "Gaussian form ratio linear in phi + theta",
               all(np.isfinite(v) for v in c1_by_M.values())
               and c1_by_M[0.5] <= c1_by_M[1.0] <= c1_by_M[2.0],
               "fitted c1 finite and monotone in the bound M",
               c1_by_M={str(k): v for k, v in c1_by_M.items()}),
        _check("linalg.schur_complement", "inverse of Schur reduction is the leading block",
               mx(schur_err) <= cfg.tol("schur_complement_rel"),
               f"relative error <= {cfg.tol('schur_complement_rel'):g}", max_rel_error=mx(schur_err),
               n=len(schur_err)),
        _check("linalg.decay_inheritance", "whitened matrix keeps the base decay constant",
               mn(decay_m) >= -tol, f"kappa_gamma margin >= -{tol:g}", margin=mn(decay_m),
               n=len(decay_m)),
        _check("linalg.inversion_residual", "||a(t) A(t) - I||_s",
               mx(resid) <= cfg.tol("inversion_residual"),
               f"<= {cfg.tol('inversion_residual'):g}", max_residual=mx(resid), n=len(resid)),
    ]
    return checks, {}


# ---------------------------------------------------------------------------
# jaffard

def suite_jaffard(cfg: SuiteConfig):
    gamma = float(cfg.options.get("gamma", 4.0))
    slack = cfg.tol("jaffard_slack")
    stab = cfg.tol("jaffard_stability")
    checks = []
    exps, spreads, lower = {}, {}, {}
    ok_fit, ok_lower = True, True
    for t in cfg.t:
        mats, margins = [], []
        for K in cfg.K:
            m = int(K) + 1
            base, L0, L1 = toeplitz_decay_base(m, gamma)
            tc = time_integrated_cov(base, _lams(m), float(t))
            mats.append(tc.A_tilde)
            bound = (1.0 + tc.lambdas * tc.t) / tc.t / (2 * L1)
            margins.append(float(np.min(diagonal_lower_bound_margin(tc, L1) / bound)))
        sw = jaffard_sweep(mats, gamma, slack, stab)
        exps[str(t)] = [f.exponent for f in sw["fits"]]
        spreads[str(t)] = sw["constant_spread"]
        lower[str(t)] = min(margins)
        ok_fit &= sw["passed"]
        ok_lower &= min(margins) >= -cfg.tol("linalg_margin")
    checks.append(_check("jaffard.offdiagonal_decay", "inverse inherits polynomial decay uniformly in K",
                         ok_fit, f"exponent >= {gamma - slack:g}, constant spread <= {stab:g}",
                         exponents=exps, constant_spread=spreads, K=list(cfg.K)))
    checks.append(_check("jaffard.diagonal_lower_bound", "A_jj(t) >= (1 + lambda_j t) / (2 Lambda1 t)",
                         ok_lower, "relative margin >= -1e-9", min_relative_margin=lower))
    return checks, {}


# ---------------------------------------------------------------------------
# kernel suites

def _gate(results, gate):
    return all(r.stderr <= gate * abs(r.estimate) for r in results)


def suite_kernel_mass(cfg: SuiteConfig):
    n = int(cfg.samples)
    t_big = float(cfg.options.get("t_sweep", cfg.t[0]))
    t_small = float(cfg.options.get("t_small", cfg.t[-1]))
    K_small = int(cfg.options.get("K_small", 8))
    checks, sweeps = [], {}
    res = []
    for i, K in enumerate(cfg.K):
        F = cfg.build_field(K)
        res.append(kn.total_mass_mc(t_big, np.zeros(F.dim), F, n, cfg.seed + i))
    rep = kn.scaling_report(cfg.K, res, 0.0, cfg.tol("mass_slope"), "within", cfg.tol("stderr_gate"))
    sweeps["kernel_mass_K_sweep"] = ([float(k) for k in cfg.K], [r.estimate for r in res],
                                     [r.stderr for r in res])
    checks.append(_check("kernel_mass.uniform_in_K", "total mass bounded uniformly in K",
                         rep.passed, f"|slope in K| <= {cfg.tol('mass_slope'):g}",
                         inconclusive=rep.inconclusive, report=rep, t=t_big))

    F = cfg.build_field(K_small)
    r = kn.total_mass_mc(t_small, np.zeros(F.dim), F, n, cfg.seed + 100)
    lo, hi = cfg.tol("mass_interval")
    checks.append(_check("kernel_mass.small_time", "total mass close to one for small t",
                         lo <= r.estimate <= hi and r.stderr <= cfg.tol("mass_stderr"),
                         f"mass in [{lo:g}, {hi:g}], stderr <= {cfg.tol('mass_stderr'):g}",
                         estimate=r.estimate, stderr=r.stderr, ess=r.ess_fraction, t=t_small,
                         K=K_small))

    C = cfg.constant_field(K_small)
    r = kn.total_mass_mc(t_big, np.zeros(C.dim), C, n, cfg.seed + 200)
    k = cfg.tol("sigmas")
    checks.append(_check("kernel_mass.constant_control", "exact transition density has unit mass",
                         abs(r.estimate - 1.0) <= k * r.stderr + 1e-12,
                         f"|mass - 1| <= {k:g} stderr", estimate=r.estimate, stderr=r.stderr))
    return checks, sweeps


def suite_moments(cfg: SuiteConfig):
    n = int(cfg.samples)
    K = int(cfg.K[0])
    F = cfg.build_field(K)
    x = np.zeros(F.dim)
    ts = [float(t) for t in cfg.t]
    tol = cfg.tol("moment_slope")
    checks, sweeps = [], {}
    lam = F.spec.lambdas
    for j in cfg.options.get("modes", [1, 4]):
        res = [kn.moment_mc(t, x, F, j, 1.0, n, cfg.seed + 10 * j + i) for i, t in enumerate(ts)]
        rep = kn.scaling_report(ts, res, 1.0, tol, "within", cfg.tol("stderr_gate"))
        # the same data divided by t/(1 + lambda_j t), for diagnosis only
        norm = [r.estimate * (1 + lam[j] * t) for r, t in zip(res, ts)]
        nslope = fit_power_law(list(zip(ts, norm))).exponent
        sweeps[f"moment_j{j}"] = (ts, [r.estimate for r in res], [r.stderr for r in res])
        checks.append(_check(f"moments.slope_j{j}", "second moment scales like t",
                             rep.passed, f"slope = 1 +- {tol:g}", inconclusive=rep.inconclusive,
                             report=rep, slope_after_removing_lambda_t=nslope, j=j))
    tq = float(cfg.options.get("t_large_j", 0.1))
    jl = int(cfg.options.get("large_j", 16))
    r_hi = kn.moment_mc(tq, x, F, jl, 1.0, n, cfg.seed + 500)
    r_lo = kn.moment_mc(tq, x, F, 1, 1.0, n, cfg.seed + 501)
    ratio = r_hi.estimate / r_lo.estimate
    checks.append(_check("moments.large_mode_suppression", "(1 + lambda_j t)^-1 improvement",
                         ratio <= cfg.tol("large_j_ratio"), f"ratio <= {cfg.tol('large_j_ratio'):.4g}",
                         ratio=ratio, j=jl, t=tq, high=r_hi.estimate, low=r_lo.estimate))
    C = cfg.constant_field(K)
    k = cfg.tol("sigmas")
    worst = 0.0
    rows = {}
    for j in (0, 1, 4):
        r = kn.moment_mc(tq, x, C, j, 1.0, n, cfg.seed + 600 + j)
        exact = float(C.matrix(x)[j, j] / rate_function(lam[j], tq))
        z = abs(r.estimate - exact) / max(r.stderr, 1e-300)
        worst = max(worst, z)
        rows[str(j)] = [r.estimate, r.stderr, exact]
    checks.append(_check("moments.constant_closed_form", "OU second moment g_jj(t) a_jj",
                         worst <= k, f"within {k:g} stderr", estimates=rows, worst_z=worst))
    return checks, sweeps


def _fd_configs(rng, n, K_max=8):
    for _ in range(n):
        K = int(rng.integers(1, K_max + 1))
        t = float(10 ** rng.uniform(-2, -0.3))
        j = int(rng.integers(0, K + 1))
        k = int(rng.integers(0, K + 1))
        yield K, t, j, k


def suite_derivative_scaling(cfg: SuiteConfig):
    rng = np.random.default_rng([cfg.seed, 5])
    checks, sweeps = [], {}
    errs = []
    n_cfg = int(cfg.options.get("fd_configs", 30))
    fields = {}
    for K, t, j, k in _fd_configs(rng, 10 * n_cfg):
        if len(errs) == n_cfg:
            break
        F = fields.setdefault(K, cfg.build_field(K))
        x = rng.standard_normal(K + 1) * 0.5
        wh = kn._Whitening(F, t)
        xp = wh.decay * x
        y = xp + np.linalg.cholesky(F.matrix(x) * wh.weight) @ rng.standard_normal(K + 1) / wh.gh
        kb = kn.KernelBatch(F, wh, x, y[None], base=F.matrix(y)[None])
        S = kb.z[0, j] * kb.z[0, k] - kb.A_tilde[0, j, k]
        if abs(S) < 0.1 * math.sqrt(kb.A_tilde[0, j, j] * kb.A_tilde[0, k, k]):
            continue  # near a zero of S the relative error is meaningless
        an = kn.analytic_dij(t, x, y, F, j, k)
        fd = kn.dij_kernel_fd(t, x, y, F, j, k)
        errs.append(abs(fd - an) / abs(an))
    checks.append(_check("derivative.fd_consistency", "x-derivatives of the frozen kernel",
                         len(errs) == n_cfg and max(errs) <= cfg.tol("fd_rel"),
                         f"relative error <= {cfg.tol('fd_rel'):g} on {n_cfg} configurations",
                         max_rel_error=max(errs), n=len(errs)))

    K = int(cfg.K[0])
    F = cfg.build_field(K)
    x = np.zeros(F.dim)
    ts = [float(t) for t in cfg.t]
    n = int(cfg.samples)
    zeta = float(cfg.options.get("zeta", 4.0))
    res = []
    raw = []
    for i, t in enumerate(ts):
        r = kn.diagonal_sum_mc(t, x, F, 0, n, cfg.seed + i, zeta)
        J = kn.cutoff_index(zeta, t)
        raw.append(r)
        res.append(r.scaled(t * t / J))
    rep = kn.scaling_report(ts, res, cfg.tol("diag_ratio_slope"), 0.0, "at_most", cfg.tol("stderr_gate"))
    sweeps["diagonal_sum_ratio"] = (ts, [r.estimate for r in res], [r.stderr for r in res])
    checks.append(_check("derivative.diagonal_sum_ratio", "diagonal sum bounded by J t^-2",
                         rep.passed, f"slope <= {cfg.tol('diag_ratio_slope'):g}",
                         inconclusive=rep.inconclusive, report=rep, zeta=zeta))

    t_off = float(cfg.options.get("t_offdiag", max(ts)))
    J = kn.cutoff_index(zeta, t_off)
    r0 = kn.diagonal_sum_mc(t_off, x, F, 0, n // 4, cfg.seed + 50, zeta)
    rJ = kn.diagonal_sum_mc(t_off, x, F, J, n // 4, cfg.seed + 51, zeta)
    checks.append(_check("derivative.offdiagonal_suppression", "l = J term below l = 0 term",
                         rJ.estimate < r0.estimate, "estimate(l=J) < estimate(l=0)",
                         l0=r0.estimate, lJ=rJ.estimate, J=J, t=t_off))

    C = cfg.constant_field(1)
    tc = float(cfg.options.get("t_constant", 0.1))
    r = kn.diagonal_sum_mc(tc, np.zeros(2), C, 0, n // 4, cfg.seed + 60, zeta)
    exact = kn.diagonal_sum_exact_constant(C, tc, 0, zeta)
    k = cfg.tol("sigmas")
    checks.append(_check("derivative.constant_closed_form", "Gaussian fourth moment of the S factor",
                         abs(r.estimate - exact) <= k * r.stderr, f"within {k:g} stderr",
                         estimate=r.estimate, stderr=r.stderr, exact=exact))
    return checks, sweeps


def suite_perturbation(cfg: SuiteConfig):
    K = int(cfg.K[0])
    F = cfg.build_field(K)
    n = int(cfg.samples)
    x = np.zeros(F.dim)
    ts = [float(t) for t in cfg.t]
    checks, sweeps = [], {}
    res = [kn.perturbation_integral_mc(t, x, F, n, cfg.seed + i) for i, t in enumerate(ts)]
    thr = cfg.tol("perturbation_slope")
    rep = kn.scaling_report(ts, res, thr, 0.0, "at_least", cfg.tol("stderr_gate"))
    sweeps["perturbation_t_sweep"] = (ts, [r.estimate for r in res], [r.stderr for r in res])
    checks.append(_check("perturbation.t_slope", "perturbation integral better than 1/t",
                         rep.passed, f"slope >= {thr:g}", inconclusive=rep.inconclusive, report=rep))

    C = cfg.constant_field(K)
    rc = kn.perturbation_integral_mc(ts[0], x, C, n, cfg.seed)
    checks.append(_check("perturbation.constant_control", "no perturbation for a constant field",
                         rc.estimate == 0.0, "estimate == 0", estimate=rc.estimate))

    t_mid = float(cfg.options.get("t_x", ts[len(ts) // 2]))
    R = float(cfg.options.get("x_sup", 4.0))
    xb = np.zeros(F.dim)
    xb[1] = R
    alpha = F.operator.alpha
    r0 = kn.perturbation_integral_mc(t_mid, x, F, n, cfg.seed + 40)
    rb = kn.perturbation_integral_mc(t_mid, xb, F, n, cfg.seed + 41)
    ratio = rb.estimate / r0.estimate
    bound = cfg.tol("x_dependence_margin") * (1 + R**alpha)
    checks.append(_check("perturbation.x_dependence", "growth in x at most (1 + |x|^alpha)",
                         ratio <= bound, f"ratio <= {bound:.4g}", ratio=ratio, x_sup=R, t=t_mid,
                         base=r0.estimate, shifted=rb.estimate))
    return checks, sweeps


# ---------------------------------------------------------------------------
# simulator

def suite_simulator(cfg: SuiteConfig):
    K = int(cfg.K[0])
    n_paths = int(cfg.samples)
    k = cfg.tol("sigmas")
    qs = cfg.qv_scale
    checks = []
    C = cfg.constant_field(K)
    u0 = cfg.options.get("u0", "poly(0.5,1)")
    lam = C.spec.lambdas
    modes = [0, 1, 2, 3]

    T = float(cfg.options.get("T_exact", 0.1))
    sc = sim.SimConfig(K, T / 10, T, cfg.seed, C, u0=u0, qv_scale=qs)
    X = sim.simulate_paths(sc, n_paths, "final").final()
    x0 = sc.initial_state()
    mean_z, var_z = [], []
    var_exact = qs * C.matrix(np.zeros(K + 1)).diagonal() * np.diag(integration_weights(lam, T))
    for m in modes:
        mu = math.exp(-lam[m] * T) * x0[m]
        mean_z.append(abs(X[:, m].mean() - mu) / (X[:, m].std(ddof=1) / math.sqrt(n_paths)))
        var_z.append(abs(X[:, m].var(ddof=1) - var_exact[m]) / (var_exact[m] * math.sqrt(2 / (n_paths - 1))))
    checks.append(_check("simulator.ou_mean", "exact OU mean", max(mean_z) <= k,
                         f"within {k:g} stderr", z=mean_z, modes=modes))
    checks.append(_check("simulator.ou_variance", "exact OU variance", max(var_z) <= k,
                         f"within {k:g} stderr", z=var_z, modes=modes))

    Ts = float(cfg.options.get("T_stationary", 2.0))
    sc = sim.SimConfig(K, 0.05, Ts, cfg.seed + 1, C, u0=u0, qv_scale=qs)
    X = sim.simulate_paths(sc, n_paths, "final").final()
    sig2 = float(C.operator.value) ** 2
    st_z = []
    for m in (1, 2, 3):
        v = float(sim.ou_stationary_variance(lam[m], sig2, qs))
        st_z.append(abs(X[:, m].var(ddof=1) - v) / (v * math.sqrt(2 / (n_paths - 1))))
    checks.append(_check("simulator.stationary_variance", "sigma^2 / (2 lambda_n)", max(st_z) <= k,
                         f"within {k:g} stderr", z=st_z, modes=[1, 2, 3]))

    dt = 0.01
    a = C.matrix(np.zeros(K + 1)) * qs
    D = np.diag(np.exp(-lam * dt))
    one = a * integration_weights(lam, 2 * dt)
    two = D @ (a * integration_weights(lam, dt)) @ D + a * integration_weights(lam, dt)
    cov_err = float(np.max(np.abs(one - two)))
    mean_err = float(np.max(np.abs(np.exp(-2 * lam * dt) - np.exp(-lam * dt) ** 2)))
    checks.append(_check("simulator.composition", "two steps of dt equal one step of 2 dt",
                         max(cov_err, mean_err) <= cfg.tol("composition"),
                         f"<= {cfg.tol('composition'):g}", covariance_error=cov_err, mean_error=mean_err))

    F = cfg.build_field(K)
    dt_w = float(cfg.options.get("dt", 1e-3))
    Tw = float(cfg.t[0])
    sw = sim.SimConfig(K, dt_w, Tw, cfg.seed + 2, F, u0=cfg.options.get("u0_field", "e_1"), qv_scale=qs)
    traj = sim.simulate_paths(sw, n_paths)
    rep = sim.weak_form_residual(traj, 1, F, qv_scale=qs)
    lo, hi = cfg.tol("qv_ratio")
    checks.append(_check("simulator.weak_form_qv", "quadratic variation equals int a ds",
                         lo <= rep.mean_mismatch <= hi, f"mean ratio in [{lo:g}, {hi:g}]",
                         mean_mismatch=rep.mean_mismatch, stderr=rep.mismatch_stderr,
                         K=K, dt=dt_w, T=Tw, n_paths=n_paths))
    energy = float(np.mean(np.sum(traj.final() ** 2, axis=-1)))
    x0 = sw.initial_state()
    ceiling = float(x0 @ x0 + Tw * (K + 1) * F.Lambda1 * qs)
    checks.append(_check("simulator.energy_bound", "E|X_T|^2 <= |X_0|^2 + T K Lambda1",
                         energy <= ceiling, "mean energy below ceiling", energy=energy, ceiling=ceiling))

    z = sim.SimConfig(K, dt_w, Tw, cfg.seed, F.scaled(0.0), u0=sw.u0)
    zt = sim.simulate_path(z)
    zr = sim.weak_form_residual(zt, 1, F)
    det, noise = sim.decompose_path(zt, F.spec)
    per_step = float(np.max(np.abs(np.diff(zr.residual_path))))
    bound = (dt_w * lam[1]) ** 3 * abs(x0[1])
    checks.append(_check("simulator.zero_noise", "deterministic decay without noise",
                         float(np.max(np.abs(noise))) <= 1e-10 and per_step <= bound,
                         "noise part <= 1e-10; residual step <= (lambda dt)^3 |x|",
                         noise_max=float(np.max(np.abs(noise))), residual_step=per_step))
    first = sim.simulate_paths(sw, 5)
    again = sim.simulate_paths(sw, 5)
    # batched BLAS may round differently with batch size, so across block
    # sizes only agreement to roundoff is expected
    block_gap = float(np.max(np.abs(first.states - traj.states[:5])))
    checks.append(_check("simulator.determinism", "same config, same trajectory",
                         np.array_equal(first.states, again.states) and block_gap <= 1e-12,
                         "bitwise equal; block size changes <= 1e-12", block_size_gap=block_gap))
    return checks, {}


def suite_uniqueness(cfg: SuiteConfig):
    n_paths = int(cfg.samples)
    if n_paths < 100:
        raise sim.InsufficientSamplesError("law_distance needs at least 100 paths")
    T = float(cfg.t[0])
    Ks = sorted(int(k) for k in cfg.K)
    dt_ref = float(cfg.options.get("dt_finest", 5e-4))
    qs = cfg.qv_scale
    u0 = cfg.options.get("u0", "bump(0.3,0.25)")
    checks = []

    def config(K, dt, seed, field_cfg=None):
        return sim.SimConfig(K, dt, T, seed, cfg.build_field(K, field_cfg), u0=u0,
                             noise_dt=dt_ref, qv_scale=qs)

    # coarse (K, dt) pairs halve dt per doubling of K, ending at the reference
    levels = [(K, dt_ref * (Ks[-1] // K)) for K in Ks]
    ref = sim.pairing_samples(config(*levels[-1], cfg.seed), 1, n_paths)
    dists = {}
    for K, dt in levels[:-1]:
        s = sim.pairing_samples(config(K, dt, cfg.seed), 1, n_paths)
        d = sim.law_distance_from_samples(s, ref)
        dists[f"K={K},dt={dt:g}"] = {"wasserstein": d.wasserstein, "ks": d.ks}
    w = [v["wasserstein"] for v in dists.values()]
    checks.append(_check("uniqueness.refinement", "distance to the finest law shrinks under refinement",
                         all(w[i + 1] < w[i] for i in range(len(w) - 1)),
                         "Wasserstein strictly decreasing", distances=dists,
                         reference=f"K={levels[-1][0]},dt={levels[-1][1]:g}"))

    reps = int(cfg.options.get("ks_repetitions", 100))
    rp = int(cfg.options.get("ks_paths", 500))
    rK = int(cfg.options.get("ks_K", 8))
    rdt = float(cfg.options.get("ks_dt", 0.01))
    crit = sim.ks_critical_value(rp, rp, cfg.tol("ks_alpha"))
    below = 0
    for r in range(reps):
        a = sim.SimConfig(rK, rdt, T, cfg.seed + 1000 + 2 * r, cfg.build_field(rK), u0=u0, qv_scale=qs)
        b = sim.SimConfig(rK, rdt, T, cfg.seed + 1001 + 2 * r, cfg.build_field(rK), u0=u0, qv_scale=qs)
        d = sim.law_distance(a, b, 1, rp)
        below += d.ks < crit
    frac = below / reps
    checks.append(_check("uniqueness.same_config_ks", "independent runs share one law",
                         frac >= cfg.tol("ks_fraction"),
                         f"fraction below the {cfg.tol('ks_alpha'):g} critical value >= {cfg.tol('ks_fraction'):g}",
                         fraction=frac, repetitions=reps, n_paths=rp, critical=crit))

    one_crit = math.sqrt(-0.5 * math.log(cfg.tol("ks_alpha") / 2)) / math.sqrt(n_paths)
    res = {}
    ok = True
    for K, dt in (levels[0], (Ks[0], rdt)):
        c = sim.SimConfig(K, dt, T, cfg.seed + 7, cfg.constant_field(K), u0=u0, qv_scale=qs)
        ks = sim.ks_against_exact(c, 1, n_paths)
        res[f"K={K},dt={dt:g}"] = float(ks.statistic)
        ok &= ks.statistic < one_crit
    checks.append(_check("uniqueness.constant_exact_law", "constant field matches its Gaussian law",
                         ok, f"KS below {one_crit:.4g}", statistics=res))
    return checks, {}


# ---------------------------------------------------------------------------
# hypotheses

def suite_hypotheses(cfg: SuiteConfig):
    K = int(cfg.K[0])
    rng = np.random.default_rng([cfg.seed, 9])
    F = cfg.build_field(K)
    op = F.operator
    spec = F.spec
    n = int(cfg.samples)
    checks = []
    decay = (np.arange(K + 1) + 1.0) ** -2.0
    states = rng.standard_normal((n, K + 1)) * decay
    U = reconstruct(states, spec)

    fh = validate_fholder(op, U[: max(4, n // 4)], [1e-3, 1e-2, 1e-1], K)
    checks.append(_check("hypotheses.fholder", "weak Hoelder condition with k-decay",
                         fh["passed"] and fh["superpolynomial"],
                         "finite kappa1 and superpolynomial decay in k",
                         kappa1=fh["kappa1"], head_exponent=fh["head_exponent"],
                         tail_exponent=fh["tail_exponent"], superpolynomial=fh["superpolynomial"]))
    big = rng.standard_normal((n, K + 1)) * 5.0 * decay
    ab = validate_abnd(op, np.vstack([U, reconstruct(big, spec)]))
    checks.append(_check("hypotheses.abnd", "A(u) inside [kappa2, 1/kappa2]", ab["passed"],
                         "range inside the declared bounds", **ab))
    gamma = float(op.gamma)
    fits = [validate_fdecay(op, u, gamma, cfg.tol("fdecay_slack")) for u in U[:4]]
    checks.append(_check("hypotheses.fdecay", "cosine coefficients of A^2 decay at rate gamma",
                         all(f.passed for f in fits), f"exponent >= {gamma - cfg.tol('fdecay_slack'):g}",
                         exponents=[f.exponent for f in fits], degenerate=[f.degenerate for f in fits]))

    errs = []
    for field_cfg in (cfg.field, INNER_PRODUCT_FIELD):
        G = cfg.build_field(K, field_cfg)
        for x in states[:8]:
            s = toeplitz_split(G, x, tol=1.0)
            errs.append(float(np.max(np.abs(s.a1_matrix + s.a2 - G.matrix(x)))))
    checks.append(_check("hypotheses.toeplitz_split", "a = Toeplitz part + Hankel part",
                         max(errs) <= cfg.tol("split"), f"reconstruction error <= {cfg.tol('split'):g}",
                         max_error=max(errs)))

    xs = np.linspace(-10, 10, 10)
    lams = np.geomspace(1e-2, 1e3, 10)
    ts_ = np.geomspace(1e-4, 1, 10)
    Xg, Lg, Tg = np.meshgrid(xs, lams, ts_, indexing="ij")
    margins = []
    for R in (0.5, 2.0, 8.0):
        lhs = np.abs(np.clip(Xg, -R, R) - np.clip(Xg * np.exp(-Lg * Tg), -R, R))
        margins.append(float(np.min(R * Lg * Tg - lhs)))
    checks.append(_check("hypotheses.clamp_bound", "|p_R(x) - p_R(x e^(-lambda t))| <= R lambda t",
                         min(margins) >= -1e-12, "margin >= -1e-12 on 1000 points per R",
                         margin=min(margins)))

    R = 1.0
    wide = rng.standard_normal((n, K + 1)) * 3.0 * decay
    trunc = kn.truncate_state(wide, R)
    z = rng.standard_normal((n, K + 1))
    sand = spectral_sandwich(F, trunc, z)
    pairs = list(zip(wide[::2], wide[1::2]))
    ref = holder_modulus_probe(F, pairs)
    tp = [(kn.truncate_state(x, R), kn.truncate_state(y, R)) for x, y in pairs]
    got = holder_modulus_probe(F, tp)
    ratio = got["schur_distance"] / np.maximum(ref["modulus"], 1e-300)
    ok = sand["passed"] and bool(np.all(ratio <= ref["c1"] * 1.01 + 1e-15))
    checks.append(_check("hypotheses.truncation_preserved", "truncated field keeps its constants",
                         ok, "sandwich holds; modulus within the untruncated constant",
                         sandwich=sand, c1=ref["c1"], worst_ratio=float(ratio.max())))
    return checks, {}


SUITE_FUNCTIONS = {
    "linalg": suite_linalg,
    "jaffard": suite_jaffard,
    "kernel_mass": suite_kernel_mass,
    "moments": suite_moments,
    "derivative_scaling": suite_derivative_scaling,
    "perturbation": suite_perturbation,
    "simulator": suite_simulator,
    "uniqueness": suite_uniqueness,
    "hypotheses": suite_hypotheses,
}

CHECK_IDS = {
    "linalg": ["linalg.rate_sandwich", "linalg.whitening_cauchy_schwarz", "linalg.monotonicity",
               "linalg.whitened_difference", "linalg.spectral_sandwich", "linalg.determinant_ratio",
               "linalg.density_ratio", "linalg.schur_complement", "linalg.decay_inheritance",
               "linalg.inversion_residual"],
    "jaffard": ["jaffard.offdiagonal_decay", "jaffard.diagonal_lower_bound"],
    "kernel_mass": ["kernel_mass.uniform_in_K", "kernel_mass.small_time", "kernel_mass.constant_control"],
    "moments": ["moments.slope_j1", "moments.slope_j4", "moments.large_mode_suppression",
                "moments.constant_closed_form"],
    "derivative_scaling": ["derivative.fd_consistency", "derivative.diagonal_sum_ratio",
                           "derivative.offdiagonal_suppression", "derivative.constant_closed_form"],
    "perturbation": ["perturbation.t_slope", "perturbation.constant_control", "perturbation.x_dependence"],
    "simulator": ["simulator.ou_mean", "simulator.ou_variance", "simulator.stationary_variance",
                  "simulator.composition", "simulator.weak_form_qv", "simulator.energy_bound",
                  "simulator.zero_noise", "simulator.determinism"],
    "uniqueness": ["uniqueness.refinement", "uniqueness.same_config_ks", "uniqueness.constant_exact_law"],
    "hypotheses": ["hypotheses.fholder", "hypotheses.abnd", "hypotheses.fdecay", "hypotheses.toeplitz_split",
                   "hypotheses.clamp_bound", "hypotheses.truncation_preserved"],
}

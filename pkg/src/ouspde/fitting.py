"""Power-law regression shared by every decay and scaling check."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class DecayFit:
    """Result of a log-log least-squares fit ``value ~ constant * param**exponent``.

    For decay checks ``exponent`` is reported as a positive decay rate, i.e. the
    model is ``value ~ constant * param**(-exponent)``; see ``decay_fit``.
    ``degenerate`` marks fits where too few values rose above the noise floor,
    which callers treat as infinitely fast decay.
    """

    exponent: float
    constant: float
    max_residual_ratio: float
    passed: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        # keep the wire name stable
        d["pass"] = d.pop("passed")
        for key in ("exponent", "constant", "max_residual_ratio"):
            if not np.isfinite(d[key]):
                d[key] = None if np.isnan(d[key]) else ("inf" if d[key] > 0 else "-inf")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DecayFit":
        def num(v):
            if v is None:
                return float("nan")
            return float(v)

        return cls(
            exponent=num(d["exponent"]),
            constant=num(d["constant"]),
            max_residual_ratio=num(d["max_residual_ratio"]),
            passed=bool(d["pass"]),
            degenerate=bool(d.get("degenerate", False)),
        )


def fit_power_law(pairs, target: float | None = None, tol: float = 0.0) -> DecayFit:
    """Least-squares fit of ``log value = log constant + exponent * log param``.

    Parameters
    ----------
    pairs : iterable of (param, value)
        At least three pairs with positive params and values.
    target : float, optional
        If given, ``passed`` is ``abs(exponent - target) <= tol``.

    Returns
    -------
    DecayFit
        ``max_residual_ratio`` is the worst multiplicative misfit,
        ``max |value / fitted - 1|``.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] != 2:
        raise ValueError("need at least three (param, value) pairs")
    p, v = arr[:, 0], arr[:, 1]
    if np.any(p <= 0) or np.any(v <= 0):
        raise ValueError("power-law fit requires positive params and values")
    lp, lv = np.log(p), np.log(v)
    slope, intercept = np.polyfit(lp, lv, 1)
    fitted = np.exp(intercept + slope * lp)
    resid = float(np.max(np.abs(v / fitted - 1.0)))
    passed = True if target is None else bool(abs(slope - target) <= tol)
    return DecayFit(float(slope), float(np.exp(intercept)), resid, passed)


def decay_fit(params, values, target_exponent: float | None = None,
              slack: float = 0.25, floor: float = 1e-14) -> DecayFit:
    """Fit ``|values| ~ constant * params**(-exponent)``.

    Values below ``floor`` are dropped. With fewer than three survivors the fit is
    degenerate and counts as a pass (decay faster than anything measurable).
    ``passed`` requires ``exponent >= target_exponent - slack``.
    """
    params = np.asarray(params, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    keep = values > floor
    if keep.sum() < 3:
        return DecayFit(float("inf"), float(values.max(initial=0.0)), 0.0, True, True)
    p, v = params[keep], values[keep]
    lp, lv = np.log(p), np.log(v)
    slope, intercept = np.polyfit(lp, lv, 1)
    fitted = np.exp(intercept + slope * lp)
    resid = float(np.max(np.abs(v / fitted - 1.0)))
    exponent = float(-slope)
    passed = True if target_exponent is None else exponent >= target_exponent - slack
    return DecayFit(exponent, float(np.exp(intercept)), resid, bool(passed))

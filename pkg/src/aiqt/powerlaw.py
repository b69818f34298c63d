"""Ordinary least squares power-law fits on log-transformed sweep data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class PowerLawFit:
    """err = A * k**B, fitted by OLS on (ln k, ln err)."""

    A: float
    B: float
    r_squared: float


def fit_power_law(k_values, err_values) -> PowerLawFit:
    """Fit ``err = A * k**B``; refuses < 3 points or nonpositive errors."""
    k = np.asarray(k_values, dtype=np.float64)
    e = np.asarray(err_values, dtype=np.float64)
    if k.shape != e.shape or k.ndim != 1:
        raise InvalidArgumentError("fit_power_law: k and err must be 1-D and aligned")
    if np.unique(k).size < 3:
        raise InvalidArgumentError("fit_power_law: need at least 3 distinct k values")
    if np.any(k <= 0) or np.any(e <= 0):
        raise InvalidArgumentError("fit_power_law: k and err must be positive")
    lk, le = np.log(k), np.log(e)
    B, lnA = np.polyfit(lk, le, 1)
    pred = lnA + B * lk
    ss_res = float(np.sum((le - pred) ** 2))
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(A=float(np.exp(lnA)), B=float(B), r_squared=float(r2))

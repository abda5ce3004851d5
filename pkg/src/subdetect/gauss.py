"""Standard normal numerics and the truncated second moment ``nu_tau``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "TruncationConstant",
    "std_normal_cdf",
    "std_normal_tail",
    "std_normal_quantile",
    "std_normal_pdf",
    "mills_ratio",
    "nu_tau",
]

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_tail(x):
    """Upper tail ``P(Z > x)``, accurate far into the tail."""
    return special.ndtr(np.negative(x))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)[()]


def std_normal_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValueError("quantile requires p in the open interval (0, 1)")
    return special.ndtri(p_arr)[()]


def mills_ratio(x: float) -> float:
    """``P(Z > x) / pdf(x)`` via the scaled complementary error function.

    ``erfcx`` absorbs the ``exp(x**2/2)`` factor, so nothing underflows
    for large ``x``.
    """
    return _SQRT_HALF_PI * float(special.erfcx(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class TruncationConstant:
    """Threshold ``tau`` and ``nu = E[Z^2 | |Z| > tau]``."""

    tau: float
    nu: float


def nu_tau(tau: float) -> TruncationConstant:
    """Conditional second moment of a standard normal beyond ``tau``.

    Integrating by parts gives ``E[Z^2 1(|Z|>t)] = 2 (t pdf(t) + P(Z>t))``,
    so ``nu = 1 + t / M(t)`` with ``M`` the Mills ratio.  This form stays
    finite and accurate for every finite ``tau``; ``tau = inf`` maps to
    ``nu = inf`` (no coordinate can survive the truncation).
    """
    tau = float(tau)
    if math.isnan(tau) or tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if math.isinf(tau):
        return TruncationConstant(tau, math.inf)
    return TruncationConstant(tau, 1.0 + tau / mills_ratio(tau))

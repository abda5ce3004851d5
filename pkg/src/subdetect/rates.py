"""Separation-rate terms, the dominating regime, and comparison rates.

All rates are on the squared-signal scale: a rate value ``r`` corresponds
to a signal strength ``mu = sqrt(r)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core_model import ProblemShape, ShapeError

__all__ = [
    "Regime",
    "RateBreakdown",
    "CorollaryConstants",
    "Corollary",
    "log_binom",
    "log_e_binom",
    "psi",
    "phi",
    "beta",
    "rate_breakdown",
    "bi_rate",
    "s1_equals_1_regime",
    "corollary_rate",
]


def log_binom(n: int, k: int) -> float:
    """``log C(n, k)`` through log-gamma."""
    n, k = int(n), int(k)
    if not 0 <= k <= n:
        raise ValueError(f"log_binom needs 0 <= k <= n, got n={n}, k={k}")
    if k == 0 or k == n:
        return 0.0
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_e_binom(n: int, k: int) -> float:
    """``log(e * C(n, k))`` without forming the coefficient."""
    return 1.0 + log_binom(n, k)


def _check(s1, s2, d1, d2) -> None:
    ProblemShape(d1, d2, s1, s2)


def psi(s1: int, s2: int, d1: int, d2: int) -> float:
    _check(s1, s2, d1, d2)
    return math.log1p(d2 / s2**2 * log_e_binom(d1, s1)) / s1


def phi(s1: int, s2: int, d1: int, d2: int) -> float:
    _check(s1, s2, d1, d2)
    return d1 / s1**2 * math.log1p(d2 / s2**2)


def beta(s1: int, s2: int, d1: int, d2: int) -> float:
    """Extra Bonferroni term; its indicator uses a strict inequality."""
    _check(s1, s2, d1, d2)
    if d1 / s1**2 * log_e_binom(d2, s2) > 1.0:
        return log_binom(d2, s2) / (s1 * s2)
    return 0.0


class Regime(str, enum.Enum):
    """Which term attains ``Rtilde``; declaration order is the tie-break."""

    PhiA = "PhiA"
    PhiB = "PhiB"
    PsiBetaC = "PsiBetaC"
    PsiBetaD = "PsiBetaD"


@dataclass(frozen=True)
class RateBreakdown:
    shape: ProblemShape
    psi12: float
    psi21: float
    phi12: float
    phi21: float
    beta12: float
    beta21: float
    R: float
    Rtilde: float
    regime: Regime

    def regime_terms(self) -> dict[Regime, float]:
        return {
            Regime.PhiA: self.phi12,
            Regime.PhiB: self.phi21,
            Regime.PsiBetaC: self.psi12 + self.beta21,
            Regime.PsiBetaD: self.psi21 + self.beta12,
        }

    def as_dict(self) -> dict:
        return {
            "d1": self.shape.d1, "d2": self.shape.d2, "s1": self.shape.s1, "s2": self.shape.s2,
            "psi12": self.psi12, "psi21": self.psi21,
            "phi12": self.phi12, "phi21": self.phi21,
            "beta12": self.beta12, "beta21": self.beta21,
            "R": self.R, "Rtilde": self.Rtilde, "regime": self.regime.value,
        }


def rate_breakdown(shape: ProblemShape) -> RateBreakdown:
    d1, d2, s1, s2 = shape.as_tuple()
    psi12, psi21 = psi(s1, s2, d1, d2), psi(s2, s1, d2, d1)
    phi12, phi21 = phi(s1, s2, d1, d2), phi(s2, s1, d2, d1)
    beta12, beta21 = beta(s1, s2, d1, d2), beta(s2, s1, d2, d1)
    r = min(psi12 + psi21, phi12, phi21)
    terms = [
        (Regime.PhiA, phi12),
        (Regime.PhiB, phi21),
        (Regime.PsiBetaC, psi12 + beta21),
        (Regime.PsiBetaD, psi21 + beta12),
    ]
    # min() keeps the first minimiser, which realises the priority order
    regime, r_tilde = min(terms, key=lambda item: item[1])
    return RateBreakdown(shape, psi12, psi21, phi12, phi21, beta12, beta21, r, r_tilde, regime)


def bi_rate(shape: ProblemShape) -> float:
    """Asymptotic comparison rate of the scan-test literature."""
    d1, d2, s1, s2 = shape.as_tuple()
    if s1 == d1 or s2 == d2:
        raise ShapeError("bi_rate requires s1 < d1 and s2 < d2")
    dense = d1 * d2 / (s1**2 * s2**2)
    scan = 2.0 * (math.log(d1 / s1) / s2 + math.log(d2 / s2) / s1)
    return min(dense, scan)


@dataclass(frozen=True)
class TableRow:
    label: str
    rate: float
    test: str


def s1_equals_1_regime(shape: ProblemShape) -> TableRow:
    """Closed-form rate and optimal test when a single row is elevated.

    The three rows are: ``log(e d1) > s2`` (very sparse columns); the
    dense split ``d2 log(e d1) / s2**2 <= 1``; and the remaining sparse case.
    """
    d1, d2, s1, s2 = shape.as_tuple()
    if s1 != 1:
        raise ShapeError("s1_equals_1_regime requires s1 = 1")
    le = math.log(math.e * d1)
    ratio = d2 * le / s2**2
    if le > s2:
        return TableRow("log_ed1_gt_s2", math.log(math.e * d2 / s2) + le / s2, "max_trunc_chi2")
    if ratio <= 1.0:
        return TableRow("dense", ratio, "max_lin")
    return TableRow("sparse", math.log1p(ratio), "max_trunc_chi2")


class Corollary(str, enum.Enum):
    Cor1 = "Cor1"
    Cor2 = "Cor2"
    Cor3 = "Cor3"
    Cor4 = "Cor4"


@dataclass(frozen=True)
class CorollaryConstants:
    """Assumption constants for the closed-form corollaries.

    ``c_bar`` bounds ``s1**2 / (d1 s2)`` from below, ``c1``/``c2`` cap the
    sparsity fractions, ``alpha`` is the polynomial gap exponent in
    ``d2 >= s2**(2+alpha)`` and ``balance`` is the allowed ratio band for
    ``s1 log(d1/s1)`` against ``s2 log(d2/s2)``.
    """

    c_bar: float = (2.0 * math.e) ** -4
    c1: float = 0.01
    c2: float = 0.01
    alpha: float = 0.5
    balance: float = 4.0


def _sparse_enough(shape: ProblemShape, k: CorollaryConstants) -> bool:
    d1, d2, s1, s2 = shape.as_tuple()
    return (
        s1 <= k.c1 * d1
        and s2 <= k.c2 * d2
        and d1 / s1 >= math.e * math.log(d2 / s2)
        and d2 >= s2 ** (2.0 + k.alpha)
    )


def corollary_rate(shape: ProblemShape, which: Corollary | str,
                   constants: CorollaryConstants | None = None) -> tuple[bool, float]:
    """Check a corollary's hypotheses and evaluate its simplified rate.

    Returns ``(assumptions_satisfied, simplified_rate)``; the rate is
    ``nan`` when its formula is undefined for the shape.
    """
    k = constants or CorollaryConstants()
    which = Corollary(which)
    d1, d2, s1, s2 = shape.as_tuple()

    if which is Corollary.Cor1:
        if s1 == d1 or s2 == d2:
            return False, math.nan
        r1, r2 = d1 / s1, d2 / s2
        ok = min(r1, r2) >= math.e
        if ok:
            loglog = max(math.log(math.log(r1)) / math.log(r2), math.log(math.log(r2)) / math.log(r1))
            balance = s1 * math.log(r1) / (s2 * math.log(r2))
            ok = loglog <= 1.0 and 1.0 / k.balance <= balance <= k.balance
        rate = min(d1 * d2 / (s1**2 * s2**2), math.log(r1) / s2 + math.log(r2) / s1)
        return ok, rate

    if which is Corollary.Cor2:
        ok = s1**2 >= k.c_bar * d1 * s2 and _sparse_enough(shape, k)
        return ok, math.log1p(d1 * s2 * math.log(d2) / s1**2) / s2

    if which is Corollary.Cor3:
        ok = s1 == s2**2 and d1 == d2**2 and d1 >= s1 ** (2.0 + k.alpha)
        return ok, math.log(d1) / math.sqrt(s1)

    ok = s1**2 > d1 * s2 * math.log(d2) and _sparse_enough(shape, k)
    return ok, d1 / s1**2 * math.log(d2)

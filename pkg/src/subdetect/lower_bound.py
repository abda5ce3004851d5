"""Second moment of the likelihood ratio against a uniform block prior and
the minimax risk lower bound it implies.

Under the prior drawing both supports uniformly and setting every block
entry to ``mu``, the null second moment of the likelihood ratio is
``E[exp(mu**2 W1 W2)]`` with independent overlaps ``W_j`` of two uniform
size-``s_j`` subsets of ``[d_j]``.  Conditioning on the first subset, the
overlap counts how many of ``s_j`` draws without replacement land in a
fixed set of ``s_j`` out of ``d_j`` items, which is hypergeometric.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import optimize, special, stats

from . import _montecarlo as mc
from .core_model import ProblemShape, SeedSpec, ShapeError, generator_for, noise_matrix
from .detectors import DEFAULT_CAP, EnumerationCapError

__all__ = [
    "Method",
    "OverlapLaw",
    "SecondMomentReport",
    "hypergeom_overlap_pmf",
    "second_moment_exact",
    "second_moment_binom_bound",
    "log_second_moment_binom_bound",
    "domination_check",
    "mc_second_moment_likelihood",
    "mc_second_moment_overlap",
    "risk_lower_bound",
    "risk_bound_from_moment",
    "mu_for_lower_bound",
    "partial_second_moment",
]


class Method(str, enum.Enum):
    ExactHypergeometric = "ExactHypergeometric"
    BinomialDominationBound = "BinomialDominationBound"
    MonteCarloOverlap = "MonteCarloOverlap"
    MonteCarloLikelihood = "MonteCarloLikelihood"


@dataclass(frozen=True)
class OverlapLaw:
    """Law of ``|S & S'|`` for independent uniform size-``s`` subsets of ``[d]``."""

    d: int
    s: int
    support: np.ndarray
    log_pmf: np.ndarray

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_pmf)


def hypergeom_overlap_pmf(d: int, s: int) -> OverlapLaw:
    d, s = int(d), int(s)
    if not 1 <= s <= d:
        raise ShapeError(f"need 1 <= s <= d, got d={d}, s={s}")
    k = np.arange(max(0, 2 * s - d), s + 1)
    return OverlapLaw(d, s, k, stats.hypergeom.logpmf(k, d, s, s))


def risk_bound_from_moment(second_moment: float) -> float:
    """``1 - sqrt(E - 1) / 2`` clamped to ``[0, 1]``."""
    if not second_moment > 1.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - 0.5 * math.sqrt(second_moment - 1.0)))


@dataclass(frozen=True)
class SecondMomentReport:
    shape: ProblemShape
    mu: float
    second_moment: float
    log_second_moment: float
    method: Method
    se: float | None = None

    @property
    def tv_upper_bound(self) -> float:
        """Cauchy-Schwarz bound on total variation, capped at 1."""
        return min(1.0, 0.5 * math.sqrt(max(self.second_moment - 1.0, 0.0)))

    @property
    def risk_lower_bound(self) -> float:
        return risk_bound_from_moment(self.second_moment)

    def as_dict(self) -> dict:
        return {
            "d1": self.shape.d1, "d2": self.shape.d2, "s1": self.shape.s1, "s2": self.shape.s2,
            "mu": self.mu, "second_moment": self.second_moment, "log_second_moment": self.log_second_moment,
            "tv_upper_bound": self.tv_upper_bound, "risk_lower_bound": self.risk_lower_bound,
            "method": self.method.value, "se": self.se,
        }


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise ValueError(f"mu must be finite and nonnegative, got {mu}")
    return mu


def _exp_or_inf(log_value: float) -> float:
    return math.exp(log_value) if log_value < 709.0 else math.inf


def _log_mgf_exact(shape: ProblemShape, mu: float, row_mask=None) -> float:
    w1 = hypergeom_overlap_pmf(shape.d1, shape.s1)
    w2 = hypergeom_overlap_pmf(shape.d2, shape.s2)
    k1, lp1 = w1.support, w1.log_pmf
    if row_mask is not None:
        keep = np.array([row_mask(int(k)) for k in k1], dtype=bool)
        if not keep.any():
            return -math.inf
        k1, lp1 = k1[keep], lp1[keep]
    exponent = mu * mu * np.multiply.outer(k1, w2.support).astype(np.float64)
    return float(special.logsumexp(exponent + lp1[:, None] + w2.log_pmf[None, :]))


def second_moment_exact(shape: ProblemShape, mu: float) -> SecondMomentReport:
    """``E[exp(mu**2 W1 W2)]`` summed over all overlap pairs in log space.

    ``second_moment`` is ``inf`` when the value overflows a double; the
    log value stays finite.
    """
    mu = _check_mu(mu)
    log_m = 0.0 if mu == 0.0 else _log_mgf_exact(shape, mu)
    return SecondMomentReport(shape, mu, _exp_or_inf(log_m), log_m, Method.ExactHypergeometric)


def partial_second_moment(shape: ProblemShape, mu: float, row_overlaps) -> float:
    """``E[exp(mu**2 W1 W2) 1(W1 in A)]`` for the set ``A`` of row overlaps."""
    allowed = {int(k) for k in row_overlaps}
    return _exp_or_inf(_log_mgf_exact(shape, _check_mu(mu), lambda k: k in allowed))


def _domination_p(d: int, s: int) -> float:
    if s >= d:
        raise ShapeError("binomial domination needs s < d")
    p = s / (d - s)
    if p > 1.0:
        raise ShapeError(f"binomial domination needs 2s <= d, got d={d}, s={s}")
    return p


def log_second_moment_binom_bound(shape: ProblemShape, mu: float) -> float:
    """Log of ``E[exp(mu**2 X Y)]`` with ``X ~ Bin(s1, p1)``, ``Y ~ Bin(s2, p2)``,
    ``p_j = s_j / (d_j - s_j)``."""
    mu = _check_mu(mu)
    p1 = _domination_p(shape.d1, shape.s1)
    p2 = _domination_p(shape.d2, shape.s2)
    k = np.arange(shape.s1 + 1)
    log_px = stats.binom.logpmf(k, shape.s1, p1)
    # E[exp(t Y)] = (1 - p2 + p2 e^t)^s2
    log_one_minus = math.log1p(-p2) if p2 < 1.0 else -math.inf
    inner = np.logaddexp(log_one_minus, math.log(p2) + k * mu * mu)
    return float(special.logsumexp(log_px + shape.s2 * inner))


def second_moment_binom_bound(shape: ProblemShape, mu: float) -> float:
    return _exp_or_inf(log_second_moment_binom_bound(shape, mu))


def domination_check(d: int, s: int) -> tuple[bool, float]:
    """Compare upper tails of the overlap law and ``Bin(s, s/(d - s))``.

    Returns whether ``P(W > t) <= P(B > t)`` for every integer ``t`` (up to
    ``1e-12``) and the largest signed excess ``P(W > t) - P(B > t)``.
    """
    p = _domination_p(d, s)
    t = np.arange(-1, s + 1)
    excess = stats.hypergeom.sf(t, d, s, s) - stats.binom.sf(t, s, p)
    worst = float(np.max(excess))
    return worst <= 1e-12, worst


def _subset_indicators(d: int, s: int) -> np.ndarray:
    rows = list(combinations(range(d), s))
    out = np.zeros((len(rows), d))
    for i, c in enumerate(rows):
        out[i, list(c)] = 1.0
    return out


def mc_second_moment_likelihood(shape: ProblemShape, mu: float, n_reps: int, seed: int,
                                threads: int = 1, cap: int = DEFAULT_CAP) -> SecondMomentReport:
    """Average of the squared mixture likelihood ratio over null draws.

    The ratio averages ``exp(mu * block_sum - s1 s2 mu**2 / 2)`` over every
    support pair; the reported ``se`` is the jackknife standard error of
    the mean.

    Raises
    ------
    EnumerationCapError
        If the number of support pairs exceeds ``cap``.
    """
    mu = _check_mu(mu)
    n_pairs = math.comb(shape.d1, shape.s1) * math.comb(shape.d2, shape.s2)
    if n_pairs > cap:
        raise EnumerationCapError(n_pairs, cap)
    a = _subset_indicators(shape.d1, shape.s1)
    b = _subset_indicators(shape.d2, shape.s2)
    shift = 0.5 * shape.s1 * shape.s2 * mu * mu
    log_pairs = math.log(n_pairs)
    root = mc.stream_root(seed, mc.NULL_STREAM)
    chunk = max(1, min(4096, 2**22 // n_pairs))

    def block(start):
        stop = min(start + chunk, n_reps)
        ys = np.stack([noise_matrix(shape.d1, shape.d2, SeedSpec(root, r)) for r in range(start, stop)])
        sums = np.einsum("pi,nij,qj->npq", a, ys, b).reshape(stop - start, -1)
        log_l = special.logsumexp(mu * sums - shift, axis=1) - log_pairs
        return np.exp(2.0 * log_l)

    starts = range(0, n_reps, chunk)
    values = np.concatenate(mc.map_replicates(lambda i: block(starts[i]), len(starts), threads))
    mean = math.fsum(values) / n_reps
    # leave-one-out means of a sample mean give the usual s / sqrt(n)
    loo = (mean * n_reps - values) / (n_reps - 1)
    se = math.sqrt((n_reps - 1) / n_reps * math.fsum((loo - loo.mean()) ** 2))
    return SecondMomentReport(shape, mu, mean, math.log(mean), Method.MonteCarloLikelihood, se)


def mc_second_moment_overlap(shape: ProblemShape, mu: float, n_reps: int, seed: int) -> SecondMomentReport:
    """Average of ``exp(mu**2 W1 W2)`` over sampled overlaps."""
    mu = _check_mu(mu)
    rng = generator_for(SeedSpec(mc.stream_root(seed, mc.SUPPORT_STREAM), 0))
    w1 = rng.hypergeometric(shape.s1, shape.d1 - shape.s1, shape.s1, size=n_reps)
    w2 = rng.hypergeometric(shape.s2, shape.d2 - shape.s2, shape.s2, size=n_reps)
    values = np.exp(mu * mu * w1.astype(np.float64) * w2)
    mean = math.fsum(values) / n_reps
    se = float(np.std(values, ddof=1)) / math.sqrt(n_reps)
    return SecondMomentReport(shape, mu, mean, math.log(mean), Method.MonteCarloOverlap, se)


def risk_lower_bound(shape: ProblemShape, mu: float) -> float:
    """Lower bound on the minimax risk from the exact second moment."""
    return second_moment_exact(shape, mu).risk_lower_bound


def mu_for_lower_bound(shape: ProblemShape, target: float) -> float:
    """Largest ``mu`` whose risk lower bound is at least ``target``."""
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    hi = 1.0
    while risk_lower_bound(shape, hi) >= target:
        hi *= 2.0
    mu = float(optimize.brentq(lambda m: risk_lower_bound(shape, m) - target, 0.0, hi, xtol=1e-12))
    while risk_lower_bound(shape, mu) < target:
        mu *= 1.0 - 1e-9
    return mu

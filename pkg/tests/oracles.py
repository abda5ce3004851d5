"""Independent reference implementations used only by the tests."""
import math
from collections import Counter
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import integrate


def nu_quadrature(tau):
    """E[Z^2 | |Z| > tau] by adaptive quadrature on [tau, tau + 40]."""
    pdf = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    second, _ = integrate.quad(lambda z: z * z * pdf(z), tau, tau + 40, epsabs=0, epsrel=1e-13, limit=200)
    mass, _ = integrate.quad(pdf, tau, tau + 40, epsabs=0, epsrel=1e-13, limit=200)
    return second / mass


def colex(d, s):
    return sorted(combinations(range(d), s), key=lambda c: c[::-1])


def brute_max_lin(y, s):
    """Max over all row subsets of the subset-averaged linear statistic."""
    y = np.asarray(y, dtype=float)
    row_sums = y.sum(axis=1)
    scale = math.sqrt(s * y.shape[1])
    best, arg = -math.inf, None
    for comb in combinations(range(y.shape[0]), s):
        total = 0.0
        for i in comb:
            total += row_sums[i]
        value = total / scale
        if value > best:
            best, arg = value, comb
    return best, arg


def brute_max_trunc(y, s, tau, nu):
    """Max over row subsets of the truncated statistic; colex-smallest maximiser."""
    y = np.asarray(y, dtype=float)
    d, m = y.shape
    scale = np.sqrt(float(s))
    best, arg = -math.inf, None
    for comb in colex(d, s):
        sums = np.zeros(m)
        for i in comb:
            sums = sums + y[i]
        total = 0.0
        for j in range(m):
            x = sums[j] / scale
            if abs(x) > tau:
                total += x * x - nu
        if total > best:
            best, arg = total, comb
    return best, arg


def brute_trunc(y, tau, nu):
    d, m = y.shape
    total = 0.0
    for j in range(m):
        col = 0.0
        for i in range(d):
            col += y[i, j]
        x = col / math.sqrt(d)
        if abs(x) > tau:
            total += x * x - nu
    return total


@lru_cache(maxsize=None)
def overlap_counts(d, s):
    """Counter of |S & S'| over all ordered pairs of size-s subsets (bitmask popcount)."""
    masks = [sum(1 << i for i in c) for c in combinations(range(d), s)]
    counts = Counter()
    for a in masks:
        for b in masks:
            counts[bin(a & b).count("1")] += 1
    return counts, len(masks)


def pair_second_moment(d1, d2, s1, s2, mu):
    """E[exp(mu^2 |S1&S1'| |S2&S2'|)] averaged over every pair of support pairs."""
    c1, n1 = overlap_counts(d1, s1)
    c2, n2 = overlap_counts(d2, s2)
    terms = [n_a * n_b * math.exp(mu * mu * a * b) for a, n_a in c1.items() for b, n_b in c2.items()]
    return math.fsum(terms) / (n1 * n1 * n2 * n2)


def full_pair_second_moment(d1, d2, s1, s2, mu):
    """Literal double loop over all (S1, S2) x (S1', S2') support pairs."""
    rows = list(combinations(range(d1), s1))
    cols = list(combinations(range(d2), s2))
    pairs = [(set(r), set(c)) for r in rows for c in cols]
    terms = [math.exp(mu * mu * len(a & a2) * len(b & b2)) for a, b in pairs for a2, b2 in pairs]
    return math.fsum(terms) / len(terms)

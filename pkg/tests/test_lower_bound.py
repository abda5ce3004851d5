import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from oracles import full_pair_second_moment, overlap_counts, pair_second_moment
from subdetect.core_model import ProblemShape, ShapeError
from subdetect.detectors import EnumerationCapError
from subdetect.lower_bound import (
    Method,
    domination_check,
    hypergeom_overlap_pmf,
    mc_second_moment_likelihood,
    mc_second_moment_overlap,
    mu_for_lower_bound,
    partial_second_moment,
    risk_bound_from_moment,
    risk_lower_bound,
    second_moment_binom_bound,
    second_moment_exact,
)

FROZEN_4422_HALF = 1.31812385169622


def test_pmf_full_subsets():
    law = hypergeom_overlap_pmf(5, 5)
    assert list(law.support) == [5]
    assert law.pmf[0] == pytest.approx(1.0, abs=1e-15)


def test_pmf_four_choose_two():
    law = hypergeom_overlap_pmf(4, 2)
    np.testing.assert_allclose(law.pmf, [1 / 6, 4 / 6, 1 / 6], rtol=1e-13)
    counts, n = overlap_counts(4, 2)
    np.testing.assert_allclose(law.pmf, [counts[k] / n**2 for k in (0, 1, 2)], rtol=1e-13)


@pytest.mark.parametrize("d", [1, 2, 7, 100])
def test_pmf_singletons(d):
    law = hypergeom_overlap_pmf(d, 1)
    pmf = dict(zip(law.support.tolist(), law.pmf))
    assert pmf[1] == pytest.approx(1 / d, rel=1e-13)
    assert pmf.get(0, 0.0) == pytest.approx(1 - 1 / d, abs=1e-13)


@pytest.mark.parametrize("d,s", [(3, 1), (10, 4), (50, 25), (200, 7), (64, 40)])
def test_pmf_sums_to_one(d, s):
    law = hypergeom_overlap_pmf(d, s)
    assert abs(law.pmf.sum() - 1) <= 1e-12
    assert law.support[0] == max(0, 2 * s - d)
    expected = [math.comb(s, k) * math.comb(d - s, s - k) / math.comb(d, s) for k in law.support]
    np.testing.assert_allclose(law.pmf, expected, rtol=1e-10)


def test_second_moment_at_zero():
    assert second_moment_exact(ProblemShape(8, 8, 2, 3), 0.0).second_moment == 1.0


def test_second_moment_full_support():
    report = second_moment_exact(ProblemShape(3, 2, 3, 2), 0.7)
    assert report.second_moment == pytest.approx(math.exp(0.49 * 6), rel=1e-13)


def test_second_moment_frozen_value():
    value = second_moment_exact(ProblemShape(4, 4, 2, 2), 0.5).second_moment
    assert value == pytest.approx(FROZEN_4422_HALF, rel=1e-12)
    assert value == pytest.approx(full_pair_second_moment(4, 4, 2, 2, 0.5), rel=1e-12)


def _small_shapes():
    for d1 in range(1, 8):
        for d2 in range(1, 8):
            for s1 in range(1, d1 + 1):
                for s2 in range(1, d2 + 1):
                    if math.comb(d1, s1) * math.comb(d2, s2) <= 10**4:
                        yield ProblemShape(d1, d2, s1, s2)


def test_exact_matches_pair_oracle():
    worst = 0.0
    for shape in _small_shapes():
        for mu in (0.0, 0.25, 0.5, 1.0, 1.5):
            exact = second_moment_exact(shape, mu).second_moment
            oracle = pair_second_moment(*shape.as_tuple(), mu)
            worst = max(worst, abs(exact - oracle) / oracle)
    assert worst <= 1e-9


def test_overflow_keeps_log_value():
    report = second_moment_exact(ProblemShape(40, 40, 30, 30), 2.0)
    assert report.second_moment == math.inf
    assert math.isfinite(report.log_second_moment) and report.log_second_moment > 700
    assert report.risk_lower_bound == 0.0


def test_partial_moment_sums_to_total():
    shape = ProblemShape(10, 12, 3, 4)
    total = second_moment_exact(shape, 0.6).second_moment
    parts = partial_second_moment(shape, 0.6, [0, 1]) + partial_second_moment(shape, 0.6, [2, 3])
    assert parts == pytest.approx(total, rel=1e-12)
    assert partial_second_moment(shape, 0.6, [9]) == 0.0


def test_binom_bound_zero_and_hand_value():
    assert second_moment_binom_bound(ProblemShape(6, 6, 2, 2), 0.0) == pytest.approx(1.0, abs=1e-14)
    mu = 0.8
    p = 1 / 9
    # X, Y ~ Bernoulli(1/9): E exp(mu^2 X Y) = 1 + p^2 (e^{mu^2} - 1)
    expected = 1 + p * p * (math.exp(mu * mu) - 1)
    assert second_moment_binom_bound(ProblemShape(10, 10, 1, 1), mu) == pytest.approx(expected, rel=1e-13)


def test_binom_bound_needs_room():
    with pytest.raises(ShapeError):
        second_moment_binom_bound(ProblemShape(4, 4, 4, 2), 1.0)


def test_binom_bound_dominates_exact_on_grid():
    count = 0
    for d1, d2 in [(8, 8), (16, 16), (32, 8), (64, 64), (20, 50)]:
        for s1, s2 in [(1, 1), (2, 2), (3, 4), (4, 2), (4, 4)][: 10]:
            shape = ProblemShape(d1, d2, s1, s2)
            for mu in (0.3, 0.9):
                assert second_moment_binom_bound(shape, mu) >= second_moment_exact(shape, mu).second_moment
                count += 1
    assert count >= 50


@pytest.mark.parametrize("d,s", [(4, 2), (8, 1)])
def test_domination_examples(d, s):
    ok, worst = domination_check(d, s)
    assert ok and worst <= 1e-12


def test_domination_bernoulli_exact():
    # W ~ Bernoulli(1/8) against Bin(1, 1/7): only t = 0 differs, by 1/8 - 1/7 < 0
    assert Fraction(1, 8) < Fraction(1, 7)
    _, worst = domination_check(8, 1)
    assert abs(worst) <= 1e-15


def test_domination_half_boundary():
    for s in range(1, 33):
        assert domination_check(2 * s, s)[0]


def test_mc_likelihood_at_zero_is_one():
    report = mc_second_moment_likelihood(ProblemShape(4, 4, 2, 2), 0.0, 500, 3)
    assert report.second_moment == 1.0 and report.se == 0.0


def test_mc_likelihood_cap():
    with pytest.raises(EnumerationCapError):
        mc_second_moment_likelihood(ProblemShape(20, 20, 10, 10), 0.5, 10, 0)


def test_mc_likelihood_agrees_with_exact_small():
    shape = ProblemShape(4, 4, 2, 2)
    report = mc_second_moment_likelihood(shape, 0.5, 20_000, 5)
    exact = second_moment_exact(shape, 0.5).second_moment
    assert report.method is Method.MonteCarloLikelihood
    assert abs(report.second_moment - exact) <= 3 * report.se


def test_mc_likelihood_thread_invariant():
    shape = ProblemShape(4, 4, 2, 2)
    a = mc_second_moment_likelihood(shape, 0.5, 5000, 9, threads=1)
    b = mc_second_moment_likelihood(shape, 0.5, 5000, 9, threads=3)
    assert (a.second_moment, a.se) == (b.second_moment, b.se)


def test_mc_overlap_agrees_with_exact():
    shape = ProblemShape(6, 8, 2, 3)
    report = mc_second_moment_overlap(shape, 0.6, 50_000, 4)
    exact = second_moment_exact(shape, 0.6).second_moment
    assert abs(report.second_moment - exact) <= 3 * report.se


def test_bound_algebra():
    assert risk_bound_from_moment(1.0) == 1.0
    eta = 0.15
    assert risk_bound_from_moment(1 + 4 * eta**2) == pytest.approx(1 - eta, rel=1e-14)
    assert risk_lower_bound(ProblemShape(4, 4, 2, 2), 0.0) == 1.0


def test_bound_nonincreasing_in_mu():
    shape = ProblemShape(4, 4, 2, 2)
    mus = np.linspace(0, 3, 61)
    bounds = [risk_lower_bound(shape, m) for m in mus]
    moments = [second_moment_exact(shape, m).second_moment for m in mus]
    assert all(b <= a for a, b in zip(bounds, bounds[1:]))
    assert all(b >= a for a, b in zip(moments, moments[1:]))


def test_mu_for_lower_bound():
    shape = ProblemShape(8, 8, 2, 2)
    mu = mu_for_lower_bound(shape, 0.8)
    assert risk_lower_bound(shape, mu) >= 0.8
    assert risk_lower_bound(shape, mu * 1.001) < 0.8


def test_report_invariants():
    report = second_moment_exact(ProblemShape(8, 8, 2, 2), 0.9)
    assert report.second_moment >= 1
    assert report.risk_lower_bound == pytest.approx(max(0.0, 1 - 0.5 * math.sqrt(report.second_moment - 1)))
    assert report.as_dict()["method"] == "ExactHypergeometric"


def test_mu_must_be_nonnegative():
    with pytest.raises(ValueError):
        second_moment_exact(ProblemShape(4, 4, 2, 2), -0.1)


def test_pair_oracle_is_self_consistent():
    # the counting oracle and the literal double loop agree
    for d1, d2, s1, s2 in [(3, 3, 1, 2), (4, 3, 2, 1), (4, 4, 2, 2)]:
        assert pair_second_moment(d1, d2, s1, s2, 0.7) == pytest.approx(
            full_pair_second_moment(d1, d2, s1, s2, 0.7), rel=1e-13)
    assert len(list(combinations(range(4), 2))) == 6

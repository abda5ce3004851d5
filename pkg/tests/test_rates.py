import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from subdetect.core_model import ProblemShape, ShapeError
from subdetect.rates import (
    Corollary,
    Regime,
    beta,
    bi_rate,
    corollary_rate,
    log_binom,
    log_e_binom,
    phi,
    psi,
    rate_breakdown,
    s1_equals_1_regime,
)

FROZEN_R_64_64_4_4 = 2.0340677847320223


@st.composite
def shapes(draw, max_d=500):
    d1 = draw(st.integers(1, max_d))
    d2 = draw(st.integers(1, max_d))
    return ProblemShape(d1, d2, draw(st.integers(1, d1)), draw(st.integers(1, d2)))


def test_log_binom_values():
    assert log_binom(7, 0) == 0.0
    assert log_binom(5, 2) == pytest.approx(math.log(10), rel=1e-14)
    assert log_binom(100, 50) == pytest.approx(math.log(math.comb(100, 50)), rel=1e-9)


@given(st.integers(0, 10**6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_log_binom_matches_integers(nk):
    n, k = nk
    exact = math.log(math.comb(n, k)) if n < 2000 else None
    if exact is not None:
        assert abs(log_binom(n, k) - exact) <= 1e-9 * max(1.0, exact)
    assert log_binom(n, k) == pytest.approx(log_binom(n, n - k), abs=1e-9 * max(1.0, log_binom(n, k)))


@pytest.mark.parametrize("n,k", [(3, 4), (3, -1)])
def test_log_binom_range(n, k):
    with pytest.raises(ValueError):
        log_binom(n, k)


def test_psi_single_row():
    assert psi(1, 3, 1, 20) == pytest.approx(math.log1p(20 / 9), rel=1e-15)


def test_psi_hand_value():
    assert psi(2, 2, 4, 8) == pytest.approx(0.5 * math.log(1 + 2 * (1 + math.log(6))), rel=1e-14)


def test_psi_linearized_regime():
    d1, s1, d2, s2 = 10, 3, 10_000, 1000
    inner = d2 / s2**2 * log_e_binom(d1, s1)
    assert inner < 0.1
    assert psi(s1, s2, d1, d2) == pytest.approx(inner / s1, rel=0.1)


@pytest.mark.parametrize("args,expected", [
    ((5, 7, 5, 7), (1 / 5) * math.log(1 + 1 / 7)),
    ((2, 2, 4, 4), math.log(2)),
    ((4, 3, 16, 9), math.log(2)),
])
def test_phi_values(args, expected):
    assert phi(*args) == pytest.approx(expected, rel=1e-14)


def test_beta_full_columns_is_zero():
    assert beta(2, 5, 9, 5) == 0.0


def test_beta_strict_indicator_at_equality():
    # d1 = s1^2 and C(d2, s2) = 1 makes the indicator argument exactly 1
    assert beta(3, 4, 9, 4) == 0.0


def test_beta_hand_value():
    assert 9 / 4 * (1 + math.log(15)) > 1
    assert beta(2, 2, 9, 6) == pytest.approx(math.log(15) / 4, rel=1e-14)


def test_breakdown_frozen_value():
    b = rate_breakdown(ProblemShape(64, 64, 4, 4))
    assert b.R == FROZEN_R_64_64_4_4
    assert b.regime is Regime.PsiBetaC


def test_breakdown_vector_case():
    shape = ProblemShape(1, 50, 1, 5)
    b = rate_breakdown(shape)
    assert b.R == min(b.psi12 + b.psi21, b.phi12, b.phi21)
    assert b.psi12 == pytest.approx(math.log1p(50 / 25), rel=1e-14)
    assert b.beta21 == 0.0


def test_breakdown_full_support():
    b = rate_breakdown(ProblemShape(3, 5, 3, 5))
    expected = min(psi(3, 5, 3, 5) + psi(5, 3, 5, 3), phi(3, 5, 3, 5), phi(5, 3, 5, 3))
    assert all(math.isfinite(v) for v in b.as_dict().values() if isinstance(v, float))
    assert b.R == expected


@given(shapes())
def test_breakdown_invariants(shape):
    b = rate_breakdown(shape)
    assert b.R == min(b.psi12 + b.psi21, b.phi12, b.phi21)
    assert b.Rtilde == min(b.psi12 + b.beta21, b.psi21 + b.beta12, b.phi12, b.phi21)
    assert b.regime_terms()[b.regime] == b.Rtilde
    # the first minimiser in priority order is reported
    for regime, value in b.regime_terms().items():
        if value == b.Rtilde:
            assert regime is b.regime
            break


@given(shapes())
def test_breakdown_transpose_symmetry(shape):
    a, t = rate_breakdown(shape), rate_breakdown(shape.transpose())
    assert (a.psi12, a.phi12, a.beta12) == (t.psi21, t.phi21, t.beta21)
    assert a.R == pytest.approx(t.R, rel=1e-12)
    assert a.Rtilde == pytest.approx(t.Rtilde, rel=1e-12)


def test_transpose_symmetry_spot():
    shape = ProblemShape(64, 32, 4, 2)
    assert rate_breakdown(shape).R == pytest.approx(rate_breakdown(shape.transpose()).R, rel=1e-15)


def test_tie_break_prefers_phi():
    b = rate_breakdown(ProblemShape(1, 1, 1, 1))
    assert b.phi12 == b.psi12 + b.beta21
    assert b.regime is Regime.PhiA


def test_rtilde_vs_r_ratio_bounded():
    rng = random.Random(3)
    worst = 0.0
    for _ in range(200):
        d1, d2 = rng.randint(2, 5000), rng.randint(2, 5000)
        shape = ProblemShape(d1, d2, rng.randint(1, d1), rng.randint(1, d2))
        b = rate_breakdown(shape)
        ratio = b.R / b.Rtilde
        worst = max(worst, ratio)
        if b.beta12 <= b.psi12 and b.beta21 <= b.psi21:
            assert b.Rtilde <= b.R * (1 + 1e-12)
        assert 1 / 50 <= ratio <= 50
    print(f"max R / Rtilde over 200 shapes: {worst:.4f}")


def test_bi_rate_hand_value():
    assert bi_rate(ProblemShape(4, 4, 2, 2)) == 1.0


def test_bi_rate_symmetric_summands():
    shape = ProblemShape(50, 50, 5, 5)
    assert bi_rate(shape) == pytest.approx(min(2500 / 625, 4 * math.log(10) / 5), rel=1e-14)


@pytest.mark.parametrize("shape", [ProblemShape(4, 4, 4, 2), ProblemShape(4, 4, 2, 4)])
def test_bi_rate_degenerate(shape):
    with pytest.raises(ShapeError):
        bi_rate(shape)


def test_table_rows():
    row = s1_equals_1_regime(ProblemShape(64, 64, 1, 2))
    assert row.label == "log_ed1_gt_s2" and row.test == "max_trunc_chi2"
    assert row.rate == pytest.approx(math.log(math.e * 32) + math.log(math.e * 64) / 2, rel=1e-14)
    row = s1_equals_1_regime(ProblemShape(16, 16, 1, 8))
    assert row.label == "dense" and row.test == "max_lin"
    assert row.rate == pytest.approx(16 / 64 * math.log(math.e * 16), rel=1e-14)
    row = s1_equals_1_regime(ProblemShape(16, 1024, 1, 6))
    assert row.label == "sparse"
    assert row.rate == pytest.approx(math.log1p(1024 * math.log(math.e * 16) / 36), rel=1e-14)
    with pytest.raises(ShapeError):
        s1_equals_1_regime(ProblemShape(4, 4, 2, 2))


def test_cor3_rate():
    s2 = 3
    s1, d2 = s2**2, 40
    d1 = d2**2
    assert d1 >= s1**2.5
    ok, rate = corollary_rate(ProblemShape(d1, d2, s1, s2), Corollary.Cor3)
    assert ok
    assert rate == pytest.approx(math.log(d1) / math.sqrt(s1), rel=1e-14)


def test_cor1_full_rows_fails():
    ok, _ = corollary_rate(ProblemShape(10, 100, 10, 5), "Cor1")
    assert not ok


def test_cor2_rate():
    shape = ProblemShape(100_000, 100_000, 500, 5)
    ok, rate = corollary_rate(shape, Corollary.Cor2)
    assert shape.s1**2 >= (2 * math.e) ** -4 * shape.d1 * shape.s2
    assert ok
    assert rate == pytest.approx(math.log1p(1e5 * 5 * math.log(1e5) / 500**2) / 5, rel=1e-14)

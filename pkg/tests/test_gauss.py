import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import nu_quadrature
from subdetect.gauss import (
    mills_ratio,
    nu_tau,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
    std_normal_tail,
)

# closed form and quadrature agree on this value; 2.5253 is off in the 4th decimal
NU_AT_ONE = 2.5251352761609813


def test_cdf_at_zero():
    assert std_normal_cdf(0.0) == 0.5


def test_tail_at_five_percent_point():
    assert abs(std_normal_tail(1.6448536) - 0.05) <= 1e-6


def test_quantile_975():
    assert abs(std_normal_quantile(0.975) - 1.959964) <= 1e-5


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        std_normal_quantile(p)


@given(st.floats(-40, 40))
def test_cdf_plus_tail_is_one(x):
    assert abs(std_normal_cdf(x) + std_normal_tail(x) - 1.0) <= 1e-14


# lower half only: cdf near 1 rounds away the digits the quantile would need
@given(st.floats(-8, 0))
def test_quantile_inverts_cdf(x):
    p = std_normal_cdf(x)
    assert abs(std_normal_quantile(p) - x) <= 1e-9


def test_pdf_value():
    assert std_normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


@pytest.mark.parametrize("x", [0.0, 1.0, 5.0, 30.0])
def test_mills_ratio_definition(x):
    if x < 10:
        assert mills_ratio(x) == pytest.approx(std_normal_tail(x) / std_normal_pdf(x), rel=1e-12)
    else:
        # asymptotic 1/x - 1/x^3 + 3/x^5
        assert mills_ratio(x) == pytest.approx(1 / x - 1 / x**3 + 3 / x**5, rel=1e-6)


def test_nu_at_zero():
    assert nu_tau(0.0).nu == 1.0


def test_nu_at_one_frozen():
    assert abs(nu_tau(1.0).nu - NU_AT_ONE) <= 1e-12
    assert abs(nu_tau(1.0).nu - nu_quadrature(1.0)) <= 1e-10


def test_nu_at_three_exceeds_nine():
    nu = nu_tau(3.0).nu
    assert nu > 9
    assert abs(nu - nu_quadrature(3.0)) <= 1e-8


@pytest.mark.parametrize("tau", np.arange(0, 8.001, 0.25))
def test_nu_matches_quadrature(tau):
    assert abs(nu_tau(tau).nu - nu_quadrature(tau)) <= 1e-8


def test_nu_monotone_and_above_bounds():
    taus = np.linspace(0, 30, 601)
    nus = np.array([nu_tau(t).nu for t in taus])
    assert np.all(np.diff(nus) > 0)
    assert np.all(nus >= np.maximum(1.0, taus**2))
    assert np.all(nus[1:] - taus[1:] ** 2 > 0)


def test_nu_large_tau_finite():
    nu = nu_tau(40.0).nu
    assert math.isfinite(nu) and nu > 1600
    assert nu_tau(math.inf).nu == math.inf


@pytest.mark.parametrize("tau", [-1.0, math.nan])
def test_nu_rejects_bad_tau(tau):
    with pytest.raises(ValueError):
        nu_tau(tau)

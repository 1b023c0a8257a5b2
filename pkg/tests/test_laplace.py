import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sqdfluid.distributions import Exponential, Gamma, Lognormal, Pareto, Weibull, parse_dist
from sqdfluid.laplace import (
    LaplaceCache,
    QuadratureError,
    gauss_kronrod,
    integrate as gk_integrate,
    integrate_weighted,
    truncation_point,
)

# Phi(1) for Pareto by composite Simpson on 1e6 points per piece, split at x_m
PARETO3_PHI1 = 0.6026527820555151
PARETO15_PHI1 = 0.4785705777693375


def test_gauss_kronrod_polynomial_exact():
    res = gauss_kronrod(lambda x: x**7 - 3 * x**2, [0.0, 1.0, 2.0], tol=1e-10)
    assert res.value == pytest.approx(2**8 / 8 - 8, rel=1e-14)
    assert res.panels.shape == (2,)
    assert res.panels.sum() == pytest.approx(res.value, rel=1e-15)


def test_gauss_kronrod_adapts_to_peaks():
    f = lambda x: 1.0 / (1e-4 + (x - 0.3) ** 2)
    exact = (math.atan(0.7 / 1e-2) + math.atan(0.3 / 1e-2)) / 1e-2
    res = gauss_kronrod(f, [0.0, 1.0], tol=1e-9)
    assert res.value == pytest.approx(exact, abs=1e-8)
    assert res.n_intervals > 1


def test_gauss_kronrod_reports_failure():
    with pytest.raises(QuadratureError) as exc:
        gauss_kronrod(lambda x: 1.0 / np.sqrt(np.abs(x - 0.5) + 1e-300), [0.0, 1.0], tol=1e-15,
                      max_intervals=20)
    assert exc.value.estimate is not None


def test_gauss_kronrod_rejects_bad_edges():
    with pytest.raises(ValueError):
        gauss_kronrod(np.sin, [1.0, 0.0])


def test_integrate_finite_only():
    assert gk_integrate(np.cos, 0.0, math.pi / 2).value == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ValueError):
        gk_integrate(np.cos, 0.0, math.inf)


@pytest.mark.parametrize("b", [0.0, 1e-9, 0.1, 0.5, 1.0, 7.5, 300.0])
def test_phi_exponential_closed_form(b):
    cache = LaplaceCache(Exponential())
    assert cache.phi(b) == pytest.approx(1.0 / (1.0 + b), rel=1e-12, abs=1e-15)
    assert cache.psi(b) == pytest.approx(b / (1.0 + b), rel=1e-11, abs=1e-16)


@pytest.mark.parametrize("b", [1e-6, 0.3, 2.0, 40.0])
def test_phi_gamma_closed_form(b):
    a = 3.0
    cache = LaplaceCache(Gamma(a))
    exact = -math.expm1(-a * math.log1p(b / a)) / b
    assert cache.phi(b) == pytest.approx(exact, rel=1e-11)


@pytest.mark.parametrize("alpha, ref", [(3.0, PARETO3_PHI1), (1.5, PARETO15_PHI1)])
def test_phi_pareto_simpson_oracle(alpha, ref):
    assert LaplaceCache(Pareto(alpha)).phi(1.0) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("spec", ["lognormal:sigma=1/3", "weibull:a=0.5", "burr:c=2"])
def test_dphi_matches_finite_difference(spec):
    cache = LaplaceCache(parse_dist(spec))
    b, h = 0.7, 1e-5
    fd = (cache.phi(b + h) - cache.phi(b - h)) / (2 * h)
    assert cache.dphi(b) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("spec", ["exp", "pareto:alpha=1.5", "weibull:a=2", "lognormal:sigma=1"])
@pytest.mark.parametrize("r", [0.0, 0.4, 3.0])
def test_shifted_transform_against_quad(spec, r):
    dist = parse_dist(spec)
    cache = LaplaceCache(dist)
    b = 0.8
    ref = integrate.quad(lambda t: math.exp(-b * t) * dist.survival(t + r), 0, np.inf,
                         epsabs=1e-14, epsrel=1e-12, limit=500,
                         )[0]
    assert cache.shifted(b, r) == pytest.approx(ref, rel=1e-9, abs=1e-13)
    assert cache.shifted_psi(b, r) == pytest.approx(
        float(dist.integrated_tail(r)) - cache.shifted(b, r), rel=1e-9, abs=1e-13)


def test_shifted_zero_rate_is_integrated_tail():
    cache = LaplaceCache(Pareto(3.0))
    assert cache.shifted(0.0, 2.0) == pytest.approx(Pareto(3.0).integrated_tail(2.0))


@given(b=st.floats(min_value=0, max_value=100), c=st.floats(min_value=0, max_value=100))
@settings(max_examples=40, deadline=None)
def test_phi_is_completely_monotone_prefix(b, c):
    cache = LaplaceCache(Weibull(0.5))
    lo, hi = sorted((b, c))
    assert 0.0 < cache.phi(hi) <= cache.phi(lo) + 1e-15 <= 1.0 + 1e-15
    # Phi is convex, so the secant slope lies between the endpoint derivatives
    if hi - lo > 1e-3 and lo > 0:
        slope = (cache.phi(hi) - cache.phi(lo)) / (hi - lo)
        assert cache.dphi(lo) - 1e-10 <= slope <= cache.dphi(hi) + 1e-10


def test_cache_memoises_and_clones():
    cache = LaplaceCache(Lognormal(1 / 3))
    v = cache.phi(0.5)
    assert 0.5 in cache.entries
    other = cache.clone()
    assert other.entries == cache.entries and other.entries is not cache.entries
    assert other.phi(0.5) == v


def test_cache_rejects_negative_rate():
    with pytest.raises(ValueError):
        LaplaceCache(Exponential()).phi(-1.0)


def test_truncation_point_bounds_tail():
    dist = Pareto(1.5)
    x = truncation_point(dist, 1e-12)
    assert dist.integrated_tail(x) < 1e-13 <= dist.integrated_tail(x / 2)


def test_integrate_weighted_first_moment_of_survival():
    # int x Gbar(x) dx = E[S^2] / 2 = (1 + 1/alpha) / 2 for Gamma(alpha, alpha)
    res = integrate_weighted(Gamma(3.0), lambda x: x, tol=1e-11)
    assert res.value == pytest.approx((1 + 1 / 3) / 2, rel=1e-10)

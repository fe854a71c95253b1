import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from prtnep.uncertainty import (
    DegenerateDistribution,
    DiscreteDistribution,
    LoadModel,
    OutageModel,
    WindModel,
    bernoulli_outage,
    central_moments,
    discretize_normal,
    discretize_weibull,
    weibull_from_mean_std,
    wind_power,
    wind_power_distribution,
)

TURBINE = dict(u_ci=3.0, u_rt=12.0, u_co=25.0, p_rt=120.0)


def test_weibull_mean_matches_gamma_formula():
    model = WindModel(alpha=9.0, beta=2.0, **TURBINE)
    d = discretize_weibull(model, 10_000)
    exact = 9.0 * special.gamma(1.5)
    sd = 9.0 * math.sqrt(special.gamma(2.0) - special.gamma(1.5) ** 2)
    assert abs(d.mean - exact) <= 3 * sd / math.sqrt(10_000)
    assert model.mean_speed == pytest.approx(exact, rel=1e-14)


def test_exponential_special_case():
    d = discretize_weibull(WindModel(1.0, 1.0, **TURBINE), 10_000)
    assert d.mean == pytest.approx(1.0, rel=0.01)


def test_power_curve_regions():
    m = WindModel(9.0, 2.0, **TURBINE)
    assert wind_power(2.9, m) == 0.0
    assert wind_power(7.5, m) == pytest.approx(120.0 * 4.5 / 9.0)
    assert wind_power(12.0, m) == 120.0
    assert wind_power(20.0, m) == 120.0
    assert wind_power(25.5, m) == 0.0


def test_wind_power_mean_closed_form():
    # E[P] = p_rt * (integral of the ramp + P(u_rt <= U <= u_co)), integrated numerically
    m = WindModel(9.0, 2.0, **TURBINE)
    from scipy import integrate, stats

    pdf = stats.weibull_min(c=2.0, scale=9.0).pdf
    ramp = integrate.quad(lambda u: (u - 3.0) / 9.0 * pdf(u), 3.0, 12.0, epsabs=1e-13)[0]
    flat = stats.weibull_min(c=2.0, scale=9.0).cdf(25.0) - stats.weibull_min(c=2.0, scale=9.0).cdf(12.0)
    exact = 120.0 * (ramp + flat)
    assert wind_power_distribution(m).mean == pytest.approx(exact, rel=2e-4)


def test_weibull_from_mean_std_roundtrip():
    scale, shape = weibull_from_mean_std(7.0, 3.5)
    mean = scale * special.gamma(1 + 1 / shape)
    sd = scale * math.sqrt(special.gamma(1 + 2 / shape) - special.gamma(1 + 1 / shape) ** 2)
    assert mean == pytest.approx(7.0, rel=1e-12)
    assert sd == pytest.approx(3.5, rel=1e-10)


def test_normal_discretization_moments():
    d = discretize_normal(LoadModel(240.0, 5.0), 10_000)
    assert abs(d.mean - 240.0) <= 3 * 12.0 / 100
    assert d.std == pytest.approx(12.0, rel=2e-3)
    assert abs(d.skewness) < 1e-10
    assert d.kurtosis == pytest.approx(3.0, abs=0.01)


def test_zero_sigma_load_is_a_point():
    assert discretize_normal(LoadModel(10.0, 0.0)).deterministic


def test_bernoulli_availability():
    d = bernoulli_outage(OutageModel(0.01))
    assert d.mean == pytest.approx(0.99)
    assert d.variance == pytest.approx(0.99 * 0.01)
    lam3 = central_moments(d, 3)[1]
    assert lam3 == pytest.approx((1 - 2 * 0.99) / math.sqrt(0.99 * 0.01), rel=1e-12)
    assert bernoulli_outage(OutageModel(0.0)).deterministic
    assert bernoulli_outage(OutageModel(1.0)).mean == 0.0


def test_degenerate_moments_raise():
    with pytest.raises(DegenerateDistribution):
        DiscreteDistribution.point(3.0).skewness


@pytest.mark.parametrize("bad", [dict(alpha=0.0), dict(beta=-1.0), dict(u_ci=13.0), dict(p_rt=0.0)])
def test_wind_model_validation(bad):
    kw = dict(alpha=9.0, beta=2.0, **TURBINE)
    kw.update(bad)
    with pytest.raises(ValueError):
        WindModel(**kw)


def test_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteDistribution(np.array([0.0, 1.0]), np.array([0.3, 0.3]))
    with pytest.raises(ValueError):
        OutageModel(1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 30.0), st.floats(0.5, 10.0))
def test_power_within_rating(alpha, beta):
    m = WindModel(alpha, beta, **TURBINE)
    d = wind_power_distribution(m, 500)
    assert d.support.min() >= 0.0 and d.support.max() <= 120.0


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1000.0), st.floats(0.5, 20.0))
def test_normal_mean_within_three_standard_errors(mu, pct):
    d = discretize_normal(LoadModel(mu, pct), 2_000)
    sigma = mu * pct / 100
    assert abs(d.mean - mu) <= 3 * sigma / math.sqrt(2_000)

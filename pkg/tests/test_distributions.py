#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest
from scipy import integrate, stats

from common.distribution_factory import get_distribution, scenario2_spline
from common.distributions import (
    Gamma, GammaMixture, LogNormal, PoissonDwell, Uniform, VonMises, ZeroInflatedGamma,
    cdf, free_parameter_count, log_pdf, point_mass, quantile, sample, wrap_angle,
)
from common.errors import InvalidParameterError


def test_gamma_log_pdf_matches_exponential():
    # shape 1, mean 2 是速率0.5的指数分布
    d = Gamma(mean=2.0, shape=1.0)
    assert log_pdf(d, 1.0) == pytest.approx(math.log(0.5) - 0.5)
    assert cdf(d, 2.0 * math.log(2.0)) == pytest.approx(0.5)


def test_gamma_matches_scipy():
    d = Gamma(mean=4.0, shape=2.5)
    x = np.array([0.1, 1.0, 3.7, 12.0])
    expected = stats.gamma.logpdf(x, a=2.5, scale=4.0 / 2.5)
    np.testing.assert_allclose(log_pdf(d, x), expected, rtol=1e-12)
    np.testing.assert_allclose(cdf(d, x), stats.gamma.cdf(x, a=2.5, scale=1.6), rtol=1e-10)


def test_gamma_shape_rate_conversion():
    d = Gamma.from_shape_rate(3.0, 1.5)
    assert d.mean == pytest.approx(2.0)
    assert d.to_shape_rate() == pytest.approx((3.0, 1.5))


def test_gamma_outside_support():
    d = Gamma(1.0, 2.0)
    assert log_pdf(d, -1.0) == -math.inf
    assert cdf(d, -1.0) == 0.0


@pytest.mark.parametrize("mean, shape", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (math.nan, 1.0)])
def test_gamma_rejects_invalid_parameters(mean, shape):
    with pytest.raises(InvalidParameterError):
        Gamma(mean, shape)


def test_zero_inflated_gamma_atom():
    d = ZeroInflatedGamma(zero_mass=0.2, mean=1.0, shape=1.0)
    assert cdf(d, 0.0) == pytest.approx(0.2)
    assert point_mass(d, 0.0) == pytest.approx(0.2)
    assert point_mass(d, 1.0) == 0.0
    assert log_pdf(d, 0.0) == pytest.approx(math.log(0.2))
    assert log_pdf(d, 1.0) == pytest.approx(math.log(0.8) - 1.0)
    assert quantile(d, 0.1) == 0.0
    assert cdf(d, -0.5) == 0.0


def test_zero_inflated_gamma_rejects_unit_mass():
    with pytest.raises(InvalidParameterError):
        ZeroInflatedGamma(1.0, 1.0, 1.0)


@pytest.mark.parametrize("dist", [
    Gamma(0.5, 0.7),
    Gamma(4.0, 2.5),
    ZeroInflatedGamma(0.1, 3.0, 2.0),
    VonMises(0.5, 2.0),
    LogNormal(1.0, 0.4),
    GammaMixture((0.3, 0.7), (Gamma(1.0, 2.0), Gamma(6.0, 5.0))),
])
def test_quantile_inverts_cdf(dist):
    p = np.array([0.25, 0.5, 0.9])
    q = quantile(dist, p)
    np.testing.assert_allclose(cdf(dist, q), p, atol=1e-8)


def test_quantile_rejects_boundary_probabilities():
    with pytest.raises(InvalidParameterError):
        quantile(Gamma(1.0, 1.0), 1.0)


def test_von_mises_support_and_normalisation():
    d = VonMises(location=math.pi, concentration=3.0)
    total, _ = integrate.quad(lambda a: d.pdf(a), -math.pi, math.pi, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert log_pdf(d, 4.0) == -math.inf
    assert cdf(d, math.pi) == pytest.approx(1.0)
    draws = sample(d, np.random.default_rng(3), 2000)
    assert np.all(draws > -math.pi) and np.all(draws <= math.pi)


def test_von_mises_zero_concentration_is_uniform():
    d = VonMises(0.0, 0.0)
    assert d.pdf(1.0) == pytest.approx(1.0 / (2.0 * math.pi))
    assert cdf(d, 0.0) == pytest.approx(0.5)


def test_von_mises_rejects_location_outside_circle():
    with pytest.raises(InvalidParameterError):
        VonMises(-math.pi, 1.0)


def test_wrap_angle_interval():
    values = wrap_angle(np.array([-math.pi, 0.0, 3 * math.pi, -3.5]))
    np.testing.assert_allclose(values, [math.pi, 0.0, math.pi, -3.5 + 2 * math.pi])


def test_gamma_pdf_integrates_to_one():
    d = Gamma(0.5, 0.7)
    total, _ = integrate.quad(lambda x: d.pdf(x), 0.0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_gamma_mixture_is_weighted_sum():
    parts = (Gamma(1.0, 2.0), Gamma(6.0, 5.0))
    d = GammaMixture((0.3, 0.7), parts)
    x = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(d.pdf(x), 0.3 * parts[0].pdf(x) + 0.7 * parts[1].pdf(x), rtol=1e-12)
    assert free_parameter_count(d) == 5
    assert d.order_key() == pytest.approx(0.3 * 1.0 + 0.7 * 6.0)


def test_gamma_mixture_rejects_bad_weights():
    with pytest.raises(InvalidParameterError):
        GammaMixture((0.5, 0.6), (Gamma(1.0, 1.0), Gamma(2.0, 1.0)))


def test_uniform_samples_inside_interval():
    d = Uniform(10.0, 20.0)
    draws = sample(d, np.random.default_rng(1), 500)
    assert np.all((draws >= 10.0) & (draws <= 20.0))
    assert log_pdf(d, 15.0) == pytest.approx(-math.log(10.0))
    assert log_pdf(d, 25.0) == -math.inf


@pytest.mark.parametrize("mode", ["shift", "truncate"])
def test_poisson_dwell_support(mode):
    d = PoissonDwell(3.0, mode)
    draws = np.asarray(sample(d, np.random.default_rng(11), 20000))
    assert draws.min() >= 1
    assert log_pdf(d, 0.0) == -math.inf
    assert log_pdf(d, 1.5) == -math.inf
    assert np.mean(draws) == pytest.approx(d.order_key(), rel=0.03)
    ks = np.arange(1, 60)
    assert np.sum(d.pdf(ks)) == pytest.approx(1.0, abs=1e-10)


def test_shifted_dwell_mean_is_exact():
    assert PoissonDwell(3.0, "shift").order_key() == 3.0


def test_scenario_spline_is_a_density():
    d = scenario2_spline()
    lo, hi = d.support
    total, _ = integrate.quad(lambda x: d.pdf(x), lo, hi, limit=400)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert cdf(d, hi) == pytest.approx(1.0)
    assert d.order_key() > 0
    with pytest.raises(InvalidParameterError):
        free_parameter_count(d)


@pytest.mark.parametrize("dist", [
    Gamma(4.0, 2.5),
    Gamma(0.5, 0.7),
    VonMises(0.5, 2.0),
    VonMises(3.0, 0.8),
    LogNormal(1.0, 0.4),
    GammaMixture((0.3, 0.7), (Gamma(1.0, 2.0), Gamma(6.0, 5.0))),
    scenario2_spline(),
], ids=["gamma", "gamma_small", "vonmises", "vonmises_wrapped", "lognormal", "mixture", "spline"])
def test_sample_matches_distribution(dist):
    draws = sample(dist, np.random.default_rng(5), 100_000)
    result = stats.kstest(draws, lambda x: cdf(dist, x))
    assert result.statistic < 0.01


def test_zero_inflated_sample_has_atom_and_gamma_part():
    d = ZeroInflatedGamma(0.1, 3.0, 2.0)
    draws = np.asarray(sample(d, np.random.default_rng(6), 100_000))
    assert np.mean(draws == 0.0) == pytest.approx(0.1, abs=0.004)
    positive = draws[draws > 0]
    assert stats.kstest(positive, lambda x: cdf(d.gamma, x)).statistic < 0.01


def test_gamma_cdf_agrees_with_monte_carlo():
    d = Gamma(4.0, 2.5)
    draws = np.asarray(sample(d, np.random.default_rng(7), 1_000_000))
    assert cdf(d, 4.0) == pytest.approx(np.mean(draws <= 4.0), abs=2e-3)


def test_gamma_sample_mean():
    draws = np.asarray(sample(Gamma(4.0, 2.5), np.random.default_rng(8), 100_000))
    assert abs(np.mean(draws) - 4.0) < 0.1


def test_scenario_spline_shape():
    d = scenario2_spline()
    lo, hi = d.support
    grid = np.linspace(lo, hi, 20001)
    mode = grid[np.argmax(d.pdf(grid))]
    assert mode == pytest.approx(3.0, abs=0.25)
    assert quantile(d, 0.99) >= 12.0


def test_von_mises_quantile_near_the_cut():
    d = VonMises(3.0, 4.0)
    p = np.array([0.01, 0.3, 0.5, 0.7, 0.99])
    q = quantile(d, p)
    assert np.all(q > -math.pi) and np.all(q <= math.pi)
    np.testing.assert_allclose(cdf(d, q), p, atol=1e-8)
    assert quantile(VonMises(0.0, 0.0), 0.25) == pytest.approx(-math.pi / 2)


def test_wrap_angle_never_returns_minus_pi():
    x = np.array([2 * math.pi, np.nextafter(math.pi, 4.0), -math.pi, np.nextafter(-math.pi, -4.0), 3 * math.pi])
    values = wrap_angle(x)
    assert np.all(values > -math.pi) and np.all(values <= math.pi)
    assert values[0] == pytest.approx(0.0, abs=1e-15)
    assert wrap_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-15)


def test_factory_round_trip_through_dict():
    for dist in (Gamma(1.0, 2.0), VonMises(0.3, 1.5), ZeroInflatedGamma(0.05, 2.0, 1.2),
                 GammaMixture((0.4, 0.6), (Gamma(1.0, 2.0), Gamma(3.0, 4.0)))):
        assert get_distribution(dist.to_dict()) == dist


def test_factory_rejects_unknown_family():
    with pytest.raises(InvalidParameterError):
        get_distribution({"family": "weibull", "shape": 1.0})
    with pytest.raises(InvalidParameterError):
        get_distribution({"family": "gamma", "mean": 1.0})

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from swlab import params as P


def test_parameter_counts():
    assert P.N_ESTIMATED == 36
    assert len(P.FIXED) == 5
    derived = [s for s in P.load_param_table() if s.role == "derived"]
    assert len(derived) == 18
    assert len(P.SHOCK_SD_NAMES) == 7


def test_fixed_values():
    assert P.FIXED == {"delta": 0.025, "g_y": 0.18, "lambda_w": 1.5, "eps_p": 10.0, "eps_w": 10.0}


def test_modes_inside_bounds():
    assert P.in_bounds(P.posterior_mode()).all()
    assert P.in_bounds(P.sw_posterior_mode()).all()
    assert np.isfinite(P.prior_log_density(P.posterior_mode()))


def test_theta_mapping_round_trip(mode_theta):
    d = P.theta_to_dict(mode_theta)
    assert list(d) == list(P.NAMES)
    assert np.array_equal(P.theta_from_mapping(d), mode_theta)
    with pytest.raises(KeyError):
        P.theta_from_mapping({k: v for k, v in d.items() if k != "alpha"})


def test_beta_shape_from_moments():
    a, b = P.beta_shape(0.5, 0.2)
    assert a == pytest.approx(2.625, abs=1e-12)
    assert b == pytest.approx(2.625, abs=1e-12)


@pytest.mark.parametrize("family,mean,sd", [
    ("beta", 0.5, 0.2), ("beta", 0.7, 0.1), ("beta", 0.75, 0.1), ("gamma", 0.62, 0.1), ("gamma", 0.25, 0.1),
    ("gaussian", 1.5, 0.25),
])
def test_prior_moments_by_quadrature(family, mean, sd):
    prior = P.Prior.from_moments(family, mean, sd)
    lo, hi = {"beta": (0.0, 1.0), "gamma": (0.0, np.inf), "gaussian": (-np.inf, np.inf)}[family]
    pdf = lambda x: math.exp(prior.logpdf(x))  # noqa: E731
    m0 = integrate.quad(pdf, lo, hi)[0]
    m1 = integrate.quad(lambda x: x * pdf(x), lo, hi)[0]
    m2 = integrate.quad(lambda x: x * x * pdf(x), lo, hi)[0]
    assert m0 == pytest.approx(1.0, abs=1e-8)
    assert m1 == pytest.approx(mean, abs=1e-8)
    assert math.sqrt(m2 - m1 * m1) == pytest.approx(sd, abs=1e-8)


def test_inverse_gamma_density_and_sampler():
    prior = P.Prior.from_moments("inverse-gamma", 0.1, 2.0)
    pdf = lambda x: math.exp(prior.logpdf(x))  # noqa: E731
    assert integrate.quad(pdf, 0.0, np.inf, limit=200)[0] == pytest.approx(1.0, abs=1e-7)
    # nu s^2 / x^2 is chi-squared with nu degrees of freedom
    cdf = lambda x: stats.chi2.sf(2.0 * 0.01 / np.asarray(x) ** 2, 2.0)  # noqa: E731
    for x in (0.05, 0.1, 0.3):
        assert integrate.quad(pdf, 0.0, x)[0] == pytest.approx(float(cdf(x)), abs=1e-8)
    rng = np.random.default_rng(0)
    draws = np.array([prior.sample(rng) for _ in range(5000)])
    assert stats.kstest(draws, cdf).pvalue > 1e-3


def test_prior_log_density_outside_bounds(mode_theta):
    theta = mode_theta.copy()
    theta[P.INDEX["rho_p"]] = 1.5
    assert P.prior_log_density(theta) == -math.inf
    with pytest.raises(ValueError):
        P.prior_log_density(theta[:3])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_prior_draws_in_box(seed):
    theta = P.sample_prior(np.random.default_rng(seed))
    assert P.in_bounds(theta).all()
    assert np.isfinite(P.prior_log_density(theta))


def test_normalized_unit_box():
    np.testing.assert_allclose(P.normalized(P.LOWER), 0.0)
    np.testing.assert_allclose(P.normalized(P.UPPER), 1.0)


def test_derived_values_at_mode(mode_theta):
    fp = P.expand_params(mode_theta)
    assert fp.ok
    v = fp.values
    assert v["gamma"] == pytest.approx(1.0047, abs=1e-15)
    assert v["beta"] == pytest.approx(1 / 1.0013, abs=1e-15)
    assert v["pi_star"] == pytest.approx(1.0063, abs=1e-15)
    assert v["phi_p"] == v["Phi"]
    rk = v["gamma"] ** v["sigma_c"] / v["beta"] - 1 + 0.025
    assert v["rk_star"] == pytest.approx(rk, rel=1e-14)
    assert v["c_y"] + v["i_y"] + v["g_y"] == pytest.approx(1.0, abs=1e-14)
    assert v["r_bar"] == pytest.approx(100 * (v["pi_star"] / (v["beta"] * v["gamma"] ** -v["sigma_c"]) - 1), rel=1e-12)
    assert 0 < fp.coef["c1"] < 1 and fp.coef["pi3"] > 0 and fp.coef["w4"] > 0


def test_expand_flags_bad_points(mode_theta):
    theta = mode_theta.copy()
    theta[P.INDEX["rho_p"]] = 1.5
    fp = P.expand_params(theta)
    assert fp.out_of_support == ("rho_p",) and not fp.ok
    theta = mode_theta.copy()
    theta[P.INDEX["alpha"]] = 0.95  # investment share above one: no room for consumption
    theta[P.INDEX["Phi"]] = 3.0
    fp = P.expand_params(theta)
    assert "c_y" in fp.invalid


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=36, max_size=36))
def test_expand_never_raises_inside_box(u):
    theta = P.LOWER + np.array(u) * (P.UPPER - P.LOWER)
    fp = P.expand_params(theta)
    assert not fp.out_of_support
    if fp.ok:
        assert all(math.isfinite(x) for x in fp.coef.values())

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import joint_gaussian_nll, random_stable_system
from swlab.errors import FilterDivergedError, NonstationaryError
from swlab.statespace import (
    StateSpace, TimeSeriesPanel, entropy_rate, forecast, kalman_filter, kalman_nll, one_step_predictions,
    read_panel_csv, reduce, simulate, stationary_moments, steady_state_innovation_cov, write_panel_csv,
)

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def scalar_ss(phi=0.0, sigma=1.0, d=0.0, mu=0.0):
    return StateSpace(d=np.array([d]), T=np.array([[phi]]), H=np.array([[1.0]]), Q=np.array([[sigma**2]]),
                      Z=np.array([[1.0]]), mu=np.array([mu]))


def ar1_plus_noise(phi, s_e, s_w):
    return StateSpace(d=np.zeros(2), T=np.diag([phi, 0.0]), H=np.eye(2), Q=np.diag([s_e**2, s_w**2]),
                      Z=np.array([[1.0, 1.0]]), mu=np.zeros(1))


def spectral_log_det(ss, n_grid=4096):
    """Kolmogorov-Szego: log det of the innovation covariance from the spectral density."""
    r = reduce(ss).ss
    n = r.n_state
    W = r.state_noise
    total = 0.0
    for w in 2 * np.pi * (np.arange(n_grid) + 0.5) / n_grid:
        G = np.linalg.solve(np.eye(n) - r.T * np.exp(-1j * w), np.eye(n))
        S = r.Z @ G @ W @ G.conj().T @ r.Z.T
        total += np.linalg.slogdet(S)[1]
    return total / n_grid


# -- moments -------------------------------------------------------------------

def test_lyapunov_zero_transition():
    rng = np.random.default_rng(0)
    ss = random_stable_system(rng, n=3, k=2, m=3)
    ss = StateSpace(d=ss.d, T=np.zeros((3, 3)), H=ss.H, Q=ss.Q, Z=ss.Z, mu=ss.mu)
    mean, cov = stationary_moments(ss)
    np.testing.assert_allclose(cov, ss.H @ ss.Q @ ss.H.T, atol=1e-12)
    np.testing.assert_allclose(mean, ss.d, atol=1e-12)


def test_lyapunov_scalar():
    mean, cov = stationary_moments(scalar_ss(phi=0.5, sigma=1.0, d=1.0))
    assert cov[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert mean[0] == pytest.approx(2.0, abs=1e-12)


def test_nonstationary_raises():
    with pytest.raises(NonstationaryError):
        stationary_moments(scalar_ss(phi=1.0))
    with pytest.raises(NonstationaryError):
        kalman_nll(scalar_ss(phi=-1.2), np.zeros((3, 1)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_lyapunov_residual(seed):
    ss = random_stable_system(np.random.default_rng(seed))
    _, cov = stationary_moments(ss)
    resid = ss.T @ cov @ ss.T.T + ss.state_noise - cov
    assert np.abs(resid).max() <= 1e-10 * max(1.0, np.abs(cov).max())
    assert np.linalg.eigvalsh(cov).min() > -1e-10


def test_reduce_is_exact(mode_ss):
    red = reduce(mode_ss)
    assert red.ss.n_state < mode_ss.n_state
    full = mode_ss.state_noise
    back = red.basis @ red.ss.state_noise @ red.basis.T
    np.testing.assert_allclose(back, full, atol=1e-12)


def test_simulated_covariance_matches_lyapunov():
    rng = np.random.default_rng(11)
    base = random_stable_system(rng, n=4, k=4, m=4, radius=0.8)
    ss = StateSpace(d=base.d, T=base.T, H=base.H, Q=base.Q, Z=np.eye(4), mu=np.zeros(4))
    mean, cov = stationary_moments(ss)
    x = simulate(ss, 1_000_000, burn_in=100, seed=5).values
    batches = np.array([np.cov(b, rowvar=False, bias=True) for b in np.split(x, 100)])
    se = batches.std(axis=0, ddof=1) / math.sqrt(len(batches))
    sample = np.cov(x, rowvar=False, bias=True)
    assert np.all(np.abs(sample - cov) <= 3 * se)
    bm = np.array([b.mean(axis=0) for b in np.split(x, 100)])
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 3 * bm.std(axis=0, ddof=1) / 10)


# -- Kalman filter -------------------------------------------------------------

def test_kalman_scalar_standard_normal():
    nll, per_step = kalman_nll(scalar_ss(), np.zeros((1, 1)))
    assert nll == pytest.approx(0.9189385332046727, abs=1e-12)
    assert per_step.shape == (1,)


def test_kalman_iid_sequence():
    x = np.array([[0.5], [-1.0], [2.0]])
    nll, _ = kalman_nll(scalar_ss(sigma=2.0, mu=1.0), x)
    expected = sum(HALF_LOG_2PI + math.log(2.0) + 0.5 * ((v - 1.0) / 2.0) ** 2 for v in x[:, 0])
    assert nll == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_kalman_matches_joint_gaussian(seed):
    rng = np.random.default_rng(1000 + seed)
    ss = random_stable_system(rng)
    n_time = int(rng.integers(1, 21))
    x = simulate(ss, n_time, burn_in=20, seed=seed).values
    nll, per_step = kalman_nll(ss, x)
    assert nll == pytest.approx(joint_gaussian_nll(ss, x), abs=1e-8)
    assert per_step.sum() == pytest.approx(nll, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_kalman_affine_observation_change(seed):
    """Relabelling observations by x' = A x + b shifts the NLL by n log|det A|."""
    rng = np.random.default_rng(seed)
    ss = random_stable_system(rng)
    x = simulate(ss, 15, burn_in=10, seed=seed).values
    k = ss.n_obs
    A = rng.normal(size=(k, k)) + 2 * np.eye(k)
    b = rng.normal(size=k)
    ss2 = StateSpace(d=ss.d, T=ss.T, H=ss.H, Q=ss.Q, Z=A @ ss.Z, mu=A @ ss.mu + b)
    nll, _ = kalman_nll(ss, x)
    nll2, _ = kalman_nll(ss2, x @ A.T + b)
    assert nll2 == pytest.approx(nll + len(x) * math.log(abs(np.linalg.det(A))), abs=1e-7)


def test_kalman_singular_innovation_raises():
    ss = StateSpace(d=np.zeros(2), T=np.diag([0.5, 0.3]), H=np.eye(2), Q=np.eye(2),
                    Z=np.array([[1.0, 0.0], [0.0, 0.0]]), mu=np.zeros(2))
    with pytest.raises(FilterDivergedError):
        kalman_nll(ss, np.zeros((2, 2)))


def test_kalman_rejects_wrong_width():
    with pytest.raises(ValueError):
        kalman_nll(scalar_ss(), np.zeros((3, 2)))


def test_kalman_psd_check_and_freeze(mode_ss, sim_panel):
    plain = kalman_filter(mode_ss, sim_panel, steady_tol=0.0)
    checked = kalman_filter(mode_ss, sim_panel, check_psd=True)
    assert plain.steady_from == -1
    assert checked.nll == pytest.approx(plain.nll, rel=1e-12)


def test_dsge_cross_check(mode_ss, sim_panel):
    # frozen log-likelihood of this panel from an independent third-party implementation
    nll, _ = kalman_nll(mode_ss, sim_panel)
    assert -nll == pytest.approx(-597.5782231888636, abs=1e-7)


def test_one_step_predictions_use_history():
    ss = scalar_ss(phi=0.8, sigma=1.0, d=0.2)
    x = simulate(ss, 30, seed=1).values
    pred = one_step_predictions(ss, x[:20], x[20:])
    np.testing.assert_allclose(pred, 0.2 + 0.8 * x[19:29], atol=1e-12)


# -- simulation ----------------------------------------------------------------

def test_simulate_deterministic(mode_ss):
    a = simulate(mode_ss, 50, burn_in=10, seed=3).values
    b = simulate(mode_ss, 50, burn_in=10, seed=3).values
    c = simulate(mode_ss, 50, burn_in=10, seed=4).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_simulate_without_noise_is_constant(mode_ss):
    quiet = StateSpace(d=mode_ss.d, T=mode_ss.T, H=mode_ss.H, Q=np.zeros_like(mode_ss.Q), Z=mode_ss.Z, mu=mode_ss.mu)
    x = simulate(quiet, 20, seed=0).values
    np.testing.assert_allclose(x, np.tile(mode_ss.mu, (20, 1)), atol=1e-12)


# -- forecasting ---------------------------------------------------------------

def test_forecast_horizon_one(mode_ss, sim_panel):
    res = kalman_filter(mode_ss, sim_panel)
    pred, covs = forecast(mode_ss, (res.filtered_mean, res.filtered_cov), 1)
    a = mode_ss.d + mode_ss.T @ res.filtered_mean
    np.testing.assert_allclose(pred[0], mode_ss.mu + mode_ss.Z @ a, atol=1e-12)
    P = mode_ss.T @ res.filtered_cov @ mode_ss.T.T + mode_ss.state_noise
    np.testing.assert_allclose(covs[0], mode_ss.Z @ P @ mode_ss.Z.T, atol=1e-10)


def test_forecast_self_consistent(mode_ss, sim_panel):
    res = kalman_filter(mode_ss, sim_panel)
    m, P = res.filtered_mean, res.filtered_cov
    pred, covs = forecast(mode_ss, (m, P), 6)
    m1 = mode_ss.d + mode_ss.T @ m
    P1 = mode_ss.T @ P @ mode_ss.T.T + mode_ss.state_noise
    pred2, covs2 = forecast(mode_ss, (m1, P1), 5)
    np.testing.assert_allclose(pred2, pred[1:], atol=1e-10)
    np.testing.assert_allclose(covs2, covs[1:], atol=1e-8)


def test_forecast_long_horizon_limit():
    ss = ar1_plus_noise(0.7, 1.0, 0.5)
    mean, cov = stationary_moments(ss)
    pred, covs = forecast(ss, (np.array([3.0, -1.0]), np.zeros((2, 2))), 200)
    np.testing.assert_allclose(pred[-1], ss.mu + ss.Z @ mean, atol=1e-12)
    np.testing.assert_allclose(covs[-1], ss.Z @ cov @ ss.Z.T, atol=1e-10)


def test_forecast_rejects_zero_horizon():
    with pytest.raises(ValueError):
        forecast(scalar_ss(), (np.zeros(1), np.zeros((1, 1))), 0)


# -- entropy rate --------------------------------------------------------------

def test_entropy_iid_standard_normal():
    assert entropy_rate(scalar_ss()) == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-10)
    assert entropy_rate(scalar_ss()) == pytest.approx(1.41894, abs=1e-5)


@pytest.mark.parametrize("phi,s_e,s_w", [(0.5, 1.0, 1.0), (0.9, 0.3, 2.0), (-0.4, 2.0, 0.1)])
def test_entropy_ar1_plus_noise_closed_form(phi, s_e, s_w):
    """Innovation variance from the MA(1) factorisation of the quasi-differenced series."""
    g0 = s_e**2 + (1 + phi**2) * s_w**2
    g1 = -phi * s_w**2
    r = g1 / g0
    theta = (1 - math.sqrt(1 - 4 * r * r)) / (2 * r) if r else 0.0
    var = g1 / theta if theta else g0
    F = steady_state_innovation_cov(ar1_plus_noise(phi, s_e, s_w))
    assert F[0, 0] == pytest.approx(var, rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_entropy_matches_spectral_factorisation(seed):
    rng = np.random.default_rng(seed)
    ss = random_stable_system(rng, radius=0.8)
    k = ss.n_obs
    h = entropy_rate(ss)
    expected = 0.5 * (k * math.log(2 * math.pi * math.e) + spectral_log_det(ss, 2048))
    assert h == pytest.approx(expected, abs=1e-8)


def test_entropy_shock_scaling(mode_ss):
    c = 2.0
    scaled = StateSpace(d=mode_ss.d, T=mode_ss.T, H=mode_ss.H, Q=mode_ss.Q * c * c, Z=mode_ss.Z, mu=mode_ss.mu)
    assert entropy_rate(scaled) == pytest.approx(entropy_rate(mode_ss) + 7 * math.log(c), abs=1e-7)


# -- panel files ---------------------------------------------------------------

def test_panel_csv_round_trip(tmp_path, fixture_panel):
    path = tmp_path / "p.csv"
    write_panel_csv(fixture_panel, path)
    back = read_panel_csv(path)
    assert back.names == fixture_panel.names
    assert back.dates == fixture_panel.dates
    assert np.array_equal(back.values, fixture_panel.values)


def test_panel_validation():
    with pytest.raises(ValueError):
        TimeSeriesPanel(("a", "b"), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        TimeSeriesPanel(("a",), np.array([[np.nan]]))
    with pytest.raises(ValueError):
        TimeSeriesPanel(("a", "a"), np.zeros((1, 2)))

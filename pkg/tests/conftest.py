import numpy as np
import pytest
from scipy import stats

from swlab.params import posterior_mode
from swlab.model import solve
from swlab.statespace import StateSpace

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_stable_system(rng, n=None, k=None, m=None, radius=0.95):
    """Small random state space with spectral radius below ``radius``."""
    n = n or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, n + 1))
    m = m or int(rng.integers(k, n + 2))
    T = rng.normal(size=(n, n))
    rho = max(np.abs(np.linalg.eigvals(T)))
    T *= rng.uniform(0.1, radius) / rho
    return StateSpace(
        d=rng.normal(size=n),
        T=T,
        H=_well_conditioned(rng, n, m),
        Q=np.diag(rng.uniform(0.2, 2.0, size=m)),
        Z=_well_conditioned(rng, k, n),
        mu=rng.normal(size=k),
    )


def _well_conditioned(rng, rows, cols):
    """Full-rank matrix with singular values in [0.5, 2]."""
    u, _ = np.linalg.qr(rng.normal(size=(rows, rows)))
    v, _ = np.linalg.qr(rng.normal(size=(cols, cols)))
    s = np.zeros((rows, cols))
    r = min(rows, cols)
    s[:r, :r] = np.diag(rng.uniform(0.5, 2.0, size=r))
    return u @ s @ v.T


def joint_gaussian_nll(ss, x):
    """Brute-force NLL of the stacked observations under the stationary law."""
    n_time = x.shape[0]
    n = ss.n_state
    mean = np.linalg.solve(np.eye(n) - ss.T, ss.d)
    W = ss.H @ ss.Q @ ss.H.T
    # vec-solve of the Lyapunov equation, independent of the library routine
    S = np.linalg.solve(np.eye(n * n) - np.kron(ss.T, ss.T), W.reshape(-1)).reshape(n, n)
    powers = [np.eye(n)]
    for _ in range(n_time):
        powers.append(ss.T @ powers[-1])
    k = ss.n_obs
    big = np.empty((n_time * k, n_time * k))
    for t in range(n_time):
        for s in range(n_time):
            cz = powers[t - s] @ S if t >= s else S @ powers[s - t].T
            big[t * k:(t + 1) * k, s * k:(s + 1) * k] = ss.Z @ cz @ ss.Z.T
    mu = np.tile(ss.mu + ss.Z @ mean, n_time)
    return -stats.multivariate_normal(mean=mu, cov=big).logpdf(x.reshape(-1))


@pytest.fixture(scope="session")
def mode_theta():
    return posterior_mode()


@pytest.fixture(scope="session")
def mode_ss(mode_theta):
    ss, solved, fp = solve(mode_theta)
    assert ss is not None
    return ss


@pytest.fixture(scope="session")
def sim_panel():
    from pathlib import Path
    from swlab.model import OBS_LABELS
    from swlab.statespace import TimeSeriesPanel
    path = Path(__file__).parent / "data" / "sim_table1_mode.csv"
    return TimeSeriesPanel(OBS_LABELS, np.loadtxt(path, delimiter=",", skiprows=1))


@pytest.fixture(scope="session")
def fixture_panel():
    from swlab.data import fixture_dir, ingest
    return ingest(fixture_dir())


"""Linear Gaussian state-space engine.

    z_t = d + T z_{t-1} + H e_t,   e_t ~ N(0, Q)
    x_t = mu + Z z_t

Likelihood evaluation, simulation, forecasting, stationary moments and the
entropy rate. All routines work in the support of the stationary covariance
(see :func:`reduce`), which is exact and cuts the Smets-Wouters state from 50
to roughly 27 dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import FilterDivergedError, NonstationaryError, RiccatiDivergedError

LOG_2PI = math.log(2.0 * math.pi)
_potrf, _potri = linalg.lapack.get_lapack_funcs(("potrf", "potri"), (np.zeros(1),))
STATIONARY_MARGIN = 1e-10


@dataclass(frozen=True)
class StateSpace:
    d: np.ndarray
    T: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        n = self.T.shape[0]
        k = self.Z.shape[0]
        if self.T.shape != (n, n) or self.d.shape != (n,):
            raise ValueError("transition dimensions disagree")
        if self.H.shape[0] != n or self.Q.shape != (self.H.shape[1],) * 2:
            raise ValueError("shock dimensions disagree")
        if self.Z.shape != (k, n) or self.mu.shape != (k,):
            raise ValueError("observation dimensions disagree")
        if np.any(np.diag(self.Q) < 0) or np.any(self.Q - np.diag(np.diag(self.Q))):
            raise ValueError("Q must be diagonal and nonnegative")

    @property
    def n_state(self) -> int:
        return self.T.shape[0]

    @property
    def n_obs(self) -> int:
        return self.Z.shape[0]

    @property
    def state_noise(self) -> np.ndarray:
        return self.H @ self.Q @ self.H.T


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Observables in canonical column order with a quarterly date index."""

    names: tuple[str, ...]
    values: np.ndarray
    dates: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.names):
            raise ValueError("panel values must be T x len(names)")
        if len(set(self.names)) != len(self.names):
            raise ValueError("series names must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("panel contains missing or non-finite values")
        if self.dates and len(self.dates) != values.shape[0]:
            raise ValueError("date index length does not match values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self) -> int:
        return self.values.shape[0]

    def rows(self, start: int, stop: int) -> "TimeSeriesPanel":
        dates = self.dates[start:stop] if self.dates else ()
        return TimeSeriesPanel(self.names, self.values[start:stop], dates)


def spectral_radius(T: np.ndarray) -> float:
    if T.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(T))))


def stationary_moments(ss: StateSpace) -> tuple[np.ndarray, np.ndarray]:
    """Unconditional mean and covariance of the state.

    Raises
    ------
    NonstationaryError
        If the spectral radius of ``T`` is not below ``1 - 1e-10``.
    """
    rho = spectral_radius(ss.T)
    if not rho < 1.0 - STATIONARY_MARGIN:
        raise NonstationaryError(f"spectral radius {rho:.12g} >= 1")
    n = ss.n_state
    mean = np.linalg.solve(np.eye(n) - ss.T, ss.d)
    W = ss.state_noise
    cov = linalg.solve_discrete_lyapunov(ss.T, W)
    cov = 0.5 * (cov + cov.T)
    # one-step polish brings the Lyapunov residual down to rounding level
    for _ in range(2):
        resid = ss.T @ cov @ ss.T.T + W - cov
        scale = max(np.abs(cov).max(), 1e-300)
        if np.abs(resid).max() <= 1e-12 * scale:
            break
        cov = cov + linalg.solve_discrete_lyapunov(ss.T, 0.5 * (resid + resid.T))
        cov = 0.5 * (cov + cov.T)
    return mean, cov


@dataclass(frozen=True)
class Reduced:
    """A state space restricted to the range of ``basis`` (``z = basis @ s``)."""

    ss: StateSpace
    basis: np.ndarray
    mean: np.ndarray
    cov: np.ndarray


def reduce(ss: StateSpace, rel_tol: float = 1e-12) -> Reduced:
    """Project onto the support of the stationary distribution.

    The range of the stationary covariance is invariant under ``T`` and
    contains every shock direction, so filtering and simulation started from
    the stationary law never leave it.
    """
    mean, cov = stationary_moments(ss)
    w, V = np.linalg.eigh(cov)
    top = max(w[-1], 0.0) if w.size else 0.0
    keep = w > rel_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    U = V[:, keep]
    if np.any(ss.d) or np.any(mean):
        # the mean direction may lie outside the covariance range
        r = mean - U @ (U.T @ mean)
        nr = np.linalg.norm(r)
        if nr > 1e-12 * max(np.linalg.norm(mean), 1e-300):
            U = np.column_stack([U, r / nr])
    red = StateSpace(
        d=U.T @ ss.d, T=U.T @ ss.T @ U, H=U.T @ ss.H, Q=ss.Q, Z=ss.Z @ U, mu=ss.mu,
    )
    return Reduced(red, U, U.T @ mean, U.T @ cov @ U)


@dataclass(frozen=True)
class FilterResult:
    nll: float
    per_step: np.ndarray
    predicted_obs: np.ndarray  # one-step-ahead means of x_t given x_{1:t-1}
    filtered_mean: np.ndarray  # E[z_T | x_{1:T}] in full coordinates
    filtered_cov: np.ndarray
    steady_from: int  # first step that used the frozen steady-state gain (-1 if never)


def kalman_filter(ss: StateSpace, data, *, steady_tol: float = 1e-13, check_psd: bool = False,
                  reduced: Reduced | None = None) -> FilterResult:
    """Exact Gaussian likelihood by the Kalman filter.

    Initialised at the stationary mean and covariance. Covariance updates use
    the Joseph form and are symmetrised. Once the predicted covariance stops
    moving (max change below ``steady_tol`` relative) the gain is frozen,
    which changes the result only at rounding level.

    Parameters
    ----------
    ss : StateSpace
    data : TimeSeriesPanel or array, shape (n_time, n_obs)

    Raises
    ------
    NonstationaryError
    FilterDivergedError
        If an innovation covariance is not positive definite.
    """
    x = np.asarray(getattr(data, "values", data), dtype=float)
    if x.ndim != 2 or x.shape[1] != ss.n_obs:
        raise ValueError(f"data must be (n_time, {ss.n_obs})")
    red = reduced if reduced is not None else reduce(ss)
    r = red.ss
    n, k = r.n_state, r.n_obs
    T, d, Zm, mu = r.T, r.d, r.Z, r.mu
    W = r.state_noise
    a = red.mean.copy()
    P = red.cov.copy()
    I = np.eye(n)
    lower_mask = np.tri(k, dtype=bool)
    n_time = x.shape[0]
    per_step = np.empty(n_time)
    pred = np.empty((n_time, k))
    const = k * LOG_2PI
    steady_from = -1
    frozen = None
    a_f, P_f = a, P
    P_prev = P
    for t in range(n_time):
        xhat = mu + Zm @ a
        pred[t] = xhat
        v = x[t] - xhat
        if frozen is None:
            ZP = Zm @ P
            F = ZP @ Zm.T
            L, info = _potrf(F, lower=1)
            if info != 0:
                raise FilterDivergedError(f"innovation covariance not positive definite at step {t}")
            logdet = 2.0 * np.log(np.diag(L)).sum()
            Finv, info = _potri(L, lower=1)
            if info != 0:
                raise FilterDivergedError(f"innovation covariance not invertible at step {t}")
            Finv = np.where(lower_mask, Finv, Finv.T)
            K = ZP.T @ Finv
            a_f = a + K @ v
            IKZ = I - K @ Zm
            # Joseph form (no measurement noise) fused with the prediction step
            TJ = T @ IKZ
            P_new = TJ @ P @ TJ.T + W
            P_new = 0.5 * (P_new + P_new.T)
            if check_psd:
                if np.linalg.eigvalsh(P_new).min() < -1e-10 * max(1.0, np.abs(P_new).max()):
                    raise FilterDivergedError(f"predicted covariance lost semidefiniteness at step {t}")
            if steady_tol > 0 and np.abs(P_new - P).max() <= steady_tol * max(1.0, np.abs(P).max()):
                frozen = (Finv, logdet, K)
                steady_from = t + 1
            P_prev = P
            P = P_new
        else:
            Finv, logdet, K = frozen
            a_f = a + K @ v
        per_step[t] = 0.5 * (const + logdet + v @ Finv @ v)
        a = d + T @ a_f
    if n_time > 0:
        # filtered covariance at the last step, from the last prior covariance used
        Finv, logdet, K = frozen if frozen is not None else (Finv, logdet, K)
        P_last = P if frozen is not None else P_prev
        IKZ = I - K @ Zm
        P_f = IKZ @ P_last @ IKZ.T
        P_f = 0.5 * (P_f + P_f.T)
    U = red.basis
    return FilterResult(
        nll=float(per_step.sum()), per_step=per_step, predicted_obs=pred,
        filtered_mean=U @ a_f, filtered_cov=U @ P_f @ U.T, steady_from=steady_from,
    )


def kalman_nll(ss: StateSpace, data) -> tuple[float, np.ndarray]:
    """Total negative log-likelihood and its per-step contributions."""
    res = kalman_filter(ss, data)
    return res.nll, res.per_step


def simulate(ss: StateSpace, n: int, burn_in: int = 0, seed=None, names=None) -> TimeSeriesPanel:
    """Draw ``n`` observations after discarding ``burn_in`` steps.

    The state starts at the stationary mean and is driven by Gaussian
    innovations from ``numpy.random.default_rng(seed)``.
    """
    red = reduce(ss)
    r = red.ss
    rng = np.random.default_rng(seed)
    total = n + burn_in
    sd = np.sqrt(np.diag(r.Q))
    eps = rng.standard_normal((total, sd.size)) * sd
    shocks = eps @ r.H.T
    s = red.mean.copy()
    T, d = r.T, r.d
    out = np.empty((n, r.n_obs))
    for t in range(total):
        s = d + T @ s + shocks[t]
        if t >= burn_in:
            out[t - burn_in] = r.mu + r.Z @ s
    if names is None:
        from .model import OBS_LABELS  # local import: model depends on this module's types
        names = OBS_LABELS if r.n_obs == len(OBS_LABELS) else tuple(f"x{i}" for i in range(r.n_obs))
    return TimeSeriesPanel(tuple(names), out)


def forecast(ss: StateSpace, filtered_state, horizon: int, *, return_cov: bool = True):
    """Multi-step mean path from a filtered state, without updating on new data.

    Returns
    -------
    pred : ndarray, shape (horizon, n_obs)
    covs : ndarray, shape (horizon, n_obs, n_obs) or None
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    mean, cov = filtered_state
    a = np.asarray(mean, dtype=float)
    P = np.asarray(cov, dtype=float)
    W = ss.state_noise
    pred = np.empty((horizon, ss.n_obs))
    covs = np.empty((horizon, ss.n_obs, ss.n_obs)) if return_cov else None
    for h in range(horizon):
        a = ss.d + ss.T @ a
        pred[h] = ss.mu + ss.Z @ a
        if return_cov:
            P = ss.T @ P @ ss.T.T + W
            covs[h] = ss.Z @ P @ ss.Z.T
    return pred, covs


def one_step_predictions(ss: StateSpace, train, test) -> np.ndarray:
    """One-step-ahead predictions over ``test`` that condition on all earlier data."""
    x_train = np.asarray(getattr(train, "values", train), dtype=float)
    x_test = np.asarray(getattr(test, "values", test), dtype=float)
    res = kalman_filter(ss, np.vstack([x_train, x_test]))
    return res.predicted_obs[len(x_train):]


def steady_state_innovation_cov(ss: StateSpace, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Limit of the innovation covariance ``Z P Z'`` under the filter Riccati recursion."""
    red = reduce(ss)
    r = red.ss
    T, Zm, W = r.T, r.Z, r.state_noise
    P = red.cov.copy()
    F = Zm @ P @ Zm.T
    for _ in range(max_iter):
        ZP = Zm @ P
        try:
            gain = np.linalg.solve(F, ZP)
        except np.linalg.LinAlgError as exc:
            raise RiccatiDivergedError("singular innovation covariance") from exc
        P_f = P - ZP.T @ gain
        P = T @ P_f @ T.T + W
        P = 0.5 * (P + P.T)
        F_new = Zm @ P @ Zm.T
        if not np.all(np.isfinite(F_new)):
            raise RiccatiDivergedError("Riccati recursion produced non-finite values")
        if np.abs(F_new - F).max() <= tol * max(1.0, np.abs(F).max()):
            return 0.5 * (F_new + F_new.T)
        F = F_new
    raise RiccatiDivergedError(f"Riccati recursion did not converge in {max_iter} iterations")


def entropy_rate(ss: StateSpace, tol: float = 1e-10) -> float:
    """Entropy rate per time step, ``0.5 * log det(2 pi e F)``, in nats."""
    F = steady_state_innovation_cov(ss, tol=tol)
    sign, logdet = np.linalg.slogdet(2.0 * math.pi * math.e * F)
    if sign <= 0:
        raise RiccatiDivergedError("steady-state innovation covariance is not positive definite")
    return 0.5 * float(logdet)


def write_panel_csv(panel: TimeSeriesPanel, path) -> None:
    """Write ``date,<names...>`` with full-precision values."""
    import csv

    dates = panel.dates or tuple(str(i) for i in range(len(panel)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.names])
        for d, row in zip(dates, panel.values):
            w.writerow([d, *(repr(float(v)) for v in row)])


def read_panel_csv(path) -> TimeSeriesPanel:
    """Inverse of :func:`write_panel_csv`."""
    import csv

    from .errors import ParseError

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip().lower() != "date":
        raise ParseError(f"{path}: expected a header starting with 'date'")
    names = tuple(h.strip() for h in rows[0][1:])
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric or ragged rows") from exc
    try:
        return TimeSeriesPanel(names, values, tuple(r[0].strip() for r in rows[1:]))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc

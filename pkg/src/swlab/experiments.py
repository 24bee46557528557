"""Simulate-and-estimate and series-permutation studies, their metrics and report tables.

Every cell of either study is a pure function of its inputs and a seed
derived from ``(master_seed, cell id)``, so cells can run in any order, in
parallel, or in shards, and re-running gives identical output.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations as _all_perms

import numpy as np

from . import params as P
from .errors import DegenerateError, SWLabError, ZeroSSEError, ZeroVarianceError
from .estimation import FitConfig, estimate
from .model import OBS_LABELS, solve
from .statespace import TimeSeriesPanel, forecast, kalman_filter, simulate

N_SERIES = len(OBS_LABELS)
N_PERMUTATIONS = math.factorial(N_SERIES)
SERIES_TITLES = dict(dy="output", dc="consumption", di="investment", dw="wages", pi="inflation",
                     l="hours worked", r="interest rate")

DEEP_PARAMETERS = ("phi", "sigma_c", "h", "xi_w", "sigma_l", "xi_p", "iota_w", "iota_p", "psi", "Phi",
                   "r_pi", "rho", "r_y", "r_dy", "pi_bar", "beta_const", "l_bar", "gamma_bar", "rho_ga", "alpha")
TAYLOR_PARAMETERS = ("r_pi", "rho", "r_y", "r_dy")


# --------------------------------------------------------------------------- permutations

def unrank(rank: int, n: int = N_SERIES) -> tuple[int, ...]:
    """Lexicographic rank -> permutation of ``range(n)`` (factorial number system)."""
    if not 0 <= rank < math.factorial(n):
        raise ValueError(f"rank must be in [0, {math.factorial(n) - 1}]")
    pool = list(range(n))
    out = []
    for k in range(n, 0, -1):
        f = math.factorial(k - 1)
        idx, rank = divmod(rank, f)
        out.append(pool.pop(idx))
    return tuple(out)


def rank_of(mapping) -> int:
    """Inverse of :func:`unrank`."""
    pool = sorted(mapping)
    if pool != list(range(len(mapping))):
        raise ValueError("mapping must be a permutation of 0..n-1")
    rank = 0
    for k, v in enumerate(mapping):
        idx = pool.index(v)
        rank += idx * math.factorial(len(mapping) - 1 - k)
        pool.pop(idx)
    return rank


@dataclass(frozen=True)
class Permutation:
    """Slot ``j`` of the permuted panel holds original series ``mapping[j]``."""

    mapping: tuple[int, ...]

    @classmethod
    def from_rank(cls, rank: int) -> "Permutation":
        return cls(unrank(rank))

    @property
    def rank(self) -> int:
        return rank_of(self.mapping)

    @property
    def inverse(self) -> "Permutation":
        return Permutation(tuple(int(i) for i in np.argsort(self.mapping)))

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[..., list(self.mapping)]

    def n_moved(self) -> int:
        return sum(1 for j, m in enumerate(self.mapping) if j != m)

    def describe(self, names=OBS_LABELS) -> str:
        return "|".join(names[m] for m in self.mapping)


def permute_panel(panel: TimeSeriesPanel, perm: Permutation) -> TimeSeriesPanel:
    """Swap the data columns; the slot names stay where they are."""
    return TimeSeriesPanel(panel.names, perm.apply(panel.values), panel.dates)


# --------------------------------------------------------------------------- metrics

def _sse(pred, actual):
    pred, actual = np.asarray(pred, float), np.asarray(actual, float)
    if pred.shape != actual.shape:
        raise ValueError("predictions and actuals must be aligned")
    return ((pred - actual) ** 2).sum(axis=0)


def per_series_mse(pred, actual) -> np.ndarray:
    return _sse(pred, actual) / np.asarray(actual).shape[0]


def pct_improvement(pred_p, pred_base, actual) -> float:
    """Mean over series of ``log(SSE_perm / SSE_base)``; negative beats the baseline."""
    sp, sb = _sse(pred_p, actual), _sse(pred_base, actual)
    if np.any(sb == 0) or np.any(sp == 0):
        raise ZeroSSEError("a series has zero squared error")
    return float(np.mean(np.log(sp / sb)))


def scaled_mse(pred, actual) -> float:
    """Mean over series of MSE divided by the (population) variance of the actuals."""
    actual = np.asarray(actual, float)
    var = actual.var(axis=0)
    if np.any(var == 0):
        raise ZeroVarianceError("a series is constant over the evaluation window")
    return float(np.mean(per_series_mse(pred, actual) / var))


def param_sq_err(theta_hat, truth) -> tuple[float, float]:
    """Mean squared error in bound-normalised and in raw coordinates."""
    th, tr = np.asarray(theta_hat, float), np.asarray(truth, float)
    return float(np.mean((P.normalized(th) - P.normalized(tr)) ** 2)), float(np.mean((th - tr) ** 2))


def taylor_correlations(records, train_size: int | None = None) -> np.ndarray:
    """Pearson correlations: 20 deep parameters (rows) x (r_pi, rho, r_y, r_dy).

    Uses the successful records at ``train_size`` (default: the largest).
    """
    ok = [r for r in records if r.status == "ok"]
    if train_size is None and ok:
        train_size = max(r.train_size for r in ok)
    ok = [r for r in ok if r.train_size == train_size]
    if len(ok) < 3:
        raise DegenerateError("need at least 3 estimates")
    th = np.array([[r.theta_hat[name] for name in DEEP_PARAMETERS] for r in ok])
    sd = th.std(axis=0)
    if np.any(sd == 0):
        const = [n for n, s in zip(DEEP_PARAMETERS, sd) if s == 0]
        raise DegenerateError(f"constant estimates for {', '.join(const)}")
    corr = np.corrcoef(th, rowvar=False)
    cols = [DEEP_PARAMETERS.index(t) for t in TAYLOR_PARAMETERS]
    return corr[:, cols]


# --------------------------------------------------------------------------- seeds

def cell_seed(master_seed: int, *cell) -> int:
    """Deterministic 63-bit seed for one experiment cell."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(c) for c in cell))
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))


# --------------------------------------------------------------------------- forecasting helpers

def fit_forecast(theta, train: np.ndarray, test: np.ndarray, one_step: bool = False) -> dict:
    """Training-fit and test-forecast diagnostics of one parameter vector.

    The test forecast is the multi-step mean path from the last filtered
    training state unless ``one_step`` is set, in which case each test point
    is predicted from all earlier data.
    """
    ss, solved, _ = solve(theta)
    if ss is None:
        raise DegenerateError("parameters have no unique stable solution")
    n = train.shape[0]
    full = kalman_filter(ss, np.vstack([train, test]))
    train_fit = kalman_filter(ss, train)
    if one_step:
        pred = full.predicted_obs[n:]
    else:
        pred, _ = forecast(ss, (train_fit.filtered_mean, train_fit.filtered_cov), test.shape[0], return_cov=False)
    return dict(
        train_pred=train_fit.predicted_obs, test_pred=pred, nll_train=train_fit.nll,
        nll_test=float(full.per_step[n:].sum()),
    )


# --------------------------------------------------------------------------- simulate and estimate

@dataclass
class SimEstimateConfig:
    train_sizes: tuple = tuple(range(100, 1101, 20))
    test_size: int = 1000
    burn_in: int = 1000
    n_total: int | None = None  # simulated length including burn-in; default burn_in + max(train) + test
    fit: FitConfig = field(default_factory=lambda: FitConfig(n_starts=0))
    one_step: bool = False
    jobs: int = 1

    @property
    def sim_length(self) -> int:
        need = self.burn_in + max(self.train_sizes) + self.test_size
        return max(need, self.n_total or 0)

    def to_dict(self) -> dict:
        return dict(train_sizes=list(self.train_sizes), test_size=self.test_size, burn_in=self.burn_in,
                    n_total=self.sim_length, fit=self.fit.to_dict(), one_step=self.one_step)


@dataclass
class SimEstimateRecord:
    replication: int
    train_size: int
    status: str = "ok"
    theta_hat: dict = field(default_factory=dict)
    penalized_nll: float = math.nan
    train_mse_avg: float = math.nan
    test_mse_avg: float = math.nan
    test_mse_per_series: tuple = (math.nan,) * N_SERIES
    param_sq_err: float = math.nan
    param_sq_err_raw: float = math.nan
    nll_per_obs_train: float = math.nan
    nll_per_obs_test: float = math.nan
    truth_test_mse_avg: float = math.nan
    truth_nll_per_obs_test: float = math.nan
    n_evals: int = 0

    def row(self) -> dict:
        out = {"replication": self.replication, "train_size": self.train_size, "status": self.status}
        for k in ("penalized_nll", "train_mse_avg", "test_mse_avg", "param_sq_err", "param_sq_err_raw",
                  "nll_per_obs_train", "nll_per_obs_test", "truth_test_mse_avg", "truth_nll_per_obs_test"):
            out[k] = getattr(self, k)
        for name, v in zip(OBS_LABELS, self.test_mse_per_series):
            out[f"test_mse_{name}"] = v
        out["n_evals"] = self.n_evals
        for name in P.NAMES:
            out[f"theta_{name}"] = self.theta_hat.get(name, math.nan)
        return out

    @classmethod
    def from_row(cls, row: dict) -> "SimEstimateRecord":
        f = _num
        theta = {n: f(row[f"theta_{n}"]) for n in P.NAMES if f"theta_{n}" in row}
        return cls(
            replication=int(row["replication"]), train_size=int(row["train_size"]), status=row["status"],
            theta_hat=theta, penalized_nll=f(row["penalized_nll"]), train_mse_avg=f(row["train_mse_avg"]),
            test_mse_avg=f(row["test_mse_avg"]),
            test_mse_per_series=tuple(f(row[f"test_mse_{n}"]) for n in OBS_LABELS),
            param_sq_err=f(row["param_sq_err"]), param_sq_err_raw=f(row["param_sq_err_raw"]),
            nll_per_obs_train=f(row["nll_per_obs_train"]), nll_per_obs_test=f(row["nll_per_obs_test"]),
            truth_test_mse_avg=f(row["truth_test_mse_avg"]), truth_nll_per_obs_test=f(row["truth_nll_per_obs_test"]),
            n_evals=int(float(row["n_evals"])),
        )


def simulated_replication(true_theta, config: SimEstimateConfig, master_seed: int, replication: int) -> np.ndarray:
    """The post-burn-in simulated observables of one replication."""
    ss, _, _ = solve(true_theta)
    if ss is None:
        raise DegenerateError("true parameters have no unique stable solution")
    n_keep = config.sim_length - config.burn_in
    return simulate(ss, n_keep, burn_in=config.burn_in, seed=cell_seed(master_seed, 0, replication)).values


def sim_estimate_cell(args) -> SimEstimateRecord:
    true_theta, config, master_seed, rep, n = args
    rec = SimEstimateRecord(replication=rep, train_size=n)
    try:
        x = simulated_replication(true_theta, config, master_seed, rep)
        train, test = x[:n], x[n:n + config.test_size]
        cfg = FitConfig.from_dict({**config.fit.to_dict(), "train_range": (0, n),
                                   "seed": cell_seed(master_seed, 1, rep, n), "jobs": 1})
        fit = estimate(train, cfg, supplied_starts=[true_theta])
        hat = fit_forecast(fit.theta_hat, train, test, config.one_step)
        tru = fit_forecast(true_theta, train, test, config.one_step)
        mse = per_series_mse(hat["test_pred"], test)
        rec.theta_hat = P.theta_to_dict(fit.theta_hat)
        rec.penalized_nll = fit.penalized_nll
        rec.train_mse_avg = float(per_series_mse(hat["train_pred"], train).mean())
        rec.test_mse_avg = float(mse.mean())
        rec.test_mse_per_series = tuple(float(v) for v in mse)
        rec.param_sq_err, rec.param_sq_err_raw = param_sq_err(fit.theta_hat, true_theta)
        rec.nll_per_obs_train = hat["nll_train"] / n
        rec.nll_per_obs_test = hat["nll_test"] / test.shape[0]
        rec.truth_test_mse_avg = float(per_series_mse(tru["test_pred"], test).mean())
        rec.truth_nll_per_obs_test = tru["nll_test"] / test.shape[0]
        rec.n_evals = fit.n_evals
    except SWLabError as exc:
        rec.status = exc.code
    return rec


def run_sim_estimate(true_theta, n_reps: int, config: SimEstimateConfig | None = None,
                     master_seed: int = 0, replications=None) -> list:
    """Simulate from ``true_theta``, re-estimate on growing windows, forecast ahead.

    ``replications`` restricts the run to a subset of replication indices
    (for sharding); by default all of ``range(n_reps)`` run.
    """
    config = config or SimEstimateConfig()
    true_theta = np.asarray(true_theta, float)
    ss, _, _ = solve(true_theta)
    if ss is None:
        raise DegenerateError("true parameters have no unique stable solution")
    reps = range(n_reps) if replications is None else replications
    cells = [(true_theta, config, master_seed, rep, n) for rep in reps for n in config.train_sizes]
    records = _map(sim_estimate_cell, cells, config.jobs)
    return sorted(records, key=lambda r: (r.replication, r.train_size))


def _map(fn, cells, jobs):
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


# --------------------------------------------------------------------------- permutation study

@dataclass
class PermutationConfig:
    train_range: tuple = (0, 200)
    test_range: tuple = (200, 251)
    fit: FitConfig = field(default_factory=FitConfig)
    one_step: bool = False
    jobs: int = 1

    def to_dict(self) -> dict:
        return dict(train_range=list(self.train_range), test_range=list(self.test_range),
                    fit=self.fit.to_dict(), one_step=self.one_step)


@dataclass
class PermutationRecord:
    rank: int
    mapping: tuple
    status: str = "ok"
    theta_hat: dict = field(default_factory=dict)
    penalized_nll_train: float = math.nan
    avg_pct_improvement: float = math.nan
    avg_scaled_mse: float = math.nan
    predictive_nll: float = math.nan
    per_series_mse: tuple = (math.nan,) * N_SERIES
    n_evals: int = 0
    test_pred: np.ndarray | None = field(default=None, repr=False)
    fit: object = field(default=None, repr=False)

    def row(self) -> dict:
        out = {"rank": self.rank, "mapping": "|".join(OBS_LABELS[m] for m in self.mapping),
               "n_moved": Permutation(tuple(self.mapping)).n_moved(), "status": self.status}
        for k in ("penalized_nll_train", "avg_pct_improvement", "avg_scaled_mse", "predictive_nll"):
            out[k] = getattr(self, k)
        for name, v in zip(OBS_LABELS, self.per_series_mse):
            out[f"mse_{name}"] = v
        out["n_evals"] = self.n_evals
        for name in P.NAMES:
            out[f"theta_{name}"] = self.theta_hat.get(name, math.nan)
        return out

    @classmethod
    def from_row(cls, row: dict) -> "PermutationRecord":
        f = _num
        return cls(
            rank=int(row["rank"]), mapping=unrank(int(row["rank"])), status=row["status"],
            theta_hat={n: f(row[f"theta_{n}"]) for n in P.NAMES if f"theta_{n}" in row},
            penalized_nll_train=f(row["penalized_nll_train"]), avg_pct_improvement=f(row["avg_pct_improvement"]),
            avg_scaled_mse=f(row["avg_scaled_mse"]), predictive_nll=f(row["predictive_nll"]),
            per_series_mse=tuple(f(row[f"mse_{n}"]) for n in OBS_LABELS), n_evals=int(float(row["n_evals"])),
        )


def permutation_cell(args) -> PermutationRecord:
    """Estimate and forecast under one permutation; metrics against the baseline are filled in later."""
    values, rank, config, master_seed = args
    perm = Permutation.from_rank(rank)
    rec = PermutationRecord(rank=rank, mapping=perm.mapping)
    lo, hi = config.train_range
    t0, t1 = config.test_range
    data = perm.apply(values)
    try:
        # every rank uses the same optimiser seed, so rank 0 reproduces a plain estimate
        cfg = FitConfig.from_dict({**config.fit.to_dict(), "train_range": (lo, hi), "seed": master_seed, "jobs": 1})
        fit = estimate(data, cfg)
        out = fit_forecast(fit.theta_hat, data[lo:hi], data[t0:t1], config.one_step)
        pred = perm.inverse.apply(out["test_pred"])  # back to the original series order
        actual = values[t0:t1]
        rec.theta_hat = P.theta_to_dict(fit.theta_hat)
        rec.penalized_nll_train = fit.penalized_nll
        rec.predictive_nll = out["nll_test"]
        rec.per_series_mse = tuple(float(v) for v in per_series_mse(pred, actual))
        rec.avg_scaled_mse = scaled_mse(pred, actual)
        rec.n_evals = fit.n_evals
        rec.test_pred = pred
        rec.fit = fit
    except SWLabError as exc:
        rec.status = exc.code
    return rec


def run_permutation(panel, ranks, config: PermutationConfig | None = None, master_seed: int = 0,
                    baseline: PermutationRecord | None = None) -> list:
    """Re-estimate and forecast after permuting the series, for each requested rank.

    The identity (rank 0) is always fitted (or taken from ``baseline``) because
    the percentage-improvement metric is relative to it.
    """
    config = config or PermutationConfig()
    values = np.asarray(getattr(panel, "values", panel), float)
    ranks = sorted(set(int(r) for r in ranks))
    if any(not 0 <= r < N_PERMUTATIONS for r in ranks):
        raise ValueError(f"ranks must lie in [0, {N_PERMUTATIONS - 1}]")
    if values.shape[0] < config.test_range[1]:
        raise ValueError("panel is shorter than the test window")
    todo = [r for r in ranks if not (r == 0 and baseline is not None)]
    if baseline is None and 0 not in todo:
        todo = [0] + todo
    recs = {r.rank: r for r in _map(permutation_cell, [(values, r, config, master_seed) for r in todo], config.jobs)}
    base = baseline if baseline is not None else recs[0]
    recs.setdefault(0, base)
    t0, t1 = config.test_range
    actual = values[t0:t1]
    for rec in recs.values():
        if rec.status != "ok" or base.status != "ok":
            continue
        if rec.rank == 0:
            rec.avg_pct_improvement = 0.0
        else:
            try:
                rec.avg_pct_improvement = pct_improvement(rec.test_pred, base.test_pred, actual)
            except ZeroSSEError as exc:
                rec.status = exc.code
    return [recs[r] for r in ranks]


def pseudorandom_ranks(k: int, seed: int, exclude=(0,)) -> list:
    """``k`` distinct non-identity ranks drawn without replacement."""
    rng = np.random.default_rng(seed)
    pool = np.setdiff1d(np.arange(N_PERMUTATIONS), np.asarray(exclude))
    return sorted(int(r) for r in rng.choice(pool, size=k, replace=False))


# --------------------------------------------------------------------------- CSV and report tables

def _num(x) -> float:
    return float(x) if x not in ("", None) else math.nan


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(rows, path) -> None:
    rows = list(rows)
    if not rows:
        with open(path, "w") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_taylor_csv(corr: np.ndarray, path) -> None:
    rows = [{"parameter": name, **{t: float(v) for t, v in zip(TAYLOR_PARAMETERS, row)}}
            for name, row in zip(DEEP_PARAMETERS, corr)]
    write_rows(rows, path)


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
SIM_METRICS = ("train_mse_avg", "test_mse_avg", "truth_test_mse_avg", "param_sq_err", "param_sq_err_raw",
               "nll_per_obs_train", "nll_per_obs_test", "truth_nll_per_obs_test")


def _band(values):
    v = np.asarray([x for x in values if np.isfinite(x)], float)
    if v.size == 0:
        return {f"q{int(q * 100):02d}": math.nan for q in QUANTILES} | {"mean": math.nan, "n": 0}
    qs = np.quantile(v, QUANTILES)
    return {f"q{int(q * 100):02d}": float(x) for q, x in zip(QUANTILES, qs)} | {"mean": float(v.mean()), "n": int(v.size)}


def sim_error_bands(records) -> list:
    """Long format: one row per (metric, train_size) with quantile bands over replications."""
    ok = [r for r in records if r.status == "ok"]
    sizes = sorted({r.train_size for r in ok})
    rows = []
    for metric in SIM_METRICS:
        for n in sizes:
            rows.append({"metric": metric, "train_size": n,
                         **_band([getattr(r, metric) for r in ok if r.train_size == n])})
    return rows


def sim_parameter_trajectories(records, truth=None) -> list:
    """Long format: one row per (parameter, train_size) with quantile bands of the estimates."""
    ok = [r for r in records if r.status == "ok"]
    sizes = sorted({r.train_size for r in ok})
    truth = P.theta_to_dict(truth) if truth is not None else {}
    rows = []
    for name in P.NAMES:
        for n in sizes:
            rows.append({"parameter": name, "train_size": n, "truth": truth.get(name, math.nan),
                         **_band([r.theta_hat[name] for r in ok if r.train_size == n])})
    return rows


PERM_METRICS = ("avg_pct_improvement", "avg_scaled_mse", "penalized_nll_train", "predictive_nll")


def permutation_histograms(records, bins: int = 30) -> list:
    """Long format histogram counts per metric, plus the identity's value for reference."""
    ok = [r for r in records if r.status == "ok"]
    ident = next((r for r in ok if r.rank == 0), None)
    rows = []
    for metric in PERM_METRICS:
        v = np.array([getattr(r, metric) for r in ok], float)
        v = v[np.isfinite(v)]
        if v.size == 0:
            continue
        counts, edges = np.histogram(v, bins=bins)
        ref = getattr(ident, metric) if ident is not None else math.nan
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            rows.append({"metric": metric, "bin_left": float(a), "bin_right": float(b), "count": int(c),
                         "identity_value": ref})
    return rows


def permutation_summary(records) -> dict:
    """Headline counts: how many permutations beat the identity on each criterion."""
    ok = [r for r in records if r.status == "ok"]
    ident = next((r for r in ok if r.rank == 0), None)
    others = [r for r in ok if r.rank != 0]
    if ident is None:
        return {"n_permutations": len(others)}
    return {
        "n_permutations": len(others),
        "lower_penalized_nll": sum(r.penalized_nll_train < ident.penalized_nll_train for r in others),
        "better_pct_improvement": sum(r.avg_pct_improvement < 0 for r in others),
        "better_scaled_mse": sum(r.avg_scaled_mse < ident.avg_scaled_mse for r in others),
        "better_predictive_nll": sum(r.predictive_nll < ident.predictive_nll for r in others),
        "identity_penalized_nll": ident.penalized_nll_train,
        "identity_scaled_mse": ident.avg_scaled_mse,
    }


def all_mappings():
    """Every permutation in rank order (5040 tuples)."""
    return list(_all_perms(range(N_SERIES)))

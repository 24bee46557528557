"""Posterior-mode estimation: prior-penalised likelihood, annealing, conjugate gradients.

The optimisers are written against a plain callable ``objective(theta)`` and
explicit box bounds, so they work for the Smets-Wouters objective and for any
toy problem alike. Evaluation budgets are hard limits.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import params as P
from .errors import AllStartsFailedError, NumericalError
from .statespace import kalman_filter

SENTINEL = 1e10
SENTINEL_SLOPE = 1e8


def is_sentinel(value: float) -> bool:
    return not np.isfinite(value) or value >= SENTINEL


def bound_distance(theta, lower, upper) -> float:
    """Total bound violation in units of the box width (0 inside the box)."""
    width = upper - lower
    below = np.maximum(lower - theta, 0.0)
    above = np.maximum(theta - upper, 0.0)
    return float(((below + above) / width).sum())


class PenalizedNLL:
    """Negative log-likelihood minus log prior for one panel, with counters.

    Any failure along the way (out-of-support parameters, no unique stable
    solution, non-stationary transition, filter breakdown) returns
    ``SENTINEL + SENTINEL_SLOPE * bound_distance`` and is counted.
    """

    lower = P.LOWER
    upper = P.UPPER

    def __init__(self, data, div: float = 1.01):
        self.data = np.asarray(getattr(data, "values", data), dtype=float)
        self.div = div
        self.n_evals = 0
        self.n_failures = 0

    def __getstate__(self):
        return {"data": self.data, "div": self.div, "n_evals": 0, "n_failures": 0}

    def __setstate__(self, state):
        self.__dict__.update(state)

    def components(self, theta):
        """``(penalized, nll, log_prior)`` or ``None`` if the point is infeasible."""
        from .model import solve

        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)) or not P.in_bounds(theta).all():
            return None
        log_prior = P.prior_log_density(theta)
        if not np.isfinite(log_prior):
            return None
        try:
            ss, _, _ = solve(theta, div=self.div)
            if ss is None:
                return None
            nll = kalman_filter(ss, self.data).nll
        except (NumericalError, np.linalg.LinAlgError, ValueError, FloatingPointError):
            return None
        if not np.isfinite(nll):
            return None
        return nll - log_prior, nll, log_prior

    def __call__(self, theta) -> float:
        self.n_evals += 1
        out = self.components(theta)
        if out is None:
            self.n_failures += 1
            return SENTINEL + SENTINEL_SLOPE * bound_distance(np.asarray(theta, float), self.lower, self.upper)
        return float(out[0])


def penalized_nll(theta, panel) -> float:
    """Prior-penalised negative log-likelihood of ``panel`` at ``theta``."""
    return PenalizedNLL(panel)(theta)


class BudgetExhausted(Exception):
    pass


class _Budgeted:
    """Counts calls and refuses to evaluate past ``budget``; remembers the best point."""

    def __init__(self, fn, budget: int):
        self.fn = fn
        self.budget = int(budget)
        self.used = 0
        self.best_x = None
        self.best_f = math.inf
        self.saw_finite = False

    @property
    def left(self) -> int:
        return self.budget - self.used

    def __call__(self, x) -> float:
        if self.used >= self.budget:
            raise BudgetExhausted
        self.used += 1
        f = float(self.fn(x))
        if not is_sentinel(f):
            self.saw_finite = True
        if f < self.best_f:
            self.best_f, self.best_x = f, np.array(x, dtype=float)
        return f


def reflect(x, lower, upper):
    """Fold ``x`` back into ``[lower, upper]`` by mirror reflection."""
    width = upper - lower
    y = np.mod(x - lower, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lower + y


@dataclass
class AnnealSchedule:
    """Geometric cooling with acceptance-rate-adapted Gaussian steps.

    ``decay="auto"`` picks the slower of 0.999 and the rate that cools by a
    factor ``1e4`` over the available steps, so short runs still end cold.
    """

    t0: float = 1.0
    decay: float | str = 0.999
    step_frac: float = 0.01
    target_accept: float = 0.23
    adapt_every: int = 50

    def rate(self, n_steps: int) -> float:
        if self.decay == "auto":
            return min(0.999, 1e-4 ** (1.0 / max(n_steps, 1)))
        return float(self.decay)


def anneal(objective, theta0, budget: int, seed, schedule: AnnealSchedule | None = None,
           lower=None, upper=None, f0: float | None = None):
    """Simulated annealing from ``theta0`` for exactly ``budget`` evaluations.

    Returns
    -------
    best_theta : ndarray
    best_value : float
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    sched = schedule or AnnealSchedule()
    lower = P.LOWER if lower is None else np.asarray(lower, float)
    upper = P.UPPER if upper is None else np.asarray(upper, float)
    rng = np.random.default_rng(seed)
    fn = _Budgeted(objective, budget)
    x = np.array(theta0, dtype=float)
    try:
        fx = fn(x) if f0 is None else float(f0)
        if f0 is not None:
            fn.best_x, fn.best_f = x.copy(), fx
        scale = sched.step_frac * (upper - lower)
        temp = float(sched.t0)
        rate = sched.rate(budget)
        accepted = 0
        tried = 0
        while fn.left > 0:
            prop = reflect(x + scale * rng.standard_normal(x.size), lower, upper)
            fp = fn(prop)
            u = rng.random()
            tried += 1
            if fp <= fx or (temp > 0 and u < math.exp(-(fp - fx) / temp)):
                x, fx = prop, fp
                accepted += 1
            temp *= rate
            if tried == sched.adapt_every:
                # nudge the step size toward the target acceptance rate
                scale = scale * math.exp(accepted / tried - sched.target_accept)
                scale = np.minimum(scale, 0.5 * (upper - lower))
                accepted = tried = 0
    except BudgetExhausted:
        pass
    return fn.best_x, fn.best_f


def fd_gradient(fn, x, f0, lower, upper, rel_step: float = 1e-5, floor: float = 0.1):
    """Central finite-difference gradient with one-sided fallbacks at bounds or sentinels."""
    g = np.zeros_like(x)
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), floor)
        up = min(x[j] + h, upper[j])
        dn = max(x[j] - h, lower[j])
        xp = x.copy()
        xp[j] = up
        xm = x.copy()
        xm[j] = dn
        fp = fn(xp) if up > x[j] else math.inf
        fm = fn(xm) if dn < x[j] else math.inf
        ok_p, ok_m = not is_sentinel(fp), not is_sentinel(fm)
        if ok_p and ok_m:
            g[j] = (fp - fm) / (up - dn)
        elif ok_p:
            g[j] = (fp - f0) / (up - x[j])
        elif ok_m:
            g[j] = (f0 - fm) / (x[j] - dn)
    return g


def _line_search(fn, x, fx, direction, alpha0, lower, upper):
    """Bracket then parabola along a projected ray; returns (x, f, alpha) or None."""

    def at(a):
        return np.clip(x + a * direction, lower, upper)

    a1 = alpha0
    f1 = fn(at(a1))
    shrink = 0
    while f1 >= fx:
        shrink += 1
        if shrink > 12:
            return None
        a1 *= 0.25
        f1 = fn(at(a1))
    # expand while still improving
    a_prev, f_prev = 0.0, fx
    a2, f2 = a1, f1
    for _ in range(20):
        a3 = 2.0 * a2
        f3 = fn(at(a3))
        if f3 >= f2:
            break
        a_prev, f_prev, a2, f2 = a2, f2, a3, f3
    else:
        return at(a2), f2, a2
    # parabola through (a_prev, a2, a3)
    best_a, best_f = a2, f2
    if not is_sentinel(f3):
        den = (a2 - a_prev) * (f2 - f3) - (a2 - a3) * (f2 - f_prev)
        num = (a2 - a_prev) ** 2 * (f2 - f3) - (a2 - a3) ** 2 * (f2 - f_prev)
        if den != 0:
            a4 = a2 - 0.5 * num / den
            if a_prev < a4 < a3 and abs(a4 - a2) > 1e-12 * max(a2, 1e-300):
                f4 = fn(at(a4))
                if f4 < best_f:
                    best_a, best_f = a4, f4
    return at(best_a), best_f, best_a


def local_refine(objective, theta0, budget: int, lower=None, upper=None, f0: float | None = None,
                 rel_step: float = 1e-5, tol: float = 1e-10):
    """Projected nonlinear conjugate gradients (Polak-Ribiere+) on FD gradients.

    Moves only to strictly better points, so the best value is non-increasing;
    returns ``theta0`` if nothing improves on it.

    Returns
    -------
    best_theta : ndarray
    best_value : float
    """
    lower = P.LOWER if lower is None else np.asarray(lower, float)
    upper = P.UPPER if upper is None else np.asarray(upper, float)
    fn = _Budgeted(objective, budget)
    x = np.array(theta0, dtype=float)
    width = upper - lower
    try:
        fx = fn(x) if f0 is None else float(f0)
        if f0 is not None:
            fn.best_x, fn.best_f = x.copy(), fx
        if is_sentinel(fx):
            return x, fx
        g = fd_gradient(fn, x, fx, lower, upper, rel_step)
        direction = -g
        g_prev = g
        alpha = None
        restarted = False
        while fn.left > 0:
            # zero out components pushing into an active bound
            blocked = ((x <= lower) & (direction < 0)) | ((x >= upper) & (direction > 0))
            direction = np.where(blocked, 0.0, direction)
            if not np.any(direction):
                break
            if alpha is None:
                alpha = 0.01 / max(np.max(np.abs(direction) / width), 1e-300)
            step = _line_search(fn, x, fx, direction, alpha, lower, upper)
            if step is None:
                if restarted:
                    break
                direction, restarted, alpha = -g_prev, True, None
                continue
            x_new, f_new, a = step
            gain = fx - f_new
            x, fx = x_new, f_new
            alpha = 2.0 * a
            if gain <= tol * max(1.0, abs(fx)):
                break
            g = fd_gradient(fn, x, fx, lower, upper, rel_step)
            beta = max(0.0, float(g @ (g - g_prev)) / max(float(g_prev @ g_prev), 1e-300))
            direction = -g + beta * direction
            if direction @ g >= 0:
                direction = -g
            g_prev = g
            restarted = False
    except BudgetExhausted:
        pass
    return fn.best_x, fn.best_f


# --------------------------------------------------------------------------- multistart

@dataclass
class FitConfig:
    """Optimiser settings. ``budget`` counts objective evaluations per start."""

    n_starts: int = 5
    budget: int = 50_000
    seed: int = 0
    train_range: tuple[int, int] = (0, 200)
    anneal_fraction: float = 0.7
    decay: float | str = 0.999
    use_anneal: bool = True
    use_refine: bool = True
    t0_draws: int = 50
    max_start_draws: int = 200
    jobs: int = 1

    @classmethod
    def profile(cls, name: str, **overrides) -> "FitConfig":
        if name == "paper":
            base = cls(n_starts=5, budget=50_000, decay=0.999)
        elif name == "desk":
            base = cls(n_starts=2, budget=5_000, decay="auto")
        else:
            raise ValueError(f"unknown profile {name!r}")
        for k, v in overrides.items():
            setattr(base, k, v)
        return base

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_range"] = list(self.train_range)
        d.pop("jobs")  # execution detail, not part of the result
        return d

    @classmethod
    def from_dict(cls, d) -> "FitConfig":
        d = dict(d)
        if "train_range" in d:
            d["train_range"] = tuple(d["train_range"])
        return cls(**d)


@dataclass
class StartSummary:
    seed: list
    theta0: list
    final: float
    n_evals: int
    supplied: bool = False


@dataclass
class FitResult:
    theta_hat: np.ndarray
    penalized_nll: float
    unpenalized_nll: float
    n_evals: int
    starts: list = field(default_factory=list)
    solver_failures: int = 0
    t0: float = float("nan")
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "theta": P.theta_to_dict(self.theta_hat),
            "penalized_nll": self.penalized_nll,
            "unpenalized_nll": self.unpenalized_nll,
            "n_evals": self.n_evals,
            "solver_failures": self.solver_failures,
            "t0": self.t0,
            "starts": [
                {**asdict(s), "theta0": P.theta_to_dict(s.theta0)} for s in self.starts
            ],
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        doc = json.loads(text)
        starts = [
            StartSummary(seed=s["seed"], theta0=list(P.theta_from_mapping(s["theta0"])), final=s["final"],
                         n_evals=s["n_evals"], supplied=s.get("supplied", False))
            for s in doc.get("starts", [])
        ]
        return cls(
            theta_hat=P.theta_from_mapping(doc["theta"]),
            penalized_nll=doc.get("penalized_nll", float("nan")),
            unpenalized_nll=doc.get("unpenalized_nll", float("nan")),
            n_evals=doc.get("n_evals", 0),
            starts=starts,
            solver_failures=doc.get("solver_failures", 0),
            t0=doc.get("t0", float("nan")),
            config=doc.get("config", {}),
        )


def load_theta(path) -> np.ndarray:
    """Read ``theta`` from a FitResult JSON or a flat ``{name: value}`` JSON."""
    with open(path) as fh:
        doc = json.load(fh)
    return P.theta_from_mapping(doc.get("theta", doc))


def calibrate_temperature(objective, sampler, n_draws: int, rng) -> tuple[float, int]:
    """Initial temperature: interquartile range of objective values at prior draws.

    Sentinel values are excluded. Returns ``(t0, evaluations used)``.
    """
    vals = []
    for _ in range(n_draws):
        f = objective(sampler(rng))
        if not is_sentinel(f):
            vals.append(f)
    if len(vals) >= 4:
        q75, q25 = np.percentile(vals, [75, 25])
        t0 = float(q75 - q25)
    elif vals:
        t0 = float(max(abs(np.median(vals)), 1.0))
    else:
        t0 = 1.0
    return (t0 if t0 > 0 else 1.0), n_draws


def _run_start(objective, theta0, f0, budget, seed_seq, cfg: FitConfig, t0, lower, upper):
    """Anneal then refine from one start; returns (theta, value, evals, saw_finite, failures)."""
    n_anneal = int(round(cfg.anneal_fraction * budget)) if cfg.use_anneal else 0
    if not cfg.use_refine:
        n_anneal = budget
    x, fx = np.array(theta0, float), f0
    used = 0
    saw_finite = not is_sentinel(f0)
    fails_before = getattr(objective, "n_failures", 0)
    if n_anneal > 0:
        sched = AnnealSchedule(t0=t0, decay=cfg.decay)
        counter = _Budgeted(objective, n_anneal)
        x, fx = anneal(counter, x, n_anneal, np.random.default_rng(seed_seq), sched, lower, upper, f0=fx)
        used += counter.used
        saw_finite |= counter.saw_finite
    left = budget - used
    if cfg.use_refine and left > 0 and not is_sentinel(fx):
        counter = _Budgeted(objective, left)
        x, fx = local_refine(counter, x, left, lower, upper, f0=fx)
        used += counter.used
        saw_finite |= counter.saw_finite
    fails = getattr(objective, "n_failures", 0) - fails_before
    return x, fx, used, saw_finite, fails


def _draw_start(objective, sampler, rng, max_draws):
    """Prior draws until the objective is finite (or ``max_draws`` runs out)."""
    used = 0
    theta = f = None
    for _ in range(max_draws):
        theta = sampler(rng)
        f = objective(theta)
        used += 1
        if not is_sentinel(f):
            break
    return theta, f, used


def _start_worker(args):
    objective, sampler, supplied, budget, ss_entropy, cfg, t0, lower, upper = args
    seed_seq = np.random.SeedSequence(ss_entropy[0], spawn_key=tuple(ss_entropy[1]))
    draw_seq, run_seq = seed_seq.spawn(2)
    fails0 = getattr(objective, "n_failures", 0)
    if supplied is not None:
        theta0 = np.array(supplied, float)
        f0 = objective(theta0)
        pre = 1
    else:
        theta0, f0, pre = _draw_start(objective, sampler, np.random.default_rng(draw_seq), cfg.max_start_draws)
    pre_fail = getattr(objective, "n_failures", 0) - fails0
    x, fx, used, saw_finite, fails = _run_start(objective, theta0, f0, max(budget - pre, 0), run_seq, cfg,
                                                t0, lower, upper)
    return theta0, x, fx, used + pre, saw_finite, fails + pre_fail


def multistart(objective, sampler, cfg: FitConfig, lower, upper, supplied_starts=()):
    """Run supplied starts then ``cfg.n_starts`` prior-drawn starts; return the best.

    Returns
    -------
    best_theta, best_value, starts (list of StartSummary), total_evals, failures, t0
    """
    root = np.random.SeedSequence(cfg.seed)
    cal_seq, *start_seqs = root.spawn(1 + len(supplied_starts) + cfg.n_starts)
    fails0 = getattr(objective, "n_failures", 0)
    t0, cal_evals = 1.0, 0
    if cfg.use_anneal and cfg.t0_draws > 0:
        t0, cal_evals = calibrate_temperature(objective, sampler, cfg.t0_draws, np.random.default_rng(cal_seq))
    cal_fails = getattr(objective, "n_failures", 0) - fails0

    jobs = []
    for i, seq in enumerate(start_seqs):
        supplied = supplied_starts[i] if i < len(supplied_starts) else None
        entropy = (seq.entropy, list(seq.spawn_key))
        jobs.append((objective, sampler, supplied, cfg.budget, entropy, cfg, t0, lower, upper))
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_start_worker, jobs))
    else:
        outs = [_start_worker(j) for j in jobs]

    starts, best = [], None
    total = cal_evals
    failures = cal_fails
    any_finite = False
    for i, ((theta0, x, fx, used, saw_finite, fails), seq) in enumerate(zip(outs, start_seqs)):
        total += used
        failures += fails
        any_finite |= saw_finite
        starts.append(StartSummary(seed=[int(seq.entropy), *map(int, seq.spawn_key)], theta0=list(map(float, theta0)),
                                   final=float(fx), n_evals=int(used), supplied=i < len(supplied_starts)))
        # ties go to the lower start index
        if saw_finite and (best is None or fx < best[1]):
            best = (x, fx)
    if best is None or not any_finite:
        raise AllStartsFailedError("every start only produced failed evaluations")
    return best[0], best[1], starts, total, failures, t0


def estimate(panel, config: FitConfig | None = None, supplied_starts=()) -> FitResult:
    """Posterior-mode estimate of the 36 parameters on the training rows of ``panel``.

    Parameters
    ----------
    panel : TimeSeriesPanel or array
    config : FitConfig, optional
        Defaults to the full-scale settings (5 starts, 50 000 evaluations
        each, training rows 0..199).
    supplied_starts : sequence of parameter vectors
        Extra starting points run before the prior-drawn ones.

    Raises
    ------
    AllStartsFailedError
    """
    cfg = config or FitConfig()
    data = np.asarray(getattr(panel, "values", panel), dtype=float)
    lo, hi = cfg.train_range
    train = data[lo:hi]
    objective = PenalizedNLL(train)
    x, fx, starts, total, failures, t0 = multistart(objective, P.sample_prior, cfg, P.LOWER, P.UPPER,
                                                    [np.asarray(s, float) for s in supplied_starts])
    comps = objective.components(x)
    pen, nll = (comps[0], comps[1]) if comps is not None else (fx, float("nan"))
    return FitResult(theta_hat=np.asarray(x, float), penalized_nll=float(pen), unpenalized_nll=float(nll),
                     n_evals=int(total), starts=starts, solver_failures=int(failures), t0=float(t0),
                     config=cfg.to_dict())

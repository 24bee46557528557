"""Parameter table, priors and the map from estimated to full parameters.

The 36 estimated parameters are handled as a plain ``numpy`` vector in the
row order of the shipped table (``ESTIMATED``). Everything else about a
parameter (prior, bounds, reference modes) lives in :class:`ParamSpec`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

PARAM_TABLE = "sw_parameters.csv"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    symbol: str
    role: str  # estimated | fixed | derived
    prior_family: str  # gaussian | beta | gamma | inverse-gamma | none
    prior_mean: float = math.nan
    prior_stdev: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    posterior_mode: float = math.nan
    sw_posterior_mode: float = math.nan
    value: float = math.nan


def _f(s: str) -> float:
    return float(s) if s.strip() else math.nan


def load_param_table() -> list[ParamSpec]:
    text = resources.files("swlab.resources").joinpath(PARAM_TABLE).read_text(encoding="utf-8")
    rows = csv.DictReader(text.splitlines())
    out = []
    for r in rows:
        out.append(ParamSpec(
            name=r["name"], symbol=r["symbol"], role=r["role"], prior_family=r["prior_family"],
            prior_mean=_f(r["prior_mean"]), prior_stdev=_f(r["prior_stdev"]),
            lower=_f(r["lower"]), upper=_f(r["upper"]),
            posterior_mode=_f(r["posterior_mode"]), sw_posterior_mode=_f(r["sw_posterior_mode"]),
            value=_f(r["value"]),
        ))
    return out


SPECS: tuple[ParamSpec, ...] = tuple(load_param_table())
ESTIMATED: tuple[ParamSpec, ...] = tuple(s for s in SPECS if s.role == "estimated")
FIXED: dict[str, float] = {s.name: s.value for s in SPECS if s.role == "fixed"}
DERIVED_NAMES: tuple[str, ...] = tuple(s.name for s in SPECS if s.role == "derived")

NAMES: tuple[str, ...] = tuple(s.name for s in ESTIMATED)
INDEX: dict[str, int] = {n: i for i, n in enumerate(NAMES)}
LOWER = np.array([s.lower for s in ESTIMATED])
UPPER = np.array([s.upper for s in ESTIMATED])
N_ESTIMATED = len(ESTIMATED)

SHOCK_SD_NAMES = ("sigma_a", "sigma_b", "sigma_g", "sigma_i", "sigma_r", "sigma_p", "sigma_w")

# reduced-form coefficients of the log-linear equations
COEFFICIENT_NAMES = (
    "c1", "c2", "c3", "i1", "i2", "q1", "k1", "k2", "z1",
    "pi1", "pi2", "pi3", "w1", "w2", "w3", "w4",
)


def posterior_mode() -> np.ndarray:
    """Posterior mode reported alongside the priors (the baseline estimate)."""
    return np.array([s.posterior_mode for s in ESTIMATED])


def sw_posterior_mode() -> np.ndarray:
    """Posterior mode published with the original model."""
    return np.array([s.sw_posterior_mode for s in ESTIMATED])


def prior_means() -> np.ndarray:
    return np.array([s.prior_mean for s in ESTIMATED])


def theta_from_mapping(values: Mapping[str, float]) -> np.ndarray:
    missing = [n for n in NAMES if n not in values]
    if missing:
        raise KeyError(f"missing estimated parameters: {missing}")
    return np.array([float(values[n]) for n in NAMES])


def theta_to_dict(theta) -> dict[str, float]:
    return {n: float(v) for n, v in zip(NAMES, np.asarray(theta, dtype=float))}


def in_bounds(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return (theta >= LOWER) & (theta <= UPPER)


def normalized(theta) -> np.ndarray:
    """Map ``theta`` onto the unit box spanned by the bounds."""
    return (np.asarray(theta, dtype=float) - LOWER) / (UPPER - LOWER)


# ---------------------------------------------------------------------------
# priors

def beta_shape(mean: float, stdev: float) -> tuple[float, float]:
    """Moment-matched Beta(a, b) shape parameters."""
    k = mean * (1.0 - mean) / stdev**2 - 1.0
    return mean * k, (1.0 - mean) * k


def gamma_shape(mean: float, stdev: float) -> tuple[float, float]:
    """Moment-matched Gamma shape and scale."""
    return mean**2 / stdev**2, stdev**2 / mean


@dataclass(frozen=True)
class Prior:
    """Log-density of one prior family with precomputed constants.

    ``inverse-gamma`` is the type-1 inverse gamma used for standard
    deviations, parameterised by a scale ``s`` and degrees of freedom ``nu``
    (taken from the mean and stdev columns of the table respectively)::

        p(x) = 2 / Gamma(nu/2) * (nu s^2 / 2)^(nu/2) * x^-(nu+1) * exp(-nu s^2 / (2 x^2))

    Densities are not renormalised for truncation to ``[lower, upper]``.
    """

    family: str
    a: float
    b: float
    const: float = field(init=False)

    def __post_init__(self):
        a, b = self.a, self.b
        if self.family == "gaussian":
            c = -0.5 * math.log(2.0 * math.pi * b * b)
        elif self.family == "beta":
            c = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        elif self.family == "gamma":
            c = -math.lgamma(a) - a * math.log(b)
        elif self.family == "inverse-gamma":
            c = math.log(2.0) - math.lgamma(b / 2.0) + (b / 2.0) * math.log(b * a * a / 2.0)
        else:
            raise ValueError(f"unknown prior family {self.family!r}")
        object.__setattr__(self, "const", c)

    @classmethod
    def from_moments(cls, family: str, mean: float, stdev: float) -> "Prior":
        if family == "gaussian":
            return cls(family, mean, stdev)
        if family == "beta":
            return cls(family, *beta_shape(mean, stdev))
        if family == "gamma":
            return cls(family, *gamma_shape(mean, stdev))
        if family == "inverse-gamma":
            return cls(family, mean, stdev)
        raise ValueError(f"unknown prior family {family!r}")

    def logpdf(self, x: float) -> float:
        a, b = self.a, self.b
        if self.family == "gaussian":
            return self.const - 0.5 * ((x - a) / b) ** 2
        if self.family == "beta":
            if not 0.0 < x < 1.0:
                return -math.inf
            return self.const + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
        if self.family == "gamma":
            if x <= 0.0:
                return -math.inf
            return self.const + (a - 1.0) * math.log(x) - x / b
        if x <= 0.0:
            return -math.inf
        return self.const - (b + 1.0) * math.log(x) - b * a * a / (2.0 * x * x)

    def sample(self, rng: np.random.Generator) -> float:
        a, b = self.a, self.b
        if self.family == "gaussian":
            return float(rng.normal(a, b))
        if self.family == "beta":
            return float(rng.beta(a, b))
        if self.family == "gamma":
            return float(rng.gamma(a, b))
        g = rng.gamma(b / 2.0, 1.0)
        return float(math.sqrt(b * a * a / 2.0 / g))


PRIORS: tuple[Prior, ...] = tuple(
    Prior.from_moments(s.prior_family, s.prior_mean, s.prior_stdev) for s in ESTIMATED
)


def prior_log_density(theta) -> float:
    """Sum of the 36 prior log-densities; ``-inf`` outside the bounds."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N_ESTIMATED,):
        raise ValueError(f"expected {N_ESTIMATED} parameters, got shape {theta.shape}")
    if not np.all(in_bounds(theta)):
        return -math.inf
    total = 0.0
    for prior, x in zip(PRIORS, theta.tolist()):
        total += prior.logpdf(x)
    return total


def sample_prior(rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    """One draw from the prior, restricted to the box by rejection."""
    out = np.empty(N_ESTIMATED)
    for i, (prior, spec) in enumerate(zip(PRIORS, ESTIMATED)):
        for _ in range(max_tries):
            x = prior.sample(rng)
            if spec.lower <= x <= spec.upper:
                break
        else:
            x = float(rng.uniform(spec.lower, spec.upper))
        out[i] = x
    return out


# ---------------------------------------------------------------------------
# full parameter set

@dataclass(frozen=True)
class FullParams:
    """All 59 named parameters plus the reduced-form equation coefficients.

    ``out_of_support`` names estimated parameters outside their bounds and
    ``invalid`` lists violated steady-state conditions (e.g. a negative
    consumption share); either makes the parameter point unusable for
    estimation without raising.
    """

    values: Mapping[str, float]
    coef: Mapping[str, float]
    out_of_support: tuple[str, ...] = ()
    invalid: tuple[str, ...] = ()

    def __getitem__(self, key: str) -> float:
        if key in self.values:
            return self.values[key]
        return self.coef[key]

    @property
    def ok(self) -> bool:
        return not self.out_of_support and not self.invalid


def expand_params(theta) -> FullParams:
    """Estimated vector -> fixed, derived and reduced-form quantities."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N_ESTIMATED,):
        raise ValueError(f"expected {N_ESTIMATED} parameters, got shape {theta.shape}")
    # numpy scalars so that overflow and division by zero give inf/nan under errstate
    p = {k: np.float64(v) for k, v in zip(NAMES, theta.tolist())}
    p.update({k: np.float64(v) for k, v in FIXED.items()})
    oos = tuple(n for n, ok in zip(NAMES, in_bounds(theta)) if not ok)
    bad: list[str] = []

    delta, g_y, lambda_w = p["delta"], p["g_y"], p["lambda_w"]
    alpha, sigma_c, h, phi = p["alpha"], p["sigma_c"], p["h"], p["phi"]
    Phi = p["Phi"]

    with np.errstate(all="ignore"):
        pi_star = 1.0 + p["pi_bar"] / 100.0
        gamma = 1.0 + p["gamma_bar"] / 100.0
        beta = 1.0 / (1.0 + p["beta_const"] / 100.0)
        beta_bar = beta * gamma ** (-sigma_c)
        r_star = pi_star / beta_bar
        rk_star = 1.0 / beta * gamma**sigma_c - (1.0 - delta)
        w_star = (alpha**alpha * (1.0 - alpha) ** (1.0 - alpha) / (Phi * rk_star**alpha)) ** (1.0 / (1.0 - alpha))
        ik_bar = 1.0 - (1.0 - delta) / gamma
        i_k = ik_bar * gamma
        l_k = (1.0 - alpha) / alpha * rk_star / w_star
        k_y = Phi * l_k ** (alpha - 1.0)
        i_y = i_k * k_y
        c_y = 1.0 - g_y - i_y
        z_y = rk_star * k_y
        whlc = (1.0 / lambda_w) * (1.0 - alpha) / alpha * rk_star * k_y / c_y
        wly = 1.0 - rk_star * k_y
        r_bar = (r_star - 1.0) * 100.0

    derived = dict(
        pi_star=pi_star, gamma=gamma, beta=beta, phi_p=Phi, beta_bar=beta_bar, r_star=r_star,
        rk_star=rk_star, w_star=w_star, ik_bar=ik_bar, i_k=i_k, l_k=l_k, k_y=k_y, i_y=i_y,
        c_y=c_y, z_y=z_y, whlc=whlc, wly=wly, r_bar=r_bar,
    )
    if not c_y > 0.0:
        bad.append("c_y")
    if not rk_star > 0.0:
        bad.append("rk_star")

    hg = h / gamma
    bg = beta * gamma ** (1.0 - sigma_c)  # beta * gamma^(1 - sigma_c)
    xi_p, xi_w, iota_p, iota_w = p["xi_p"], p["xi_w"], p["iota_p"], p["iota_w"]
    with np.errstate(all="ignore"):
        coef = dict(
            c1=hg / (1.0 + hg),
            c2=(sigma_c - 1.0) * whlc / (sigma_c * (1.0 + hg)),
            c3=(1.0 - hg) / (sigma_c * (1.0 + hg)),
            i1=1.0 / (1.0 + bg),
            i2=1.0 / ((1.0 + bg) * gamma**2 * phi),
            q1=beta * gamma ** (-sigma_c) * (1.0 - delta),
            k1=(1.0 - delta) / gamma,
            k2=(1.0 - (1.0 - delta) / gamma) * (1.0 + bg) * gamma**2 * phi,
            z1=(1.0 - p["psi"]) / p["psi"],
            pi1=iota_p / (1.0 + bg * iota_p),
            pi2=bg / (1.0 + bg * iota_p),
            pi3=1.0 / (1.0 + bg * iota_p)
            * ((1.0 - bg * xi_p) * (1.0 - xi_p) / (xi_p * ((Phi - 1.0) * p["eps_p"] + 1.0))),
            w1=1.0 / (1.0 + bg),
            w2=(1.0 + bg * iota_w) / (1.0 + bg),
            w3=iota_w / (1.0 + bg),
            w4=1.0 / (1.0 + bg)
            * ((1.0 - bg * xi_w) * (1.0 - xi_w) / (xi_w * ((lambda_w - 1.0) * p["eps_w"] + 1.0))),
        )
    values = {k: float(v) for k, v in {**p, **derived}.items()}
    coef = {k: float(v) for k, v in coef.items()}
    if not all(math.isfinite(v) for v in values.values()) or not all(math.isfinite(v) for v in coef.values()):
        bad.append("non-finite")
    return FullParams(values=values, coef=coef, out_of_support=oos, invalid=tuple(bad))

"""Log-linearised Smets-Wouters economy in ``G0 z_t = G1 z_{t-1} + A + B e_t + C eta_t`` form.

State ordering (50 entries, fixed)::

    0-13   y c i q ks k z rk mup pi muw w l r       sticky-price economy
    14-24  yf cf if qf ksf kf zf rkf wf lf rf      flexible-price economy
    25-31  a b g ei er ep ew                        shock processes
    32-33  eta_p eta_w                              current mark-up innovations (MA terms)
    34-37  y_lag c_lag i_lag w_lag                  lags for the growth observables
    38-49  E[c] E[l] E[i] E[q] E[rk] E[pi] E[w]     one-step expectations, sticky block
           E[cf] E[lf] E[if] E[qf] E[rkf]           ... and flexible block

``ks`` is capital services and ``k`` installed capital. The flexible block has
no nominal variables; ``rf`` is its real interest rate and both mark-ups are
identically zero there. Innovations ``e_t`` are standard normal and ordered as
the shock standard deviations (a, b, g, i, r, p, w); ``B`` carries the standard
deviations so that all-zero deviations give ``B = 0``.

The risk-premium disturbance is normalised to enter the consumption Euler
equation with a unit coefficient (and ``1/c3`` in the value-of-capital
equation), which is the scaling under which the tabulated ``sigma_b`` values
are comparable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import SHOCK_SD_NAMES, FullParams

STATE_LABELS: tuple[str, ...] = (
    "y", "c", "i", "q", "ks", "k", "z", "rk", "mup", "pi", "muw", "w", "l", "r",
    "yf", "cf", "if", "qf", "ksf", "kf", "zf", "rkf", "wf", "lf", "rf",
    "a", "b", "g", "ei", "er", "ep", "ew",
    "eta_p", "eta_w",
    "y_lag", "c_lag", "i_lag", "w_lag",
    "E_c", "E_l", "E_i", "E_q", "E_rk", "E_pi", "E_w",
    "E_cf", "E_lf", "E_if", "E_qf", "E_rkf",
)
SHOCK_LABELS: tuple[str, ...] = ("a", "b", "g", "i", "r", "p", "w")
FORWARD: tuple[str, ...] = ("c", "l", "i", "q", "rk", "pi", "w", "cf", "lf", "if", "qf", "rkf")

OBS_LABELS: tuple[str, ...] = ("dy", "dc", "di", "dw", "pi", "l", "r")
N_STATE = len(STATE_LABELS)
N_SHOCK = len(SHOCK_LABELS)
N_OBS = len(OBS_LABELS)

_S = {name: i for i, name in enumerate(STATE_LABELS)}


@dataclass(frozen=True)
class LinearREModel:
    G0: np.ndarray
    G1: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    state_labels: tuple[str, ...] = STATE_LABELS
    shock_labels: tuple[str, ...] = SHOCK_LABELS

    @property
    def n(self) -> int:
        return self.G0.shape[0]


class _Rows:
    """Tiny helper that writes one equation at a time into the system matrices."""

    def __init__(self):
        n = N_STATE
        self.G0 = np.zeros((n, n))
        self.G1 = np.zeros((n, n))
        self.B = np.zeros((n, N_SHOCK))
        self.C = np.zeros((n, len(FORWARD)))
        self.row = -1

    def eq(self, now=None, lag=None, shock=None, eta=None):
        self.row += 1
        r = self.row
        for k, v in (now or {}).items():
            self.G0[r, _S[k]] += v
        # lagged terms move to the right-hand side
        for k, v in (lag or {}).items():
            self.G1[r, _S[k]] -= v
        for k, v in (shock or {}).items():
            self.B[r, SHOCK_LABELS.index(k)] -= v
        for k, v in (eta or {}).items():
            self.C[r, FORWARD.index(k)] -= v


def build_system(fp: FullParams) -> tuple[LinearREModel, np.ndarray, np.ndarray]:
    """Assemble ``(model, Z, mu)`` for one parameter point.

    Each equation is written as ``sum(now) + sum(lag) + sum(shock) + sum(eta) = 0``
    with lags and innovations moved to the right-hand side by :class:`_Rows`.
    Expectations ``E_t x_{t+1}`` are the auxiliary states ``E_x``.
    """
    v, k = fp.values, fp.coef
    c1, c2, c3 = k["c1"], k["c2"], k["c3"]
    i1, i2, q1 = k["i1"], k["i2"], k["q1"]
    k1, k2, z1 = k["k1"], k["k2"], k["z1"]
    pi1, pi2, pi3 = k["pi1"], k["pi2"], k["pi3"]
    w1, w2, w3, w4 = k["w1"], k["w2"], k["w3"], k["w4"]
    c_y, i_y, z_y = v["c_y"], v["i_y"], v["z_y"]
    alpha, Phi, sigma_l = v["alpha"], v["Phi"], v["sigma_l"]
    hg = v["h"] / v["gamma"]
    inv_c3 = 1.0 / c3
    rho, r_pi, r_y, r_dy = v["rho"], v["r_pi"], v["r_y"], v["r_dy"]

    m = _Rows()

    # --- sticky-price economy
    m.eq(now={"y": 1, "c": -c_y, "i": -i_y, "z": -z_y, "g": -1})
    m.eq(now={"c": 1, "E_c": -(1 - c1), "l": -c2, "E_l": c2, "r": c3, "E_pi": -c3, "b": -1},
         lag={"c": -c1})
    m.eq(now={"i": 1, "E_i": -(1 - i1), "q": -i2, "ei": -1}, lag={"i": -i1})
    m.eq(now={"q": 1, "E_q": -q1, "E_rk": -(1 - q1), "r": 1, "E_pi": -1, "b": -inv_c3})
    m.eq(now={"y": 1, "ks": -Phi * alpha, "l": -Phi * (1 - alpha), "a": -Phi})
    m.eq(now={"ks": 1, "z": -1}, lag={"k": -1})
    m.eq(now={"z": 1, "rk": -z1})
    m.eq(now={"k": 1, "i": -(1 - k1), "ei": -k2}, lag={"k": -k1})
    m.eq(now={"mup": 1, "ks": -alpha, "l": alpha, "a": -1, "w": 1})
    m.eq(now={"pi": 1, "E_pi": -pi2, "mup": pi3, "ep": -1}, lag={"pi": -pi1})
    m.eq(now={"rk": 1, "ks": 1, "l": -1, "w": -1})
    m.eq(now={"muw": 1, "w": -1, "l": sigma_l, "c": 1 / (1 - hg)}, lag={"c": -hg / (1 - hg)})
    m.eq(now={"w": 1, "E_w": -(1 - w1), "E_pi": -(1 - w1), "pi": w2, "muw": w4, "ew": -1},
         lag={"w": -w1, "pi": -w3})
    m.eq(now={"r": 1, "pi": -(1 - rho) * r_pi,
              "y": -(1 - rho) * r_y - r_dy, "yf": (1 - rho) * r_y + r_dy, "er": -1},
         lag={"r": -rho, "y": r_dy, "yf": -r_dy})

    # --- flexible-price economy: no mark-ups, no monetary policy
    m.eq(now={"yf": 1, "cf": -c_y, "if": -i_y, "zf": -z_y, "g": -1})
    m.eq(now={"cf": 1, "E_cf": -(1 - c1), "lf": -c2, "E_lf": c2, "rf": c3, "b": -1},
         lag={"cf": -c1})
    m.eq(now={"if": 1, "E_if": -(1 - i1), "qf": -i2, "ei": -1}, lag={"if": -i1})
    m.eq(now={"qf": 1, "E_qf": -q1, "E_rkf": -(1 - q1), "rf": 1, "b": -inv_c3})
    m.eq(now={"yf": 1, "ksf": -Phi * alpha, "lf": -Phi * (1 - alpha), "a": -Phi})
    m.eq(now={"ksf": 1, "zf": -1}, lag={"kf": -1})
    m.eq(now={"zf": 1, "rkf": -z1})
    m.eq(now={"kf": 1, "if": -(1 - k1), "ei": -k2}, lag={"kf": -k1})
    m.eq(now={"ksf": alpha, "lf": -alpha, "a": 1, "wf": -1})
    m.eq(now={"rkf": 1, "ksf": 1, "lf": -1, "wf": -1})
    m.eq(now={"wf": 1, "lf": -sigma_l, "cf": -1 / (1 - hg)}, lag={"cf": hg / (1 - hg)})

    # --- shock processes
    m.eq(now={"a": 1}, lag={"a": -v["rho_a"]}, shock={"a": -1})
    m.eq(now={"b": 1}, lag={"b": -v["rho_b"]}, shock={"b": -1})
    m.eq(now={"g": 1}, lag={"g": -v["rho_g"]}, shock={"g": -1, "a": -v["rho_ga"]})
    m.eq(now={"ei": 1}, lag={"ei": -v["rho_i"]}, shock={"i": -1})
    m.eq(now={"er": 1}, lag={"er": -v["rho_r"]}, shock={"r": -1})
    m.eq(now={"ep": 1, "eta_p": -1}, lag={"ep": -v["rho_p"], "eta_p": v["mu_p"]})
    m.eq(now={"ew": 1, "eta_w": -1}, lag={"ew": -v["rho_w"], "eta_w": v["mu_w"]})
    m.eq(now={"eta_p": 1}, shock={"p": -1})
    m.eq(now={"eta_w": 1}, shock={"w": -1})

    # --- lags used by the growth observables
    for name in ("y", "c", "i", "w"):
        m.eq(now={f"{name}_lag": 1}, lag={name: -1})

    # --- expectational errors: x_t = E_{t-1}[x_t] + eta_t
    for name in FORWARD:
        m.eq(now={name: 1}, lag={f"E_{name}": -1}, eta={name: -1})

    assert m.row == N_STATE - 1
    sd = np.array([v[s] for s in SHOCK_SD_NAMES])
    model = LinearREModel(G0=m.G0, G1=m.G1, A=np.zeros(N_STATE), B=m.B * sd, C=m.C)
    Z, mu = observation_map(fp)
    return model, Z, mu


def observation_map(fp: FullParams) -> tuple[np.ndarray, np.ndarray]:
    """Seven observables: four growth rates plus inflation, hours and the policy rate."""
    v = fp.values
    Z = np.zeros((N_OBS, N_STATE))
    for row, name in enumerate(("y", "c", "i", "w")):
        Z[row, _S[name]] = 1.0
        Z[row, _S[f"{name}_lag"]] = -1.0
    Z[4, _S["pi"]] = 1.0
    Z[5, _S["l"]] = 1.0
    Z[6, _S["r"]] = 1.0
    g = v["gamma_bar"]
    mu = np.array([g, g, g, g, v["pi_bar"], v["l_bar"], v["r_bar"]])
    return Z, mu


def state_index(name: str) -> int:
    return _S[name]


def solve(theta, div: float = 1.01, rank_tol: float = 1e-6):
    """Parameter vector to ``(StateSpace, SolvedTransition, FullParams)``.

    Shocks enter the state space as unit loadings ``H`` with ``Q`` holding the
    variances; a shock whose deviation is zero gets a zero column.

    Returns ``(None, solved, fp)`` when the solution does not exist or is not
    unique, and ``(None, None, fp)`` when the parameters leave the support.
    """
    from .gensys import gensys
    from .params import expand_params
    from .statespace import StateSpace

    fp = expand_params(theta)
    if not fp.ok:
        return None, None, fp
    model, Z, mu = build_system(fp)
    solved = gensys(model, div=div, rank_tol=rank_tol)
    if not solved.ok:
        return None, solved, fp
    sd = np.array([fp.values[s] for s in SHOCK_SD_NAMES])
    safe = np.where(sd > 0, sd, 1.0)
    H = np.where(sd > 0, solved.H / safe, 0.0)
    ss = StateSpace(d=solved.d, T=solved.T, H=H, Q=np.diag(sd**2), Z=Z, mu=mu)
    return ss, solved, fp

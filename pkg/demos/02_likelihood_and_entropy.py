"""Kalman-filter likelihood, forecasts and the entropy rate of the observables."""
import numpy as np

from swlab.model import solve
from swlab.params import posterior_mode
from swlab.statespace import entropy_rate, forecast, kalman_filter, reduce, simulate, stationary_moments

ss, _, _ = solve(posterior_mode())
mean, cov = stationary_moments(ss)
print("stationary observable means:", np.round(ss.mu + ss.Z @ mean, 3))

# the stationary covariance lives on a small invariant subspace
red = reduce(ss)
print(f"{ss.n_state} states, {red.ss.n_state} in the support of the stationary law")

panel = simulate(ss, 250, burn_in=1000, seed=1)
print(panel.names, panel.values.shape)

res = kalman_filter(ss, panel.values[:200])
print("NLL of 200 simulated quarters:", round(res.nll, 3))

pred, covs = forecast(ss, (res.filtered_mean, res.filtered_cov), 8)
print("8-quarter forecast of output growth:", np.round(pred[:, 0], 3))
print("forecast sd of output growth:", np.round(np.sqrt(covs[:, 0, 0]), 3))

# per-quarter NLL at the truth settles at the entropy rate
h = entropy_rate(ss)
long = simulate(ss, 20_000, burn_in=1000, seed=2).values
avg = kalman_filter(ss, long).nll / len(long)
print(f"entropy rate {h:.4f} nats per quarter; long-run average NLL {avg:.4f}")

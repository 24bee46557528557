"""Simulate from known parameters, re-estimate, and forecast a held-out stretch."""
import numpy as np

from swlab.estimation import FitConfig
from swlab.experiments import SimEstimateConfig, run_sim_estimate, sim_error_bands
from swlab.params import INDEX, posterior_mode

truth = posterior_mode()
cfg = SimEstimateConfig(train_sizes=(80, 160), test_size=200, burn_in=200,
                        fit=FitConfig.profile("desk", n_starts=0, budget=150, t0_draws=5))
# the optimiser starts at the truth; a budget this small barely moves it
records = run_sim_estimate(truth, n_reps=3, config=cfg, master_seed=0)
for r in records:
    print(f"rep {r.replication} n={r.train_size}: test MSE {r.test_mse_avg:.3f} (truth {r.truth_test_mse_avg:.3f}),"
          f" sigma_l {r.theta_hat['sigma_l']:.3f} (truth {truth[INDEX['sigma_l']]:.3f})")
for band in sim_error_bands(records):
    if band["metric"] in ("test_mse_avg", "truth_test_mse_avg"):
        print(band["metric"], band["train_size"], "median", round(band["q50"], 3))
print("median parameter error:", np.median([r.param_sq_err for r in records]))
